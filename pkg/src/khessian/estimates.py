"""Growth exponents alpha(r), delta(r), delta_inf and numerical growth estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import AuxiliaryRate, DegeneracyError, DomainError, ProblemParams, Profile, WeightSpec
from .quadrature import adaptive_simpson
from .report import write_csv

RTOL = 1e-10
ATOL = 1e-14


def radicand(params: ProblemParams, spec: WeightSpec, r):
    """v^2 + (n/k) v + n/k - 1 - r v'."""
    n, k = params.n, params.k
    rate = AuxiliaryRate(spec, k)
    v = rate.v(r)
    return v**2 + n / k * v + n / k - 1 - rate.r_dv(r)


def psi(params: ProblemParams, spec: WeightSpec, r):
    """Psi(r) = v + sqrt(radicand); raises DomainError where the radicand is negative."""
    rad = np.asarray(radicand(params, spec, r), float)
    if np.any(rad < 0):
        i = int(np.argmin(rad))
        where = np.broadcast_to(np.asarray(r, float), rad.shape).ravel()[i] if rad.ndim else float(r)
        raise DomainError(f"negative radicand {rad.ravel()[i] if rad.ndim else float(rad):.3g} at r={where}")
    out = AuxiliaryRate(spec, params.k).v(r) + np.sqrt(rad)
    return float(out) if np.ndim(out) == 0 else out


def _psi_log(params, spec):
    def f(t):
        return psi(params, spec, math.exp(t))
    return f


def alpha_of_r(params: ProblemParams, spec: WeightSpec, r: float, rtol: float = RTOL) -> float:
    """(1 / log r) int_1^r Psi(s) ds / s, by adaptive Simpson in t = log s; Psi(1) at r = 1."""
    r = float(r)
    if r < 1:
        raise DomainError("alpha is defined for r >= 1")
    if r == 1:
        return float(psi(params, spec, 1.0))
    L = math.log(r)
    return adaptive_simpson(_psi_log(params, spec), 0.0, L, rtol=rtol, atol=ATOL) / L


def alpha_grid(params: ProblemParams, spec: WeightSpec, r, rtol: float = RTOL) -> np.ndarray:
    """alpha on an increasing grid of radii >= 1, integrating panel by panel."""
    r = np.asarray(r, float)
    if r.ndim != 1 or np.any(r < 1) or np.any(np.diff(r) <= 0):
        raise DomainError("alpha grid must be increasing with r >= 1")
    f = _psi_log(params, spec)
    t = np.log(r)
    out = np.empty_like(r)
    total, prev = 0.0, 0.0
    for i, ti in enumerate(t):
        if ti > prev:
            total += adaptive_simpson(f, prev, ti, rtol=rtol, atol=ATOL)
            prev = ti
        out[i] = total / ti if ti > 0 else f(0.0)
    return out


def delta_from_alpha(params: ProblemParams, alpha):
    n, k = params.n, params.k
    return (-n + 2 * np.asarray(alpha, float) + 2 * k + 2) / (k + 1)


def delta_of_r(params: ProblemParams, spec: WeightSpec, r: float) -> float:
    """delta(r) = (-n + 2 alpha(r) + 2k + 2) / (k + 1)."""
    return float(delta_from_alpha(params, alpha_of_r(params, spec, r)))


def threshold_dimension(k: int, gamma: float) -> float:
    """2(k + 2 gamma / k + 4)."""
    return 2 * (k + 2 * gamma / k + 4)


@dataclass
class DeltaInf:
    value: float
    completed_square: float
    factorized: float
    sign_factor: float
    agree: bool

    def to_dict(self) -> dict:
        return {"delta_inf": self.value, "completed_square": self.completed_square,
                "factorized": self.factorized, "sign_factor": self.sign_factor, "agree": self.agree}


def delta_inf_forms(n: float, k: int, gamma: float, tol: float = 1e-12) -> DeltaInf:
    """Three algebraically equal expressions for the limit of delta(r) as r -> infinity.

    With a = (v+1)/k, b = k(v-1) + n and v = (k-1+gamma)/(k+1):
        direct      (-n + 2(v + sqrt(a b)) + 2(k+1)) / (k+1)
        completed   ((k+1)^2 a - (sqrt b - sqrt a)^2) / (k+1)
        factorized  (2(k + 2 gamma/k + 4) - n)(k sqrt a + sqrt b) / ((k+1)((k+2) sqrt a + sqrt b))
    """
    if not 2 * k + gamma > 0 or not n > k * (k + 1) / (2 * k + gamma):
        raise DomainError(f"dimension condition n > k(k+1)/(2k+gamma) fails (n={n}, k={k}, gamma={gamma})")
    v = (k - 1 + gamma) / (k + 1)
    a = (v + 1) / k
    b = k * (v - 1) + n
    sa, sb = math.sqrt(a), math.sqrt(b)
    direct = (-n + 2 * (v + sa * sb) + 2 * (k + 1)) / (k + 1)
    completed = ((k + 1) ** 2 * a - (sb - sa) ** 2) / (k + 1)
    sign = threshold_dimension(k, gamma) - n
    factorized = sign * (k * sa + sb) / ((k + 1) * ((k + 2) * sa + sb))
    ref = max(1.0, abs(direct))
    agree = abs(direct - completed) <= tol * ref and abs(direct - factorized) <= tol * ref
    return DeltaInf(direct, completed, factorized, sign, agree)


def delta_inf(params: ProblemParams, spec: WeightSpec) -> float:
    return delta_inf_forms(params.n, params.k, float(spec.gamma)).value


# -- exponent profiles ---------------------------------------------------------


@dataclass
class ExponentProfile:
    r: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray
    delta_inf: float
    psi: np.ndarray = field(repr=False, default=None)

    def to_csv(self, path) -> None:
        write_csv(path, ["r", "alpha", "delta"], zip(self.r, self.alpha, self.delta))


def exponent_profile(params: ProblemParams, spec: WeightSpec, r) -> ExponentProfile:
    r = np.asarray(r, float)
    a = alpha_grid(params, spec, r)
    return ExponentProfile(r, a, delta_from_alpha(params, a), delta_inf(params, spec), psi(params, spec, r))


# -- integral and doubling estimates ---------------------------------------------


@dataclass
class RatioReport:
    value: float
    r_at: float
    r: np.ndarray
    ratios: np.ndarray
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"value": self.value, "r": self.r_at}
        d.update(self.extra)
        return d


def essentialg_ratio(params: ProblemParams, spec: WeightSpec, profile: Profile, r_grid, R: float,
                     rtol: float = 1e-9) -> RatioReport:
    """sup over r in r_grid of r^(2 alpha(r)) int_r^R ds / (s^(n-k) u'(s)^(k+1))."""
    n, k = params.n, params.k
    r = np.asarray(r_grid, float)
    if np.any(r < 1) or np.any(np.diff(r) <= 0) or r[-1] > R:
        raise DomainError("need an increasing grid inside [1, R]")

    def integrand(t):
        s = math.exp(t)
        du = float(profile.evaluate(s)[1])
        if not du > 0:
            raise DegeneracyError(f"u'({s}) = {du} vanishes")
        return math.exp(t - (n - k) * t - (k + 1) * math.log(du))

    # tail integrals from R down to each grid radius
    t = np.log(r)
    tails = np.empty_like(r)
    acc, upper = 0.0, math.log(R)
    for i in range(r.size - 1, -1, -1):
        if t[i] < upper:
            acc += adaptive_simpson(integrand, t[i], upper, rtol=rtol, atol=0.0)
            upper = t[i]
        tails[i] = acc
    alpha = alpha_grid(params, spec, r)
    ratios = tails * r ** (2 * alpha)
    i = int(np.argmax(ratios))
    return RatioReport(float(ratios[i]), float(r[i]), r, ratios, {"R": float(R)})


def doubling_check(params: ProblemParams, spec: WeightSpec, profile: Profile, r_grid) -> RatioReport:
    """min over r of |u(2r) - u(r)| / r^delta(r); a zero minimum is flagged."""
    r = np.asarray(r_grid, float)
    u1 = profile.evaluate(r)[0]
    u2 = profile.evaluate(2 * r)[0]
    delta = delta_from_alpha(params, alpha_grid(params, spec, r))
    ratios = np.abs(u2 - u1) / r**delta
    i = int(np.argmin(ratios))
    return RatioReport(float(ratios[i]), float(r[i]), r, ratios, {"violation": bool(ratios[i] <= 0)})


# -- pointwise growth --------------------------------------------------------------


@dataclass
class GrowthReport:
    kind: str
    critical: bool
    min_ratio: float
    r_at_min: float
    r0: float
    min_ratio_from_r0: float
    u_inf: float | None
    dimension_ok: bool | None
    verdict: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "critical": self.critical, "min_ratio": self.min_ratio,
                "r_at_min": self.r_at_min, "r0": self.r0, "min_ratio_from_r0": self.min_ratio_from_r0,
                "u_inf": self.u_inf, "dimension_ok": self.dimension_ok, "verdict": self.verdict}


def estimate_u_inf(params: ProblemParams, spec: WeightSpec, profile: Profile, R: float) -> float:
    """Limit of u from u(R), u(2R), u(4R), assuming u - u_inf ~ C r^delta(R)."""
    u = profile.evaluate(np.array([R, 2 * R, 4 * R]))[0]
    d2 = u[2] - u[1]
    q = 2.0 ** delta_of_r(params, spec, R)
    if not q < 1:
        raise DomainError("delta(R) >= 0: u has no finite limit to extrapolate")
    return float(u[2] + d2 * q / (1 - q))


def growth_theorem_check(params: ProblemParams, spec: WeightSpec, profile: Profile, kind: str = "unbounded",
                         r_grid=None, u_inf: float | None = None, stabilize: float = 0.01) -> GrowthReport:
    """Empirical growth constants.

    unbounded: min |u(r)| / r^delta(r), or |u(r)| / log r in the critical dimension;
    bounded:   min |u(r) - u_inf| / r^delta(r) with the dimension verdict n > 2(k + 2 gamma/k + 4).
    r0 is the smallest power of two after which the minimum changes by less than
    `stabilize` (relative) when r0 doubles.
    """
    if kind not in ("unbounded", "bounded"):
        raise DomainError(f"unknown growth kind {kind!r}")
    n, k = params.n, params.k
    gamma = float(spec.gamma)
    crit_dim = threshold_dimension(k, gamma)
    critical = abs(n - crit_dim) < 1e-9
    r = np.geomspace(1.0, 1e3, 601) if r_grid is None else np.asarray(r_grid, float)
    u = profile.evaluate(r)[0]
    if kind == "bounded":
        if u_inf is None:
            u_inf = estimate_u_inf(params, spec, profile, float(r[-1]) / 4)
            r = r[r <= r[-1] / 4]
            u = u[: r.size]
        base = np.abs(u - u_inf)
    else:
        base = np.abs(u)
    if critical and kind == "unbounded":
        keep = r > 1
        r, base = r[keep], base[keep]
        ratios = base / np.log(r)
    else:
        delta = delta_from_alpha(params, alpha_grid(params, spec, r))
        ratios = base / r**delta
    i = int(np.argmin(ratios))

    def tail_min(r0):
        sel = ratios[r >= r0]
        return float(np.min(sel)) if sel.size else math.nan

    r0 = 1.0
    while 4 * r0 <= r[-1]:
        m1, m2 = tail_min(r0), tail_min(2 * r0)
        if abs(m2 - m1) <= stabilize * abs(m1):
            break
        r0 *= 2
    dim_ok = None
    if kind == "bounded":
        dim_ok = n > crit_dim
        verdict = "consistent" if dim_ok else "violates the bounded-growth dimension condition"
    else:
        verdict = "positive" if ratios[i] > 0 else "zero ratio"
    return GrowthReport(kind, critical, float(ratios[i]), float(r[i]), r0, tail_min(r0),
                        None if u_inf is None else float(u_inf), dim_ok, verdict)
