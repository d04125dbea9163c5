"""Semi-stability of radial profiles through the second-variation quadratic form.

The form is reduced to one radial variable,

    Q(xi) = omega_n * int [ k c r^(n-k) (u')^(k-1) (xi')^2 + r^(n-1) w g'(u) xi^2 ] dr,

and discretised with piecewise-linear hat functions on meshes uniform in
log r.  Windows whose endpoints are powers of ten share nodes, so the
discrete test spaces are nested across windows and refinements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import AuxiliaryRate, DomainError, Nonlinearity, ProblemParams, Profile, WeightSpec
from .quadrature import gauss_points
from .tridiag import min_generalized_eigenvalue

DEFAULT_WINDOWS = tuple((a, b) for a in (1e-2, 1e-3) for b in (10.0, 100.0, 1000.0))
DEFAULT_PER_DECADE = (32, 64, 128, 256, 512)


@dataclass
class QuadraticFormAssembly:
    """Interior-node tridiagonal matrices of the stiffness (A), potential (C) and mass (M) parts."""

    nodes: np.ndarray
    a_diag: np.ndarray
    a_off: np.ndarray
    c_diag: np.ndarray
    c_off: np.ndarray
    m_diag: np.ndarray
    m_off: np.ndarray

    @property
    def k_diag(self) -> np.ndarray:
        return self.a_diag + self.c_diag

    @property
    def k_off(self) -> np.ndarray:
        return self.a_off + self.c_off

    @property
    def mesh_size(self) -> int:
        return self.nodes.size - 1

    @property
    def window(self) -> tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    @property
    def scale(self) -> float:
        """Largest entry of A + C over largest entry of M: the natural eigenvalue unit."""
        kmax = max(float(np.max(np.abs(self.k_diag))), float(np.max(np.abs(self.k_off), initial=0.0)))
        return kmax / float(np.max(self.m_diag))

    def dense(self):
        """Dense (A + C, M); for small meshes and cross-checks."""
        K = np.diag(self.k_diag) + np.diag(self.k_off, 1) + np.diag(self.k_off, -1)
        M = np.diag(self.m_diag) + np.diag(self.m_off, 1) + np.diag(self.m_off, -1)
        return K, M

    def form(self, x) -> float:
        """x^T (A + C) x for nodal values x at the interior nodes."""
        x = np.asarray(x, float)
        return float(self.k_diag @ x**2 + 2 * self.k_off @ (x[:-1] * x[1:]))


def _assemble_tridiag(nodes, qx, qw, qs, coef, derivative: bool):
    h = np.diff(nodes)
    if derivative:
        e = np.sum(qw * coef, axis=1) / h**2
        e00 = e11 = e
        e01 = -e
    else:
        e00 = np.sum(qw * coef * (1 - qs) ** 2, axis=1)
        e11 = np.sum(qw * coef * qs**2, axis=1)
        e01 = np.sum(qw * coef * qs * (1 - qs), axis=1)
    diag = np.zeros(nodes.size)
    diag[:-1] += e00
    diag[1:] += e11
    return diag[1:-1], e01[1:-1]


def assemble_Q(params: ProblemParams, spec: WeightSpec, g: Nonlinearity, profile: Profile,
               r_window: tuple[float, float], mesh_size: int, quad_order: int = 2) -> QuadraticFormAssembly:
    """Assemble the hat-function matrices of Q on a geometric mesh over r_window."""
    rmin, rmax = map(float, r_window)
    if not 0 < rmin < rmax:
        raise DomainError(f"window must satisfy 0 < rmin < rmax, got {r_window}")
    if mesh_size < 2:
        raise DomainError("mesh needs at least two elements")
    n, k = params.n, params.k
    omega, c = params.omega, params.cnk
    nodes = np.geomspace(rmin, rmax, mesh_size + 1)
    qx, qw, qs = gauss_points(nodes, quad_order)
    u, du = profile.evaluate(qx)
    if np.any(du < 0):
        raise DomainError("u' < 0 inside the window")
    stiff = omega * k * c * qx ** (n - k) * du ** (k - 1)
    pot = omega * qx ** (n - 1) * spec.w(qx) * g.dg(u)
    mass = omega * qx ** (n - 1)
    a_d, a_o = _assemble_tridiag(nodes, qx, qw, qs, stiff, True)
    c_d, c_o = _assemble_tridiag(nodes, qx, qw, qs, pot, False)
    m_d, m_o = _assemble_tridiag(nodes, qx, qw, qs, mass, False)
    return QuadraticFormAssembly(nodes, a_d, a_o, c_d, c_o, m_d, m_o)


def min_eigenvalue(assembly: QuadraticFormAssembly, rtol: float = 1e-10) -> float:
    """Smallest eigenvalue of (A + C) x = lam M x by Sturm-sequence bisection."""
    return min_generalized_eigenvalue(assembly.k_diag, assembly.k_off, assembly.m_diag, assembly.m_off,
                                      rtol=rtol)


# -- test functions and direct form evaluation -----------------------------


@dataclass(frozen=True, eq=False)
class HatFunction:
    """Piecewise-linear eta with eta = 0 at both ends of its node set."""

    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, float)
        values = np.asarray(self.values, float)
        if nodes.shape != values.shape or nodes.size < 3 or np.any(np.diff(nodes) <= 0):
            raise DomainError("hat function needs >= 3 increasing nodes with matching values")
        if values[0] != 0 or values[-1] != 0:
            raise DomainError("eta must vanish at both ends of its support")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    def element_values(self, order: int = 8):
        """Quadrature points, weights, eta and eta' per element."""
        x, w, s = gauss_points(self.nodes, order)
        v0, v1 = self.values[:-1, None], self.values[1:, None]
        eta = v0 * (1 - s) + v1 * s
        deta = ((v1 - v0) / np.diff(self.nodes)[:, None]) * np.ones_like(s)
        return x, w, eta, deta

    def __call__(self, r):
        return np.interp(r, self.nodes, self.values, left=0.0, right=0.0)


def random_hat_function(rng: np.random.Generator, window: tuple[float, float], n_nodes: int = 12) -> HatFunction:
    """Random hat combination supported strictly inside the window."""
    lo, hi = np.log(window[0]), np.log(window[1])
    a, b = np.sort(rng.uniform(lo, hi, 2))
    if b - a < 0.05 * (hi - lo):
        a, b = lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo)
    nodes = np.exp(np.linspace(a, b, n_nodes))
    values = np.concatenate([[0.0], rng.normal(size=n_nodes - 2), [0.0]])
    return HatFunction(nodes, values)


def _check_support(eta: HatFunction, window):
    if window is None:
        return
    lo, hi = eta.support
    if lo < window[0] * (1 - 1e-12) or hi > window[1] * (1 + 1e-12):
        raise DomainError(f"eta support {eta.support} not inside window {window}")


def quadratic_form_value(params: ProblemParams, spec: WeightSpec, g: Nonlinearity, profile: Profile,
                         xi: Callable, dxi: Callable, nodes, order: int = 8) -> float:
    """Q(xi) by Gauss quadrature on the elements of `nodes` (xi smooth inside each element)."""
    n, k = params.n, params.k
    x, w, _ = gauss_points(np.asarray(nodes, float), order)
    u, du = profile.evaluate(x)
    integrand = k * params.cnk * x ** (n - k) * du ** (k - 1) * dxi(x) ** 2 \
        + x ** (n - 1) * spec.w(x) * g.dg(u) * xi(x) ** 2
    return params.omega * float(np.sum(w * integrand))


def form_along_slope(params, spec, g, profile: Profile, eta: HatFunction, order: int = 8) -> float:
    """Q(u' eta), integrating element by element over the support of eta."""
    n, k = params.n, params.k
    x, w, e, de = eta.element_values(order)
    u, du = profile.evaluate(x)
    d2u = profile.second(x)
    xi = du * e
    dxi = d2u * e + du * de
    integrand = k * params.cnk * x ** (n - k) * du ** (k - 1) * dxi**2 + x ** (n - 1) * spec.w(x) * g.dg(u) * xi**2
    return params.omega * float(np.sum(w * integrand))


def _transformed_parts(params, spec, profile, eta, order):
    n, k = params.n, params.k
    rate = AuxiliaryRate(spec, k)
    x, w, e, de = eta.element_values(order)
    lam = profile.lambda2(x)
    v, rdv = rate.v(x), rate.r_dv(x)
    weight = params.omega * k * params.cnk * x ** (n - 1) * lam ** (k + 1)
    grad = (x * de + v * e) ** 2
    pot = (v**2 + n / k * v + n / k - 1 - rdv) * e**2
    return w, weight, grad, pot


def transformed_form_value(params: ProblemParams, spec: WeightSpec, profile: Profile, eta: HatFunction,
                           window: tuple[float, float] | None = None, order: int = 8) -> float:
    """omega k c int r^(n-1) lam2^(k+1) [ (r eta' + v eta)^2 - (v^2 + n v/k + n/k - 1 - r v') eta^2 ] dr."""
    _check_support(eta, window)
    w, weight, grad, pot = _transformed_parts(params, spec, profile, eta, order)
    return float(np.sum(w * weight * (grad - pot)))


def transformed_form_scale(params, spec, profile, eta: HatFunction, order: int = 8) -> float:
    """Same integral with absolute values; the reference magnitude for identity checks."""
    w, weight, grad, pot = _transformed_parts(params, spec, profile, eta, order)
    return float(np.sum(w * weight * (grad + np.abs(pot))))


# -- Hardy-type certificate -------------------------------------------------


@dataclass
class HardyReport:
    hypothesis_ok: bool
    origin_ok: bool
    min_hypothesis: float
    r_at_min: float
    origin_slope: float
    inequality_value: float
    inequality_scale: float

    @property
    def ok(self) -> bool:
        return self.hypothesis_ok and self.origin_ok and self.inequality_value >= -1e-9 * self.inequality_scale

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "hypothesis_ok": self.hypothesis_ok,
            "origin_ok": self.origin_ok,
            "min_hypothesis": self.min_hypothesis,
            "r_at_min": self.r_at_min,
            "origin_slope": self.origin_slope,
            "inequality_value": self.inequality_value,
            "inequality_scale": self.inequality_scale,
        }


def _log_derivative(V, r, h=1e-6):
    return r * (V(r * math.exp(h)) - V(r * math.exp(-h))) / (2 * h) / r


def hardy_certificate(params: ProblemParams, V: Callable, rho: Callable, theta: float, eta: HatFunction,
                      rdV: Callable | None = None, grid: Sequence[float] | None = None,
                      rtol: float = 1e-10, order: int = 8) -> HardyReport:
    """Check theta (r V' + (n - 2 rho - 2) V - theta V) >= 0 on a grid, r^(n-2) V -> 0 at the
    origin, and evaluate int r^(n-3) V ((r eta' + rho eta)^2 - theta^2 eta^2 / 4) dr."""
    n = params.n
    if rdV is None:
        def rdV(r):
            return _log_derivative(V, r)
    r = np.geomspace(1e-3, 1e3, 2001) if grid is None else np.asarray(grid, float)
    Vr, dVr, rh = V(r), rdV(r), rho(r)
    hyp = theta * (dVr + (n - 2 * rh - 2) * Vr - theta * Vr)
    ref = abs(theta) * (np.abs(dVr) + np.abs(n - 2 * rh - 2) * Vr + abs(theta) * Vr)
    i = int(np.argmin(hyp))
    hyp_ok = bool(np.all(hyp >= -rtol * ref))

    small = np.array([1e-10, 1e-12])
    vals = small ** (n - 2) * V(small)
    if np.all(vals <= 1e-300):
        slope = math.inf
    else:
        slope = float(np.log(vals[0] / vals[1]) / np.log(small[0] / small[1]))
    origin_ok = bool(np.all(np.isfinite(vals)) and (slope > 1e-6 or np.all(vals <= 1e-300)))

    x, w, e, de = eta.element_values(order)
    Vx, rx = V(x), rho(x)
    grad = x ** (n - 3) * Vx * (x * de + rx * e) ** 2
    pot = x ** (n - 3) * Vx * theta**2 * e**2 / 4
    value = float(np.sum(w * (grad - pot)))
    scale = float(np.sum(w * (grad + pot)))
    return HardyReport(hyp_ok, origin_ok, float(hyp[i]), float(r[i]), slope, value, scale)


def hardy_discriminant(params: ProblemParams, V: Callable, rdV: Callable, rho: Callable, theta: float,
                       eta: HatFunction, order: int = 8) -> tuple[float, float]:
    """Both sides of 4 (theta^2 int V eta^2)(int V (r eta' + rho eta)^2) >= (theta int eta^2 (r V' + (n-2rho-2) V))^2,
    all integrals against r^(n-3) dr."""
    n = params.n
    x, w, e, de = eta.element_values(order)
    Vx, dVx, rx = V(x), rdV(x), rho(x)
    wt = w * x ** (n - 3)
    lhs = 4 * (theta**2 * np.sum(wt * Vx * e**2)) * np.sum(wt * Vx * (x * de + rx * e) ** 2)
    rhs = (theta * np.sum(wt * e**2 * (dVx + (n - 2 * rx - 2) * Vx))) ** 2
    return float(lhs), float(rhs)


# -- verdict ----------------------------------------------------------------


@dataclass
class WindowResult:
    window: tuple[float, float]
    meshes: list[int]
    eigenvalues: list[float]
    extrapolated: list[float]
    tol: float
    converged: bool
    verdict: str

    @property
    def estimate(self) -> float:
        return self.extrapolated[-1] if self.extrapolated else self.eigenvalues[-1]

    def to_dict(self) -> dict:
        return {"window": list(self.window), "meshes": self.meshes, "eigenvalues": self.eigenvalues,
                "extrapolated": self.extrapolated, "tol": self.tol, "converged": self.converged,
                "verdict": self.verdict}


@dataclass
class StabilityReport:
    min_eigenvalue: float
    mesh_size: int
    r_window: tuple[float, float]
    verdict: str
    tol: float = math.nan
    window_monotone: bool = True
    windows: list[WindowResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "min_eigenvalue": self.min_eigenvalue,
            "verdict": self.verdict,
            "window": list(self.r_window),
            "mesh": self.mesh_size,
            "tol": self.tol,
            "window_monotone": self.window_monotone,
            "windows": [w.to_dict() for w in self.windows],
        }


def richardson(eigs: Sequence[float]) -> list[float]:
    """Second-order extrapolation lam_h + (lam_h - lam_2h) / 3 of successive halvings."""
    return [b + (b - a) / 3 for a, b in zip(eigs[:-1], eigs[1:])]


def window_verdict(eigs: Sequence[float], tol: float, conv_rel: float = 1e-6) -> tuple[str, bool]:
    """Verdict from raw eigenvalues on successively halved meshes.

    Raw values are Rayleigh-Ritz upper bounds, so two negative ones are a genuine
    negative direction.  Convergence and the nonnegativity test use the
    extrapolated sequence, since linear elements converge only at O(h^2).
    """
    ex = richardson(eigs)
    converged = len(ex) >= 2 and abs(ex[-1] - ex[-2]) < conv_rel * (1 + abs(ex[-1]))
    if len(eigs) >= 2 and eigs[-1] < -10 * tol and eigs[-2] < -10 * tol:
        return "unstable", converged
    if converged and ex[-1] >= -tol:
        return "semi-stable", converged
    return "inconclusive", converged


def is_semistable(params: ProblemParams, spec: WeightSpec, g: Nonlinearity, profile: Profile,
                  windows: Sequence[tuple[float, float]] = DEFAULT_WINDOWS,
                  per_decade: Sequence[int] = DEFAULT_PER_DECADE, tol_rel: float = 1e-8,
                  conv_rel: float = 1e-6) -> StabilityReport:
    """Smallest eigenvalue of the discretised form over a window schedule and mesh refinements.

    Per window: "unstable" when the two finest meshes both give lam < -10 tol,
    "semi-stable" when the extrapolated lam is >= -tol and moved by less than
    conv_rel (1 + |lam|) over the last refinement; otherwise "inconclusive".
    tol = tol_rel * (largest entry of A + C) / (largest entry of M).
    """
    results = []
    for win in windows:
        decades = math.log10(win[1] / win[0])
        meshes, eigs, tol = [], [], math.nan
        for m in per_decade:
            size = max(2, int(round(m * decades)))
            asm = assemble_Q(params, spec, g, profile, win, size)
            meshes.append(size)
            eigs.append(min_eigenvalue(asm))
            tol = tol_rel * asm.scale
        verdict, conv = window_verdict(eigs, tol, conv_rel)
        results.append(WindowResult(tuple(map(float, win)), meshes, eigs, richardson(eigs), tol, conv, verdict))

    monotone = True
    for a in results:
        for b in results:
            nested = b.window[0] <= a.window[0] and a.window[1] <= b.window[1] and a is not b
            if nested and b.eigenvalues[-1] > a.eigenvalues[-1] + max(a.tol, b.tol):
                monotone = False

    worst = min(results, key=lambda w: w.estimate)
    verdicts = {w.verdict for w in results}
    if "unstable" in verdicts:
        overall = "unstable"
    elif verdicts == {"semi-stable"}:
        overall = "semi-stable"
    else:
        overall = "inconclusive"
    return StabilityReport(worst.estimate, worst.meshes[-1], worst.window, overall, worst.tol,
                           monotone, results)
