"""Radial ODE integration in flux form.

The equation is integrated as the first-order system

    u' = r^(1 - n/k) z^(1/k),    z' = r^(n-1) w(r) g(u) / c_{n,k},

with flux z = (r^(n/k - 1) u')^k.  Both right-hand sides are Lipschitz in
(u, z) for z > 0, and z = 0 is reached only on the constant branch.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import DomainError, KHessianError, Nonlinearity, ProblemParams, RadialProfile, WeightSpec


class SolverError(KHessianError, RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SolverProfile(RadialProfile):
    """Integrated profile carrying the flux and the step-halving error estimate."""

    flux: np.ndarray | None = None
    error_estimate: float = math.nan
    steps: int = 0
    info: dict = field(default_factory=dict)


def flux_from_slope(params: ProblemParams, r, du):
    """z = (r^(n/k - 1) u')^k."""
    n, k = params.n, params.k
    return (np.asarray(r, float) ** (n / k - 1) * np.asarray(du, float)) ** k


def slope_from_flux(params: ProblemParams, r, z):
    """u' = r^(1 - n/k) z^(1/k)."""
    n, k = params.n, params.k
    r = np.asarray(r, float)
    z = np.maximum(np.asarray(z, float), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = r ** (1 - n / k) * z ** (1 / k)
    return np.where(z == 0, 0.0, out)


def _make_rhs(params, spec, g, log_variable):
    n, k = params.n, params.k
    c = params.cnk
    a, b = 1 - n / k, 1 / k

    def rhs(x, u, z):
        r = math.exp(x) if log_variable else x
        try:
            gu = float(g(u))
        except Exception as exc:  # noqa: BLE001 - surfaced as a solver failure
            raise SolverError(f"g evaluation failed at u={u}: {exc}") from exc
        if not math.isfinite(gu):
            raise SolverError(f"g(u) is not finite at u={u}")
        zp = z if z > 0 else 0.0
        du = r**a * zp**b if zp > 0 else 0.0
        dz = r ** (n - 1) * float(spec.w(r)) * gu / c
        if log_variable:
            return r * du, r * dz
        return du, dz

    return rhs


def _rk4(rhs, x0, x1, u0, z0, steps):
    xs = np.linspace(x0, x1, steps + 1)
    us = np.empty(steps + 1)
    zs = np.empty(steps + 1)
    us[0], zs[0] = u0, z0
    u, z = u0, z0
    for i in range(steps):
        x, h = xs[i], xs[i + 1] - xs[i]
        k1u, k1z = rhs(x, u, z)
        k2u, k2z = rhs(x + h / 2, u + h / 2 * k1u, z + h / 2 * k1z)
        k3u, k3z = rhs(x + h / 2, u + h / 2 * k2u, z + h / 2 * k2z)
        k4u, k4z = rhs(x + h, u + h * k3u, z + h * k3z)
        u = u + h / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
        z = z + h / 6 * (k1z + 2 * k2z + 2 * k3z + k4z)
        if not (math.isfinite(u) and math.isfinite(z)):
            raise SolverError(f"overflow at x={xs[i + 1]}")
        if z < 0:
            raise SolverError(f"flux became negative (z={z}) at x={xs[i + 1]}")
        us[i + 1], zs[i + 1] = u, z
    return xs, us, zs


def rk4_fixed(params, spec, g, r0, u0, z0, rmax, steps, log_variable=False):
    """One fixed-step RK4 pass; returns (r, u, z)."""
    rhs = _make_rhs(params, spec, g, log_variable)
    if log_variable:
        xs, us, zs = _rk4(rhs, math.log(r0), math.log(rmax), u0, z0, steps)
        return np.exp(xs), us, zs
    return _rk4(rhs, r0, rmax, u0, z0, steps)


def _controlled(params, spec, g, r0, u0, z0, rmax, steps, tol, max_doublings, log_variable):
    coarse = rk4_fixed(params, spec, g, r0, u0, z0, rmax, steps, log_variable)
    m = steps
    err = math.inf
    for _ in range(max_doublings + 1):
        fine = rk4_fixed(params, spec, g, r0, u0, z0, rmax, 2 * m, log_variable)
        scale = max(1.0, float(np.max(np.abs(fine[1]))))
        err = float(np.max(np.abs(fine[1][::2] - coarse[1]))) / 15
        m *= 2
        if tol is None or err <= tol * scale:
            break
        coarse = fine
    return fine, err, m


def _profile(params, r, u, z, err, steps, info=None):
    du = slope_from_flux(params, r, z)
    return SolverProfile(r, u, du, None, flux=z, error_estimate=err, steps=steps, info=info or {})


def integrate_outward(params: ProblemParams, spec: WeightSpec, g: Nonlinearity, r0: float, u0: float,
                      z0: float, rmax: float, steps: int = 200, tol: float | None = 1e-10,
                      max_doublings: int = 8) -> SolverProfile:
    """Integrate from (r0, u0, z0) to rmax with RK4 and step-halving control.

    The step count doubles until the Richardson estimate |u_h - u_{h/2}|/15
    falls below tol (relative to max(1, |u|)); the finest run is returned.
    Starting at r0 = 0 requires z0 = 0 and is routed through `origin_start`.
    """
    if not rmax > r0 >= 0:
        raise DomainError("need rmax > r0 >= 0")
    if z0 < 0:
        raise SolverError("initial flux must be >= 0")
    if r0 == 0:
        if z0 != 0:
            raise DomainError("at r0 = 0 the flux must vanish (u'(0) = 0)")
        return origin_start(params, spec, g, u0, rmax, steps, tol=tol, max_doublings=max_doublings)
    (r, u, z), err, m = _controlled(params, spec, g, r0, u0, z0, rmax, steps, tol, max_doublings, False)
    return _profile(params, r, u, z, err, m)


def _bootstrap(params, spec, g, u0, eps):
    """First Picard iterate at r = eps with u frozen at u0."""
    n, k = params.n, params.k
    Weps = float(spec.W(eps))
    if n + Weps <= 0:
        raise DomainError(f"r^(n-1) w is not integrable at the origin (n + W = {n + Weps})")
    # int_0^eps s^(n-1) w(s) ds, exact for pure powers
    mass = eps**n * float(spec.w(eps)) / (n + Weps)
    z = float(g(u0)) * mass / params.cnk
    if z < 0:
        raise SolverError("g(u0) < 0 gives a negative flux at the origin")
    du = float(slope_from_flux(params, eps, z))
    # u' ~ r^(1 + W/k) near the origin
    u = u0 + eps * du / (2 + Weps / k)
    return u, z


def origin_start(params: ProblemParams, spec: WeightSpec, g: Nonlinearity, u0: float, rmax: float,
                 steps: int = 400, tol: float | None = 1e-10, max_doublings: int = 8,
                 eps_ratio: float = 1e-6, check_epsilon: bool = True) -> SolverProfile:
    """Solve from the origin with u(0) = u0, u'(0) = 0.

    If g(u0) = 0 the constant solution is returned.  Otherwise the state at
    eps = eps_ratio * rmax comes from the frozen-g expansion and the system is
    integrated on a grid uniform in log r.  The returned profile includes r = 0.
    """
    if not rmax > 0:
        raise DomainError("rmax must be positive")
    g0 = float(g(u0))
    if g0 == 0.0:
        r = np.concatenate([[0.0], np.geomspace(eps_ratio * rmax, rmax, steps + 1)])
        ones = np.ones_like(r)
        return SolverProfile(r, u0 * ones, 0 * ones, 0 * ones, flux=0 * ones, error_estimate=0.0,
                             steps=steps, info={"branch": "constant"})

    def run(eps):
        ue, ze = _bootstrap(params, spec, g, u0, eps)
        return _controlled(params, spec, g, eps, ue, ze, rmax, steps, tol, max_doublings, True)

    eps = eps_ratio * rmax
    (r, u, z), err, m = run(eps)
    info = {"branch": "bootstrap", "eps": eps}
    if check_epsilon:
        (_, u2, _), _, _ = run(eps / 2)
        info["eps_halving_change"] = abs(float(u2[-1] - u[-1]))
        if info["eps_halving_change"] >= 1e-8 * max(1.0, abs(float(u[-1]))):
            warnings.warn(f"origin start sensitive to eps: change {info['eps_halving_change']:.3g}",
                          RuntimeWarning, stacklevel=2)
    r = np.concatenate([[0.0], r])
    u = np.concatenate([[u0], u])
    z = np.concatenate([[0.0], z])
    return _profile(params, r, u, z, err, m, info)


@dataclass
class GradientReport:
    positive: bool
    min_du: float
    r_at_min: float
    constant: bool

    def to_dict(self) -> dict:
        return {"positive": self.positive, "min_du": self.min_du, "r_at_min": self.r_at_min,
                "constant": self.constant}


def gradient_positivity_check(profile: RadialProfile, tol: float = 1e-12) -> GradientReport:
    """u'(r) > 0 at every grid point with r > 0; constant profiles are flagged."""
    pos = profile.r > 0
    du = profile.du[pos]
    i = int(np.argmin(du))
    span = float(np.max(profile.u) - np.min(profile.u))
    constant = span <= tol * max(1.0, float(np.max(np.abs(profile.u))))
    return GradientReport(bool(np.all(du > 0)) and not constant, float(du[i]), float(profile.r[pos][i]), constant)


def observed_order(params: ProblemParams, spec: WeightSpec, g: Nonlinearity, r0: float, u0: float, z0: float,
                   rmax: float, steps: int = 20) -> float:
    """log2 of the ratio of successive endpoint differences for fixed-step RK4 with steps, 2 steps, 4 steps."""
    ends = [rk4_fixed(params, spec, g, r0, u0, z0, rmax, steps * 2**i)[1][-1] for i in range(3)]
    d1, d2 = abs(ends[0] - ends[1]), abs(ends[1] - ends[2])
    if d2 == 0:
        return math.inf
    return math.log2(d1 / d2)
