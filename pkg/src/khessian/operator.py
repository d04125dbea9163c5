"""Radial k-Hessian evaluation, equation residuals and k-admissibility."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DegeneracyError, DomainError, Nonlinearity, ProblemParams, Profile, RadialProfile, WeightSpec


def _check_order(params: ProblemParams, j: int) -> None:
    if not 1 <= j <= params.n:
        raise DomainError(f"order j={j} outside 1..{params.n}")


def sk_radial(params: ProblemParams, j: int, lambda1, lambda2):
    """S_j of a radial Hessian with eigenvalues lambda1 (simple) and lambda2 (n-1 fold).

    Uses c_{n,j} lambda2^(j-1) (n lambda2 + j (lambda1 - lambda2)); 0**0 is 1.
    """
    _check_order(params, j)
    l1 = np.asarray(lambda1, dtype=float)
    l2 = np.asarray(lambda2, dtype=float)
    n = params.n
    out = params.c(j) * l2 ** (j - 1) * (n * l2 + j * (l1 - l2))
    return float(out) if out.ndim == 0 else out


def oracle_elementary_symmetric(params: ProblemParams, j: int, lambda1, lambda2):
    """e_j of the multiset {lambda1, lambda2 x (n-1)} by direct expansion."""
    _check_order(params, j)
    l1 = np.asarray(lambda1, dtype=float)
    l2 = np.asarray(lambda2, dtype=float)
    n = params.n
    out = math.comb(n - 1, j) * l2**j + l1 * math.comb(n - 1, j - 1) * l2 ** (j - 1)
    return float(out) if out.ndim == 0 else out


def term_scale(params: ProblemParams, j: int, lambda1, lambda2):
    """Sum of absolute values of the terms in both expressions for S_j.

    Rounding errors of either formula are bounded by a small multiple of this,
    so it is the denominator for relative comparisons that stay meaningful under
    cancellation.
    """
    _check_order(params, j)
    a1 = np.abs(np.asarray(lambda1, dtype=float))
    a2 = np.abs(np.asarray(lambda2, dtype=float))
    n = params.n
    expanded = math.comb(n - 1, j) * a2**j + a1 * math.comb(n - 1, j - 1) * a2 ** (j - 1)
    compact = params.c(j) * a2 ** (j - 1) * (n * a2 + j * (a1 + a2))
    out = np.maximum(expanded, compact)
    return float(out) if out.ndim == 0 else out


def divergence_form(params: ProblemParams, profile: Profile, r, h: float = 1e-4):
    """c_{n,k} r^{1-n} d/dr (r^n lambda2^k) by a centred difference in r."""
    r = np.asarray(r, dtype=float)
    n, k = params.n, params.k

    def flux(s):
        return s**n * profile.lambda2(s) ** k

    step = h * np.maximum(r, 1.0)
    return params.cnk * r ** (1 - n) * (flux(r + step) - flux(r - step)) / (2 * step)


def second_derivative_from_equation(params: ProblemParams, spec: WeightSpec, g: Nonlinearity, r, u, du):
    """u'' recovered from the equation: (w g(u) / (k c)) (u'/r)^(1-k) - ((n-k)/k) u'/r."""
    r = np.asarray(r, dtype=float)
    du = np.asarray(du, dtype=float)
    n, k = params.n, params.k
    if np.any(r <= 0):
        raise DomainError("second_derivative_from_equation needs r > 0")
    if k >= 2 and np.any(du <= 0):
        raise DegeneracyError("u' <= 0 with k >= 2: the equation degenerates")
    lam = du / r
    out = spec.w(r) * g(u) / (k * params.cnk) * lam ** (1 - k) - (n - k) / k * lam
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class ResidualReport:
    r: np.ndarray
    sk: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray
    normalized_sup: float

    def rows(self):
        return zip(self.r, self.sk, self.rhs, self.residual)

    def to_csv(self, path) -> None:
        from .report import write_csv
        write_csv(path, ["r", "Sk", "rhs", "residual"], self.rows())


def residual(params: ProblemParams, spec: WeightSpec, g: Nonlinearity, profile: RadialProfile) -> ResidualReport:
    """S_k(D^2 u) - w g(u) at the grid points.

    With stored u'' every point with r > 0 is used; otherwise u'' comes from
    second-order differences of u' and only interior points are kept.
    """
    if profile.d2u is not None:
        keep = profile.r > 0
        d2u = profile.d2u
    else:
        keep = np.zeros(profile.r.size, bool)
        keep[1:-1] = True
        keep &= profile.r > 0
        d2u = np.gradient(profile.du, profile.r, edge_order=2)
    r = profile.r[keep]
    lam1 = d2u[keep]
    lam2 = profile.du[keep] / r
    sk = sk_radial(params, params.k, lam1, lam2)
    rhs = spec.w(r) * g(profile.u[keep])
    res = sk - rhs
    norm = float(np.max(np.abs(res)) / max(1.0, float(np.max(np.abs(rhs))))) if r.size else 0.0
    return ResidualReport(r, np.asarray(sk), np.asarray(rhs), np.asarray(res), norm)


@dataclass
class AdmissibilityReport:
    admissible: bool
    first_violation: tuple[int, float] | None
    grid: tuple[float, float, int]
    min_sj: list[float]

    def to_dict(self) -> dict:
        return {
            "admissible": self.admissible,
            "first_violation": None if self.first_violation is None
            else {"j": self.first_violation[0], "r": self.first_violation[1]},
            "grid": {"rmin": self.grid[0], "rmax": self.grid[1], "points": self.grid[2]},
            "min_Sj": self.min_sj,
        }


def k_admissibility(params: ProblemParams, profile: RadialProfile, tol: float = 1e-9) -> AdmissibilityReport:
    """Check S_j >= -tol (1 + |S_j|) for j = 1..k on the profile grid."""
    r = profile.r
    lam1 = profile.d2u_or_fd()
    with np.errstate(divide="ignore", invalid="ignore"):
        lam2 = np.where(r > 0, profile.du / np.where(r > 0, r, 1.0), lam1)
    first = None
    mins = []
    for j in range(1, params.k + 1):
        sj = np.asarray(sk_radial(params, j, lam1, lam2))
        mins.append(float(np.min(sj)))
        bad = np.nonzero(sj < -tol * (1.0 + np.abs(sj)))[0]
        if bad.size:
            cand = (j, float(r[bad[0]]))
            if first is None or cand[1] < first[1]:
                first = cand
    return AdmissibilityReport(first is None, first, (float(r[0]), float(r[-1]), int(r.size)), mins)
