"""Smallest eigenvalue of a symmetric generalized tridiagonal pencil by Sturm bisection."""

from __future__ import annotations

import numpy as np


def sturm_count(kd, ko, md, mo, shift: float) -> int:
    """Number of eigenvalues of (K, M) strictly below `shift`.

    Counts negative pivots of the LDL^T factorisation of K - shift*M, which by
    Sylvester's law of inertia equals the count when M is positive definite.
    """
    neg = 0
    d = 1.0
    bb = 0.0
    n = len(kd)
    for i in range(n):
        a = kd[i] - shift * md[i]
        d = a - bb / d if i else a
        if d == 0.0:
            d = -1e-300
        if d < 0.0:
            neg += 1
        if i < n - 1:
            b = ko[i] - shift * mo[i]
            bb = b * b
    return neg


def min_generalized_eigenvalue(kd, ko, md, mo, rtol: float = 1e-10, atol: float | None = None) -> float:
    """Smallest eigenvalue of K x = lam M x for symmetric tridiagonal K and SPD tridiagonal M.

    kd/md are diagonals (length N), ko/mo off-diagonals (length N-1).
    """
    arrays = [np.asarray(a, dtype=float) for a in (kd, ko, md, mo)]
    if not all(np.all(np.isfinite(a)) for a in arrays):
        raise ValueError("non-finite matrix entries")
    kd, ko, md, mo = arrays
    n = kd.size
    if n == 0:
        raise ValueError("empty matrix")
    if ko.size != n - 1 or md.size != n or mo.size != n - 1:
        raise ValueError("inconsistent tridiagonal sizes")
    if np.any(md <= 0):
        raise ValueError("mass diagonal must be positive")
    scale = max(float(np.max(np.abs(kd))), float(np.max(np.abs(ko), initial=0.0))) / float(np.max(md))
    if atol is None:
        atol = 1e-14 * max(scale, 1e-300)
    kd_l, ko_l, md_l, mo_l = kd.tolist(), ko.tolist(), md.tolist(), mo.tolist()

    def count(s):
        return sturm_count(kd_l, ko_l, md_l, mo_l, s)

    # Rayleigh quotients bound lam_min from above.
    rq_ones = (kd.sum() + 2 * ko.sum()) / (md.sum() + 2 * mo.sum())
    hi = float(min(rq_ones, np.min(kd / md)))
    step = max(abs(hi), scale, 1e-300) * 1e-12
    while count(hi) == 0:
        hi += step
        step *= 2
    width = max(abs(hi), scale) * 1e-3 + atol
    lo = hi - width
    while count(lo) > 0:
        width *= 2
        lo = hi - width
    while hi - lo > rtol * max(abs(lo), abs(hi)) + atol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if count(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
