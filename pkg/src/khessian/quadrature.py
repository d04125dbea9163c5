"""Adaptive Simpson quadrature and per-element Gauss rules."""

from __future__ import annotations

import math

import numpy as np


class QuadratureError(ArithmeticError):
    pass


def adaptive_simpson(f, a: float, b: float, rtol: float = 1e-10, atol: float = 1e-14,
                     max_depth: int = 50, min_panels: int = 8) -> float:
    """Integrate scalar f over [a, b] by adaptive Simpson with Richardson correction.

    The error target is max(atol, rtol * |I|), where I is a coarse estimate on
    `min_panels` panels that is refined as the recursion proceeds.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    xs = np.linspace(a, b, 2 * min_panels + 1)
    fs = [float(f(x)) for x in xs]
    if not all(map(math.isfinite, fs)):
        raise QuadratureError("integrand is not finite on the initial panels")
    coarse = sum((xs[2 * i + 2] - xs[2 * i]) / 6 * (fs[2 * i] + 4 * fs[2 * i + 1] + fs[2 * i + 2])
                 for i in range(min_panels))
    tol = max(atol, rtol * abs(coarse))

    total = 0.0
    # stack entries: (a, m, b, fa, fm, fb, whole, eps, depth)
    stack = []
    for i in range(min_panels):
        x0, x1, x2 = xs[2 * i], xs[2 * i + 1], xs[2 * i + 2]
        f0, f1, f2 = fs[2 * i], fs[2 * i + 1], fs[2 * i + 2]
        whole = (x2 - x0) / 6 * (f0 + 4 * f1 + f2)
        stack.append((x0, x1, x2, f0, f1, f2, whole, tol / min_panels, 0))
    while stack:
        x0, x1, x2, f0, f1, f2, whole, eps, depth = stack.pop()
        xl, xr = 0.5 * (x0 + x1), 0.5 * (x1 + x2)
        fl, fr = float(f(xl)), float(f(xr))
        left = (x1 - x0) / 6 * (f0 + 4 * fl + f1)
        right = (x2 - x1) / 6 * (f1 + 4 * fr + f2)
        delta = left + right - whole
        if abs(delta) <= 15 * eps or depth >= max_depth:
            if not math.isfinite(delta):
                raise QuadratureError("integrand is not finite")
            total += left + right + delta / 15
        else:
            stack.append((x0, xl, x1, f0, fl, f1, left, eps / 2, depth + 1))
            stack.append((x1, xr, x2, f1, fr, f2, right, eps / 2, depth + 1))
    return sign * total


def gauss_points(nodes: np.ndarray, order: int = 2):
    """Gauss-Legendre points and weights on every element [nodes[i], nodes[i+1]].

    Returns arrays of shape (n_elements, order): points, weights and the
    barycentric coordinate of each point within its element.
    """
    t, wt = np.polynomial.legendre.leggauss(order)
    a, b = nodes[:-1, None], nodes[1:, None]
    h = b - a
    x = a + 0.5 * h * (t + 1.0)
    w = 0.5 * h * wt
    s = 0.5 * (t + 1.0) * np.ones_like(h)
    return x, w, s
