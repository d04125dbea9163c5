"""Explicit radial family u_beta with matching weights and nonlinearities.

With mu = sigma1/k + 2 the profiles are

    u_beta(r) = sgn(beta) (1 + r^mu)^(beta/mu)    (beta != 0),
    u_0(r)    = log(1 + r^mu) / mu,

and g_beta is chosen so that S_k(D^2 u_beta) = w g_beta(u_beta) with
w = r^sigma1 (1 + r^sigma2)^(-tau/sigma2).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import (AnalyticProfile, AuxiliaryRate, DomainError, InterpolatedPower, Nonlinearity, PowerLaw,
                   ProblemParams, WeightSpec, h_lambda, log1p_pow)
from .operator import residual, sk_radial

__all__ = ["FamilyParams", "FamilyCase", "h_lambda", "r_dh_lambda", "load_matrix"]


def r_dh_lambda(lam: float, r):
    """r h_lam'(r) = lam (1 - h) h."""
    h = h_lambda(lam, r)
    return lam * (1.0 - h) * h


@dataclass(frozen=True)
class FamilyParams:
    sigma1: float
    sigma2: float = 1.0
    tau: float = 0.0
    beta: float = 0.0

    @classmethod
    def from_dict(cls, d: Mapping) -> "FamilyParams":
        return cls(float(d.get("sigma1", 0.0)), float(d.get("sigma2", 1.0)), float(d.get("tau", 0.0)),
                   float(d.get("beta", 0.0)))

    def to_dict(self) -> dict:
        return {"sigma1": self.sigma1, "sigma2": self.sigma2, "tau": self.tau, "beta": self.beta}

    def mu(self, k: int) -> float:
        return self.sigma1 / k + 2

    def weight(self) -> WeightSpec:
        if self.tau == 0:
            return PowerLaw(self.sigma1)
        return InterpolatedPower(self.sigma1, self.sigma2, self.tau)

    def violations(self, params: ProblemParams) -> list[str]:
        """Parameter conditions under which the family is built; empty when valid."""
        n, k = params.n, params.k
        s1, s2, tau = self.sigma1, self.sigma2, self.tau
        out = []
        if not all(map(math.isfinite, (s1, s2, tau, self.beta))):
            return ["non-finite parameter"]
        if tau < 0:
            out.append("tau < 0")
        if not s1 > -k:
            out.append("sigma1 <= -k")
        if tau == 0:
            if 2 * k + s1 > 0 and not n > k * (k + 1) / (2 * k + s1):
                out.append("n <= k(k+1)/(2k+sigma1)")
        else:
            if not s2 > 0:
                out.append("sigma2 <= 0")
            elif not k * (s2 - 2) >= s1:
                out.append("k(sigma2-2) < sigma1")
            if not 2 * k + s1 > tau:
                out.append("2k+sigma1 <= tau")
            else:
                bound = max(math.sqrt(tau * max(s2, 0.0) / (k + 1)) + (2 * k - (k - 1) * s1) / k,
                            k * (k + 1) / (2 * k + s1 - tau))
                if not n > bound:
                    out.append(f"n <= {bound:.6g}")
        return out


class FamilyCase:
    """u_beta, g_beta and the threshold quantities for one (n, k, FamilyParams)."""

    def __init__(self, params: ProblemParams, fp: FamilyParams, check: bool = True):
        self.params = params
        self.fp = fp
        if check:
            bad = fp.violations(params)
            if bad:
                raise DomainError("invalid family parameters: " + "; ".join(bad))
        self.n, self.k = params.n, params.k
        self.beta = fp.beta
        self.mu = fp.mu(self.k)
        self.weight = fp.weight()
        self.rate = AuxiliaryRate(self.weight, self.k)
        self.v0 = self.rate.v0
        self.v_inf = self.rate.v_inf

    # -- profile ------------------------------------------------------------

    def _scale(self) -> float:
        return abs(self.beta) if self.beta != 0 else 1.0

    def u(self, r):
        r = np.asarray(r, float)
        L = log1p_pow(r, self.mu)
        if self.beta == 0:
            return L / self.mu
        return np.sign(self.beta) * np.exp(self.beta / self.mu * L)

    def du(self, r):
        r = np.asarray(r, float)
        L = log1p_pow(r, self.mu)
        with np.errstate(divide="ignore"):
            out = self._scale() * np.exp((self.mu - 1) * np.log(r) + (self.beta / self.mu - 1) * L)
        return out

    def lambda2(self, r):
        r = np.asarray(r, float)
        L = log1p_pow(r, self.mu)
        p = self.mu - 2
        at0 = r == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self._scale() * np.exp(p * np.log(np.where(at0, 1.0, r)) + (self.beta / self.mu - 1) * L)
        if np.any(at0):
            lim = self._scale() if p == 0 else (0.0 if p > 0 else math.inf)
            out = np.where(at0, lim, out)
        return out

    def log_slope_lambda2(self, r):
        """r lambda2' / lambda2 = mu - 2 + (beta - mu) h_mu."""
        return self.mu - 2 + (self.beta - self.mu) * h_lambda(self.mu, r)

    def d2u(self, r):
        return self.lambda2(r) * (self.log_slope_lambda2(r) + 1)

    def profile(self) -> AnalyticProfile:
        return AnalyticProfile(self.u, self.du, self.d2u, self.lambda2)

    # -- nonlinearity -------------------------------------------------------

    def _f_parts(self, s):
        """f, f' on the interior of I_beta as functions of s = |y| (beta != 0) or y (beta = 0)."""
        n, k, mu, beta = self.n, self.k, self.mu, self.beta
        s2, tau = self.fp.sigma2, self.fp.tau
        s = np.asarray(s, float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if beta == 0:
                e = mu * s
                t = np.exp(e)
                tm1 = np.expm1(e)
                dt = mu * t
                P = n - 2 * k + k * mu / t
                dP = -k * mu**2 / t
                C = np.exp(-k * e)
                dC = -k * mu * C
                amp = 1.0
            else:
                ls = np.log(s)
                e = mu / beta * ls
                t = np.exp(e)
                tm1 = np.expm1(e)
                dt = mu / beta * t / s
                P = n + k * (beta - 2) + k * (mu - beta) / t
                dP = -k * (mu - beta) * (mu / beta) / (t * s)
                C = np.exp(k * (1 - mu / beta) * ls)
                dC = C * k * (1 - mu / beta) / s
                amp = abs(beta) ** k
            if tau == 0:
                A = np.ones_like(s)
                dA = np.zeros_like(s)
            else:
                q = tm1 ** (s2 / mu) + 1
                dq = (s2 / mu) * tm1 ** (s2 / mu - 1) * dt
                A = q ** (tau / s2)
                dA = (tau / s2) * q ** (tau / s2 - 1) * dq
            f = amp * A * P * C
            df = amp * (dA * P * C + A * dP * C + A * P * dC)
        return f, df

    def f(self, s):
        return self._f_parts(s)[0]

    def df(self, s):
        return self._f_parts(s)[1]

    def boundary_limits(self) -> tuple[float, float]:
        """Limits of f and f' at the finite end of I_beta (s -> 1 for beta != 0, s -> 0 for beta = 0)."""
        n, k, mu, beta = self.n, self.k, self.mu, self.beta
        if beta == 0:
            _, df = self._f_parts(np.array([0.0]))
            return float(n + k * (mu - 2)), float(df[0])
        scale = abs(beta) ** k
        f1 = scale * (n + k * (mu - 2))
        df1 = scale * k * (beta - mu) * ((k + 1) * mu + n - 2 * k) / beta
        s2, tau = self.fp.sigma2, self.fp.tau
        if tau and abs(s2 - mu) <= 1e-12 * mu:
            # q'(1) = sigma2 / beta when sigma2 = mu, and 0 when sigma2 > mu
            df1 += tau / s2 * (s2 / beta) * f1
        return float(f1), float(df1)

    def g(self, y):
        return self._g_parts(y)[0]

    def dg(self, y):
        return self._g_parts(y)[1]

    def _g_parts(self, y):
        y = np.asarray(y, float)
        c = self.params.cnk
        beta = self.beta
        f_b, df_b = self.boundary_limits()
        if beta > 0:
            inside = y >= 1
            s = np.where(inside, y, 2.0)
            f, df = self._f_parts(s)
            g = np.where(inside, c * f, c * (f_b + df_b * (y - 1)))
            dg = np.where(inside, c * df, c * df_b)
        elif beta == 0:
            inside = y >= 0
            s = np.where(inside, y, 1.0)
            f, df = self._f_parts(s)
            g = np.where(inside, c * f, c * (f_b + df_b * y))
            dg = np.where(inside, c * df, c * df_b)
        else:
            inside = (y >= -1) & (y < 0)
            s = np.where(inside, -y, 0.5)
            f, df = self._f_parts(s)
            below = y < -1
            # on [-1, 0) g(y) = c f(-y), so dg/dy = -c f'(-y)
            g = np.where(inside, c * f, np.where(below, c * (f_b - df_b * (y + 1)), 0.0))
            dg = np.where(inside, -c * df, np.where(below, -c * df_b, 0.0))
        if g.ndim == 0:
            return float(g), float(dg)
        return g, dg

    def nonlinearity(self) -> Nonlinearity:
        return Nonlinearity(self.g, self.dg, nonnegative=True, nonincreasing=False,
                            name=f"g_beta(beta={self.beta})")

    # -- threshold quantities ------------------------------------------------

    @property
    def nu(self) -> float:
        n, k = self.n, self.k
        fp = self.fp
        rdv1 = -fp.tau * fp.sigma2 / (4 * (k + 1)) if fp.tau else 0.0
        rad = self.v0**2 + n / k * self.v0 + n / k - 1 - rdv1
        if rad < 0:
            raise DomainError("negative radicand in nu")
        return math.sqrt(rad)

    def radicand(self, r):
        n, k = self.n, self.k
        v = self.rate.v(r)
        return v**2 + n / k * v + n / k - 1 - self.rate.r_dv(r)

    def int_v_over_s(self, r):
        """int_1^r v(s)/s ds in closed form."""
        r = np.asarray(r, float)
        fp, k = self.fp, self.k
        out = self.v0 * np.log(r)
        if fp.tau:
            out = out - fp.tau / ((k + 1) * fp.sigma2) * (log1p_pow(r, fp.sigma2) - math.log(2.0))
        return out

    @property
    def q_base(self) -> float:
        return (-self.n + 2 * self.nu + 2 * self.k + 2) / (self.k + 1)

    def Q(self, r):
        """Threshold Q(r): the log-average of v over [1, r] for r > 1, v(r) for r <= 1."""
        r = np.asarray(r, float)
        big = r > 1
        with np.errstate(divide="ignore", invalid="ignore"):
            avg = self.int_v_over_s(np.where(big, r, 2.0)) / np.log(np.where(big, r, 2.0))
        small = self.rate.v(np.where(big, 1.0, np.maximum(r, 1e-300)))
        x = np.where(big, avg, small)
        out = self.q_base + 2 / (self.k + 1) * x
        return float(out) if out.ndim == 0 else out

    @property
    def Q_limits(self) -> tuple[float, float]:
        """Q at r -> 0+ and r -> infinity."""
        return (self.q_base + 2 * self.v0 / (self.k + 1), self.q_base + 2 * self.v_inf / (self.k + 1))

    def sup_Q(self, grid=None) -> dict:
        r = np.geomspace(1e-3, 1e6, 2001) if grid is None else np.asarray(grid, float)
        q = self.Q(r)
        i = int(np.argmax(q))
        lo, hi = self.Q_limits
        value = max(float(q[i]), lo, hi)
        return {"sup": value, "grid_sup": float(q[i]), "r_at_grid_sup": float(r[i]),
                "interior": bool(0 < i < r.size - 1) and float(q[i]) >= max(lo, hi),
                "Q_at_0": lo, "Q_at_inf": hi}

    def threshold_beta(self) -> float:
        return self.sup_Q()["sup"]

    def A(self, r):
        r = np.asarray(r, float)
        big = r > 1
        rr = np.where(big, r, 2.0)
        val = 2 * (self.int_v_over_s(rr) - self.rate.v(rr) * np.log(rr)) / np.log(rr)
        return np.where(big, val, 0.0)

    def B(self, r):
        k, n = self.k, self.n
        tau = self.fp.tau
        hs = h_lambda(self.fp.sigma2, r) if tau else np.zeros_like(np.asarray(r, float))
        return (k**2 + 1) * (self.v0 + 1) / k + n - 2 * k + 2 * tau / (k + 1) * hs

    def I_plus(self, r):
        return self.B(r) + 2 * self.nu

    def I_minus(self, r):
        return self.B(r) - 2 * self.nu

    def nonnega(self, r):
        """(k+1)(mu - Q(r))(1 - h_mu(r)) + A(r)."""
        return (self.k + 1) * (self.mu - self.Q(r)) * (1 - h_lambda(self.mu, r)) + self.A(r)

    # -- Hardy data -----------------------------------------------------------

    def V(self, r):
        r = np.asarray(r, float)
        return r**2 * self.lambda2(r) ** (self.k + 1)

    def rdV(self, r):
        """r V' = V (2 + (k+1) r lambda2'/lambda2)."""
        return self.V(r) * (2 + (self.k + 1) * self.log_slope_lambda2(r))

    def hardy_hypothesis(self, r):
        """theta (r V' + (n - 2 rho - 2) V - theta V) with rho = v, theta = 2 nu, divided by V."""
        theta = 2 * self.nu
        ratio = 2 + (self.k + 1) * self.log_slope_lambda2(r)
        return theta * (ratio + self.n - 2 * self.rate.v(r) - 2 - theta)

    def origin_exponent(self) -> float:
        """r^(n-2) V ~ r^e near 0 with e = n + (k+1) sigma1 / k."""
        return self.n + (self.k + 1) * self.fp.sigma1 / self.k


# -- certificates ---------------------------------------------------------------


def _item(name, passed, value=None, r=None, **extra) -> dict:
    d = {"name": name, "passed": bool(passed)}
    if value is not None:
        d["value"] = float(value)
    if r is not None:
        d["r"] = float(r)
    d.update(extra)
    return d


def _min_item(name, values, grid, tol=0.0, strict=False) -> dict:
    values = np.asarray(values, float)
    i = int(np.argmin(values))
    ok = bool(np.all(values > tol)) if strict else bool(np.all(values >= -tol))
    return _item(name, ok, values[i], grid[i])


def equation_residual(case: FamilyCase, r=None) -> float:
    """Normalised sup of S_k(D^2 u_beta) - w g_beta(u_beta) on log-spaced radii."""
    r = np.geomspace(1e-2, 1e3, 100) if r is None else np.asarray(r, float)
    prof = case.profile().sample(r)
    rep = residual(case.params, case.weight, case.nonlinearity(), prof)
    return rep.normalized_sup


def kconvexity_certificate(case: FamilyCase, r_grid=None) -> dict:
    """Analytic sign conditions and S_j >= 0 on a grid for j = 1..k."""
    n, k, mu, beta = case.n, case.k, case.mu, case.beta
    r = np.geomspace(1e-2, 1e3, 400) if r_grid is None else np.asarray(r_grid, float)
    items = []
    for j in range(1, k + 1):
        a = n + j * (mu - 2)
        b = n + j * (beta - 2)
        items.append(_item(f"n+j(mu-2)>0 (j={j})", a > 0, a))
        items.append(_item(f"n+j(beta-2)>0 (j={j})", b > 0, b))
    lam2 = case.lambda2(r)
    lam1 = case.d2u(r)
    for j in range(1, k + 1):
        sj = np.asarray(sk_radial(case.params, j, lam1, lam2))
        scale = case.params.c(j) * np.abs(lam2) ** (j - 1) * (n * np.abs(lam2) + j * np.abs(lam1 - lam2))
        items.append(_min_item(f"S_{j}>=0 on grid", sj / np.maximum(scale, 1e-300), r, tol=1e-12))
    return {"check": "k-convexity", "passed": all(it["passed"] for it in items), "items": items}


def semistability_certificate(case: FamilyCase, r_grid=None, n_eta: int = 20, seed: int = 0,
                              eigen: bool = True, windows=None, per_decade=None) -> dict:
    """Itemised checks that certify Q_u(xi) >= 0 for u_beta through the Hardy-type inequality,
    with an optional independent eigenvalue computation."""
    from . import stability

    r = np.geomspace(1e-3, 1e3, 1201) if r_grid is None else np.asarray(r_grid, float)
    items = []
    sq = case.sup_Q()
    items.append(_item("beta>=sup Q", case.beta >= sq["sup"] - 1e-12, case.beta - sq["sup"],
                       sq["r_at_grid_sup"], sup_Q=sq["sup"]))
    e = case.origin_exponent()
    items.append(_item("r^(n-2)V->0 at origin", e > 0, e))
    items.append(_min_item("Hardy hypothesis", case.hardy_hypothesis(r), r, tol=1e-10))
    ip, im = case.I_plus(r), case.I_minus(r)
    items.append(_min_item("I_plus>0", ip, r, strict=True))
    items.append(_min_item("I_minus*I_plus>=0", ip * im, r, tol=1e-10))
    prod_err = np.max(np.abs(ip * im - (case.B(r) ** 2 - 4 * case.nu**2)))
    items.append(_item("I_minus*I_plus=B^2-4nu^2", prod_err <= 1e-9 * max(1.0, float(np.max(ip**2))), prod_err))
    items.append(_min_item("A>=0", case.A(r), r, tol=1e-12))
    items.append(_min_item("nonnega", case.nonnega(r), r, tol=1e-10))
    rad = case.radicand(r)
    nu_gap = case.nu - np.sqrt(np.maximum(rad, 0.0))
    abs_gap = np.sqrt(np.maximum(rad, 0.0)) - np.abs(case.rate.v(r))
    items.append(_min_item("nu>=sqrt(radicand)", nu_gap, r, tol=1e-12))
    items.append(_min_item("sqrt(radicand)>=|v|", abs_gap, r, tol=1e-12))

    rng = np.random.default_rng(seed)
    theta = 2 * case.nu
    worst = math.inf
    hyp_ok = origin_ok = True
    for _ in range(n_eta):
        eta = stability.random_hat_function(rng, (1e-2, 1e2))
        rep = stability.hardy_certificate(case.params, case.V, case.rate.v, theta, eta, rdV=case.rdV, grid=r)
        hyp_ok &= rep.hypothesis_ok
        origin_ok &= rep.origin_ok
        worst = min(worst, rep.inequality_value / max(rep.inequality_scale, 1e-300))
    items.append(_item("hardy_certificate hypothesis", hyp_ok))
    items.append(_item("hardy_certificate origin", origin_ok))
    items.append(_item("hardy inequality (random eta)", worst >= -1e-9, worst))

    result = {"check": "semi-stability", "items": items}
    if eigen:
        kw = {}
        if windows is not None:
            kw["windows"] = windows
        if per_decade is not None:
            kw["per_decade"] = per_decade
        st = stability.is_semistable(case.params, case.weight, case.nonlinearity(), case.profile(), **kw)
        items.append(_item("eigenvalue route", st.verdict == "semi-stable", st.min_eigenvalue,
                           verdict=st.verdict, window=list(st.r_window), mesh=st.mesh_size, tol=st.tol))
        result["stability"] = st.to_dict()
    result["passed"] = all(it["passed"] for it in items)
    return result


def admissible_beta_check(case: FamilyCase) -> dict:
    sq = case.sup_Q()
    return {"beta": case.beta, "sup_Q": sq["sup"], "admissible": case.beta >= sq["sup"] - 1e-12,
            "grid_sup_interior": sq["interior"]}


def threshold_dimension(k: int, gamma: float) -> float:
    """2(k + 2 gamma / k + 4): the dimension where the limiting growth exponent changes sign."""
    return 2 * (k + 2 * gamma / k + 4)


# -- parameter matrices -------------------------------------------------------


def resolve(entry: Mapping) -> FamilyCase:
    """FamilyCase from a dict with n, k, sigma1, sigma2, tau and beta (a number or "threshold").

    An optional beta_offset is added to beta, which allows sweeps around the threshold.
    """
    params = ProblemParams(int(entry["n"]), int(entry["k"]))
    beta = entry.get("beta", "threshold")
    base = FamilyParams(float(entry.get("sigma1", 0.0)), float(entry.get("sigma2", 1.0)),
                        float(entry.get("tau", 0.0)), 0.0 if isinstance(beta, str) else float(beta))
    if isinstance(beta, str):
        if beta != "threshold":
            raise DomainError(f"beta must be a number or 'threshold', got {beta!r}")
        base = FamilyParams(base.sigma1, base.sigma2, base.tau, FamilyCase(params, base).threshold_beta())
    offset = float(entry.get("beta_offset", 0.0))
    if offset:
        base = FamilyParams(base.sigma1, base.sigma2, base.tau, base.beta + offset)
    return FamilyCase(params, base)


def load_matrix(path) -> list[dict]:
    data = json.loads(Path(path).read_text())
    if isinstance(data, Mapping):
        data = data.get("cases", data.get("matrix"))
    if not isinstance(data, Sequence) or not all(isinstance(d, Mapping) for d in data):
        raise DomainError("family matrix must be a JSON array of objects")
    return list(data)
