"""Shared data types: problem parameters, weights, radial profiles, nonlinearities."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator
from scipy.special import expit


class KHessianError(Exception):
    """Base class for errors raised by this package."""


class DomainError(KHessianError, ValueError):
    """Argument outside the domain where a quantity is defined."""


class ExtrapolationError(DomainError):
    """Evaluation requested outside a tabulated range."""


class DegeneracyError(KHessianError, ArithmeticError):
    """The equation degenerates (vanishing gradient with k >= 2)."""


@dataclass(frozen=True)
class ProblemParams:
    n: int
    k: int

    def __post_init__(self):
        if int(self.n) != self.n or int(self.k) != self.k:
            raise DomainError("n and k must be integers")
        if self.n < 1:
            raise DomainError(f"dimension n={self.n} must be >= 1")
        if not 1 <= self.k <= self.n:
            raise DomainError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")

    @property
    def cnk(self) -> float:
        return cnk(self)

    @property
    def omega(self) -> float:
        """Surface measure of the unit (n-1)-sphere."""
        return 2.0 * math.pi ** (self.n / 2) / math.gamma(self.n / 2)

    def c(self, j: int) -> float:
        return math.comb(self.n, j) / self.n


def cnk(params: ProblemParams) -> float:
    """binomial(n, k) / n."""
    return math.comb(params.n, params.k) / params.n


def h_lambda(lam: float, r):
    """r**lam / (1 + r**lam), evaluated without overflow for any r >= 0."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        return expit(lam * np.log(r))


def log1p_pow(r, p: float):
    """log(1 + r**p) for r >= 0, p > 0, stable for huge and tiny r."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        return np.logaddexp(0.0, p * np.log(r))


# -- weights ---------------------------------------------------------------


class WeightSpec:
    """A radial weight w(r) > 0 together with its growth rate W = r w'/w."""

    kind: str = ""

    def w(self, r):
        raise NotImplementedError

    def W(self, r):
        raise NotImplementedError

    def r_dW(self, r):
        """r * W'(r)."""
        raise NotImplementedError

    @property
    def Gamma(self) -> float:
        """Limit of W at the origin."""
        raise NotImplementedError

    @property
    def gamma(self) -> float:
        """Limit of W at infinity."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(d: Mapping) -> "WeightSpec":
        kind = str(d.get("kind", "power")).lower()
        if kind in ("const", "constant"):
            return PowerLaw(0.0)
        if kind in ("power", "powerlaw"):
            return PowerLaw(float(d.get("sigma1", 0.0)))
        if kind in ("interp", "interpolatedpower", "interpolated"):
            return InterpolatedPower(
                float(d["sigma1"]), float(d["sigma2"]), float(d.get("tau", 0.0))
            )
        if kind in ("tabulated", "table"):
            return Tabulated(np.asarray(d["r"], float), np.asarray(d["w"], float))
        raise DomainError(f"unknown weight kind {kind!r}")

    @staticmethod
    def _check_r(r):
        r = np.asarray(r, dtype=float)
        if np.any(~(r > 0)):
            raise DomainError("weights are evaluated at r > 0 only")
        return r


@dataclass(frozen=True)
class InterpolatedPower(WeightSpec):
    """w(r) = r**sigma1 * (1 + r**sigma2)**(-tau/sigma2)."""

    sigma1: float
    sigma2: float
    tau: float = 0.0
    kind: str = field(default="interp", init=False)

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be > 0, got {self.sigma2}")
        if not all(map(math.isfinite, (self.sigma1, self.sigma2, self.tau))):
            raise DomainError("weight exponents must be finite")

    def w(self, r):
        r = self._check_r(r)
        return np.exp(self.sigma1 * np.log(r) - self.tau / self.sigma2 * log1p_pow(r, self.sigma2))

    def W(self, r):
        r = self._check_r(r)
        return self.sigma1 - self.tau * h_lambda(self.sigma2, r)

    def r_dW(self, r):
        r = self._check_r(r)
        h = h_lambda(self.sigma2, r)
        return -self.tau * self.sigma2 * (1.0 - h) * h

    @property
    def Gamma(self) -> float:
        return self.sigma1

    @property
    def gamma(self) -> float:
        return self.sigma1 - self.tau

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sigma1": self.sigma1, "sigma2": self.sigma2, "tau": self.tau}


@dataclass(frozen=True)
class PowerLaw(InterpolatedPower):
    """w(r) = r**sigma1; the tau = 0 case of InterpolatedPower."""

    sigma1: float = 0.0
    sigma2: float = field(default=1.0, init=False)
    tau: float = field(default=0.0, init=False)
    kind: str = field(default="power", init=False)

    def w(self, r):
        r = self._check_r(r)
        return r**self.sigma1

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sigma1": self.sigma1}


@dataclass(frozen=True, eq=False)
class Tabulated(WeightSpec):
    """Weight sampled on a grid; W from finite differences of log w against log r."""

    r: np.ndarray
    values: np.ndarray
    kind: str = field(default="tabulated", init=False)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        w = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != w.shape or r.size < 3:
            raise DomainError("tabulated weight needs matching 1-D arrays of length >= 3")
        if np.any(r <= 0) or np.any(np.diff(r) <= 0):
            raise DomainError("tabulated grid must be positive and strictly increasing")
        if np.any(w <= 0):
            raise DomainError("tabulated weight must be positive to define W")
        logr, logw = np.log(r), np.log(w)
        # np.gradient: centred differences inside, one-sided at the ends
        Wn = np.gradient(logw, logr, edge_order=1)
        rdWn = np.gradient(Wn, logr, edge_order=1)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", w)
        object.__setattr__(self, "_logr", logr)
        object.__setattr__(self, "_logw", logw)
        object.__setattr__(self, "_W", Wn)
        object.__setattr__(self, "_rdW", rdWn)

    def _logpos(self, r):
        r = self._check_r(r)
        lo, hi = self.r[0], self.r[-1]
        if np.any(r < lo * (1 - 1e-12)) or np.any(r > hi * (1 + 1e-12)):
            raise ExtrapolationError(f"r outside tabulated range [{lo}, {hi}]")
        return np.clip(np.log(r), self._logr[0], self._logr[-1])

    def w(self, r):
        return np.exp(np.interp(self._logpos(r), self._logr, self._logw))

    def W(self, r):
        return np.interp(self._logpos(r), self._logr, self._W)

    def r_dW(self, r):
        return np.interp(self._logpos(r), self._logr, self._rdW)

    @property
    def Gamma(self) -> float:
        return float(self._W[0])

    @property
    def gamma(self) -> float:
        return float(self._W[-1])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "r": self.r.tolist(), "w": self.values.tolist()}


@dataclass(frozen=True)
class AuxiliaryRate:
    """v(r) = (k - 1 + W(r)) / (k + 1) and its logarithmic derivative r v'(r)."""

    weight: WeightSpec
    k: int

    def v(self, r):
        return (self.k - 1 + self.weight.W(r)) / (self.k + 1)

    def r_dv(self, r):
        return self.weight.r_dW(r) / (self.k + 1)

    @property
    def v0(self) -> float:
        return (self.k - 1 + self.weight.Gamma) / (self.k + 1)

    @property
    def v_inf(self) -> float:
        return (self.k - 1 + self.weight.gamma) / (self.k + 1)


@dataclass(frozen=True)
class WeightValues:
    w: float
    W: float
    v: float
    r_dv: float


def weight_eval(spec: WeightSpec, r, k: int) -> WeightValues:
    """Evaluate w, W, v and r v' at radius r for Hessian order k."""
    rate = AuxiliaryRate(spec, k)
    return WeightValues(spec.w(r), spec.W(r), rate.v(r), rate.r_dv(r))


@dataclass
class HypothesisReport:
    W_nonincreasing: bool
    limits_finite: bool
    Gamma: float
    gamma: float
    v_inf: float
    threshold: float
    threshold_ok: bool
    margin: float
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.W_nonincreasing and self.limits_finite and self.threshold_ok

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "W_nonincreasing": self.W_nonincreasing,
            "limits_finite": self.limits_finite,
            "Gamma": self.Gamma,
            "gamma": self.gamma,
            "v_inf": self.v_inf,
            "threshold": self.threshold,
            "threshold_ok": self.threshold_ok,
            "margin": self.margin,
            "warnings": list(self.warnings),
        }


def validate_hypotheses(spec: WeightSpec, params: ProblemParams, samples: int = 2001) -> HypothesisReport:
    """Check monotone W, finite limits and n > k(k+1)/(2k+gamma). Never raises."""
    n, k = params.n, params.k
    notes = []
    if isinstance(spec, Tabulated):
        r = np.geomspace(spec.r[0], spec.r[-1], samples)
        notes.append("Gamma and gamma estimated from the table endpoints")
    else:
        r = np.geomspace(1e-8, 1e8, samples)
    W = spec.W(r)
    scale = max(1.0, float(np.max(np.abs(W))))
    nonincreasing = bool(np.all(np.diff(W) <= 1e-12 * scale))
    if not nonincreasing:
        notes.append("W is not nonincreasing on the sampled grid")
    G, g = float(spec.Gamma), float(spec.gamma)
    finite = math.isfinite(G) and math.isfinite(g)
    v_inf = (k - 1 + g) / (k + 1)
    margin = n / k * (v_inf + 1) - 1
    if 2 * k + g > 0:
        threshold = k * (k + 1) / (2 * k + g)
        threshold_ok = n > threshold
    else:
        threshold = math.inf
        threshold_ok = False
        notes.append("2k + gamma <= 0: no dimension satisfies the threshold")
    return HypothesisReport(nonincreasing, finite, G, g, v_inf, threshold, threshold_ok, margin, notes)


# -- profiles --------------------------------------------------------------


class Profile:
    """Anything that can report u, u' and u'' at arbitrary radii."""

    def evaluate(self, r):
        """Return (u, du) at r."""
        raise NotImplementedError

    def second(self, r):
        raise NotImplementedError

    def lambda2(self, r):
        """u'/r, with the limit u''(0) at the origin."""
        r = np.asarray(r, dtype=float)
        _, du = self.evaluate(r)
        at0 = r == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = np.where(at0, 0.0, du / np.where(at0, 1.0, r))
        if np.any(at0):
            lam = np.where(at0, self.second(np.where(at0, r, 0.0)), lam)
        return lam


@dataclass(frozen=True, eq=False)
class RadialProfile(Profile):
    """A radial function sampled on a strictly increasing grid."""

    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    d2u: np.ndarray | None = None

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        u = np.asarray(self.u, dtype=float)
        du = np.asarray(self.du, dtype=float)
        if r.ndim != 1 or r.size < 2:
            raise DomainError("profile grid needs at least two points")
        if u.shape != r.shape or du.shape != r.shape:
            raise DomainError("profile arrays must share the grid shape")
        if np.any(np.diff(r) <= 0):
            raise DomainError("profile grid must be strictly increasing")
        if r[0] < 0:
            raise DomainError("profile radii must be >= 0")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "du", du)
        if self.d2u is not None:
            d2u = np.asarray(self.d2u, dtype=float)
            if d2u.shape != r.shape:
                raise DomainError("d2u must share the grid shape")
            object.__setattr__(self, "d2u", d2u)

    @property
    def lambda2_grid(self) -> np.ndarray:
        return self.lambda2(self.r)

    def d2u_or_fd(self) -> np.ndarray:
        """Stored u'' or, when absent, second-order finite differences of u'."""
        if self.d2u is not None:
            return self.d2u
        return np.gradient(self.du, self.r, edge_order=2)

    def invariant_violations(self, tol: float = 1e-12) -> list[str]:
        """Monotonicity and sign checks satisfied by radial solutions."""
        out = []
        scale = max(1.0, float(np.max(np.abs(self.u))))
        if np.any(np.diff(self.u) < -tol * scale):
            out.append("u is not nondecreasing")
        pos = self.r > 0
        if np.any(self.du[pos] < -tol * max(1.0, float(np.max(np.abs(self.du))))):
            out.append("u'/r < 0 somewhere")
        if self.r[0] == 0 and abs(self.du[0]) > tol:
            out.append("u'(0) != 0")
        return out

    def _splines(self):
        cache = self.__dict__.get("_spl")
        if cache is None:
            su = CubicHermiteSpline(self.r, self.u, self.du)
            if self.d2u is not None:
                sdu = CubicHermiteSpline(self.r, self.du, self.d2u)
            else:
                sdu = PchipInterpolator(self.r, self.du)
            cache = (su, sdu)
            object.__setattr__(self, "_spl", cache)
        return cache

    def _inside(self, r):
        r = np.asarray(r, dtype=float)
        span = self.r[-1] - self.r[0]
        if np.any(r < self.r[0] - 1e-12 * span) or np.any(r > self.r[-1] + 1e-12 * span):
            raise ExtrapolationError(f"r outside profile range [{self.r[0]}, {self.r[-1]}]")
        return np.clip(r, self.r[0], self.r[-1])

    def evaluate(self, r):
        r = self._inside(r)
        su, sdu = self._splines()
        return su(r), sdu(r)

    def second(self, r):
        r = self._inside(r)
        return self._splines()[1].derivative()(r)

    def to_csv(self, path) -> None:
        write_profile_csv(path, self)

    @classmethod
    def from_csv(cls, path) -> "RadialProfile":
        return read_profile_csv(path)


@dataclass(frozen=True, eq=False)
class AnalyticProfile(Profile):
    """Profile given by closed-form callables for u, u' and u''."""

    u_fn: Callable
    du_fn: Callable
    d2u_fn: Callable
    lambda2_fn: Callable | None = None

    def evaluate(self, r):
        r = np.asarray(r, dtype=float)
        return self.u_fn(r), self.du_fn(r)

    def second(self, r):
        return self.d2u_fn(np.asarray(r, dtype=float))

    def lambda2(self, r):
        if self.lambda2_fn is not None:
            return self.lambda2_fn(np.asarray(r, dtype=float))
        return super().lambda2(r)

    def sample(self, r) -> RadialProfile:
        r = np.asarray(r, dtype=float)
        return RadialProfile(r, self.u_fn(r), self.du_fn(r), self.d2u_fn(r))


def quadratic_profile(r, a: float = 0.5) -> RadialProfile:
    """u = a r^2 sampled on r (a = 1/2 gives the unit-Hessian profile)."""
    r = np.asarray(r, dtype=float)
    return RadialProfile(r, a * r**2, 2 * a * r, np.full_like(r, 2 * a))


# -- nonlinearity ----------------------------------------------------------


@dataclass(frozen=True)
class Nonlinearity:
    g: Callable
    dg: Callable
    nonnegative: bool = False
    nonincreasing: bool = False
    name: str = ""

    def __call__(self, s):
        return self.g(s)

    def check_flags(self, samples: Sequence[float]) -> list[str]:
        s = np.asarray(samples, dtype=float)
        out = []
        if self.nonnegative and np.any(np.asarray(self.g(s)) < 0):
            out.append("g takes negative values")
        if self.nonincreasing and np.any(np.asarray(self.dg(s)) > 0):
            out.append("g' takes positive values")
        return out

    @classmethod
    def constant(cls, value: float) -> "Nonlinearity":
        return cls(
            lambda s: np.full(np.shape(s), float(value)),
            lambda s: np.zeros(np.shape(s)),
            nonnegative=value >= 0,
            nonincreasing=True,
            name=f"const({value})",
        )

    @classmethod
    def linear(cls, a: float, b: float) -> "Nonlinearity":
        """g(s) = a + b s."""
        return cls(
            lambda s: a + b * np.asarray(s, dtype=float),
            lambda s: np.full(np.shape(s), float(b)),
            nonincreasing=b <= 0,
            name=f"linear({a},{b})",
        )


# -- serialisation ---------------------------------------------------------


def params_to_dict(params: ProblemParams, weight: WeightSpec) -> dict:
    return {"n": params.n, "k": params.k, "weight": weight.to_dict()}


def params_from_dict(d: Mapping) -> tuple[ProblemParams, WeightSpec]:
    params = ProblemParams(int(d["n"]), int(d["k"]))
    weight = WeightSpec.from_dict(d.get("weight", {"kind": "const"}))
    return params, weight


def write_profile_csv(path, profile: RadialProfile) -> None:
    cols = ["r", "u", "du"] + (["d2u"] if profile.d2u is not None else [])
    arrays = [profile.r, profile.u, profile.du] + ([profile.d2u] if profile.d2u is not None else [])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(cols)
        for row in zip(*arrays):
            wr.writerow([f"{x:.17g}" for x in row])


def read_profile_csv(path) -> RadialProfile:
    with open(Path(path), newline="") as fh:
        rd = csv.reader(fh)
        header = [h.strip() for h in next(rd)]
        if header[:3] != ["r", "u", "du"] or header[3:] not in ([], ["d2u"]):
            raise DomainError(f"profile CSV header must be r,u,du[,d2u], got {','.join(header)}")
        rows = np.array([[float(x) for x in row] for row in rd if row])
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise DomainError("profile CSV needs at least two data rows")
    d2u = rows[:, 3] if rows.shape[1] == 4 else None
    return RadialProfile(rows[:, 0], rows[:, 1], rows[:, 2], d2u)

