"""Acceptance criteria for the package, one test per criterion.

Each test prints a single PASS/FAIL line.  Run directly with

    python tests/test_acceptance.py
"""

import math
import time

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from khessian import estimates as E
from khessian import stability as S
from khessian.core import PowerLaw, ProblemParams
from khessian.family import (FamilyCase, FamilyParams, equation_residual, semistability_certificate,
                             threshold_dimension)
from khessian.operator import oracle_elementary_symmetric, sk_radial, term_scale
from khessian.solver import flux_from_slope, integrate_outward, observed_order

TAU0 = [(11, 1, 0.0, 1.0, 0.0), (12, 2, 1.0, 1.0, 0.0), (9, 3, 0.0, 1.0, 0.0), (20, 2, -1.0, 1.0, 0.0),
        (6, 1, 2.0, 1.0, 0.0)]
TAUPOS = [(20, 2, 0.0, 4.0, 1.0), (12, 3, 1.0, 4.0, 0.5), (10, 1, 0.0, 2.0, 0.5), (8, 2, -1.0, 3.0, 0.5),
          (15, 1, 1.0, 4.0, 1.0)]


def at_threshold(n, k, s1, s2, tau, offset=0.0):
    p = ProblemParams(n, k)
    base = FamilyCase(p, FamilyParams(s1, s2, tau))
    return FamilyCase(p, FamilyParams(s1, s2, tau, base.threshold_beta() + offset))


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\nacceptance {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_1_operator_oracle(capsys):
    rng = np.random.default_rng(20240601)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(10_000):
        n = int(rng.integers(1, 11))
        j = int(rng.integers(1, n + 1))
        l1, l2 = rng.normal(scale=3.0, size=2)
        p = ProblemParams(n, 1)
        err = abs(sk_radial(p, j, l1, l2) - oracle_elementary_symmetric(p, j, l1, l2)) / term_scale(p, j, l1, l2)
        worst = max(worst, err)
    elapsed = time.perf_counter() - t0
    verdict(capsys, 1, worst <= 1e-10 and elapsed < 1.0, f"max rel error {worst:.2e}, {elapsed:.2f} s")


def test_criterion_2_constant_delta(capsys):
    worst = 0.0
    for n in range(3, 31):
        p = ProblemParams(n, 1)
        expected = -n / 2 + math.sqrt(n - 1) + 2
        for r in (2.0, 10.0, 100.0):
            worst = max(worst, abs(E.delta_of_r(p, PowerLaw(0.0), r) - expected))
    zero = max(abs(E.delta_of_r(ProblemParams(10, 1), PowerLaw(0.0), r)) for r in (2.0, 10.0, 100.0))
    verdict(capsys, 2, worst <= 1e-10 and zero <= 1e-10, f"max deviation {worst:.2e}, |delta| at n=10 {zero:.2e}")


def test_criterion_3_delta_inf_factorization(capsys):
    rng = np.random.default_rng(7)
    checked, bad = 0, []
    while checked < 100:
        k = int(rng.integers(1, 6))
        gamma = float(rng.uniform(-k + 0.1, 3 * k))
        n = int(rng.integers(2, 41))
        if not n > k * (k + 1) / (2 * k + gamma) or k * ((k - 1 + gamma) / (k + 1) - 1) + n < 0:
            continue
        d = E.delta_inf_forms(n, k, gamma)
        sign_ok = np.sign(round(d.value, 12)) == np.sign(round(threshold_dimension(k, gamma) - n, 12))
        if not (d.agree and sign_ok):
            bad.append((n, k, gamma))
        checked += 1
    verdict(capsys, 3, not bad, f"{checked} tuples, {len(bad)} disagreements")


def test_criterion_4_family_residual(capsys):
    t0 = time.perf_counter()
    res = {tup: equation_residual(at_threshold(*tup)) for tup in TAU0 + TAUPOS}
    elapsed = time.perf_counter() - t0
    worst = max(res.values())
    verdict(capsys, 4, worst <= 1e-8 and elapsed < 5.0,
            f"{len(TAU0)} tau=0 + {len(TAUPOS)} tau>0 tuples, max residual {worst:.2e}, {elapsed:.2f} s")


def test_criterion_5_semistability_concordance(capsys):
    r = np.geomspace(1e-3, 1e3, 1201)
    failures = []
    for tup in TAU0[:2] + TAUPOS:
        case = at_threshold(*tup)
        # (a) Hardy hypothesis, pointwise and through the generic certificate
        hyp = np.min(case.hardy_hypothesis(r))
        rng = np.random.default_rng(11)
        etas = [S.random_hat_function(rng, (1e-2, 1e2)) for _ in range(20)]
        cert = S.hardy_certificate(case.params, case.V, case.rate.v, 2 * case.nu, etas[0], rdV=case.rdV, grid=r)
        # (b) discretised quadratic form on every window
        st = S.is_semistable(case.params, case.weight, case.nonlinearity(), case.profile())
        eig_ok = st.verdict == "semi-stable" and all(w.eigenvalues[-1] >= -w.tol for w in st.windows)
        # (c) identity between the form along u' eta and its transformed version
        prof, g = case.profile(), case.nonlinearity()
        gap = 0.0
        for eta in etas:
            q = S.form_along_slope(case.params, case.weight, g, prof, eta)
            t = S.transformed_form_value(case.params, case.weight, prof, eta)
            gap = max(gap, abs(q - t) / S.transformed_form_scale(case.params, case.weight, prof, eta))
        if not (hyp >= -1e-10 and cert.hypothesis_ok and eig_ok and gap <= 1e-6):
            failures.append((tup, hyp, st.verdict, gap))
    verdict(capsys, 5, not failures, f"{len(TAU0[:2] + TAUPOS)} tuples, failures: {failures}")


def _min_ratio(case, critical):
    """Infimum over r >= 1 of |u|/r^delta (or |u|/log r), from a dense log grid refined by a bounded search."""
    p, w = case.params, case.weight
    delta = E.delta_inf(p, w)

    def ratio(t):
        r = math.exp(t)
        if critical:
            return abs(float(case.u(r))) / t
        return abs(float(case.u(r))) / r**E.delta_of_r(p, w, r)

    t = np.linspace(1e-3 if critical else 0.0, math.log(1e6), 2001)
    vals = np.array([ratio(x) for x in t])
    i = int(np.argmin(vals))
    if 0 < i < t.size - 1:
        res = minimize_scalar(ratio, bounds=(t[i - 1], t[i + 1]), method="bounded", options={"xatol": 1e-10})
        return min(vals[i], res.fun), math.exp(res.x), delta
    return vals[i], math.exp(t[i]), delta


def test_criterion_6_growth_constants(capsys):
    rows = []
    # non-critical, beta < 0: M = 2^(beta/mu), attained at r = 1
    case = FamilyCase(ProblemParams(11, 1), FamilyParams(0.0, beta=-0.3))
    m, _, _ = _min_ratio(case, False)
    rows.append(("beta<0", m, 2 ** (-0.3 / case.mu)))
    # non-critical, beta = 0: M = log 2 / mu
    case = FamilyCase(ProblemParams(11, 1), FamilyParams(0.0, beta=0.0))
    m, _, _ = _min_ratio(case, False)
    rows.append(("beta=0", m, math.log(2) / case.mu))
    # non-critical, beta = delta_inf > 0: infimum 1 = min(beta e, 1), approached as r grows
    case = FamilyCase(ProblemParams(5, 1), FamilyParams(0.0, beta=1.5))
    m, _, d = _min_ratio(case, False)
    rows.append(("beta>0", m, min(1.5 * math.e, 1.0)))
    # critical dimension, beta > 0: M = beta e at log r = 1/beta
    case = FamilyCase(ProblemParams(10, 1), FamilyParams(0.0, beta=0.1))
    m, _, _ = _min_ratio(case, True)
    rows.append(("critical beta>0", m, 0.1 * math.e))
    # critical dimension, beta = 0: |u|/log r decreases to 1
    case = FamilyCase(ProblemParams(10, 1), FamilyParams(0.0, beta=0.0))
    m, _, _ = _min_ratio(case, True)
    rows.append(("critical beta=0", m, 1.0))
    ok = all(abs(a - b) <= 1e-6 for _, a, b in rows)
    # bounded profiles: |u - 0| / r^delta(r) >= 2^(beta/mu), tau = 0 and tau > 0
    bounded = []
    for tup in [TAU0[0], TAUPOS[0], TAUPOS[4]]:
        c = at_threshold(*tup)
        rep = E.growth_theorem_check(c.params, c.weight, c.profile(), "bounded", u_inf=0.0,
                                     r_grid=np.geomspace(1, 1e4, 400))
        bounded.append(rep.min_ratio >= 2 ** (c.beta / c.mu) * (1 - 1e-12))
    ok = ok and all(bounded)
    detail = "; ".join(f"{name}: {a:.9f} vs {b:.9f}" for name, a, b in rows)
    verdict(capsys, 6, ok, f"{detail}; bounded lower bound holds: {bounded}")


def test_criterion_7_integral_estimate(capsys):
    changes = []
    r = np.geomspace(1, 8, 40)
    for tup in [TAU0[0], TAU0[3], TAUPOS[0], TAUPOS[4]]:
        case = at_threshold(*tup)
        assert case.beta < 0
        a = E.essentialg_ratio(case.params, case.weight, case.profile(), r, 64.0).value
        b = E.essentialg_ratio(case.params, case.weight, case.profile(), r, 128.0).value
        changes.append(abs(b - a) / a)
    verdict(capsys, 7, max(changes) < 0.05, f"relative change 64 -> 128: max {max(changes):.2e}")


def test_criterion_8_solver_accuracy(capsys):
    errs, orders = [], []
    for tup in TAU0[:3] + TAUPOS[:3]:
        case = at_threshold(*tup)
        p, g = case.params, case.nonlinearity()
        u1 = float(case.u(1.0))
        z1 = float(flux_from_slope(p, 1.0, case.du(1.0)))
        prof = integrate_outward(p, case.weight, g, 1.0, u1, z1, 2.0)
        errs.append(abs(float(prof.u[-1] - case.u(2.0))))
        orders.append(observed_order(p, case.weight, g, 1.0, u1, z1, 2.0))
    ok = max(errs) <= 1e-6 and min(orders) >= 3.5
    verdict(capsys, 8, ok, f"max |u(2) error| {max(errs):.2e}, min observed order {min(orders):.2f}")


@pytest.mark.slow
def test_criterion_9_dimension_gate(capsys):
    rows = []
    sweeps = [(1, 0.0, 1.0, 0.0, -0.2), (2, 0.0, 4.0, 1.0, -0.5), (1, 1.0, 4.0, 1.0, -0.2)]
    for k, s1, s2, tau, beta in sweeps:
        gamma = s1 - tau
        crit = threshold_dimension(k, gamma)
        for n in range(max(k, 3), int(crit) + 9):
            p = ProblemParams(n, k)
            fp = FamilyParams(s1, s2, tau, beta)
            if fp.violations(p):
                accepted = False
            else:
                case = FamilyCase(p, fp)
                accepted = semistability_certificate(case, eigen=False)["passed"]
                if accepted:
                    # the eigenvalue route must agree with the itemised certificate
                    accepted = semistability_certificate(case, eigen=True)["passed"]
            rows.append((k, gamma, n, crit, accepted))
    gate = all(n > crit for _, _, n, crit, acc in rows if acc)
    fails_below = all(not acc for _, _, n, crit, acc in rows if n <= crit)
    some_above = all(any(acc for kk, gg, _, _, acc in rows if (kk, gg) == (k, s1 - tau))
                     for k, s1, _, tau, _ in sweeps)
    accepted = sorted({(k, g, n) for k, g, n, _, a in rows if a})
    verdict(capsys, 9, gate and fails_below and some_above,
            f"{len(rows)} tuples, accepted (k, gamma, n): {accepted[:3]}...")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
