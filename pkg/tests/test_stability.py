import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import eigh

from khessian import stability as S
from khessian.core import (DomainError, ExtrapolationError, InterpolatedPower, Nonlinearity, PowerLaw, ProblemParams,
                           RadialProfile, quadratic_profile)
from khessian.family import FamilyCase, FamilyParams
from khessian.report import dumps
from khessian.solver import origin_start
from oracles import radial_dirichlet_fd

UNIT = quadratic_profile(np.linspace(0, 4, 5))  # u = r^2/2: the stiffness is r^(n-1) for k = 1


def threshold_case(n, k, s1, s2=1.0, tau=0.0, offset=0.0):
    p = ProblemParams(n, k)
    base = FamilyCase(p, FamilyParams(s1, s2, tau))
    return FamilyCase(p, FamilyParams(s1, s2, tau, base.threshold_beta() + offset))


FAMILY = [(11, 1, 0.0), (20, 2, 0.0, 4.0, 1.0), (12, 3, 1.0, 4.0, 0.5), (10, 1, 0.0, 2.0, 0.5), (8, 2, -1.0, 3.0, 0.5)]


def test_zero_potential_gives_nonnegative_spectrum():
    p = ProblemParams(4, 1)
    asm = S.assemble_Q(p, PowerLaw(0.0), Nonlinearity.constant(1.0), UNIT, (0.1, 1.0), 50)
    assert np.all(asm.c_diag == 0) and np.all(asm.c_off == 0)
    assert S.min_eigenvalue(asm) > 0
    rep = S.is_semistable(p, PowerLaw(0.0), Nonlinearity.constant(1.0), UNIT, windows=[(0.1, 1.0)])
    assert rep.verdict == "semi-stable"


def test_assembly_symmetric_and_stiffness_psd():
    p = ProblemParams(5, 2)
    g = Nonlinearity.linear(1.0, -3.0)
    asm = S.assemble_Q(p, PowerLaw(1.0), g, UNIT, (0.05, 2.0), 40)
    K, M = asm.dense()
    assert np.allclose(K, K.T) and np.allclose(M, M.T)
    A = np.diag(asm.a_diag) + np.diag(asm.a_off, 1) + np.diag(asm.a_off, -1)
    assert np.linalg.eigvalsh(A)[0] > 0
    lam = S.min_eigenvalue(asm)
    assert lam == pytest.approx(eigh(K, M, eigvals_only=True)[0], rel=1e-9)


def test_assembled_form_matches_direct_quadrature():
    p = ProblemParams(5, 2)
    g = Nonlinearity.linear(0.5, -1.0)
    w = InterpolatedPower(1.0, 2.0, 0.5)
    asm = S.assemble_Q(p, w, g, UNIT, (0.1, 3.0), 400)
    nodes = asm.nodes
    xi = lambda r: np.sin(math.pi * np.log(r / 0.1) / np.log(30.0))  # noqa: E731
    dxi = lambda r: np.cos(math.pi * np.log(r / 0.1) / np.log(30.0)) * math.pi / (r * np.log(30.0))  # noqa: E731
    x = xi(nodes[1:-1])
    # interpolant of xi: its exact form value is close to Q(xi) for a fine mesh
    direct = S.quadratic_form_value(p, w, g, UNIT, xi, dxi, nodes)
    assert asm.form(x) == pytest.approx(direct, rel=1e-4)


@pytest.mark.parametrize("n", [3, 5])
def test_principal_dirichlet_eigenvalue(n):
    # k = 1, w = 1, u = r^2/2: Q(xi) = omega int r^(n-1) (xi'^2 - c xi^2); min eigenvalue = mu_1 - c
    mu1 = radial_dirichlet_fd(n, 0.1, 1.0)
    if n == 3:
        assert mu1 == pytest.approx((math.pi / 0.9) ** 2, rel=1e-6)
    p = ProblemParams(n, 1)
    for c in (0.0, 5.0, mu1 * 0.99, mu1 * 1.01):
        asm = S.assemble_Q(p, PowerLaw(0.0), Nonlinearity.linear(0.0, -c), UNIT, (0.1, 1.0), 200)
        lam = S.min_eigenvalue(asm)
        assert lam == pytest.approx(mu1 - c, abs=2e-3 * mu1)
        assert (lam > 0) == (c < mu1)


def test_large_negative_potential_is_unstable():
    p = ProblemParams(5, 1)
    c = 2 * radial_dirichlet_fd(5, 0.1, 1.0)
    rep = S.is_semistable(p, PowerLaw(0.0), Nonlinearity.linear(0.0, -c), UNIT, windows=[(0.1, 1.0)])
    assert rep.verdict == "unstable"
    assert rep.min_eigenvalue < 0
    d = json.loads(dumps(rep))
    assert set(d) >= {"min_eigenvalue", "verdict", "window", "mesh"}
    assert d["window"] == [0.1, 1.0]


def test_window_verdict_rules():
    assert S.window_verdict([1.0, 0.5, 0.375, 0.34375], 1e-8)[0] == "semi-stable"
    assert S.window_verdict([-1.0, -1.0, -1.0], 1e-8)[0] == "unstable"
    assert S.window_verdict([0.4, 0.2, 0.1], 1e-8)[0] == "inconclusive"
    assert S.window_verdict([1.0], 1e-8)[0] == "inconclusive"


def test_window_monotonicity_for_nested_windows():
    case = threshold_case(11, 1, 0.0, offset=-0.5)
    windows = [(1e-1, 10.0), (1e-2, 10.0), (1e-2, 100.0), (1e-3, 1000.0)]
    rep = S.is_semistable(case.params, case.weight, case.nonlinearity(), case.profile(), windows=windows,
                          per_decade=(16, 32, 64))
    res = rep.windows
    assert all(b.eigenvalues[-1] <= a.eigenvalues[-1] + max(a.tol, b.tol) for a, b in zip(res, res[1:]))
    assert res[-1].eigenvalues[-1] < res[0].eigenvalues[-1] - 1e-3
    assert rep.window_monotone


def test_window_outside_profile():
    prof = RadialProfile(np.linspace(0, 1, 11), np.linspace(0, 1, 11) ** 2, 2 * np.linspace(0, 1, 11))
    with pytest.raises(ExtrapolationError):
        S.assemble_Q(ProblemParams(3, 1), PowerLaw(0.0), Nonlinearity.constant(0.0), prof, (0.1, 2.0), 10)
    with pytest.raises(DomainError):
        S.assemble_Q(ProblemParams(3, 1), PowerLaw(0.0), Nonlinearity.constant(0.0), prof, (0.0, 1.0), 10)
    decreasing = quadratic_profile(np.linspace(0, 2, 5), -1.0)
    with pytest.raises(DomainError):
        S.assemble_Q(ProblemParams(3, 1), PowerLaw(0.0), Nonlinearity.constant(0.0), decreasing, (0.1, 1.0), 10)


def test_hat_function_validation():
    with pytest.raises(DomainError):
        S.HatFunction(np.array([1.0, 2.0, 3.0]), np.array([1.0, 1.0, 0.0]))
    eta = S.HatFunction(np.array([1.0, 2.0, 3.0]), np.zeros(3))
    case = threshold_case(11, 1, 0.0)
    assert S.transformed_form_value(case.params, case.weight, case.profile(), eta) == 0.0
    with pytest.raises(DomainError):
        S.transformed_form_value(case.params, case.weight, case.profile(), eta, window=(1.5, 10.0))


@pytest.mark.parametrize("tup", FAMILY)
def test_identity_and_nonnegativity_on_family(tup):
    case = threshold_case(*tup)
    rng = np.random.default_rng(1)
    prof, g = case.profile(), case.nonlinearity()
    for _ in range(20):
        eta = S.random_hat_function(rng, (1e-2, 1e2))
        q = S.form_along_slope(case.params, case.weight, g, prof, eta)
        t = S.transformed_form_value(case.params, case.weight, prof, eta)
        scale = S.transformed_form_scale(case.params, case.weight, prof, eta)
        assert abs(q - t) <= 1e-6 * scale
        assert t >= -1e-9 * scale


def test_identity_on_solver_profile():
    # the identity only uses that u solves the equation, so a numerical solution must satisfy it too
    p = ProblemParams(5, 2)
    w = InterpolatedPower(1.0, 4.0, 0.5)
    g = Nonlinearity.linear(1.0, 0.5)
    prof = origin_start(p, w, g, 0.0, 20.0)
    rng = np.random.default_rng(0)
    for _ in range(5):
        eta = S.random_hat_function(rng, (0.1, 10.0))
        q = S.form_along_slope(p, w, g, prof, eta)
        t = S.transformed_form_value(p, w, prof, eta)
        assert abs(q - t) <= 1e-6 * S.transformed_form_scale(p, w, prof, eta)


def test_hardy_theta_zero():
    p = ProblemParams(6, 1)
    eta = S.random_hat_function(np.random.default_rng(3), (0.1, 10.0))
    rep = S.hardy_certificate(p, lambda r: r**2.0, lambda r: 0.5 + 0 * r, 0.0, eta)
    assert rep.hypothesis_ok and rep.inequality_value > 0 and rep.ok


def test_hardy_detects_origin_failure():
    n = 5
    p = ProblemParams(n, 1)
    eta = S.random_hat_function(np.random.default_rng(4), (0.1, 10.0))
    rep = S.hardy_certificate(p, lambda r: r ** (2.0 - n), lambda r: 0 * r, 1.0, eta)
    assert not rep.origin_ok and not rep.ok


@pytest.mark.parametrize("tup", FAMILY)
def test_hardy_family_instance(tup):
    case = threshold_case(*tup)
    rng = np.random.default_rng(2)
    for _ in range(20):
        eta = S.random_hat_function(rng, (1e-2, 1e2))
        rep = S.hardy_certificate(case.params, case.V, case.rate.v, 2 * case.nu, eta, rdV=case.rdV)
        assert rep.ok, rep.to_dict()


def test_hardy_numeric_log_derivative_matches_analytic():
    case = threshold_case(20, 2, 0.0, 4.0, 1.0)
    eta = S.random_hat_function(np.random.default_rng(5), (1e-2, 1e2))
    a = S.hardy_certificate(case.params, case.V, case.rate.v, 2 * case.nu, eta, rdV=case.rdV)
    b = S.hardy_certificate(case.params, case.V, case.rate.v, 2 * case.nu, eta)
    assert a.min_hypothesis == pytest.approx(b.min_hypothesis, rel=1e-6)


@given(st.integers(3, 12), st.floats(-1, 4), st.floats(0.5, 3), st.floats(-1, 1), st.floats(-2, 2),
       st.floats(-3, 3), st.integers(0, 10**6))
def test_hardy_discriminant_inequality(n, a, b, c, rho0, theta, seed):
    p = ProblemParams(n, 1)

    def V(r):
        return r**a * (1 + r**b) ** c

    def rdV(r):
        return V(r) * (a + b * c * r**b / (1 + r**b))

    def rho(r):
        return rho0 + 0.3 * np.tanh(np.log(r))

    eta = S.random_hat_function(np.random.default_rng(seed), (0.05, 20.0))
    lhs, rhs = S.hardy_discriminant(p, V, rdV, rho, theta, eta)
    assert lhs >= rhs - 1e-9 * max(lhs, rhs, 1e-300)


def test_family_threshold_semistable():
    case = threshold_case(11, 1, 0.0)
    rep = S.is_semistable(case.params, case.weight, case.nonlinearity(), case.profile())
    assert rep.verdict == "semi-stable"
    assert all(w.eigenvalues[-1] >= -w.tol for w in rep.windows)
    assert rep.window_monotone
