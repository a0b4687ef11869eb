import math

import numpy as np
import pytest

from qbhatt.fock import DensityOperator, FockOperator, annihilation, displaced_thermal, extend_state
from qbhatt.logderiv import (
    defining_residuals,
    gaussian_lld_closed_form,
    gaussian_log_derivatives,
    gaussian_rld_closed_form,
    gaussian_sld_closed_form,
    solve,
    solve_sld,
)
from qbhatt.model import (
    DerivativeStack,
    ParamKind,
    ParametricModel,
    complex_labels,
    gaussian_derivative_stack,
    gaussian_model,
    real_derivatives,
    wirtinger_derivatives,
)
from qbhatt.poly import NormalOrderedPoly as P


def resolvable(N, dim, rel=1e-6):
    """Fock block whose thermal weight stays above ``rel``; beyond it ρ⁻¹ only amplifies rounding."""
    n = int(math.floor(math.log(rel) / math.log(N / (N + 1))))
    return min(int(0.8 * dim), n)


def masked_diff(x, y, n=None):
    n = n or int(0.8 * x.shape[0])
    return float(np.max(np.abs(x[:n, :n] - y[:n, :n])))


def zero_stack(dim, k, kind):
    n = k if kind is ParamKind.REAL else k * (k + 3) // 2
    labels = tuple(range(1, k + 1)) if kind is ParamKind.REAL else tuple(complex_labels(k))
    z = FockOperator(np.zeros((dim, dim)), dim)
    return DerivativeStack(k, kind, (z,) * n, labels)


@pytest.mark.parametrize("flavor", ["S", "R", "L"])
def test_zero_derivative_gives_zero(flavor):
    rho = displaced_thermal(1.0, 0.1, 40)
    kind = ParamKind.REAL if flavor == "S" else ParamKind.COMPLEX
    L = solve(rho, zero_stack(40, 2, kind), flavor)
    assert all(x.max_norm() == 0 for x in L)


def test_first_sld_against_literal_operator():
    N, th, dim = 1.0, 0.2, 60
    st = real_derivatives(gaussian_model(N), th, 1)
    L = solve_sld(displaced_thermal(N, th, dim), st)
    a = annihilation(dim).matrix
    oracle = 2 * (a + a.conj().T - 2 * th * np.eye(dim)) / (2 * N + 1)
    assert L[0].hermiticity_residual() < 1e-8
    assert masked_diff(L[0].matrix, oracle, resolvable(N, dim)) < 1e-5


def test_rld_first_entries_against_literal_operators():
    N, dim = 1.0, 60
    rho = displaced_thermal(N, 0, dim)
    L = solve(rho, wirtinger_derivatives(gaussian_model(N, "complex"), 0, 1), "R")
    a = annihilation(dim).matrix
    n = resolvable(N, dim)
    assert masked_diff(L[1].matrix, a / (N + 1), n) < 1e-5
    assert masked_diff(L[0].matrix, a.conj().T / N, n) < 1e-5


def test_closed_form_low_orders():
    N, z = 1.5, 0.3 - 0.2j
    assert gaussian_rld_closed_form(N, z, 1, 0).isclose((P.adag() - np.conj(z)) / N)
    assert gaussian_rld_closed_form(N, z, 0, 1).isclose((P.a() - z) / (N + 1))
    assert gaussian_lld_closed_form(N, z, 1, 0).isclose((P.adag() - np.conj(z)) / (N + 1))
    mixed = ((P.a() - z) * (P.adag() - np.conj(z)) - (N + 1)) / (N * (N + 1))
    assert gaussian_rld_closed_form(N, z, 1, 1).isclose(mixed)


def test_first_sld_closed_form():
    N, th = 0.7, -0.4
    expected = 2 * (P.a() + P.adag() - 2 * th) / (2 * N + 1)
    assert gaussian_sld_closed_form(N, th, 1).isclose(expected)


def _pad_product(N, zeta, left, right, dim, pad=20):
    rho = displaced_thermal(N, zeta, dim + pad, check_tail=False).matrix
    return (left(rho) @ right(rho))[:dim, :dim]


@pytest.mark.parametrize("N,zeta", [(1.0, 0.0), (0.5, 0.3 + 0.2j), (2.0, -0.1 + 0.3j)])
def test_lld_closed_form_reproduces_derivative(N, zeta):
    dim, big = 40, 60
    rho = displaced_thermal(N, zeta, big, check_tail=False).matrix
    for p, q in complex_labels(3):
        Lr = gaussian_rld_closed_form(N, zeta, p, q).materialize(big).matrix
        Ll = gaussian_lld_closed_form(N, zeta, p, q).materialize(big).matrix
        d_right = (rho @ Lr)[:dim, :dim]
        d_left = (Ll @ rho)[:dim, :dim]
        assert np.max(np.abs(d_right - d_left)) < 1e-9


@pytest.mark.parametrize("N,theta", [(1.0, 0.3), (0.5, -0.2), (2.0, 0.4)])
def test_sld_closed_form_reproduces_derivative(N, theta):
    dim, big = 40, 70
    rho = displaced_thermal(N, theta, big, check_tail=False).matrix
    ref = gaussian_derivative_stack(N, theta, 3, "real", dim)
    for j in (1, 2, 3):
        L = gaussian_sld_closed_form(N, theta, j).materialize(big).matrix
        d = ((rho @ L + L @ rho) / 2)[:dim, :dim]
        assert np.max(np.abs(d - ref[j - 1].matrix)) < 1e-9


def _synthetic_model(rng, dim=8):
    A = [rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)) for _ in range(3)]

    def state(t):
        t = complex(t)
        M = A[0] + t * A[1] + t.conjugate() * t * A[2] * 0.3
        r = M @ M.conj().T + 0.1 * np.eye(dim)
        return DensityOperator(FockOperator(r / np.trace(r).real, dim), 0.0)

    return state


def test_synthetic_residuals():
    rng = np.random.default_rng(11)
    for _ in range(20):
        fn = _synthetic_model(rng)
        real = ParametricModel(ParamKind.REAL, fn, (8, 0))
        cplx = ParametricModel(ParamKind.COMPLEX, fn, (8, 0))
        st = real_derivatives(real, 0.2, 2)
        rho = real.state(0.2)
        L = solve(rho, st, "S")
        assert max(defining_residuals(rho, L, st)) < 1e-7
        stc = wirtinger_derivatives(cplx, 0.2 + 0.1j, 2)
        rhoc = cplx.state(0.2 + 0.1j)
        for fl in "RL":
            Lc = solve(rhoc, stc, fl)
            assert max(defining_residuals(rhoc, Lc, stc)) < 1e-7


@pytest.mark.parametrize("N", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("zeta", [0.0, 0.3 + 0.2j, -0.4j])
def test_gaussian_residuals_and_trace(N, zeta):
    rho = displaced_thermal(N, zeta, 60)
    st = gaussian_derivative_stack(N, zeta, 3, "complex", 60)
    for fl in "RL":
        L = solve(rho, st, fl)
        assert max(defining_residuals(rho, L, st)) < 1e-7
        for x in L:
            assert abs(rho.expect(x)) < 1e-7
    th = zeta.real if isinstance(zeta, complex) else zeta
    rst = gaussian_derivative_stack(N, th, 3, "real", 60)
    rrho = displaced_thermal(N, th, 60)
    L = solve(rrho, rst, "S")
    assert max(defining_residuals(rrho, L, rst)) < 1e-7
    assert all(x.hermiticity_residual() < 1e-8 for x in L)


@pytest.mark.parametrize("N", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("zeta", [0.0, 0.3 + 0.2j, 0.4j])
def test_numerical_vs_closed_form(N, zeta):
    dim = 60
    n = resolvable(N, dim)
    rho = displaced_thermal(N, zeta, dim)
    st = wirtinger_derivatives(gaussian_model(N, "complex", dim, tol=1e-9), zeta, 3)
    for fl in "RL":
        num = solve(rho, st, fl)
        ref = gaussian_log_derivatives(N, zeta, 3, fl, dim)
        for x, y in zip(num, ref):
            assert masked_diff(x.matrix, y.matrix, n) < 1e-5
    th = complex(zeta).real
    rst = real_derivatives(gaussian_model(N, "real", dim, tol=1e-9), th, 3)
    num = solve(displaced_thermal(N, th, dim), rst, "S")
    ref = gaussian_log_derivatives(N, th, 3, "S", dim)
    for x, y in zip(num, ref):
        assert masked_diff(x.matrix, y.matrix, n) < 1e-5


def test_full_low_block_when_spectrum_is_resolvable():
    # at N=2 the whole bottom 80% of dim 60 stays above the rounding floor
    N, zeta, dim = 2.0, 0.3 + 0.2j, 60
    rho = displaced_thermal(N, zeta, dim)
    st = gaussian_derivative_stack(N, zeta, 3, "complex", dim)
    for fl in "RL":
        for x, y in zip(solve(rho, st, fl), gaussian_log_derivatives(N, zeta, 3, fl, dim)):
            assert masked_diff(x.matrix, y.matrix) < 1e-5


def test_sld_independent_of_basis_order():
    N, th, dim = 1.0, 0.3, 40
    rho = displaced_thermal(N, th, dim)
    st = gaussian_derivative_stack(N, th, 2, "real", dim)
    L = solve_sld(rho, st)
    perm = np.random.default_rng(5).permutation(dim)
    Pm = np.eye(dim)[perm]
    rho_p = DensityOperator(FockOperator(Pm @ rho.matrix @ Pm.T, dim), rho.trace_deficit)
    st_p = DerivativeStack(
        2, ParamKind.REAL, tuple(FockOperator(Pm @ d.matrix @ Pm.T, dim) for d in st), st.labels
    )
    L_p = solve_sld(rho_p, st_p)
    n = resolvable(N, dim)
    for x, y in zip(L, L_p):
        assert masked_diff(x.matrix, Pm.T @ y.matrix @ Pm, n) < 1e-9


def test_clamping_is_reported():
    rho = extend_state(displaced_thermal(1.0, 0.2, 20, check_tail=False), 3)
    st = DerivativeStack(
        1, ParamKind.REAL, (FockOperator(np.zeros((60, 60)), 20, 3),), (1,)
    )
    L = solve(rho, st, "S")
    assert L.warnings and "clamped" in L.warnings[0]
