import math

import numpy as np
import pytest

from qbhatt.bhattacharyya import bound, gaussian_j_closed_form
from qbhatt.estimators import (
    Estimator,
    counting,
    cubic_coefficients,
    homodyne,
    normality_residual,
    operator_drift,
    optimal_candidate,
    squeeze_decomposition_check,
    theorem3_cubic_local,
    theorem3_square_estimator,
    theorem4_antiholomorphic,
    theorem4_holomorphic,
    theorem4_realvalued,
    unbiased_monomial,
    verify,
)
from qbhatt.fock import annihilation, displaced_thermal
from qbhatt.gfunc import GFunction, parse_g
from qbhatt.logderiv import gaussian_log_derivatives
from qbhatt.poly import NormalOrderedPoly as P
from qbhatt.poly import gaussian_expectation

a, ad, b, bd = P.a(), P.adag(), P.b(), P.bdag()
GRID5_REAL = [-0.6, -0.2, 0.0, 0.3, 0.8]
GRID5_CPLX = [0.0, 0.3, -0.2j, 0.3 + 0.2j, -0.4 + 0.1j]


# -- real parameter ------------------------------------------------------------------------


def test_square_estimator_at_n1():
    expected = (2 / 9) * (a**2 + ad**2) + (5 / 9) * (ad * a) - 5 / 9
    assert theorem3_square_estimator(1.0).poly.isclose(expected, 1e-14)


def test_square_estimator_bias_and_variance():
    T = theorem3_square_estimator(1.0).poly
    assert abs(gaussian_expectation(T, 1.0, 0.4) - 0.16) < 1e-9
    X = T - 0.16
    var = gaussian_expectation(X * X, 1.0, 0.4).real
    b2 = bound(parse_g("theta^2"), 0.4, gaussian_j_closed_form(1.0, 2, "S")).value
    assert var == pytest.approx(b2, abs=1e-6)


@pytest.mark.parametrize("N", [0.5, 1.0, 2.0])
def test_square_estimator_unbiased_identity(N):
    # a quadratic in θ vanishing at five points is identically zero
    T = theorem3_square_estimator(N).poly
    for th in GRID5_REAL:
        assert abs(gaussian_expectation(T, N, th) - th**2) < 1e-12


@pytest.mark.parametrize("N", [0.5, 1.0, 2.5])
def test_cubic_coefficients_satisfy_unbiasedness(N):
    for th in (0.2, -0.7):
        c = cubic_coefficients(N, th)
        u, v, w, x, y, z = (c[k] for k in "uvwxyz")
        # coefficients of θ³, θ², θ, 1 in the expectation of the cubic form
        assert 2 * u + 2 * v == pytest.approx(1, abs=1e-12)
        assert 2 * w + x == pytest.approx(0, abs=1e-12)
        assert 4 * (N + 1) * v + 2 * y == pytest.approx(0, abs=1e-12)
        assert (N + 1) * x + z == pytest.approx(0, abs=1e-12)


def test_cubic_local_unbiased_everywhere():
    T = theorem3_cubic_local(1.0, 0.5).poly
    for th in GRID5_REAL:
        assert abs(gaussian_expectation(T, 1.0, th) - th**3) < 1e-12


def test_cubic_local_attains_at_its_point():
    T = theorem3_cubic_local(1.0, 0.5).poly
    X = T - 0.125
    var = gaussian_expectation(X * X, 1.0, 0.5).real
    assert var == pytest.approx(5.376420454545455, abs=1e-9)
    b3 = bound(parse_g("theta^3"), 0.5, gaussian_j_closed_form(1.0, 3, "S")).value
    assert var == pytest.approx(b3, abs=1e-6)


def test_cubic_local_not_optimal_elsewhere():
    T = theorem3_cubic_local(1.0, 0.5).poly
    X = T - 0.0
    var = gaussian_expectation(X * X, 1.0, 0.0).real
    b3 = bound(parse_g("theta^3"), 0.0, gaussian_j_closed_form(1.0, 3, "S")).value
    assert var > b3 + 1e-3


def test_cubic_coefficients_drift_linearly():
    c1, c2 = cubic_coefficients(1.0, 0.2), cubic_coefficients(1.0, 0.4)
    for k in "wxz":
        assert c2[k] / c1[k] == pytest.approx(2, abs=1e-12)
    for k in "uvy":
        assert c1[k] == c2[k]


def test_homodyne_verified():
    rep = verify(homodyne(), 1.0, parse_g("theta"), [0, 0.3, -0.3, 0.6, -0.6])
    assert rep.passed
    assert all(abs(r.gap_1) < 1e-6 for r in rep.rows)


# -- complex parameter ---------------------------------------------------------------------


def test_heterodyne_first_order():
    est = theorem4_holomorphic(parse_g("zeta"))
    assert est.poly.isclose(a + bd)
    rep = verify(est, 1.0, parse_g("zeta"), [0.3 + 0.2j], dims=(60, 8))
    assert abs(rep.rows[0].bias) < 1e-8 and abs(rep.rows[0].bias_numeric) < 1e-8


def test_heterodyne_square_attains_right_bound():
    N, z = 1.0, 0.3
    rep = verify(theorem4_holomorphic(parse_g("zeta^2")), N, parse_g("zeta^2"), [z], dims=(60, 8))
    row = rep.rows[0]
    assert row.v1 == pytest.approx(4 * (N + 1) * abs(z) ** 2 + 2 * (N + 1) ** 2, abs=1e-12)
    assert abs(row.gap_1) < 1e-5
    assert rep.checks["attains_R"]


def test_heterodyne_square_is_normal():
    T = theorem4_holomorphic(parse_g("zeta^2")).poly
    assert normality_residual(T, (40, 10)) < 1e-8
    comm = T * T.adjoint() - T.adjoint() * T
    assert len(comm) == 0


def test_antiholomorphic_attains_left_bound():
    g = parse_g("(1+1i)*conj(zeta)^2 - conj(zeta)")
    est = theorem4_antiholomorphic(g)
    rep = verify(est, 1.0, g, [0.3 + 0.2j, -0.1j], dims=(50, 8))
    assert rep.checks["unbiased_symbolic"] and rep.checks["unbiased_numeric"]
    assert all(abs(r.gap_2) < 1e-5 for r in rep.rows)


def test_holomorphy_required():
    with pytest.raises(ValueError):
        theorem4_holomorphic(parse_g("zeta*conj(zeta)"))
    with pytest.raises(ValueError):
        theorem4_antiholomorphic(parse_g("zeta"))
    with pytest.raises(ValueError):
        theorem4_realvalued(parse_g("zeta^2"), 1.0)


@pytest.mark.parametrize("N", [0.5, 1.0, 2.0])
def test_realvalued_energy_is_counting(N):
    T = theorem4_realvalued(parse_g("zeta*conj(zeta)"), N).poly
    assert T.isclose(a * ad - (N + 1))
    assert T.isclose(counting(N).poly)


def test_realvalued_quadrature_square():
    N = 1.3
    T = theorem4_realvalued(parse_g("(zeta + conj(zeta))^2/4"), N).poly
    assert T.isclose((a + ad) ** 2 / 4 - (2 * N + 1) / 4)


def test_realvalued_attains_both_bounds():
    rep = verify(theorem4_realvalued(parse_g("zeta*conj(zeta)"), 1.0), 1.0, parse_g("zeta*conj(zeta)"), [0.5])
    r = rep.rows[0]
    assert abs(r.v1 - r.bound_1) < 1e-5 and abs(r.v2 - r.bound_2) < 1e-5
    assert r.bound_1 == pytest.approx(2.75)


@pytest.mark.parametrize("m,n", [(0, 0), (1, 0), (0, 2), (2, 1), (1, 3), (2, 2)])
def test_unbiased_monomial(m, n):
    N = 0.8
    U = unbiased_monomial(m, n, N)
    for z in GRID5_CPLX:
        z = complex(z)
        assert abs(gaussian_expectation(U, N, z) - z**m * z.conjugate() ** n) < 1e-12


def test_verify_accepts_model():
    from qbhatt.model import gaussian_model

    rep = verify(counting(1.0), gaussian_model(1.0, "complex", 50), parse_g("zeta*conj(zeta)"), [0.2j])
    assert rep.dims == (50, 0) and rep.passed


def test_counting_bias_on_grid():
    pts = [complex(x, y) for x in (-0.3, 0, 0.4) for y in (-0.2, 0, 0.3)]
    rep = verify(counting(1.0), 1.0, parse_g("zeta*conj(zeta)"), pts)
    assert all(abs(r.bias) < 1e-8 for r in rep.rows)
    assert rep.passed


def test_biased_operator_reported():
    N = 1.7
    rep = verify(Estimator(ad * a, "adag*a"), N, parse_g("zeta*conj(zeta)"), [0.0, 0.5j])
    assert all(r.bias == pytest.approx(N, abs=1e-12) for r in rep.rows)
    assert not rep.passed


@pytest.mark.parametrize(
    "make,g,grid,dims",
    [
        (lambda N: theorem3_square_estimator(N), "theta^2", GRID5_REAL, None),
        (lambda N: homodyne(), "theta", GRID5_REAL, None),
        (lambda N: theorem4_holomorphic(parse_g("zeta^3 - 2*zeta")), "zeta^3 - 2*zeta", GRID5_CPLX, (60, 8)),
        (lambda N: theorem4_antiholomorphic(parse_g("conj(zeta)^2")), "conj(zeta)^2", GRID5_CPLX, (60, 8)),
        (
            lambda N: theorem4_realvalued(parse_g("zeta^2*conj(zeta) + zeta*conj(zeta)^2"), N),
            "zeta^2*conj(zeta) + zeta*conj(zeta)^2",
            GRID5_CPLX,
            None,
        ),
    ],
)
@pytest.mark.parametrize("N", [0.5, 2.0])
def test_estimator_suite(make, g, grid, dims, N):
    gf = parse_g(g)
    rep = verify(make(N), N, gf, grid, dims=dims, tail_tol=1e-9)
    assert rep.passed, rep.checks
    if rep.self_adjoint:
        assert all(abs(r.v1 - r.v2) < 1e-10 for r in rep.rows)


def test_cubic_suite():
    for th in GRID5_REAL:
        rep = verify(theorem3_cubic_local(1.0, th), 1.0, parse_g("theta^3"), [th])
        assert rep.passed, rep.checks


# -- squeezing -------------------------------------------------------------------------------


@pytest.mark.parametrize("N", [0.5, 1.0, 2.0])
def test_squeeze_decomposition(N):
    chk = squeeze_decomposition_check(N)
    assert chk.residual < 1e-12
    assert chk.alpha == pytest.approx(1 / (2 * N + 1), abs=1e-14)
    q = N**2 + (N + 1) ** 2
    assert chk.beta == pytest.approx(-(N**2 + N * q) / (2 * N + 1) ** 2, abs=1e-13)


def test_squeezed_mode_is_bosonic():
    N = 1.4
    sb = ((N + 1) * a + N * ad) / math.sqrt(2 * N + 1)
    assert (sb * sb.adjoint() - sb.adjoint() * sb).isclose(P.constant(1))


# -- generic candidate ------------------------------------------------------------------------


def test_candidate_for_mean_is_homodyne():
    N, dim = 1.0, 40
    J = gaussian_j_closed_form(N, 1, "S")
    for th in (0.0, 0.4):
        L = gaussian_log_derivatives(N, th, 1, "S", dim)
        T = optimal_candidate(parse_g("theta"), th, J, L, symbolic=True)
        assert T.isclose((a + ad) / 2)


def test_candidate_for_square_is_parameter_free():
    N, dim = 1.0, 40
    J = gaussian_j_closed_form(N, 2, "S")
    ops = []
    for th in (0.0, 0.3, 0.6):
        L = gaussian_log_derivatives(N, th, 2, "S", dim)
        ops.append(optimal_candidate(parse_g("theta^2"), th, J, L))
        sym = optimal_candidate(parse_g("theta^2"), th, J, L, symbolic=True)
        assert sym.isclose(theorem3_square_estimator(N).poly)
    assert operator_drift(ops) < 1e-6


def test_candidate_for_cube_drifts():
    N, dim = 1.0, 40
    J = gaussian_j_closed_form(N, 3, "S")
    thetas = (0.0, 0.3, 0.6)
    ops = {}
    for th in thetas:
        L = gaussian_log_derivatives(N, th, 3, "S", dim)
        ops[th] = optimal_candidate(parse_g("theta^3"), th, J, L)
        sym = optimal_candidate(parse_g("theta^3"), th, J, L, symbolic=True)
        assert sym.isclose(theorem3_cubic_local(N, th).poly)
    for t1 in thetas:
        for t2 in thetas:
            if t1 < t2:
                assert operator_drift([ops[t1], ops[t2]]) >= 0.01 * abs(t1 - t2)


def test_candidate_for_energy_matches_counting():
    N, z = 1.0, 0.3 + 0.1j
    g = parse_g("zeta*conj(zeta)")
    for fl in "RL":
        J = gaussian_j_closed_form(N, 2, fl)
        L = gaussian_log_derivatives(N, z, 2, fl, 30)
        T = optimal_candidate(g, z, J, L, symbolic=True)
        assert T.isclose(counting(N).poly, 1e-10)


def test_candidate_numeric_operator_matches_symbolic():
    N, th, dim = 1.0, 0.2, 30
    J = gaussian_j_closed_form(N, 2, "S")
    L = gaussian_log_derivatives(N, th, 2, "S", dim)
    op = optimal_candidate(parse_g("theta^2"), th, J, L)
    ref = theorem3_square_estimator(N).materialize(dim)
    np.testing.assert_allclose(op.matrix, ref.matrix, atol=1e-12)


def test_candidate_flavor_mismatch():
    L = gaussian_log_derivatives(1.0, 0.1, 1, "S", 20)
    with pytest.raises(ValueError):
        optimal_candidate(parse_g("zeta"), 0.1, gaussian_j_closed_form(1.0, 1, "R"), L)


def test_materialized_variance_matches_brute_force():
    # independent of the polynomial algebra: plain matrices at dim 80
    N, th, dim = 1.0, 0.3, 80
    rho = displaced_thermal(N, th, dim).matrix
    A = annihilation(dim).matrix
    Ad = A.conj().T
    s = (2 * N + 1) ** 2
    q = N**2 + (N + 1) ** 2
    T = (N * (N + 1) / s) * (A @ A + Ad @ Ad) + (q / s) * (Ad @ A) - (N * q / s) * np.eye(dim)
    mean = np.trace(rho @ T).real
    var = np.trace(rho @ T @ T).real - mean**2
    assert mean == pytest.approx(th**2, abs=1e-8)
    b2 = bound(GFunction.real({2: 1}), th, gaussian_j_closed_form(N, 2, "S")).value
    assert var == pytest.approx(b2, abs=1e-6)
