import pytest

from qbhatt.gfunc import GFunction, SpecError, parse_complex, parse_g, parse_operator
from qbhatt.poly import NormalOrderedPoly as P


def test_parse_real():
    g = parse_g("3*theta^2 - theta + 0.5")
    assert g.kind == "real"
    assert g.coeffs == {2: 3, 1: -1, 0: 0.5}
    assert g(2.0) == pytest.approx(10.5)


def test_parse_complex_with_conj():
    g = parse_g("(1+2i)*zeta^2*conj(zeta) - zetabar")
    assert g.kind == "complex"
    assert g.coeffs == {(2, 1): 1 + 2j, (0, 1): -1}


def test_conj_of_sum_and_constant():
    g = parse_g("conj(2i*zeta + 3)")
    assert g.coeffs == {(0, 1): -2j, (0, 0): 3}


def test_constant_defaults_to_real():
    g = parse_g("1")
    assert g.kind == "real" and g.degree == 0
    assert parse_g("1", "complex").kind == "complex"


@pytest.mark.parametrize("bad", ["theta^", "theta*zeta", "foo", "(theta", "theta^-1", "theta^1.5", ""])
def test_bad_specs(bad):
    with pytest.raises(SpecError):
        parse_g(bad)


def test_division_by_numbers_only():
    assert parse_g("(zeta + conj(zeta))^2/4").coeffs == {(2, 0): 0.25, (1, 1): 0.5, (0, 2): 0.25}
    with pytest.raises(SpecError):
        parse_g("1/theta")
    with pytest.raises(SpecError):
        parse_g("theta/0")


def test_kind_mismatch():
    with pytest.raises(SpecError):
        parse_g("theta", "complex")


def test_holomorphy_and_realness():
    assert parse_g("zeta^2 + 1").is_holomorphic()
    assert not parse_g("zeta*conj(zeta)").is_holomorphic()
    assert parse_g("conj(zeta)^3").is_antiholomorphic()
    assert parse_g("zeta*conj(zeta)").is_real_valued()
    assert parse_g("i*zeta - i*conj(zeta)").is_real_valued()
    assert not parse_g("zeta").is_real_valued()


def test_wirtinger_derivatives():
    g = parse_g("zeta^2*conj(zeta)")
    z = 0.3 + 0.2j
    assert g.derivative(z, (1, 0)) == pytest.approx(2 * z * z.conjugate())
    assert g.derivative(z, (0, 1)) == pytest.approx(z**2)
    assert g.derivative(z, (2, 1)) == pytest.approx(2)
    assert g.derivative(z, (0, 2)) == 0


def test_real_derivatives():
    g = GFunction.real({3: 1})
    assert [g.derivative(0.5, j) for j in (1, 2, 3, 4)] == pytest.approx([0.75, 3.0, 6.0, 0.0])


def test_conj_function():
    g = parse_g("(1+1i)*zeta^2*conj(zeta)")
    z = 0.4 - 0.1j
    assert g.conj()(z) == pytest.approx(g(z).conjugate())


def test_parse_operator():
    assert parse_operator("adag*a").isclose(P.adag() * P.a())
    assert parse_operator("(a + bdag)^2").isclose((P.a() + P.bdag()) ** 2)
    assert parse_operator("dag(a)").isclose(P.adag())


def test_parse_complex_literals():
    assert parse_complex("0.3+0.2i") == 0.3 + 0.2j
    assert parse_complex("-1e-2j") == -0.01j
    with pytest.raises(SpecError):
        parse_complex("zeta")
