"""Optimal unbiased estimators for the displaced thermal model and their verification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .bhattacharyya import InfoMatrix, bound, derivative_vector, gaussian_j_closed_form
from .fock import DEFAULT_TAIL_TOL, FockOperator, default_dim, displaced_thermal, extend_state
from .gfunc import GFunction
from .logderiv import LogDerivVector
from .model import ParametricModel
from .poly import NormalOrderedPoly, gaussian_expectation

A = NormalOrderedPoly.a()
AD = NormalOrderedPoly.adag()
B = NormalOrderedPoly.b()
BD = NormalOrderedPoly.bdag()

DEFAULT_DIM_B = 8


@dataclass(frozen=True)
class Estimator:
    poly: NormalOrderedPoly
    label: str
    requires_ancilla: bool = False
    attains: tuple[str, ...] = ()  # bound flavors the estimator is claimed to attain

    def is_self_adjoint(self, tol: float = 1e-10) -> bool:
        return self.poly.is_self_adjoint(tol)

    def materialize(self, dim_a: int, dim_b: int = 0) -> FockOperator:
        return self.poly.materialize(dim_a, dim_b)


# -- generic construction --------------------------------------------------------------


def optimal_candidate(g: GFunction, param, J: InfoMatrix, L: LogDerivVector, symbolic: bool = False):
    """``T = D†[g] J⁻¹ L + g(param)`` at one parameter point.

    Returns a ``FockOperator``, or a ``NormalOrderedPoly`` when ``symbolic`` is
    set and ``L`` carries closed-form polynomials.
    """
    if L.flavor != J.flavor:
        raise ValueError(f"flavor mismatch: J is {J.flavor}, L is {L.flavor}")
    if tuple(L.labels) != tuple(J.labels):
        raise ValueError("J and L use different derivative orderings")
    v = derivative_vector(g, param, J)
    coeffs = v.conj() @ J.pseudo_inverse()
    g0 = g(param)
    if symbolic:
        if L.polys is None:
            raise ValueError("symbolic candidate needs closed-form logarithmic derivatives")
        T = NormalOrderedPoly.constant(g0)
        for c, P in zip(coeffs, L.polys):
            T = T + complex(c) * P
        return T
    acc = sum(complex(c) * Lj.matrix for c, Lj in zip(coeffs, L.entries))
    dim_a, dim_b = L.entries[0].dims
    return FockOperator(acc + g0 * np.eye(acc.shape[0]), dim_a, dim_b)


def operator_drift(ops: Sequence[FockOperator], mask_fraction: float = 0.8) -> float:
    """Largest pairwise max-norm difference, restricted to the low Fock block."""
    n = max(1, int(mask_fraction * ops[0].dim))
    drift = 0.0
    for i in range(len(ops)):
        for j in range(i + 1, len(ops)):
            d = ops[i].matrix[:n, :n] - ops[j].matrix[:n, :n]
            drift = max(drift, float(np.max(np.abs(d))))
    return drift


# -- real-parameter estimators ------------------------------------------------------------


def theorem3_square_estimator(N: float) -> Estimator:
    """Uniformly optimal unbiased estimator of ``θ²`` on the real line."""
    if N <= 0:
        raise ValueError("N must be positive")
    s = (2 * N + 1) ** 2
    q = N**2 + (N + 1) ** 2
    T = (N * (N + 1) / s) * (A**2 + AD**2) + (q / s) * (AD * A) - N * q / s
    return Estimator(T, "theorem3-square", False, ("S",))


def cubic_coefficients(N: float, theta: float) -> dict[str, float]:
    """Variance-minimizing unbiased coefficients for ``θ³`` at one ``θ``."""
    c = 4 * N**2 + 4 * N + 3
    s = (2 * N + 1) ** 2
    return {
        "u": N * (N + 1) / (2 * c),
        "v": 3 * (N**2 + N + 1) / (2 * c),
        "w": -3 * theta / (2 * s * c),
        "x": 3 * theta / (s * c),
        "y": -3 * (N**2 + N + 1) * (N + 1) / c,
        "z": -3 * (N + 1) * theta / (s * c),
    }


def cubic_form(u, v, w, x, y, z) -> NormalOrderedPoly:
    """``u(a³+a†³) + v(a a†² + a² a†) + w(a²+a†²) + x a a† + y(a+a†) + z``."""
    return (
        u * (A**3 + AD**3)
        + v * (A * AD**2 + A**2 * AD)
        + w * (A**2 + AD**2)
        + x * (A * AD)
        + y * (A + AD)
        + z
    )


def theorem3_cubic_local(N: float, theta: float) -> Estimator:
    """Locally optimal unbiased estimator of ``θ³`` at ``θ``; it changes with ``θ``."""
    if N <= 0:
        raise ValueError("N must be positive")
    return Estimator(cubic_form(**cubic_coefficients(N, theta)), f"theorem3-cubic@{theta:g}", False, ("S",))


def homodyne() -> Estimator:
    return Estimator((A + AD) / 2, "homodyne", False, ("S",))


# -- complex-parameter estimators -----------------------------------------------------------


def theorem4_holomorphic(g: GFunction) -> Estimator:
    """``g(a + b†)``: heterodyne with the outcome pushed through ``g``."""
    if not g.is_holomorphic():
        raise ValueError("g is not holomorphic (has conj(zeta) terms)")
    X = A + BD
    T = NormalOrderedPoly()
    for (m, _), c in g.coeffs.items():
        T = T + c * X**m
    return Estimator(T, "theorem4-holomorphic", True, ("R",))


def theorem4_antiholomorphic(g: GFunction) -> Estimator:
    """``Σ c_n (a† + b)^n`` for ``g = Σ c_n ζ̄^n``."""
    if not g.is_antiholomorphic():
        raise ValueError("g is not antiholomorphic (has zeta terms)")
    X = AD + B
    T = NormalOrderedPoly()
    for (_, n), c in g.coeffs.items():
        T = T + c * X**n
    return Estimator(T, "theorem4-antiholomorphic", True, ("L",))


def unbiased_monomial(m: int, n: int, N: float) -> NormalOrderedPoly:
    """Ancilla-free operator with expectation ``ζ^m ζ̄^n`` in every Gaussian state."""
    lo, hi = min(m, n), max(m, n)
    out = {}
    for r in range(lo + 1):
        pa = r + max(0, m - n)
        pad = r + max(0, n - m)
        c = (-1) ** (lo - r) * math.comb(hi, lo - r) * math.factorial(lo) / math.factorial(r)
        out[(pa, pad, 0, 0)] = c * (N + 1) ** m / (N + 1) ** pa
    return NormalOrderedPoly(out)


def theorem4_realvalued(g: GFunction, N: float) -> Estimator:
    """Self-adjoint estimator of a real-valued ``g`` attaining both Type R and L bounds."""
    if g.kind != "complex" or not g.is_real_valued():
        raise ValueError("g must be a real-valued polynomial in zeta and conj(zeta)")
    T = NormalOrderedPoly()
    for (m, n), c in g.coeffs.items():
        T = T + c * unbiased_monomial(m, n, N)
    return Estimator(T, "theorem4-realvalued", False, ("R", "L"))


def counting(N: float) -> Estimator:
    """``a†a − N``, the photon-counting estimator of ``|ζ|²``."""
    return Estimator(AD * A - N, "counting", False, ("R", "L"))


# -- verification ----------------------------------------------------------------------------


@dataclass(frozen=True)
class VerificationRow:
    param: complex
    expectation: complex
    bias: complex
    bias_numeric: complex
    v1: float
    v2: float
    v1_numeric: float
    v2_numeric: float
    bound_1: float
    bound_2: float
    gap_1: float
    gap_2: float
    trace_deficit: float


@dataclass(frozen=True)
class VerificationReport:
    estimator: str
    g: str
    N: float
    k: int
    flavors: tuple[str, str]
    dims: tuple[int, int]
    rows: tuple[VerificationRow, ...]
    self_adjoint: bool
    normality_residual: float
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _variances(T: NormalOrderedPoly, g0: complex, N: float, zeta: complex):
    X = T - g0
    Xd = X.adjoint()
    v1 = gaussian_expectation(X * Xd, N, zeta).real
    v2 = gaussian_expectation(Xd * X, N, zeta).real
    return X, Xd, v1, v2


def normality_residual(T: NormalOrderedPoly, dims: tuple[int, int], mask_fraction: float = 0.8) -> float:
    """``‖TT† − T†T‖_max`` on the materialized operator, low Fock block of the system."""
    dim_a, dim_b = dims
    Td = T.adjoint()
    C = (T * Td - Td * T).materialize(dim_a, dim_b).matrix
    keep_a = max(1, int(mask_fraction * dim_a))
    if dim_b:
        keep_b = max(1, int(mask_fraction * dim_b))
        idx = np.array([i * dim_b + j for i in range(keep_a) for j in range(keep_b)])
    else:
        idx = np.arange(keep_a)
    return float(np.max(np.abs(C[np.ix_(idx, idx)]))) if idx.size else 0.0


def verify(
    est: Estimator,
    N: float | ParametricModel,
    g: GFunction,
    grid: Iterable,
    dims: tuple[int, int] | None = None,
    k: int | None = None,
    tail_tol: float = DEFAULT_TAIL_TOL,
    bias_tol: float = 1e-8,
    numeric_bias_tol: float = 1e-6,
    gap_tol: float = 1e-5,
) -> VerificationReport:
    """Bias, variances and bound gaps of ``est`` on a parameter grid of the Gaussian model.

    Expectations are computed twice: exactly from the polynomial form, and
    as matrix traces against the truncated state.
    """
    if isinstance(N, ParametricModel):
        if N.gaussian_N is None:
            raise ValueError("verify needs the displaced thermal model")
        if dims is None:
            dims = N.dims
        N = N.gaussian_N
    grid = list(grid)
    if dims is None:
        rmax = max((abs(complex(p)) for p in grid), default=0.0)
        dims = (default_dim(N, rmax, tail_tol), 0)
    dim_a, dim_b = dims
    if est.requires_ancilla and not dim_b:
        dim_b = DEFAULT_DIM_B
    if k is None:
        k = min(max(g.degree, 1), 3)
    flavors = ("S", "S") if g.kind == "real" else ("R", "L")
    J1 = gaussian_j_closed_form(N, k, flavors[0])
    J2 = gaussian_j_closed_form(N, k, flavors[1])
    T = est.poly
    rows = []
    for param in grid:
        zeta = complex(param)
        g0 = complex(g(param))
        E = gaussian_expectation(T, N, zeta)
        X, Xd, v1, v2 = _variances(T, g0, N, zeta)
        rho = displaced_thermal(N, zeta, dim_a, tol=tail_tol)
        if dim_b:
            rho = extend_state(rho, dim_b)
        Tm = T.materialize(dim_a, dim_b)
        En = rho.expect(Tm)
        v1n = rho.expect((X * Xd).materialize(dim_a, dim_b)).real
        v2n = rho.expect((Xd * X).materialize(dim_a, dim_b)).real
        b1 = bound(g, param, J1).value
        b2 = bound(g, param, J2).value
        rows.append(
            VerificationRow(
                param=zeta if g.kind == "complex" else zeta.real,
                expectation=E,
                bias=E - g0,
                bias_numeric=En - g0,
                v1=v1,
                v2=v2,
                v1_numeric=v1n,
                v2_numeric=v2n,
                bound_1=b1,
                bound_2=b2,
                gap_1=v1 - b1,
                gap_2=v2 - b2,
                trace_deficit=rho.trace_deficit,
            )
        )
    sa = est.is_self_adjoint()
    normal = normality_residual(T, (dim_a, dim_b))
    checks = {
        "unbiased_symbolic": all(abs(r.bias) < bias_tol for r in rows),
        "unbiased_numeric": all(abs(r.bias_numeric) < numeric_bias_tol for r in rows),
        "variances_nonnegative": all(r.v1 >= -gap_tol and r.v2 >= -gap_tol for r in rows),
        "normal": normal < 1e-8,
    }
    if sa:
        checks["v1_equals_v2"] = all(abs(r.v1 - r.v2) < 1e-10 * max(1.0, abs(r.v1)) for r in rows)
    for fl in est.attains:
        if fl == flavors[0]:
            checks[f"attains_{fl}"] = all(abs(r.gap_1) <= gap_tol for r in rows)
        elif fl == flavors[1]:
            checks[f"attains_{fl}"] = all(abs(r.gap_2) <= gap_tol for r in rows)
    return VerificationReport(
        estimator=est.label,
        g=g.render(),
        N=N,
        k=k,
        flavors=flavors,
        dims=(dim_a, dim_b),
        rows=tuple(rows),
        self_adjoint=sa,
        normality_residual=normal,
        checks=checks,
    )


@dataclass(frozen=True)
class SqueezeCheck:
    residual: float
    alpha: float
    beta: float


def squeezed_mode(N: float) -> NormalOrderedPoly:
    """``b = ((N+1)a + N a†)/√(2N+1)``."""
    return ((N + 1) * A + N * AD) / math.sqrt(2 * N + 1)


def squeeze_decomposition_check(N: float) -> SqueezeCheck:
    """Fit the θ² estimator as ``α b†b + β`` after squeezing; return the coefficient residual."""
    if N <= 0:
        raise ValueError("N must be positive")
    b = squeezed_mode(N)
    nb = b.adjoint() * b
    T = theorem3_square_estimator(N).poly
    keys = sorted(set(T.terms) | set(nb.terms))
    M = np.array([[nb.coeff(k), 1.0 if k == (0, 0, 0, 0) else 0.0] for k in keys], dtype=complex)
    y = np.array([T.coeff(k) for k in keys], dtype=complex)
    (alpha, beta), *_ = np.linalg.lstsq(M, y, rcond=None)
    fit = alpha * nb + beta
    return SqueezeCheck(T.max_abs_diff(fit), float(alpha.real), float(beta.real))
