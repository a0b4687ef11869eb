"""Information matrices and Bhattacharyya-type variance lower bounds.

Type S (real parameter):   V ≥ ᵗv J_S⁻¹ v,   v_j = d^j g/dθ^j
Type R / L (complex):      V ≥ w† J⁻¹ w,     w_(p,q) = ∂ζ^p ∂ζ̄^q conj(g)

For complex parameters ``w†`` is exactly the row of conjugate derivatives
``∂ζ^q ∂ζ̄^p g`` that multiplies ``J⁻¹`` from the left.
"""

from __future__ import annotations

import math
import warnings as _warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fock import DensityOperator
from .gfunc import GFunction
from .logderiv import LogDerivVector, solve
from .model import (
    ParametricModel,
    ParamKind,
    complex_labels,
    n_complex_entries,
    real_derivatives,
    wirtinger_derivatives,
)

HERMITIAN_TOL = 1e-9
ASYMMETRY_ERROR = 1e-7
PINV_REL = 1e-12
ILL_CONDITIONED = 1e12


class InconsistentInputsError(ArithmeticError):
    pass


class IllConditionedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class InfoMatrix:
    flavor: str
    order: int
    matrix: np.ndarray
    labels: tuple
    source: str = "numerical"

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def kind(self) -> ParamKind:
        return ParamKind.REAL if self.flavor == "S" else ParamKind.COMPLEX

    def truncated(self, k: int) -> InfoMatrix:
        """Leading block belonging to the nested derivative stack of order ``k``."""
        if not 1 <= k <= self.order:
            raise ValueError(f"order {k} outside 1..{self.order}")
        n = k if self.flavor == "S" else n_complex_entries(k)
        return InfoMatrix(self.flavor, k, self.matrix[:n, :n], self.labels[:n], self.source)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def condition_number(self) -> float:
        lam = np.abs(self.eigenvalues())
        if lam.max() == 0:
            return math.inf
        return float(lam.max() / lam.min()) if lam.min() > 0 else math.inf

    def pseudo_inverse(self) -> np.ndarray:
        lam, V = np.linalg.eigh(self.matrix)
        cut = PINV_REL * max(np.abs(lam).max(), 0.0)
        inv = np.array([1.0 / x if abs(x) > cut and x != 0 else 0.0 for x in lam])
        return (V * inv) @ V.conj().T

    def check(self, psd_floor: float = -1e-9) -> None:
        r = float(np.max(np.abs(self.matrix - self.matrix.conj().T)))
        if r > HERMITIAN_TOL:
            raise InconsistentInputsError(f"information matrix not Hermitian ({r:.2e})")
        if self.eigenvalues()[0] < psd_floor:
            raise InconsistentInputsError("information matrix is not positive semidefinite")


def j_matrix(rho: DensityOperator, L: LogDerivVector) -> InfoMatrix:
    """``Tr[ρL_iL_j]`` (S), ``Tr[ρL_iL_j†]`` (R) or ``Tr[L_iρL_j†]`` (L), Hermitized."""
    r = rho.matrix
    mats = [x.matrix for x in L.entries]
    if L.flavor == "S":
        left = [r @ m for m in mats]
        J = np.array([[np.sum(li * mj.T) for mj in mats] for li in left])
    elif L.flavor == "R":
        left = [r @ m for m in mats]
        J = np.array([[np.sum(li * mj.conj()) for mj in mats] for li in left])
    elif L.flavor == "L":
        left = [m @ r for m in mats]
        J = np.array([[np.sum(li * mj.conj()) for mj in mats] for li in left])
    else:
        raise ValueError(f"unknown flavor {L.flavor!r}")
    J = np.atleast_2d(J).astype(complex)
    asym = float(np.max(np.abs(J - J.conj().T))) if J.size else 0.0
    if asym > ASYMMETRY_ERROR:
        raise InconsistentInputsError(f"J asymmetry {asym:.2e} exceeds {ASYMMETRY_ERROR:.0e}")
    return InfoMatrix(L.flavor, L.order, (J + J.conj().T) / 2, tuple(L.labels), L.source)


def gaussian_j_closed_form(N: float, k: int, flavor: str) -> InfoMatrix:
    """Diagonal information matrices of the displaced thermal model."""
    flavor = flavor.upper()
    if flavor == "S":
        if not 1 <= k <= 3:
            raise ValueError("closed-form Type S matrix only for k <= 3")
        diag = [
            4 / (2 * N + 1),
            8 / (N**2 + (N + 1) ** 2) + 4 / (N * (N + 1)),
            24 / (N**3 + (N + 1) ** 3) + 72 / (N * (N + 1) * (2 * N + 1)),
        ][:k]
        labels: tuple = tuple(range(1, k + 1))
    elif flavor in ("R", "L"):
        labels = tuple(complex_labels(k))
        f = math.factorial
        if flavor == "R":
            diag = [f(p) * f(q) / (N**p * (N + 1) ** q) for p, q in labels]
        else:
            diag = [f(p) * f(q) / (N**q * (N + 1) ** p) for p, q in labels]
    else:
        raise ValueError(f"unknown flavor {flavor!r}")
    return InfoMatrix(flavor, k, np.diag(diag), labels, "gaussian-closed-form")


def information_matrix(
    model: ParametricModel, param, k: int, flavor: str, h=None, rel_floor: float | None = None
) -> InfoMatrix:
    """Full numerical pipeline: finite differences, logarithmic-derivative solve, Gram matrix."""
    flavor = flavor.upper()
    if (flavor == "S") != (model.kind is ParamKind.REAL):
        raise ValueError(f"flavor {flavor} does not match a {model.kind.value} model")
    if flavor == "S":
        stack = real_derivatives(model, param, k, h)
    else:
        stack = wirtinger_derivatives(model, param, k, h)
    rho = model.state(param)
    kw = {} if rel_floor is None else {"rel_floor": rel_floor}
    return j_matrix(rho, solve(rho, stack, flavor, **kw))


def derivative_vector(g: GFunction, param, J: InfoMatrix) -> np.ndarray:
    """``D_k[g]`` for Type S, or ``D^C_k[conj g]`` for Types R/L, in ``J``'s label order."""
    if J.flavor == "S":
        if g.kind != "real":
            raise ValueError("Type S bounds need a real-parameter g")
        return np.array([g.derivative(param, j) for j in J.labels], dtype=complex)
    if g.kind != "complex":
        raise ValueError(f"Type {J.flavor} bounds need a complex-parameter g")
    gc = g.conj()
    return np.array([gc.derivative(param, lab) for lab in J.labels], dtype=complex)


@dataclass(frozen=True)
class BoundResult:
    value: float
    condition_number: float
    flavor: str
    order: int
    imag_residue: float = 0.0
    warnings: tuple[str, ...] = field(default=())


def bound(g: GFunction, param, J: InfoMatrix) -> BoundResult:
    """Lower bound on the variance of any unbiased estimator of ``g`` at ``param``."""
    J.check()
    v = derivative_vector(g, param, J)
    q = np.vdot(v, J.pseudo_inverse() @ v)
    scale = max(1.0, abs(q.real))
    if abs(q.imag) > 1e-9 * scale:
        raise InconsistentInputsError(f"bound has imaginary part {q.imag:.3e}")
    cond = J.condition_number()
    notes = []
    if cond > ILL_CONDITIONED:
        msg = f"information matrix condition number {cond:.3e} exceeds {ILL_CONDITIONED:.0e}"
        notes.append(msg)
        _warnings.warn(msg, IllConditionedWarning, stacklevel=2)
    value = float(q.real)
    if -1e-12 * scale < value < 0:
        value = 0.0
    return BoundResult(value, cond, J.flavor, J.order, float(abs(q.imag)), tuple(notes))


def _flavored(flavor: str):
    def fn(g: GFunction, param, J: InfoMatrix) -> float:
        if J.flavor != flavor:
            raise ValueError(f"expected a Type {flavor} information matrix, got {J.flavor}")
        return bound(g, param, J).value

    fn.__name__ = f"bound_{flavor.lower()}"
    fn.__doc__ = f"Type {flavor} bound as a plain float."
    return fn


bound_s = _flavored("S")
bound_r = _flavored("R")
bound_l = _flavored("L")


@dataclass(frozen=True)
class MonotonicityReport:
    bounds: tuple[float, ...]
    nondecreasing: bool


def bound_monotonicity_report(
    g: GFunction, param, J_sequence: Sequence[InfoMatrix] | InfoMatrix, slack: float = 1e-9
) -> MonotonicityReport:
    """Bounds for ``k = 1..k_max`` from nested information matrices."""
    if isinstance(J_sequence, InfoMatrix):
        J_sequence = [J_sequence.truncated(k) for k in range(1, J_sequence.order + 1)]
    values = tuple(bound(g, param, J).value for J in J_sequence)
    ok = all(b >= a - slack for a, b in zip(values, values[1:]))
    return MonotonicityReport(values, ok)
