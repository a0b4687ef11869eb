"""Dense linear algebra on truncated single- and two-mode Fock spaces.

Two-mode operators act on ``system ⊗ ancilla`` with the flat index
``i_a * dim_b + i_b`` (``np.kron`` convention). An operator with
``dim_b == 0`` lives on the system alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from numbers import Number
from typing import NamedTuple

import numpy as np
import scipy.linalg

DEFAULT_TAIL_TOL = 1e-10


class InvalidDimensionError(ValueError):
    pass


class TruncationError(RuntimeError):
    """The truncated state lost more trace than the configured tolerance."""

    def __init__(self, deficit: float, tol: float, dim: int):
        self.deficit = deficit
        self.tol = tol
        self.dim = dim
        super().__init__(
            f"trace deficit {deficit:.3e} >= tolerance {tol:.1e} at dim={dim}; "
            "increase the truncation dimension"
        )


@dataclass(frozen=True, eq=False)
class FockOperator:
    """Immutable dense operator on a truncated Fock space.

    Scalars added to an operator are read as multiples of the identity.
    """

    matrix: np.ndarray
    dim_a: int
    dim_b: int = 0

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        n = self.dim
        if m.shape != (n, n):
            raise InvalidDimensionError(
                f"matrix shape {m.shape} does not match dims ({self.dim_a}, {self.dim_b})"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.dim_a * max(self.dim_b, 1)

    @property
    def dims(self) -> tuple[int, int]:
        return (self.dim_a, self.dim_b)

    def _wrap(self, m: np.ndarray) -> FockOperator:
        return FockOperator(m, self.dim_a, self.dim_b)

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, FockOperator):
            if other.dims != self.dims:
                raise InvalidDimensionError(f"dims {other.dims} != {self.dims}")
            return other.matrix
        if isinstance(other, Number):
            return complex(other) * np.eye(self.dim)
        return NotImplemented

    def adjoint(self) -> FockOperator:
        return self._wrap(self.matrix.conj().T)

    dag = adjoint

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def __matmul__(self, other: FockOperator) -> FockOperator:
        if not isinstance(other, FockOperator):
            return NotImplemented
        if other.dims != self.dims:
            raise InvalidDimensionError(f"dims {other.dims} != {self.dims}")
        return self._wrap(self.matrix @ other.matrix)

    def __add__(self, other):
        m = self._coerce(other)
        if m is NotImplemented:
            return m
        return self._wrap(self.matrix + m)

    __radd__ = __add__

    def __sub__(self, other):
        m = self._coerce(other)
        if m is NotImplemented:
            return m
        return self._wrap(self.matrix - m)

    def __rsub__(self, other):
        m = self._coerce(other)
        if m is NotImplemented:
            return m
        return self._wrap(m - self.matrix)

    def __mul__(self, scalar):
        if not isinstance(scalar, Number):
            return NotImplemented
        return self._wrap(complex(scalar) * self.matrix)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if not isinstance(scalar, Number):
            return NotImplemented
        return self._wrap(self.matrix / complex(scalar))

    def __neg__(self):
        return self._wrap(-self.matrix)

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.matrix))) if self.matrix.size else 0.0

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    op: FockOperator
    trace_deficit: float

    @property
    def matrix(self) -> np.ndarray:
        return self.op.matrix

    @property
    def dims(self) -> tuple[int, int]:
        return self.op.dims

    def expect(self, x: FockOperator) -> complex:
        return complex(np.einsum("ij,ji->", self.matrix, x.matrix))

    def check(self, herm_tol: float = 1e-12, eig_floor: float = -1e-12) -> None:
        """Raise ``ValueError`` if the state is not Hermitian PSD."""
        r = self.op.hermiticity_residual()
        if r >= herm_tol:
            raise ValueError(f"density operator not Hermitian (residual {r:.2e})")
        lam = np.linalg.eigvalsh(self.matrix)
        if lam[0] < eig_floor:
            raise ValueError(f"density operator has eigenvalue {lam[0]:.2e}")


class TruncatedVector(NamedTuple):
    vector: np.ndarray
    norm_deficit: float


def annihilation(dim: int) -> FockOperator:
    if dim < 2:
        raise InvalidDimensionError(f"dim must be >= 2, got {dim}")
    return FockOperator(np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1), dim)


def creation(dim: int) -> FockOperator:
    return annihilation(dim).adjoint()


def number_operator(dim: int) -> FockOperator:
    return FockOperator(np.diag(np.arange(dim, dtype=float)), dim)


def identity(dim_a: int, dim_b: int = 0) -> FockOperator:
    return FockOperator(np.eye(dim_a * max(dim_b, 1)), dim_a, dim_b)


def coherent_state(alpha: complex, dim: int) -> TruncatedVector:
    alpha = complex(alpha)
    v = np.empty(dim, dtype=complex)
    v[0] = math.exp(-abs(alpha) ** 2 / 2)
    for n in range(1, dim):
        v[n] = v[n - 1] * alpha / math.sqrt(n)
    return TruncatedVector(v, float(1.0 - np.vdot(v, v).real))


def displacement(zeta: complex, dim: int) -> FockOperator:
    """``exp(ζa† − ζ̄a)`` on the truncated space (Padé scaling and squaring)."""
    a = annihilation(dim).matrix
    zeta = complex(zeta)
    return FockOperator(scipy.linalg.expm(zeta * a.conj().T - zeta.conjugate() * a), dim)


def thermal_populations(N: float, dim: int) -> np.ndarray:
    return (1.0 / (N + 1.0)) * (N / (N + 1.0)) ** np.arange(dim)


def default_dim(N: float, zeta: complex = 0.0, tol: float = DEFAULT_TAIL_TOL) -> int:
    """Truncation large enough for the displaced thermal tail to stay below ``tol``."""
    r = abs(complex(zeta))
    heuristic = math.ceil(8 * (N + r * r + 2 * r * math.sqrt(N) + 1))
    # thermal tail (N/(N+1))^d < tol, shifted outward by the displacement
    thermal = math.ceil(math.log(tol) / math.log(N / (N + 1.0)))
    shifted = thermal + math.ceil(r * r + 6 * r * math.sqrt(N + 1) + 4)
    return max(heuristic, shifted)


def _padding(zeta: complex, dim: int) -> int:
    r = abs(complex(zeta))
    if r == 0:
        return 0
    return int(math.ceil(12 + 4 * r * math.sqrt(dim) + 2 * r * r))


def displaced_thermal(
    N: float,
    zeta: complex,
    dim: int,
    tol: float = DEFAULT_TAIL_TOL,
    check_tail: bool = True,
) -> DensityOperator:
    """Gaussian state ``D(ζ) ρ_th D(ζ)†`` with mean photon number ``|ζ|² + N``.

    The state is built on a padded space and cropped to ``dim`` so the
    returned block carries the untruncated matrix elements; the trace lost
    to the crop is reported as ``trace_deficit``.
    """
    if N <= 0:
        raise ValueError(f"N must be positive, got {N}")
    if dim < 2:
        raise InvalidDimensionError(f"dim must be >= 2, got {dim}")
    zeta = complex(zeta)
    big = dim + _padding(zeta, dim)
    p = thermal_populations(N, big)
    if zeta == 0:
        rho = np.diag(p).astype(complex)
    else:
        D = displacement(zeta, big).matrix
        rho = (D * p) @ D.conj().T
    rho = rho[:dim, :dim]
    rho = (rho + rho.conj().T) / 2
    deficit = float(1.0 - np.trace(rho).real)
    if check_tail and deficit >= tol:
        raise TruncationError(deficit, tol, dim)
    return DensityOperator(FockOperator(rho, dim), deficit)


def extend_with_ancilla(x: FockOperator, dim_b: int) -> FockOperator:
    """``x ⊗ I`` on ``system ⊗ ancilla``."""
    if x.dim_b != 0:
        raise InvalidDimensionError("operator already carries an ancilla")
    if dim_b < 1:
        raise InvalidDimensionError(f"dim_b must be >= 1, got {dim_b}")
    return FockOperator(np.kron(x.matrix, np.eye(dim_b)), x.dim_a, dim_b)


def ancilla_annihilation(dim_a: int, dim_b: int) -> FockOperator:
    """The ancilla ladder operator ``b = I ⊗ a``."""
    return FockOperator(np.kron(np.eye(dim_a), annihilation(dim_b).matrix), dim_a, dim_b)


def extend_state(rho: DensityOperator, dim_b: int) -> DensityOperator:
    """``ρ ⊗ f₀f₀†`` with the ancilla in its vacuum."""
    if dim_b < 1:
        raise InvalidDimensionError(f"dim_b must be >= 1, got {dim_b}")
    vac = np.zeros((dim_b, dim_b))
    vac[0, 0] = 1.0
    m = np.kron(rho.matrix, vac)
    return DensityOperator(FockOperator(m, rho.dims[0], dim_b), rho.trace_deficit)
