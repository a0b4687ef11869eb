"""Symmetric, right and left logarithmic derivatives.

Numerical solutions work in the eigenbasis of ``ρ``. Eigenvalues below
``rel_floor · λ_max`` are clamped to that floor before any division; the
result then carries a warning saying how many were clamped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .fock import DensityOperator, FockOperator
from .poly import NormalOrderedPoly, shifted_a, shifted_adag

if TYPE_CHECKING:
    from .model import DerivativeStack

DEFAULT_REL_FLOOR = 1e-13


class SingularStateError(ArithmeticError):
    pass


@dataclass(frozen=True)
class LogDerivVector:
    flavor: str  # "S", "R" or "L"
    order: int
    entries: tuple[FockOperator, ...]
    labels: tuple
    source: str = "numerical"
    warnings: tuple[str, ...] = ()
    polys: tuple[NormalOrderedPoly, ...] | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]


@dataclass(frozen=True)
class _Spectrum:
    values: np.ndarray
    vectors: np.ndarray
    n_clamped: int
    floor: float

    def warnings(self) -> tuple[str, ...]:
        if not self.n_clamped:
            return ()
        return (f"{self.n_clamped} eigenvalue(s) of rho clamped to floor {self.floor:.3e}",)


def _spectrum(rho: DensityOperator, rel_floor: float) -> _Spectrum:
    lam, V = np.linalg.eigh(rho.matrix)
    lmax = lam[-1]
    if lmax <= 0:
        raise SingularStateError("density operator has no positive eigenvalue")
    floor = rel_floor * lmax
    low = lam < floor
    lam = np.where(low, floor, lam)
    return _Spectrum(lam, V, int(low.sum()), floor)


def solve_sld(
    rho: DensityOperator, stack: DerivativeStack, rel_floor: float = DEFAULT_REL_FLOOR
) -> LogDerivVector:
    """Solve ``D_j = (ρL_j + L_jρ)/2`` entrywise in the eigenbasis of ``ρ``."""
    sp = _spectrum(rho, rel_floor)
    V, lam = sp.vectors, sp.values
    denom = lam[:, None] + lam[None, :]
    out = []
    for d in stack.entries:
        dt = V.conj().T @ d.matrix @ V
        L = V @ (2 * dt / denom) @ V.conj().T
        out.append(FockOperator((L + L.conj().T) / 2, *d.dims))
    return LogDerivVector("S", stack.order, tuple(out), tuple(stack.labels), "numerical", sp.warnings())


def _inverse(rho: DensityOperator, rel_floor: float) -> tuple[np.ndarray, _Spectrum]:
    sp = _spectrum(rho, rel_floor)
    V = sp.vectors
    return (V / sp.values) @ V.conj().T, sp


def solve_rld(
    rho: DensityOperator, stack: DerivativeStack, rel_floor: float = DEFAULT_REL_FLOOR
) -> LogDerivVector:
    """``L_j = ρ⁻¹ D_j`` so that ``D_j = ρ L_j``."""
    inv, sp = _inverse(rho, rel_floor)
    out = tuple(FockOperator(inv @ d.matrix, *d.dims) for d in stack.entries)
    return LogDerivVector("R", stack.order, out, tuple(stack.labels), "numerical", sp.warnings())


def solve_lld(
    rho: DensityOperator, stack: DerivativeStack, rel_floor: float = DEFAULT_REL_FLOOR
) -> LogDerivVector:
    """``L_j = D_j ρ⁻¹`` so that ``D_j = L_j ρ``."""
    inv, sp = _inverse(rho, rel_floor)
    out = tuple(FockOperator(d.matrix @ inv, *d.dims) for d in stack.entries)
    return LogDerivVector("L", stack.order, out, tuple(stack.labels), "numerical", sp.warnings())


def solve(rho: DensityOperator, stack: DerivativeStack, flavor: str, **kw) -> LogDerivVector:
    return {"S": solve_sld, "R": solve_rld, "L": solve_lld}[flavor.upper()](rho, stack, **kw)


def defining_residuals(rho: DensityOperator, L: LogDerivVector, stack: DerivativeStack) -> list[float]:
    """Max-norm residual of the defining equation for every entry."""
    r = rho.matrix
    res = []
    for Lj, Dj in zip(L.entries, stack.entries):
        m = Lj.matrix
        if L.flavor == "S":
            lhs = (r @ m + m @ r) / 2
        elif L.flavor == "R":
            lhs = r @ m
        else:
            lhs = m @ r
        res.append(float(np.max(np.abs(lhs - Dj.matrix))))
    return res


# -- Gaussian closed forms -----------------------------------------------------


def _closed_form(N: float, zeta: complex, p: int, q: int, right: bool) -> NormalOrderedPoly:
    if p < 0 or q < 0 or p + q < 1:
        raise ValueError(f"invalid derivative order (p, q) = ({p}, {q})")
    lo, hi = min(p, q), max(p, q)
    am, adm = shifted_a(zeta), shifted_adag(zeta)
    out = NormalOrderedPoly()
    for r in range(lo + 1):
        na = r + max(0, q - p)  # power of (a − ζ)
        nad = r + max(0, p - q)  # power of (a† − ζ̄)
        if right:
            denom = N**p * (N + 1) ** na
        else:
            denom = N**q * (N + 1) ** nad
        c = (-1) ** (lo - r) * math.comb(hi, lo - r) * math.factorial(lo) / math.factorial(r)
        out = out + (c / denom) * (am**na * adm**nad)
    return out


def gaussian_rld_closed_form(N: float, zeta: complex, p: int, q: int) -> NormalOrderedPoly:
    """Right logarithmic derivative for ``∂ζ^p ∂ζ̄^q`` of the displaced thermal state."""
    return _closed_form(N, zeta, p, q, right=True)


def gaussian_lld_closed_form(N: float, zeta: complex, p: int, q: int) -> NormalOrderedPoly:
    """Left logarithmic derivative for ``∂ζ^p ∂ζ̄^q`` of the displaced thermal state."""
    return _closed_form(N, zeta, p, q, right=False)


def gaussian_sld_closed_form(N: float, theta: float, j: int) -> NormalOrderedPoly:
    """SLD of ``d^j ρ/dθ^j`` on the real line, ``j <= 3``, as a mix of RLD entries."""

    def M(p, q):
        return gaussian_rld_closed_form(N, theta, p, q)

    if j == 1:
        s = 2 * N + 1
        return (2 * (N + 1) / s) * M(0, 1) + (2 * N / s) * M(1, 0)
    if j == 2:
        s = N**2 + (N + 1) ** 2
        return (2 * (N + 1) ** 2 / s) * M(0, 2) + (2 * N**2 / s) * M(2, 0) + 2 * M(1, 1)
    if j == 3:
        s = N**3 + (N + 1) ** 3
        t = N * (N + 1) * (2 * N + 1)
        return (
            (2 * (N + 1) ** 3 / s) * M(0, 3)
            + (2 * N**3 / s) * M(3, 0)
            + (6 * (N + 1) ** 2 * N / t) * M(1, 2)
            + (6 * (N + 1) * N**2 / t) * M(2, 1)
        )
    raise ValueError(f"closed-form SLD only for orders 1..3, got {j}")


def gaussian_log_derivatives(
    N: float, param, k: int, flavor: str, dim: int, dim_b: int = 0
) -> LogDerivVector:
    """Closed-form logarithmic-derivative vector, materialized at ``dim``."""
    from .model import complex_labels

    flavor = flavor.upper()
    if flavor == "S":
        labels: Sequence = tuple(range(1, k + 1))
        polys = tuple(gaussian_sld_closed_form(N, float(np.real(param)), j) for j in labels)
    elif flavor in ("R", "L"):
        labels = tuple(complex_labels(k))
        fn = gaussian_rld_closed_form if flavor == "R" else gaussian_lld_closed_form
        polys = tuple(fn(N, param, p, q) for p, q in labels)
    else:
        raise ValueError(f"unknown flavor {flavor!r}")
    entries = tuple(P.materialize(dim, dim_b) for P in polys)
    return LogDerivVector(flavor, k, entries, labels, "gaussian-closed-form", (), polys)
