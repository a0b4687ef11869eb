"""Polynomials in the ladder operators of a system mode ``a`` and an ancilla ``b``.

Monomials are stored annihilation-left per mode: the key ``(m_a, n_a, m_b, n_b)``
stands for ``a^m_a (a†)^n_a b^m_b (b†)^n_b``. This is the ordering in which the
Gaussian-model estimators are naturally written, so closed forms transcribe
term by term. Products are brought back to this form with

    (a†)^n a^m = Σ_k (−1)^k k! C(n,k) C(m,k) a^(m−k) (a†)^(n−k).
"""

from __future__ import annotations

import math
from functools import lru_cache
from numbers import Number
from typing import Iterable, Mapping

import numpy as np

from .fock import FockOperator, InvalidDimensionError

Key = tuple[int, int, int, int]

# coefficients below this magnitude are dropped after arithmetic
ZERO_TOL = 1e-14


def _clean(terms: Mapping[Key, complex], tol: float = ZERO_TOL) -> dict[Key, complex]:
    return {k: complex(c) for k, c in terms.items() if abs(c) > tol}


@lru_cache(maxsize=None)
def _reorder(n: int, m: int) -> tuple[tuple[int, float], ...]:
    """Terms ``(k, weight)`` of ``(a†)^n a^m`` in annihilation-left form."""
    return tuple(
        (k, (-1) ** k * math.factorial(k) * math.comb(n, k) * math.comb(m, k))
        for k in range(min(n, m) + 1)
    )


def _mode_product(m1: int, n1: int, m2: int, n2: int) -> list[tuple[int, int, float]]:
    return [(m1 + m2 - k, n1 + n2 - k, w) for k, w in _reorder(n1, m2)]


class NormalOrderedPoly:
    """Immutable polynomial in ``a, a†, b, b†`` with complex coefficients."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Key, complex] | None = None):
        self._terms = _clean(terms or {})

    # -- constructors -------------------------------------------------------
    @classmethod
    def constant(cls, c: complex) -> NormalOrderedPoly:
        return cls({(0, 0, 0, 0): c})

    @classmethod
    def a(cls) -> NormalOrderedPoly:
        return cls({(1, 0, 0, 0): 1.0})

    @classmethod
    def adag(cls) -> NormalOrderedPoly:
        return cls({(0, 1, 0, 0): 1.0})

    @classmethod
    def b(cls) -> NormalOrderedPoly:
        return cls({(0, 0, 1, 0): 1.0})

    @classmethod
    def bdag(cls) -> NormalOrderedPoly:
        return cls({(0, 0, 0, 1): 1.0})

    # -- inspection ---------------------------------------------------------
    @property
    def terms(self) -> dict[Key, complex]:
        return dict(self._terms)

    def __iter__(self):
        return iter(sorted(self._terms.items(), key=lambda kv: (sum(kv[0]), kv[0])))

    def __len__(self) -> int:
        return len(self._terms)

    def coeff(self, key: Key) -> complex:
        return self._terms.get(tuple(key), 0j)

    @property
    def degree(self) -> int:
        return max((sum(k) for k in self._terms), default=0)

    @property
    def uses_ancilla(self) -> bool:
        return any(k[2] or k[3] for k in self._terms)

    def max_abs_diff(self, other: NormalOrderedPoly) -> float:
        keys = set(self._terms) | set(other._terms)
        return max((abs(self.coeff(k) - other.coeff(k)) for k in keys), default=0.0)

    def isclose(self, other: NormalOrderedPoly, tol: float = 1e-10) -> bool:
        return self.max_abs_diff(other) <= tol

    def __eq__(self, other) -> bool:
        if not isinstance(other, NormalOrderedPoly):
            return NotImplemented
        return self._terms == other._terms

    __hash__ = None

    def is_self_adjoint(self, tol: float = 1e-10) -> bool:
        return self.isclose(self.adjoint(), tol)

    # -- algebra ------------------------------------------------------------
    def adjoint(self) -> NormalOrderedPoly:
        return NormalOrderedPoly(
            {(n, m, q, p): c.conjugate() for (m, n, p, q), c in self._terms.items()}
        )

    dag = adjoint

    def _lift(self, other) -> NormalOrderedPoly:
        if isinstance(other, NormalOrderedPoly):
            return other
        if isinstance(other, Number):
            return NormalOrderedPoly.constant(other)
        return NotImplemented

    def __add__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for k, c in other._terms.items():
            out[k] = out.get(k, 0j) + c
        return NormalOrderedPoly(out)

    __radd__ = __add__

    def __neg__(self):
        return NormalOrderedPoly({k: -c for k, c in self._terms.items()})

    def __sub__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, Number):
            return NormalOrderedPoly({k: c * other for k, c in self._terms.items()})
        if isinstance(other, NormalOrderedPoly):
            return multiply(self, other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, Number):
            return self * other
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, Number):
            return self * (1.0 / other)
        return NotImplemented

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            return NotImplemented
        out = NormalOrderedPoly.constant(1.0)
        for _ in range(n):
            out = out * self
        return out

    # -- numerics -----------------------------------------------------------
    def materialize(self, dim_a: int, dim_b: int = 0) -> FockOperator:
        """Dense matrix of the operator restricted to the truncated space.

        Entries are the exact matrix elements of the untruncated operator,
        so products of materialized factors differ from the materialized
        product only near the truncation edge.
        """
        if self.uses_ancilla and dim_b < 1:
            raise InvalidDimensionError("polynomial uses the ancilla but dim_b == 0")
        n = dim_a * max(dim_b, 1)
        out = np.zeros((n, n), dtype=complex)
        for (ma, na, mb, nb), c in self._terms.items():
            blk = _monomial_matrix(ma, na, dim_a)
            if dim_b:
                blk = np.kron(blk, _monomial_matrix(mb, nb, dim_b))
            out += c * blk
        return FockOperator(out, dim_a, dim_b)

    def gaussian_expectation(self, N: float, zeta: complex) -> complex:
        return gaussian_expectation(self, N, zeta)

    def render(self, var_names: tuple[str, str, str, str] = ("a", "a†", "b", "b†")) -> str:
        """Text form, terms ordered by total degree then key, 12 significant digits."""
        if not self._terms:
            return "0"
        parts = []
        for key, c in self:
            factors = [
                name if p == 1 else f"{name}^{p}"
                for name, p in zip(var_names, key)
                if p
            ]
            parts.append(f"({_fmt_complex(c)})" + ("*" + "*".join(factors) if factors else ""))
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"NormalOrderedPoly({self.render()})"


def _fmt_complex(c: complex) -> str:
    if c.imag == 0:
        return f"{c.real:.12g}"
    return f"{c.real:.12g}{c.imag:+.12g}i"


def multiply(p: NormalOrderedPoly, q: NormalOrderedPoly) -> NormalOrderedPoly:
    out: dict[Key, complex] = {}
    for (ma1, na1, mb1, nb1), c1 in p._terms.items():
        for (ma2, na2, mb2, nb2), c2 in q._terms.items():
            for ma, na, wa in _mode_product(ma1, na1, ma2, na2):
                for mb, nb, wb in _mode_product(mb1, nb1, mb2, nb2):
                    k = (ma, na, mb, nb)
                    out[k] = out.get(k, 0j) + c1 * c2 * wa * wb
    return NormalOrderedPoly(out)


def ladder_sum(terms: Iterable[tuple[Key, complex]]) -> NormalOrderedPoly:
    out: dict[Key, complex] = {}
    for k, c in terms:
        out[k] = out.get(k, 0j) + c
    return NormalOrderedPoly(out)


def shifted_a(zeta: complex) -> NormalOrderedPoly:
    """``a − ζ``."""
    return NormalOrderedPoly.a() - complex(zeta)


def shifted_adag(zeta: complex) -> NormalOrderedPoly:
    """``a† − ζ̄``."""
    return NormalOrderedPoly.adag() - complex(zeta).conjugate()


@lru_cache(maxsize=512)
def _monomial_matrix_cached(m: int, n: int, dim: int) -> np.ndarray:
    out = np.zeros((dim, dim))
    j = np.arange(dim)
    i = j + n - m
    ok = (i >= 0) & (i < dim)
    j, i = j[ok], i[ok]
    val = np.ones(j.shape)
    for t in range(1, n + 1):
        val *= np.sqrt(j + t)
    for t in range(m):
        val *= np.sqrt(j + n - t)
    out[i, j] = val
    out.setflags(write=False)
    return out


def _monomial_matrix(m: int, n: int, dim: int) -> np.ndarray:
    """Exact elements ``<i| a^m (a†)^n |j>`` for ``i, j < dim``."""
    return _monomial_matrix_cached(m, n, dim)


def normal_moment(p: int, q: int, N: float, zeta: complex) -> complex:
    """``Tr[ρ (a†)^p a^q]`` from the generating function ``exp(λζ̄ + λ̄ζ + N|λ|²)``.

    ``∂_λ^p ∂_λ̄^q`` of the generating function at zero.
    """
    zeta = complex(zeta)
    zb = zeta.conjugate()
    return sum(
        math.factorial(j) * math.comb(p, j) * math.comb(q, j) * N**j * zb ** (p - j) * zeta ** (q - j)
        for j in range(min(p, q) + 1)
    )


def anti_normal_moment(m: int, n: int, N: float, zeta: complex) -> complex:
    """``Tr[ρ a^m (a†)^n]`` via ``a^m (a†)^n = Σ_k k! C(m,k) C(n,k) (a†)^(n−k) a^(m−k)``."""
    return sum(
        math.factorial(k) * math.comb(m, k) * math.comb(n, k) * normal_moment(n - k, m - k, N, zeta)
        for k in range(min(m, n) + 1)
    )


def gaussian_expectation(p: NormalOrderedPoly, N: float, zeta: complex) -> complex:
    """Exact ``Tr[(ρ_ζ ⊗ f₀f₀†) p]`` for the displaced thermal state of mean ``|ζ|² + N``."""
    total = 0j
    for (ma, na, mb, nb), c in p._terms.items():
        if mb != nb:
            continue
        total += c * anti_normal_moment(ma, na, N, zeta) * math.factorial(mb)
    return total
