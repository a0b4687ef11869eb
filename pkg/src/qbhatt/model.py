"""Parametric state families and their derivative stacks.

Complex-parameter stacks follow the ordering

    ∂ζ, ∂ζ̄, ∂ζ², ∂ζ∂ζ̄, ∂ζ̄², ..., ∂ζ^k, ..., ∂ζ̄^k

i.e. by total order, and within one order by the number ``q`` of ``∂ζ̄``
factors. The entry for ``∂ζ^p ∂ζ̄^q`` sits at 0-based position
``(p+q−1)(p+q+2)/2 + q``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .fock import DEFAULT_TAIL_TOL, DensityOperator, FockOperator, displaced_thermal, extend_state
from .logderiv import gaussian_rld_closed_form

MAX_ORDER = 3


class ParamKind(str, enum.Enum):
    REAL = "real"
    COMPLEX = "complex"


class UnsupportedOrderError(ValueError):
    pass


def n_complex_entries(k: int) -> int:
    return k * (k + 3) // 2


def complex_index(p: int, q: int) -> int:
    """0-based position of ``∂ζ^p ∂ζ̄^q`` in the complex stack."""
    m = p + q
    if m < 1 or p < 0 or q < 0:
        raise ValueError(f"invalid derivative order (p, q) = ({p}, {q})")
    return (m - 1) * (m + 2) // 2 + q


def complex_labels(k: int) -> list[tuple[int, int]]:
    return [(m - q, q) for m in range(1, k + 1) for q in range(m + 1)]


@dataclass(frozen=True)
class ParametricModel:
    """A family ``parameter -> DensityOperator``; ``state_fn`` must be pure."""

    kind: ParamKind
    state_fn: Callable[[complex], DensityOperator]
    dims: tuple[int, int]
    gaussian_N: float | None = None
    name: str = ""

    def state(self, param) -> DensityOperator:
        if self.kind is ParamKind.REAL:
            param = float(np.real(param))
        return self.state_fn(param)


def gaussian_model(
    N: float,
    kind: ParamKind | str = ParamKind.REAL,
    dim: int = 60,
    dim_b: int = 0,
    tol: float = DEFAULT_TAIL_TOL,
) -> ParametricModel:
    """The displaced thermal family with known thermal photon number ``N``."""
    kind = ParamKind(kind)

    def state_fn(param):
        rho = displaced_thermal(N, param, dim, tol=tol)
        return extend_state(rho, dim_b) if dim_b else rho

    return ParametricModel(kind, state_fn, (dim, dim_b), gaussian_N=N, name=f"gaussian(N={N})")


@dataclass(frozen=True)
class DerivativeStack:
    order: int
    kind: ParamKind
    entries: tuple[FockOperator, ...]
    labels: tuple
    source: str = "finite-difference"

    def __post_init__(self):
        expected = self.order if self.kind is ParamKind.REAL else n_complex_entries(self.order)
        if len(self.entries) != expected or len(self.labels) != expected:
            raise ValueError(f"stack of order {self.order} needs {expected} entries")

    @property
    def index_map(self) -> dict:
        return {lab: i for i, lab in enumerate(self.labels)}

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def entry(self, label) -> FockOperator:
        return self.entries[self.index_map[label]]

    def truncated(self, k: int) -> DerivativeStack:
        """The nested stack of order ``k <= order``."""
        n = k if self.kind is ParamKind.REAL else n_complex_entries(k)
        return DerivativeStack(k, self.kind, self.entries[:n], self.labels[:n], self.source)


# central stencils with O(h²) error, offsets in units of h
_STENCILS = {
    0: {0: 1.0},
    1: {-1: -0.5, 1: 0.5},
    2: {-1: 1.0, 0: -2.0, 1: 1.0},
    3: {-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5},
}

# steps balancing the O(h⁴) Richardson remainder against rounding noise ~ eps/h^j
_BASE_STEP = {1: 1e-3, 2: 2e-3, 3: 5e-3}


def default_step(order: int, param) -> float:
    return _BASE_STEP[order] * max(1.0, abs(complex(param)))


def _check_order(k: int) -> None:
    if not 1 <= k <= MAX_ORDER:
        raise UnsupportedOrderError(f"derivative order must be in 1..{MAX_ORDER}, got {k}")


def _hermitize(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2


class _Evaluator:
    """Memoized state evaluations on an integer lattice around a base point."""

    def __init__(self, model: ParametricModel, base: complex):
        self.model = model
        self.base = complex(base)
        self.cache: dict[complex, np.ndarray] = {}

    def __call__(self, param: complex) -> np.ndarray:
        if param not in self.cache:
            self.cache[param] = self.model.state(param).matrix
        return self.cache[param]


def _real_fd(ev: _Evaluator, theta: float, order: int, h: float) -> np.ndarray:
    return sum(w * ev(theta + s * h) for s, w in _STENCILS[order].items()) / h**order


def real_derivatives(
    model: ParametricModel,
    theta: float,
    k: int,
    h: float | Sequence[float] | None = None,
) -> DerivativeStack:
    """``d^j ρ/dθ^j`` for ``j = 1..k`` by central differences plus one Richardson level."""
    _check_order(k)
    if model.kind is not ParamKind.REAL:
        raise ValueError("real_derivatives needs a real-parameter model")
    theta = float(theta)
    steps = _steps(h, k, theta)
    ev = _Evaluator(model, theta)
    entries = []
    for j in range(1, k + 1):
        hj = steps[j - 1]
        d = (4 * _real_fd(ev, theta, j, hj) - _real_fd(ev, theta, j, 2 * hj)) / 3
        entries.append(FockOperator(_hermitize(d), *model.dims))
    return DerivativeStack(k, ParamKind.REAL, tuple(entries), tuple(range(1, k + 1)))


def _steps(h, k, param) -> list[float]:
    if h is None:
        return [default_step(j, param) for j in range(1, k + 1)]
    if np.isscalar(h):
        if h <= 0:
            raise ValueError("step must be positive")
        return [float(h)] * k
    steps = [float(x) for x in h]
    if len(steps) < k or min(steps) <= 0:
        raise ValueError("need one positive step per derivative order")
    return steps


def wirtinger_expansion(p: int, q: int) -> dict[tuple[int, int], complex]:
    """Coefficients of ``∂x^j ∂y^l`` in ``∂ζ^p ∂ζ̄^q = 2^-(p+q) (∂x − i∂y)^p (∂x + i∂y)^q``."""
    out: dict[tuple[int, int], complex] = {}
    for s in range(p + 1):
        for t in range(q + 1):
            c = math.comb(p, s) * math.comb(q, t) * (-1j) ** (p - s) * (1j) ** (q - t)
            key = (s + t, p + q - s - t)
            out[key] = out.get(key, 0) + c / 2 ** (p + q)
    return {kk: c for kk, c in out.items() if abs(c) > 1e-15}


def _mixed_fd(ev: _Evaluator, zeta: complex, jx: int, ly: int, h: float) -> np.ndarray:
    acc = 0
    for s, ws in _STENCILS[jx].items():
        for t, wt in _STENCILS[ly].items():
            acc = acc + ws * wt * ev(zeta + complex(s * h, t * h))
    return acc / h ** (jx + ly)


def wirtinger_derivatives(
    model: ParametricModel,
    zeta: complex,
    k: int,
    h: float | Sequence[float] | None = None,
) -> DerivativeStack:
    """``∂ζ^p ∂ζ̄^q ρ`` for ``1 <= p+q <= k`` from mixed x/y central differences."""
    _check_order(k)
    if model.kind is not ParamKind.COMPLEX:
        raise ValueError("wirtinger_derivatives needs a complex-parameter model")
    zeta = complex(zeta)
    steps = _steps(h, k, zeta)
    ev = _Evaluator(model, zeta)
    labels = complex_labels(k)
    raw = {}
    for p, q in labels:
        hm = steps[p + q - 1]
        acc = 0
        for (jx, ly), c in wirtinger_expansion(p, q).items():
            fine = _mixed_fd(ev, zeta, jx, ly, hm)
            coarse = _mixed_fd(ev, zeta, jx, ly, 2 * hm)
            acc = acc + c * (4 * fine - coarse) / 3
        raw[(p, q)] = acc
    # the exact stack satisfies D(p,q) = D(q,p)†
    entries = tuple(
        FockOperator((raw[(p, q)] + raw[(q, p)].conj().T) / 2, *model.dims) for p, q in labels
    )
    return DerivativeStack(k, ParamKind.COMPLEX, entries, tuple(labels))


def gaussian_derivative_closed_form(
    N: float, zeta: complex, p: int, q: int, dim: int, dim_b: int = 0
) -> FockOperator:
    """``∂ζ^p ∂ζ̄^q ρ_ζ = ρ_ζ · L^R_(p,q)`` with the right logarithmic derivative in closed form."""
    if p + q < 1:
        raise ValueError("need p + q >= 1")
    poly = gaussian_rld_closed_form(N, zeta, p, q)
    pad = dim + poly.degree + 2
    rho = displaced_thermal(N, zeta, pad, check_tail=False).matrix
    d = (rho @ poly.materialize(pad).matrix)[:dim, :dim]
    if dim_b:
        vac = np.zeros((dim_b, dim_b))
        vac[0, 0] = 1.0
        d = np.kron(d, vac)
    return FockOperator(d, dim, dim_b)


def gaussian_derivative_stack(
    N: float, param, k: int, kind: ParamKind | str, dim: int, dim_b: int = 0
) -> DerivativeStack:
    """Closed-form stack; real stacks use ``d/dθ = ∂ζ + ∂ζ̄`` at ``ζ = θ``."""
    _check_order(k)
    kind = ParamKind(kind)
    labels = complex_labels(k)
    cache = {
        (p, q): gaussian_derivative_closed_form(N, param, p, q, dim, dim_b) for p, q in labels
    }
    if kind is ParamKind.COMPLEX:
        entries = tuple(cache[lab] for lab in labels)
        return DerivativeStack(k, kind, entries, tuple(labels), source="gaussian-closed-form")
    entries = []
    for j in range(1, k + 1):
        acc = sum(math.comb(j, i) * cache[(i, j - i)].matrix for i in range(j + 1))
        entries.append(FockOperator(_hermitize(acc), dim, dim_b))
    return DerivativeStack(
        k, kind, tuple(entries), tuple(range(1, k + 1)), source="gaussian-closed-form"
    )


# -- models given as sampled matrices -------------------------------------------------


def fd_weights(offsets: Sequence[float], order: int) -> np.ndarray:
    """Weights ``w`` with ``Σ w_i f(x0 + o_i) ≈ f^(order)(x0)``, exact for polynomials of degree < len(offsets)."""
    o = np.asarray(offsets, dtype=float)
    n = o.size
    if n <= order:
        raise ValueError(f"need more than {order} points for an order-{order} derivative")
    scale = np.max(np.abs(o)) or 1.0
    u = o / scale
    V = np.array([u**m / math.factorial(m) for m in range(n)])
    rhs = np.zeros(n)
    rhs[order] = 1.0
    return np.linalg.solve(V, rhs) / scale**order


def _nearest(points: np.ndarray, x0: float, order: int) -> np.ndarray:
    m = min(points.size, 2 * math.ceil((order + 2) / 2) + 1)
    idx = np.argsort(np.abs(points - x0), kind="stable")[:m]
    return np.sort(points[idx])


@dataclass(frozen=True)
class SampledModel:
    """A model known only on a finite lattice of parameter values."""

    kind: ParamKind
    samples: dict  # complex parameter -> DensityOperator
    dims: tuple[int, int]
    name: str = "sampled"

    def _key(self, param) -> complex:
        z = complex(param)
        for key in self.samples:
            if abs(key - z) <= 1e-9 * max(1.0, abs(z)):
                return key
        raise ValueError(f"parameter {param} is not on the sample lattice")

    def state(self, param) -> DensityOperator:
        return self.samples[self._key(param)]

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        keys = list(self.samples)
        xs = np.unique(np.round([k.real for k in keys], 12))
        ys = np.unique(np.round([k.imag for k in keys], 12))
        return xs, ys


def lattice_derivatives(model: SampledModel, param, k: int) -> DerivativeStack:
    """Derivative stack from finite-difference weights on the sample lattice."""
    _check_order(k)
    z0 = complex(model._key(param))
    xs, ys = model.axes()

    def axis_weights(points, x0, order):
        if order == 0:
            return [(x0, 1.0)]
        pts = _nearest(points, x0, order)
        return list(zip(pts, fd_weights(pts - x0, order)))

    def mixed(jx, ly):
        acc = 0
        for x, wx in axis_weights(xs, z0.real, jx):
            for y, wy in axis_weights(ys, z0.imag, ly):
                acc = acc + wx * wy * model.state(complex(x, y)).matrix
        return acc

    if model.kind is ParamKind.REAL:
        entries = tuple(FockOperator(_hermitize(mixed(j, 0)), *model.dims) for j in range(1, k + 1))
        return DerivativeStack(k, ParamKind.REAL, entries, tuple(range(1, k + 1)), source="lattice")
    labels = complex_labels(k)
    raw = {}
    for p, q in labels:
        raw[(p, q)] = sum(c * mixed(jx, ly) for (jx, ly), c in wirtinger_expansion(p, q).items())
    entries = tuple(
        FockOperator((raw[(p, q)] + raw[(q, p)].conj().T) / 2, *model.dims) for p, q in labels
    )
    return DerivativeStack(k, ParamKind.COMPLEX, entries, tuple(labels), source="lattice")
