"""Target functions ``g`` and a small parser for polynomial specs.

Real polynomials are ``Σ c_j θ^j``; complex ones ``Σ c_{m,n} ζ^m ζ̄^n``.
The same grammar also builds ladder-operator polynomials (see ``parse_operator``):

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*    (divisors must be numbers)
    factor := ('+' | '-') factor | atom ('^' INT)?
    atom   := NUMBER ['i'] | NAME | NAME '(' expr ')' | '(' expr ')'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from numbers import Number
from typing import Callable, Mapping

from .poly import NormalOrderedPoly


class SpecError(ValueError):
    """A polynomial spec could not be parsed."""


@dataclass(frozen=True)
class GFunction:
    kind: str  # "real" | "complex"
    coeffs: Mapping  # real: {j: c}; complex: {(m, n): c}

    def __post_init__(self):
        if self.kind not in ("real", "complex"):
            raise ValueError(f"unknown kind {self.kind!r}")
        clean = {k: complex(c) for k, c in dict(self.coeffs).items() if abs(c) > 1e-15}
        object.__setattr__(self, "coeffs", clean)

    # -- constructors ---------------------------------------------------------
    @classmethod
    def real(cls, coeffs: Mapping[int, complex]) -> GFunction:
        return cls("real", coeffs)

    @classmethod
    def complex(cls, coeffs: Mapping[tuple[int, int], complex]) -> GFunction:
        return cls("complex", coeffs)

    @classmethod
    def monomial(cls, m: int, n: int = 0, c: complex = 1.0) -> GFunction:
        return cls("complex", {(m, n): c})

    @classmethod
    def parse(cls, text: str, kind: str | None = None) -> GFunction:
        return parse_g(text, kind)

    def as_complex(self) -> GFunction:
        if self.kind == "complex":
            return self
        return GFunction("complex", {(j, 0): c for j, c in self.coeffs.items()})

    # -- properties -----------------------------------------------------------
    @property
    def is_real(self) -> bool:
        return self.kind == "real"

    @property
    def degree(self) -> int:
        if self.kind == "real":
            return max(self.coeffs, default=0)
        return max((m + n for m, n in self.coeffs), default=0)

    def is_holomorphic(self) -> bool:
        return self.kind == "complex" and all(n == 0 for _, n in self.coeffs)

    def is_antiholomorphic(self) -> bool:
        return self.kind == "complex" and all(m == 0 for m, _ in self.coeffs)

    def is_real_valued(self, tol: float = 1e-12) -> bool:
        if self.kind == "real":
            return all(abs(c.imag) <= tol for c in self.coeffs.values())
        keys = set(self.coeffs) | {(n, m) for m, n in self.coeffs}
        return all(
            abs(self.coeffs.get((m, n), 0) - complex(self.coeffs.get((n, m), 0)).conjugate()) <= tol
            for m, n in keys
        )

    # -- evaluation -----------------------------------------------------------
    def __call__(self, param) -> complex:
        if self.kind == "real":
            t = float(getattr(param, "real", param))
            return sum(c * t**j for j, c in self.coeffs.items())
        z = complex(param)
        return sum(c * z**m * z.conjugate() ** n for (m, n), c in self.coeffs.items())

    def conj(self) -> GFunction:
        """The function ``ζ ↦ conj(g(ζ))``."""
        if self.kind == "real":
            return GFunction("real", {j: c.conjugate() for j, c in self.coeffs.items()})
        return GFunction("complex", {(n, m): c.conjugate() for (m, n), c in self.coeffs.items()})

    def derivative(self, param, order) -> complex:
        """``d^j g/dθ^j`` (real, ``order=j``) or ``∂ζ^p ∂ζ̄^q g`` (complex, ``order=(p, q)``)."""
        if self.kind == "real":
            j = int(order)
            t = float(getattr(param, "real", param))
            return sum(
                c * math.perm(e, j) * t ** (e - j) for e, c in self.coeffs.items() if e >= j
            )
        p, q = order
        z = complex(param)
        zb = z.conjugate()
        return sum(
            c * math.perm(m, p) * math.perm(n, q) * z ** (m - p) * zb ** (n - q)
            for (m, n), c in self.coeffs.items()
            if m >= p and n >= q
        )

    # -- arithmetic (used by the parser) ------------------------------------------
    def _lift(self, other) -> GFunction:
        if isinstance(other, GFunction):
            if other.kind != self.kind:
                raise SpecError("cannot mix theta and zeta in one polynomial")
            return other
        if isinstance(other, Number):
            return GFunction(self.kind, {self._one_key(): other})
        return NotImplemented

    def _one_key(self):
        return 0 if self.kind == "real" else (0, 0)

    def __add__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        out = dict(self.coeffs)
        for k, c in other.coeffs.items():
            out[k] = out.get(k, 0) + c
        return GFunction(self.kind, out)

    __radd__ = __add__

    def __neg__(self):
        return GFunction(self.kind, {k: -c for k, c in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        if isinstance(other, Number):
            return GFunction(self.kind, {k: c * other for k, c in self.coeffs.items()})
        other = self._lift(other)
        if other is NotImplemented:
            return other
        out: dict = {}
        for k1, c1 in self.coeffs.items():
            for k2, c2 in other.coeffs.items():
                k = k1 + k2 if self.kind == "real" else (k1[0] + k2[0], k1[1] + k2[1])
                out[k] = out.get(k, 0) + c1 * c2
        return GFunction(self.kind, out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = GFunction(self.kind, {self._one_key(): 1.0})
        for _ in range(n):
            out = out * self
        return out

    def render(self) -> str:
        if not self.coeffs:
            return "0"
        parts = []
        for k in sorted(self.coeffs, key=lambda k: (k if self.kind == "real" else (sum(k), k))):
            c = self.coeffs[k]
            cs = f"{c.real:.12g}" if c.imag == 0 else f"({c.real:.12g}{c.imag:+.12g}i)"
            if self.kind == "real":
                f = [] if k == 0 else [f"theta^{k}"]
            else:
                f = ([f"zeta^{k[0]}"] if k[0] else []) + ([f"conj(zeta)^{k[1]}"] if k[1] else [])
            parts.append("*".join([cs] + f))
        return " + ".join(parts)


# -- parser -------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<imag>[ij](?![A-Za-z_0-9]))?"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>\*\*|[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, object]]:
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise SpecError(f"unexpected character {text[pos]!r} at position {pos} in {text!r}")
        pos = m.end()
        if m.group("num") is not None:
            v = float(m.group("num"))
            out.append(("num", complex(0, v) if m.group("imag") else v))
        elif m.group("name") is not None:
            out.append(("name", m.group("name")))
        else:
            op = m.group("op")
            out.append(("op", "^" if op == "**" else op))
    return out


class _Parser:
    def __init__(self, text: str, atoms: Mapping[str, object], funcs: Mapping[str, Callable]):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.atoms = atoms
        self.funcs = funcs

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok[0] is None or (kind and tok[0] != kind) or (value and tok[1] != value):
            raise SpecError(f"malformed expression {self.text!r}")
        self.i += 1
        return tok

    def parse(self):
        if not self.toks:
            raise SpecError("empty expression")
        v = self.expr()
        if self.i != len(self.toks):
            raise SpecError(f"trailing input in {self.text!r}")
        return v

    def expr(self):
        v = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            v = v + rhs if op == "+" else v - rhs
        return v

    def term(self):
        v = self.factor()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            rhs = self.factor()
            if op == "*":
                v = _mul(v, rhs)
            elif not isinstance(rhs, Number) or rhs == 0:
                raise SpecError(f"can only divide by a non-zero number in {self.text!r}")
            else:
                v = v * (1 / rhs)
        return v

    def factor(self):
        if self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            v = self.factor()
            return -v if op == "-" else v
        v = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            _, e = self.take("num")
            if isinstance(e, complex) or e != int(e) or e < 0:
                raise SpecError(f"exponent must be a non-negative integer in {self.text!r}")
            v = _pow(v, int(e))
        return v

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return val
        if kind == "name":
            self.take()
            if self.peek() == ("op", "("):
                if val not in self.funcs:
                    raise SpecError(f"unknown function {val!r}")
                self.take()
                arg = self.expr()
                self.take("op", ")")
                return self.funcs[val](arg)
            if val not in self.atoms:
                raise SpecError(f"unknown symbol {val!r} in {self.text!r}")
            return self.atoms[val]
        if (kind, val) == ("op", "("):
            self.take()
            v = self.expr()
            self.take("op", ")")
            return v
        raise SpecError(f"malformed expression {self.text!r}")


def _mul(x, y):
    if isinstance(x, Number) and not isinstance(y, Number):
        return y * x
    return x * y


def _pow(x, e):
    return x**e


def parse_g(text: str, kind: str | None = None) -> GFunction:
    """Parse e.g. ``"theta^2"``, ``"zeta*conj(zeta)"`` or ``"(1+2i)*zeta^2 - 3"``."""
    lowered = text.lower()
    has_theta = "theta" in lowered
    has_zeta = "zeta" in lowered
    if has_theta and has_zeta:
        raise SpecError("cannot mix theta and zeta in one polynomial")
    inferred = "real" if has_theta else "complex" if has_zeta else None
    if kind is None:
        kind = inferred or "real"
    elif inferred and inferred != kind:
        raise SpecError(f"{text!r} is a {inferred} polynomial, expected {kind}")

    if kind == "real":
        atoms = {"theta": GFunction("real", {1: 1.0}), "i": 1j}
        funcs: dict[str, Callable] = {}
    else:
        zeta = GFunction("complex", {(1, 0): 1.0})
        zbar = GFunction("complex", {(0, 1): 1.0})
        atoms = {"zeta": zeta, "zetabar": zbar, "i": 1j}

        def conj(arg):
            if isinstance(arg, Number):
                return complex(arg).conjugate()
            return arg.conj()

        funcs = {"conj": conj}
    value = _Parser(text, atoms, funcs).parse()
    if isinstance(value, Number):
        value = GFunction(kind, {0 if kind == "real" else (0, 0): value})
    return value


def parse_operator(text: str) -> NormalOrderedPoly:
    """Parse a ladder-operator polynomial, e.g. ``"adag*a - 1"`` or ``"(a + bdag)^2"``."""
    P = NormalOrderedPoly
    atoms = {"a": P.a(), "adag": P.adag(), "b": P.b(), "bdag": P.bdag(), "i": 1j}

    def dag(arg):
        return arg.adjoint() if isinstance(arg, P) else complex(arg).conjugate()

    value = _Parser(text, atoms, {"dag": dag}).parse()
    if isinstance(value, Number):
        value = P.constant(value)
    return value


def parse_complex(text: str) -> complex:
    """Parse a complex literal such as ``0.3+0.2i``, ``-1e-2j`` or ``0.5``."""
    value = _Parser(text, {"i": 1j, "j": 1j}, {}).parse()
    if not isinstance(value, Number):
        raise SpecError(f"not a number: {text!r}")
    return complex(value)
