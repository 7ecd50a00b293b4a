"""Noncommutative polynomials in self-adjoint indeterminates.

Words are tuples of 1-based letter indices, ``()`` being the identity.
Polynomials keep their terms in graded lexicographic order so that equal
polynomials compare equal term by term.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

Word = tuple[int, ...]

BATTERY_CAP = 10_000


class PolySyntaxError(ValueError):
    """Malformed polynomial text; ``position`` is the 0-based offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class UnknownIndeterminate(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class BatteryTooLarge(ValueError):
    pass


def word_key(w: Word) -> tuple[int, Word]:
    return (len(w), w)


def _clean(c: complex) -> complex:
    # folds -0.0 into 0.0 so printing and comparison stay canonical
    c = complex(c)
    return complex(c.real + 0.0, c.imag + 0.0)


@dataclass(frozen=True)
class NcPolynomial:
    """Finite linear combination of words with complex coefficients."""

    terms: tuple[tuple[Word, complex], ...]
    num_indeterminates: int

    def __post_init__(self):
        if self.num_indeterminates < 1:
            raise ValueError("num_indeterminates must be positive")
        for w, c in self.terms:
            if c == 0:
                raise ValueError("zero coefficient stored")
            for letter in w:
                if not 1 <= letter <= self.num_indeterminates:
                    raise UnknownIndeterminate(f"X{letter} with n={self.num_indeterminates}")

    @classmethod
    def from_dict(cls, coeffs: Mapping[Word, complex], n: int) -> NcPolynomial:
        items = []
        for w, c in coeffs.items():
            c = _clean(c)
            if c != 0:
                items.append((tuple(int(x) for x in w), c))
        items.sort(key=lambda item: word_key(item[0]))
        return cls(tuple(items), n)

    @classmethod
    def constant(cls, c: complex, n: int) -> NcPolynomial:
        return cls.from_dict({(): c}, n)

    @classmethod
    def identity(cls, n: int) -> NcPolynomial:
        return cls.constant(1.0, n)

    @classmethod
    def word(cls, w: Sequence[int], n: int, coeff: complex = 1.0) -> NcPolynomial:
        return cls.from_dict({tuple(w): coeff}, n)

    @classmethod
    def variable(cls, i: int, n: int) -> NcPolynomial:
        return cls.word((i,), n)

    def as_dict(self) -> dict[Word, complex]:
        return dict(self.terms)

    @property
    def words(self) -> list[Word]:
        return [w for w, _ in self.terms]

    @property
    def degree(self) -> int:
        return max((len(w) for w, _ in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def _coerce(self, other) -> NcPolynomial:
        if isinstance(other, NcPolynomial):
            if other.num_indeterminates != self.num_indeterminates:
                raise DimensionMismatch("polynomials over different indeterminate counts")
            return other
        if isinstance(other, (int, float, complex, np.number)):
            return NcPolynomial.constant(complex(other), self.num_indeterminates)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        acc = self.as_dict()
        for w, c in other.terms:
            acc[w] = acc.get(w, 0) + c
        return NcPolynomial.from_dict(acc, self.num_indeterminates)

    __radd__ = __add__

    def __neg__(self):
        return NcPolynomial.from_dict({w: -c for w, c in self.terms}, self.num_indeterminates)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        acc: dict[Word, complex] = {}
        for w1, c1 in self.terms:
            for w2, c2 in other.terms:
                w = w1 + w2
                acc[w] = acc.get(w, 0) + c1 * c2
        return NcPolynomial.from_dict(acc, self.num_indeterminates)

    def __rmul__(self, other):
        # scalars commute with everything
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other * self

    def __pow__(self, e: int):
        if not isinstance(e, (int, np.integer)) or e < 0:
            raise ValueError("exponent must be a nonnegative integer")
        out = NcPolynomial.identity(self.num_indeterminates)
        for _ in range(int(e)):
            out = out * self
        return out

    def adjoint(self) -> NcPolynomial:
        return adjoint(self)

    def substitute(self, images: Sequence[NcPolynomial], n: int | None = None) -> NcPolynomial:
        """Replace ``X_i`` by ``images[i-1]``; the result lives in ``n`` indeterminates."""
        if len(images) < self.num_indeterminates:
            raise DimensionMismatch("not enough images for substitution")
        if n is None:
            n = images[0].num_indeterminates
        out = NcPolynomial.from_dict({}, n)
        for w, c in self.terms:
            term = NcPolynomial.constant(c, n)
            for letter in w:
                term = term * images[letter - 1]
            out = out + term
        return out

    def __str__(self) -> str:
        return format_poly(self)


def adjoint(p: NcPolynomial) -> NcPolynomial:
    """Reverse every word and conjugate its coefficient."""
    return NcPolynomial.from_dict(
        {tuple(reversed(w)): complex(c).conjugate() for w, c in p.terms}, p.num_indeterminates
    )


def _format_coeff(c: complex) -> str:
    if c.imag == 0:
        return repr(c.real)
    if c.real == 0:
        return f"{c.imag!r}i"
    sign = "+" if c.imag >= 0 else "-"
    return f"({c.real!r}{sign}{abs(c.imag)!r}i)"


def format_poly(p: NcPolynomial) -> str:
    if p.is_zero():
        return "0"
    parts = []
    for w, c in p.terms:
        letters = "*".join(f"X{i}" for i in w)
        if not w:
            parts.append(_format_coeff(c))
        elif c == 1:
            parts.append(letters)
        else:
            parts.append(f"{_format_coeff(c)}*{letters}")
    return " + ".join(parts)


_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<imag>i(?![A-Za-z0-9_]))?"
    r"|(?P<var>X(?P<idx>\d+))"
    r"|(?P<unit>i(?![A-Za-z0-9_]))"
    r"|(?P<op>[-+*^()])"
    r")"
)


class _Parser:
    def __init__(self, text: str, n: int):
        self.text = text
        self.n = n
        self.tokens: list[tuple[str, object, int]] = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                stripped = len(text) - len(text[pos:].lstrip())
                raise PolySyntaxError(f"unexpected character {text[stripped]!r}", stripped, text)
            start = m.start() + (len(m.group(0)) - len(m.group(0).lstrip()))
            if m.group("num") is not None:
                value = float(m.group("num"))
                self.tokens.append(("num", complex(0, value) if m.group("imag") else complex(value), start))
            elif m.group("var") is not None:
                idx = int(m.group("idx"))
                if idx < 1 or idx > n:
                    raise UnknownIndeterminate(f"X{idx} at position {start} (n={n})")
                self.tokens.append(("var", idx, start))
            elif m.group("unit") is not None:
                self.tokens.append(("num", 1j, start))
            else:
                self.tokens.append(("op", m.group("op"), start))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("end", None, len(self.text))

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, value, pos = self.take()
        if kind != "op" or value != op:
            raise PolySyntaxError(f"expected {op!r}", pos, self.text)

    def parse(self) -> NcPolynomial:
        out = self.expr()
        kind, _, pos = self.peek()
        if kind != "end":
            raise PolySyntaxError("trailing input", pos, self.text)
        return out

    def expr(self) -> NcPolynomial:
        out = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.take()
                rhs = self.term()
                out = out + rhs if value == "+" else out - rhs
            else:
                return out

    def term(self) -> NcPolynomial:
        out = self.unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value == "*":
                self.take()
                out = out * self.unary()
            else:
                return out

    def unary(self) -> NcPolynomial:
        kind, value, _ = self.peek()
        if kind == "op" and value in "+-":
            self.take()
            inner = self.unary()
            return -inner if value == "-" else inner
        return self.power()

    def power(self) -> NcPolynomial:
        base = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.take()
            kind, exp, pos = self.take()
            if kind != "num" or exp.imag != 0 or exp.real != int(exp.real) or exp.real < 0:
                raise PolySyntaxError("exponent must be a nonnegative integer", pos, self.text)
            return base ** int(exp.real)
        return base

    def atom(self) -> NcPolynomial:
        kind, value, pos = self.take()
        if kind == "num":
            return NcPolynomial.constant(value, self.n)
        if kind == "var":
            return NcPolynomial.variable(value, self.n)
        if kind == "op" and value == "(":
            inner = self.expr()
            self.expect_op(")")
            return inner
        raise PolySyntaxError("expected a number, indeterminate or '('", pos, self.text)


def parse_poly(text: str, n: int) -> NcPolynomial:
    """Parse ``text`` such as ``"(X1 + 2i*X2)^2 - 1"`` into canonical form."""
    if n < 1:
        raise ValueError("n must be positive")
    return _Parser(text, n).parse()


def all_words(n: int, d: int) -> list[Word]:
    """Words of length <= d over n letters in graded lexicographic order."""
    out: list[Word] = []
    for q in range(d + 1):
        out.extend(itertools.product(range(1, n + 1), repeat=q))
    return out


@dataclass(frozen=True)
class CompiledBattery:
    """Prefix-closed word table plus coefficient matrix for fast evaluation."""

    words: tuple[Word, ...]
    parent: np.ndarray
    letter: np.ndarray
    coeffs: np.ndarray  # (num_polys, num_words)

    def word_values(self, mats: np.ndarray) -> np.ndarray:
        """All word products for a stack ``mats`` of shape (n, k, k)."""
        k = mats.shape[-1]
        out = np.empty((len(self.words), k, k), dtype=complex)
        out[0] = np.eye(k)
        for i in range(1, len(self.words)):
            out[i] = out[self.parent[i]] @ mats[self.letter[i]]
        return out

    def evaluate(self, mats: np.ndarray) -> np.ndarray:
        return np.tensordot(self.coeffs, self.word_values(mats), axes=1)


def compile_polys(polys: Sequence[NcPolynomial]) -> CompiledBattery:
    needed: set[Word] = {()}
    for p in polys:
        for w in p.words:
            for j in range(1, len(w) + 1):
                needed.add(w[:j])
    words = tuple(sorted(needed, key=word_key))
    index = {w: i for i, w in enumerate(words)}
    parent = np.array([index[w[:-1]] if w else -1 for w in words], dtype=np.int64)
    letter = np.array([w[-1] - 1 if w else -1 for w in words], dtype=np.int64)
    coeffs = np.zeros((len(polys), len(words)), dtype=complex)
    for r, p in enumerate(polys):
        for w, c in p.terms:
            coeffs[r, index[w]] = c
    return CompiledBattery(words, parent, letter, coeffs)


def _as_stack(t) -> np.ndarray:
    mats = getattr(t, "mats", t)
    mats = np.asarray(mats)
    if mats.ndim == 2:
        mats = mats[None]
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise DimensionMismatch("expected a stack of square matrices")
    return mats


def evaluate(p: NcPolynomial, t) -> np.ndarray:
    """Substitute the matrices of ``t`` for the indeterminates of ``p``."""
    mats = _as_stack(t)
    if mats.shape[0] < p.num_indeterminates:
        raise DimensionMismatch(
            f"polynomial in {p.num_indeterminates} indeterminates, tuple has {mats.shape[0]}"
        )
    return compile_polys([p]).evaluate(mats)[0]


@dataclass(frozen=True)
class PolyBattery:
    polys: tuple[NcPolynomial, ...]
    degree_bound: int
    label: str = ""

    def __post_init__(self):
        if not self.polys:
            raise ValueError("battery must be nonempty")
        n = self.polys[0].num_indeterminates
        if any(p.num_indeterminates != n for p in self.polys):
            raise DimensionMismatch("battery polynomials over different indeterminate counts")
        present = set(self.polys)
        required = [NcPolynomial.identity(n)] + [NcPolynomial.variable(i, n) for i in range(1, n + 1)]
        missing = [str(p) for p in required if p not in present]
        if missing:
            raise ValueError(f"battery lacks required polynomials: {missing}")

    @property
    def num_indeterminates(self) -> int:
        return self.polys[0].num_indeterminates

    def __len__(self) -> int:
        return len(self.polys)

    def __iter__(self):
        return iter(self.polys)

    def __getitem__(self, i):
        return self.polys[i]

    @cached_property
    def compiled(self) -> CompiledBattery:
        return compile_polys(self.polys)

    def evaluate_all(self, t) -> np.ndarray:
        mats = _as_stack(t)
        if mats.shape[0] < self.num_indeterminates:
            raise DimensionMismatch("tuple has fewer matrices than the battery has indeterminates")
        return self.compiled.evaluate(mats)

    def norms(self, t) -> np.ndarray:
        return np.linalg.norm(self.evaluate_all(t), ord=2, axis=(1, 2))

    def prefix_of(self, other: PolyBattery) -> bool:
        return len(self.polys) <= len(other.polys) and other.polys[: len(self.polys)] == self.polys

    def extended(self, extra: Iterable[NcPolynomial], label: str | None = None) -> PolyBattery:
        seen = set(self.polys)
        polys = list(self.polys)
        for p in extra:
            if p not in seen and not p.is_zero():
                polys.append(p)
                seen.add(p)
        degree = max(self.degree_bound, max(p.degree for p in polys))
        return PolyBattery(tuple(polys), degree, label or self.label)


def battery_size(n: int, d: int) -> int:
    return sum(n**q for q in range(d + 1))


def default_battery(n: int, d: int, cap: int = BATTERY_CAP) -> PolyBattery:
    """All words of length <= d with coefficient 1, identity first."""
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    size = battery_size(n, d)
    if size > cap:
        raise BatteryTooLarge(f"battery of {size} words exceeds cap {cap}")
    polys = tuple(NcPolynomial.word(w, n) for w in all_words(n, d))
    return PolyBattery(polys, d, f"words-n{n}-d{d}")


def load_battery(path: str | Path, n: int, label: str | None = None) -> PolyBattery:
    polys = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            polys.append(parse_poly(line, n))
    degree = max((p.degree for p in polys), default=0)
    return PolyBattery(tuple(polys), degree, label or Path(path).stem)


def dump_battery(battery: PolyBattery, path: str | Path) -> None:
    lines = [f"# {battery.label} (n={battery.num_indeterminates}, degree<={battery.degree_bound})"]
    lines += [format_poly(p) for p in battery.polys]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
