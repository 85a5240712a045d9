"""Sparse multivariate polynomials over indexed variables.

Everything downstream (constraint families, Gram expansions, coefficient
matching) is built on the two types here.  Polynomials are immutable value
objects; all arithmetic returns new instances and drops coefficients below
DROP_TOL so the sparse term maps stay clean.

Monomial ordering is graded lexicographic (total degree first, then lex with
lower variable indices dominating) and is fixed globally: the SOS compiler
relies on it for deterministic coefficient-matching rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

# Coefficients with |c| below this are dropped after arithmetic.
DROP_TOL = 1e-12

# Guard against accidentally huge monomial bases.
DEFAULT_BASIS_CAP = 200_000


class Monomial:
    """A power product of indexed variables, e.g. x0^2 * x3.

    Stored as a sorted tuple of (variable index, positive exponent) pairs;
    zero exponents are never stored, so equality of the exponent maps is
    plain tuple equality.
    """

    __slots__ = ("_pairs", "_degree", "_hash")

    def __init__(self, exponents: Mapping[int, int] | Iterable[tuple[int, int]] = ()):
        items = exponents.items() if isinstance(exponents, Mapping) else exponents
        pairs = []
        for idx, p in items:
            if p < 0:
                raise ValueError(f"negative exponent {p} for variable {idx}")
            if p > 0:
                pairs.append((int(idx), int(p)))
        pairs.sort()
        self._pairs = tuple(pairs)
        self._degree = sum(p for _, p in pairs)
        self._hash = hash(self._pairs)

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return self._pairs

    @property
    def degree(self) -> int:
        return self._degree

    def max_index(self) -> int:
        """Largest variable index used, or -1 for the constant monomial."""
        return self._pairs[-1][0] if self._pairs else -1

    def exponent_vector(self, nvars: int) -> tuple[int, ...]:
        e = [0] * nvars
        for idx, p in self._pairs:
            e[idx] = p
        return tuple(e)

    def __mul__(self, other: "Monomial") -> "Monomial":
        e = dict(self._pairs)
        for idx, p in other._pairs:
            e[idx] = e.get(idx, 0) + p
        return Monomial(e)

    def evaluate(self, point: np.ndarray) -> float:
        v = 1.0
        for idx, p in self._pairs:
            v *= point[idx] ** p
        return v

    def grlex_key(self, nvars: int) -> tuple:
        """Sort key: ascending total degree, then descending lex on exponents."""
        return (self._degree, tuple(-e for e in self.exponent_vector(nvars)))

    def __eq__(self, other) -> bool:
        return isinstance(other, Monomial) and self._pairs == other._pairs

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        if not self._pairs:
            return "1"
        return "*".join(f"x{i}" if p == 1 else f"x{i}^{p}" for i, p in self._pairs)


ONE = Monomial()


class Polynomial:
    """Sparse real polynomial: a map Monomial -> coefficient plus an ambient
    variable count.  Zero polynomial has degree 0 by convention."""

    __slots__ = ("terms", "nvars")

    def __init__(self, terms: Mapping[Monomial, float], nvars: int, *, clean: bool = True):
        if clean:
            terms = {m: float(c) for m, c in terms.items() if abs(c) > DROP_TOL}
        self.terms = dict(terms)
        self.nvars = int(nvars)
        for m in self.terms:
            if m.max_index() >= self.nvars:
                raise ValueError(f"monomial {m} exceeds nvars={self.nvars}")

    # ---- constructors -------------------------------------------------

    @staticmethod
    def zero(nvars: int) -> "Polynomial":
        return Polynomial({}, nvars)

    @staticmethod
    def constant(c: float, nvars: int) -> "Polynomial":
        return Polynomial({ONE: c}, nvars)

    @staticmethod
    def variable(idx: int, nvars: int) -> "Polynomial":
        return Polynomial({Monomial({idx: 1}): 1.0}, nvars)

    @staticmethod
    def from_records(records: Iterable[Mapping], nvars: int) -> "Polynomial":
        """Build from the problem-file literal syntax:
        [{"exponents": [e0, e1, ...], "coeff": c}, ...]."""
        terms: dict[Monomial, float] = {}
        for rec in records:
            exps = rec["exponents"]
            if len(exps) != nvars:
                raise ValueError(f"exponent list length {len(exps)} != nvars {nvars}")
            m = Monomial({i: e for i, e in enumerate(exps)})
            terms[m] = terms.get(m, 0.0) + float(rec["coeff"])
        return Polynomial(terms, nvars)

    def to_records(self) -> list[dict]:
        recs = []
        for m in sorted(self.terms, key=lambda m: m.grlex_key(self.nvars)):
            recs.append({"exponents": list(m.exponent_vector(self.nvars)),
                         "coeff": self.terms[m]})
        return recs

    # ---- queries -------------------------------------------------------

    def degree(self) -> int:
        return max((m.degree for m in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def coeff(self, m: Monomial) -> float:
        return self.terms.get(m, 0.0)

    def coeff_norm(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def __call__(self, point) -> float:
        return poly_eval(self, point)

    # ---- arithmetic ----------------------------------------------------

    def _require_same_space(self, other: "Polynomial"):
        if self.nvars != other.nvars:
            raise ValueError(f"variable-count mismatch: {self.nvars} vs {other.nvars}")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other, self.nvars)
        self._require_same_space(other)
        terms = dict(self.terms)
        for m, c in other.terms.items():
            terms[m] = terms.get(m, 0.0) + c
        return Polynomial(terms, self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({m: -c for m, c in self.terms.items()}, self.nvars, clean=False)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other, self.nvars)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Polynomial({m: c * other for m, c in self.terms.items()}, self.nvars)
        return poly_mul(self, other)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        out = Polynomial.constant(1.0, self.nvars)
        for _ in range(k):
            out = out * self
        return out

    def diff(self, idx: int) -> "Polynomial":
        terms: dict[Monomial, float] = {}
        for m, c in self.terms.items():
            e = dict(m.pairs)
            p = e.get(idx, 0)
            if p == 0:
                continue
            e[idx] = p - 1
            dm = Monomial(e)
            terms[dm] = terms.get(dm, 0.0) + c * p
        return Polynomial(terms, self.nvars)

    def embed(self, nvars: int) -> "Polynomial":
        """Reinterpret in a larger ambient space (variable indices unchanged)."""
        if nvars < self.nvars:
            raise ValueError("cannot shrink variable space")
        return Polynomial(self.terms, nvars, clean=False)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Polynomial) and self.nvars == other.nvars
                and self.terms == other.terms)

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for m in sorted(self.terms, key=lambda m: m.grlex_key(self.nvars)):
            parts.append(f"{self.terms[m]:+g}*{m}" if m.pairs else f"{self.terms[m]:+g}")
        return " ".join(parts)


def poly_eval(p: Polynomial, point) -> float:
    """Evaluate p at a point of length p.nvars."""
    point = np.asarray(point, dtype=float)
    if point.shape != (p.nvars,):
        raise ValueError(f"point length {point.shape} != nvars {p.nvars}")
    return sum(c * m.evaluate(point) for m, c in p.terms.items())


def poly_mul(p: Polynomial, q: Polynomial) -> Polynomial:
    p._require_same_space(q)
    terms: dict[Monomial, float] = {}
    for mp, cp in p.terms.items():
        for mq, cq in q.terms.items():
            m = mp * mq
            terms[m] = terms.get(m, 0.0) + cp * cq
    return Polynomial(terms, p.nvars)


def basis_size(nvars: int, d: int) -> int:
    return math.comb(nvars + d, d)


def monomial_basis(nvars: int, d: int, cap: int = DEFAULT_BASIS_CAP) -> list[Monomial]:
    """All monomials in nvars variables with total degree <= d, graded-lex
    ordered.  Raises if the basis would exceed `cap` elements."""
    if d < 0:
        raise ValueError("degree bound must be >= 0")
    n = basis_size(nvars, d)
    if n > cap:
        raise OverflowError(f"monomial basis size {n} exceeds cap {cap}")

    out: list[Monomial] = []

    def rec(idx: int, remaining: int, current: dict[int, int]):
        if idx == nvars:
            out.append(Monomial(current))
            return
        # descending exponent on the current variable gives grlex within a
        # fixed total degree; we sort at the end anyway for the degree grading
        for e in range(remaining, -1, -1):
            if e:
                current[idx] = e
            rec(idx + 1, remaining - e, current)
            current.pop(idx, None)

    rec(0, d, {})
    out.sort(key=lambda m: m.grlex_key(nvars))
    return out


def gram_expand(basis: list[Monomial], G: np.ndarray, nvars: int) -> Polynomial:
    """Expand the Gram form v(x)^T G v(x) over the given monomial basis.
    If G is PSD the result is a sum of squares."""
    G = np.asarray(G, dtype=float)
    n = len(basis)
    if G.shape != (n, n):
        raise ValueError(f"Gram dimension {G.shape} != basis size {n}")
    if n and np.max(np.abs(G - G.T)) > 1e-10 * (1.0 + np.max(np.abs(G))):
        raise ValueError("Gram matrix not symmetric")
    terms: dict[Monomial, float] = {}
    for a in range(n):
        for b in range(a, n):
            c = G[a, b] if a == b else 2.0 * G[a, b]
            if c == 0.0:
                continue
            m = basis[a] * basis[b]
            terms[m] = terms.get(m, 0.0) + c
    return Polynomial(terms, nvars)


@dataclass(frozen=True)
class VariableLayout:
    """Index layout for the (x, y, mu) variable groups of the single-level
    reformulation.  x occupies [0, m), y occupies [m, m+n), then mu_0, the
    mu_k (k=1..q) and finally the mu_k^i grouped by i then k, matching the
    ordering (mu_0, mu_1..mu_q, mu_1^1..mu_q^1, ..., mu_1^s..mu_q^s)."""

    m: int
    n: int
    q: int
    s: int

    @property
    def nvars(self) -> int:
        return self.m + self.n + self.q * (self.s + 1) + 1

    def x(self, i: int) -> int:
        if not 0 <= i < self.m:
            raise IndexError(i)
        return i

    def y(self, j: int) -> int:
        if not 0 <= j < self.n:
            raise IndexError(j)
        return self.m + j

    @property
    def mu0(self) -> int:
        return self.m + self.n

    def mu(self, k: int) -> int:
        """mu_k for k in 1..q."""
        if not 1 <= k <= self.q:
            raise IndexError(k)
        return self.m + self.n + k

    def mu_i(self, k: int, i: int) -> int:
        """mu_k^i for k in 1..q, i in 1..s."""
        if not (1 <= k <= self.q and 1 <= i <= self.s):
            raise IndexError((k, i))
        return self.m + self.n + self.q + (i - 1) * self.q + k

    def mu_indices(self) -> list[int]:
        return list(range(self.m + self.n, self.nvars))
