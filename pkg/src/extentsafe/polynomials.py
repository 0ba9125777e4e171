"""Sparse multivariate polynomials and monomial bases for Gram parameterizations.

Exponent tuples index coefficients; zero coefficients are never stored.
The monomial order used everywhere is graded lexicographic (total degree
first, then lexicographic with the first variable largest), frozen because
it fixes equality-constraint row order downstream.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

Monomial = tuple  # exponent tuple, one entry per variable


class PolynomialError(ValueError):
    pass


def _clean(terms: dict, tol: float = 0.0) -> dict:
    return {m: float(c) for m, c in terms.items() if c != 0.0 and abs(c) > tol}


@dataclass(frozen=True)
class MultiPoly:
    """Polynomial in ``nvars`` variables, terms mapping exponent tuple -> coefficient."""

    nvars: int
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "terms", _clean(self.terms))
        for m in self.terms:
            if len(m) != self.nvars:
                raise PolynomialError(f"monomial {m} does not have {self.nvars} exponents")

    @classmethod
    def zero(cls, nvars: int) -> "MultiPoly":
        return cls(nvars, {})

    @classmethod
    def constant(cls, nvars: int, value: float) -> "MultiPoly":
        return cls(nvars, {(0,) * nvars: float(value)})

    @classmethod
    def variable(cls, nvars: int, index: int) -> "MultiPoly":
        exp = tuple(1 if i == index else 0 for i in range(nvars))
        return cls(nvars, {exp: 1.0})

    @classmethod
    def affine(cls, nvars: int, linear, constant: float = 0.0) -> "MultiPoly":
        """c0 + sum_i linear[i] * y_i."""
        terms = {(0,) * nvars: float(constant)}
        for i, ci in enumerate(linear):
            exp = tuple(1 if j == i else 0 for j in range(nvars))
            terms[exp] = float(ci)
        return cls(nvars, terms)

    @property
    def degree(self) -> int:
        if not self.terms:
            return 0
        return max(sum(m) for m in self.terms)

    def _check_compatible(self, other: "MultiPoly"):
        if self.nvars != other.nvars:
            raise PolynomialError("variable-count mismatch")

    def __add__(self, other):
        if not isinstance(other, MultiPoly):
            other = MultiPoly.constant(self.nvars, other)
        self._check_compatible(other)
        terms = dict(self.terms)
        for m, c in other.terms.items():
            terms[m] = terms.get(m, 0.0) + c
        return MultiPoly(self.nvars, terms)

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly(self.nvars, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        if not isinstance(other, MultiPoly):
            other = MultiPoly.constant(self.nvars, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, MultiPoly):
            return self.scale(other)
        self._check_compatible(other)
        terms: dict = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                terms[m] = terms.get(m, 0.0) + c1 * c2
        return MultiPoly(self.nvars, terms)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise PolynomialError("exponent must be a nonnegative integer")
        out = MultiPoly.constant(self.nvars, 1.0)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def scale(self, factor: float) -> "MultiPoly":
        return MultiPoly(self.nvars, {m: c * float(factor) for m, c in self.terms.items()})

    def partial(self, index: int) -> "MultiPoly":
        """Partial derivative with respect to variable ``index``."""
        terms: dict = {}
        for m, c in self.terms.items():
            e = m[index]
            if e == 0:
                continue
            dm = tuple(ei - 1 if i == index else ei for i, ei in enumerate(m))
            terms[dm] = terms.get(dm, 0.0) + c * e
        return MultiPoly(self.nvars, terms)

    def evaluate(self, point) -> float:
        point = np.asarray(point, dtype=float)
        if point.shape != (self.nvars,):
            raise PolynomialError(f"expected point of length {self.nvars}")
        total = 0.0
        for m, c in self.terms.items():
            term = c
            for xi, e in zip(point, m):
                if e:
                    term *= xi**e
            total += term
        return float(total)

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Evaluate on an array of points with shape (k, nvars)."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.nvars:
            raise PolynomialError(f"expected points of shape (k, {self.nvars})")
        if not self.terms:
            return np.zeros(points.shape[0])
        exps = np.array(list(self.terms.keys()), dtype=int)
        coeffs = np.array(list(self.terms.values()))
        powers = points[:, None, :] ** exps[None, :, :]
        return powers.prod(axis=2) @ coeffs

    def coefficient(self, mono: Monomial) -> float:
        return self.terms.get(tuple(mono), 0.0)

    def drop_small(self, tol: float) -> "MultiPoly":
        return MultiPoly(self.nvars, _clean(self.terms, tol))

    def __repr__(self):
        if not self.terms:
            return "MultiPoly(0)"
        parts = []
        for m in sorted(self.terms, key=lambda mm: (sum(mm), tuple(-e for e in mm))):
            body = "*".join(f"y{i}^{e}" for i, e in enumerate(m) if e)
            parts.append(f"{self.terms[m]:+g}" + (f"*{body}" if body else ""))
        return "MultiPoly(" + " ".join(parts) + ")"


def monomials_up_to(nvars: int, degree: int) -> list:
    """All exponent tuples with total degree <= degree, graded-lex ordered."""
    out = []
    for total in range(degree + 1):
        block = [m for m in itertools.product(range(total + 1), repeat=nvars) if sum(m) == total]
        # lexicographic with the first variable largest: sort descending
        block.sort(reverse=True)
        out.extend(block)
    return out


@dataclass(frozen=True)
class GramBasis:
    """Monomial vector z(y) of all monomials up to ``degree``; s(y)=z'Sz spans degree 2*degree."""

    nvars: int
    degree: int
    monomials: tuple = ()

    @classmethod
    def build(cls, nvars: int, degree: int) -> "GramBasis":
        if degree < 0:
            raise PolynomialError("basis degree must be >= 0")
        return cls(nvars, degree, tuple(monomials_up_to(nvars, degree)))

    @property
    def size(self) -> int:
        return len(self.monomials)

    def expected_size(self) -> int:
        return math.comb(self.nvars + self.degree, self.degree)

    def index(self, mono: Monomial) -> int:
        return self.monomials.index(tuple(mono))

    def gram_to_poly(self, gram: np.ndarray) -> MultiPoly:
        """Expand z(y)' G z(y) for a symmetric matrix G on this basis."""
        gram = np.asarray(gram, dtype=float)
        if gram.shape != (self.size, self.size):
            raise PolynomialError("Gram matrix size does not match basis")
        terms: dict = {}
        for i, mi in enumerate(self.monomials):
            for j, mj in enumerate(self.monomials):
                m = tuple(a + b for a, b in zip(mi, mj))
                terms[m] = terms.get(m, 0.0) + gram[i, j]
        return MultiPoly(self.nvars, terms)
