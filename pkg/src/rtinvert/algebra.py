"""Dense polynomial algebra over the reals.

Univariate polynomials (:class:`Poly`), bivariate polynomials
(:class:`BiPoly`), rational functions and square matrices with polynomial
entries. Coefficients are stored in ascending order of degree. The sizes
involved are tiny (degree at most a few dozen), so everything is dense and
immutable.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import product
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import polynomial as npp

from .errors import DimensionCap, ZeroPolynomial

MAX_COFACTOR_DIM = 6

# Coefficients below this fraction of the largest one are treated as zero
# when building the companion matrix.
STRIP_TOL = 1e-13


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class Poly:
    """Univariate polynomial, ``coeffs[i]`` multiplies ``x**i``.

    Exact trailing zeros are stripped on construction, so the zero
    polynomial has an empty coefficient array and degree ``-1``.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[float] | float = ()):
        c = np.array(coeffs, dtype=float, ndmin=1).ravel()
        nz = np.flatnonzero(c)
        c = c[: nz[-1] + 1] if nz.size else c[:0]
        self.coeffs = _frozen(c)

    @classmethod
    def const(cls, value: float) -> Poly:
        return cls([value])

    @classmethod
    def from_roots(cls, roots: Iterable[float]) -> Poly:
        p = cls([1.0])
        for r in roots:
            p = p * cls([-r, 1.0])
        return p

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return len(self.coeffs) == 0

    def __call__(self, x):
        if self.is_zero:
            return np.zeros_like(np.asarray(x, dtype=float))[()]
        return npp.polyval(x, self.coeffs)

    def abs_eval(self, x):
        """Evaluate with absolute coefficients at ``|x|``: a rounding scale."""
        if self.is_zero:
            return np.zeros_like(np.asarray(x, dtype=float))[()]
        return npp.polyval(np.abs(x), np.abs(self.coeffs))

    def deriv(self) -> Poly:
        if self.degree < 1:
            return Poly()
        return Poly(self.coeffs[1:] * np.arange(1, len(self.coeffs)))

    def _coerce(self, other) -> Poly:
        if isinstance(other, Poly):
            return other
        if np.isscalar(other):
            return Poly([other])
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        n = max(len(self.coeffs), len(other.coeffs))
        out = np.zeros(n)
        out[: len(self.coeffs)] += self.coeffs
        out[: len(other.coeffs)] += other.coeffs
        return Poly(out)

    __radd__ = __add__

    def __neg__(self) -> Poly:
        return Poly(-self.coeffs)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            return Poly(self.coeffs * float(other))
        if not isinstance(other, Poly):
            return NotImplemented
        if self.is_zero or other.is_zero:
            return Poly()
        return Poly(np.convolve(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, Poly):
            return NotImplemented
        return np.array_equal(self.coeffs, other.coeffs)

    __hash__ = None

    def allclose(self, other: Poly, rtol: float = 1e-9, atol: float = 0.0) -> bool:
        n = max(len(self.coeffs), len(other.coeffs))
        a = np.zeros(n)
        b = np.zeros(n)
        a[: len(self.coeffs)] = self.coeffs
        b[: len(other.coeffs)] = other.coeffs
        return np.allclose(a, b, rtol=rtol, atol=atol)

    def __repr__(self) -> str:
        return f"Poly({self.coeffs.tolist()})"


def poly_real_roots(p: Poly, tol: float = 1e-9, polish: bool = True) -> np.ndarray:
    """Real roots of ``p``, ascending and deduplicated.

    Roots come from the eigenvalues of the companion matrix of the monic
    polynomial. Eigenvalues whose imaginary part is at most
    ``tol * max(1, |z|)`` are accepted as real and then refined with a few
    Newton steps on the original polynomial.

    Raises
    ------
    ZeroPolynomial
        If ``p`` is identically zero.
    """
    if p.is_zero:
        raise ZeroPolynomial("the zero polynomial has no isolated roots")
    c = p.coeffs
    cutoff = STRIP_TOL * np.max(np.abs(c))
    big = np.flatnonzero(np.abs(c) > cutoff)
    lo, hi = big[0], big[-1]
    roots: list[float] = [0.0] if lo > 0 else []
    core = c[lo : hi + 1]
    deg = len(core) - 1
    if deg >= 1:
        companion = np.zeros((deg, deg))
        companion[1:, :-1] = np.eye(deg - 1)
        companion[:, -1] = -core[:-1] / core[-1]
        eig = np.linalg.eigvals(companion)
        keep = np.abs(eig.imag) <= tol * np.maximum(1.0, np.abs(eig))
        cand = eig.real[keep]
        if polish and cand.size:
            cand = _newton_polish(p, cand)
        roots.extend(cand.tolist())
    return _dedupe(np.sort(np.asarray(roots, dtype=float)), tol)


def _newton_polish(p: Poly, x: np.ndarray, steps: int = 4) -> np.ndarray:
    dp = p.deriv()
    x = x.copy()
    fx = np.abs(p(x))
    for _ in range(steps):
        d = dp(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            trial = x - p(x) / d
        ft = np.abs(p(trial))
        better = np.isfinite(trial) & (ft < fx)
        if not better.any():
            break
        x[better] = trial[better]
        fx[better] = ft[better]
    return x


def _dedupe(sorted_x: np.ndarray, tol: float) -> np.ndarray:
    if sorted_x.size < 2:
        return sorted_x
    out = [sorted_x[0]]
    for v in sorted_x[1:]:
        if v - out[-1] > tol * max(1.0, abs(v)):
            out.append(v)
    return np.asarray(out)


class Rational:
    """Ratio of two polynomials with a nonzero denominator."""

    __slots__ = ("num", "den")

    def __init__(self, num: Poly, den: Poly):
        if den.is_zero:
            raise ZeroPolynomial("rational function with zero denominator")
        self.num = num
        self.den = den

    def __call__(self, x):
        return self.num(x) / self.den(x)

    def __repr__(self) -> str:
        return f"Rational({self.num!r}, {self.den!r})"


class PolyMatrix:
    """Square matrix whose entries are :class:`Poly`."""

    __slots__ = ("entries",)

    def __init__(self, entries: Sequence[Sequence[Poly]]):
        rows = tuple(tuple(e if isinstance(e, Poly) else Poly(e) for e in row) for row in entries)
        k = len(rows)
        if any(len(r) != k for r in rows):
            raise ValueError("PolyMatrix must be square")
        self.entries = rows

    @classmethod
    def quadratic(cls, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> PolyMatrix:
        """Entry ``(v, w)`` is ``a[v,w] + b[v,w] x + c[v,w] x**2``."""
        k = a.shape[0]
        return cls([[Poly([a[v, w], b[v, w], c[v, w]]) for w in range(k)] for v in range(k)])

    @classmethod
    def identity(cls, k: int) -> PolyMatrix:
        return cls([[Poly([1.0]) if v == w else Poly() for w in range(k)] for v in range(k)])

    @property
    def size(self) -> int:
        return len(self.entries)

    def __getitem__(self, idx: tuple[int, int]) -> Poly:
        v, w = idx
        return self.entries[v][w]

    def __call__(self, x: float) -> np.ndarray:
        return np.array([[float(e(x)) for e in row] for row in self.entries])

    def __matmul__(self, other: PolyMatrix) -> PolyMatrix:
        k = self.size
        out = []
        for i in range(k):
            row = []
            for j in range(k):
                acc = Poly()
                for m in range(k):
                    acc = acc + self.entries[i][m] * other.entries[m][j]
                row.append(acc)
            out.append(row)
        return PolyMatrix(out)

    def scale(self, p: Poly) -> PolyMatrix:
        return PolyMatrix([[p * e for e in row] for row in self.entries])

    def is_symmetric(self) -> bool:
        k = self.size
        return all(self.entries[v][w] == self.entries[w][v] for v in range(k) for w in range(v))

    def max_degree(self) -> int:
        return max(e.degree for row in self.entries for e in row)


def polymat_det_adj(S: PolyMatrix) -> tuple[Poly, PolyMatrix]:
    """Determinant and adjugate of a polynomial matrix by cofactor expansion.

    Minors are memoised on their (rows, cols) index sets, so the cost is
    ``O(2**k * k)`` polynomial products instead of ``O(k!)``.

    Raises
    ------
    DimensionCap
        If the matrix is larger than ``MAX_COFACTOR_DIM``.
    """
    k = S.size
    if k > MAX_COFACTOR_DIM:
        raise DimensionCap(f"cofactor expansion capped at k={MAX_COFACTOR_DIM}, got k={k}")
    E = S.entries

    @lru_cache(maxsize=None)
    def minor_det(rows: tuple[int, ...], cols: tuple[int, ...]) -> Poly:
        if not rows:
            return Poly([1.0])
        if len(rows) == 1:
            return E[rows[0]][cols[0]]
        r0, rest = rows[0], rows[1:]
        acc = Poly()
        for pos, c in enumerate(cols):
            entry = E[r0][c]
            if entry.is_zero:
                continue
            sub = minor_det(rest, cols[:pos] + cols[pos + 1 :])
            term = entry * sub
            acc = acc - term if pos % 2 else acc + term
        return acc

    full = tuple(range(k))
    det = minor_det(full, full)
    adj = [[Poly() for _ in range(k)] for _ in range(k)]
    for i, j in product(range(k), range(k)):
        # adj[i][j] is the (j, i) cofactor
        m = minor_det(full[:j] + full[j + 1 :], full[:i] + full[i + 1 :])
        adj[i][j] = -m if (i + j) % 2 else m
    return det, PolyMatrix(adj)


class BiPoly:
    """Bivariate polynomial ``sum c[i, j] x**i y**j`` with ``i + j <= max_degree``."""

    __slots__ = ("coeffs", "max_degree")

    def __init__(self, coeffs, max_degree: int | None = None):
        c = np.array(coeffs, dtype=float, ndmin=2)
        if max_degree is None:
            max_degree = c.shape[0] + c.shape[1] - 2
        out = np.zeros((max_degree + 1, max_degree + 1))
        for i, j in zip(*np.nonzero(c)):
            if i + j > max_degree:
                raise ValueError(f"term x^{i} y^{j} exceeds max_degree={max_degree}")
            out[i, j] = c[i, j]
        self.coeffs = _frozen(out)
        self.max_degree = max_degree

    @classmethod
    def from_terms(cls, terms: dict[tuple[int, int], float], max_degree: int | None = None) -> BiPoly:
        if max_degree is None:
            max_degree = max((i + j for i, j in terms), default=0)
        c = np.zeros((max_degree + 1, max_degree + 1))
        for (i, j), v in terms.items():
            c[i, j] += v
        return cls(c, max_degree)

    @classmethod
    def const(cls, value: float) -> BiPoly:
        return cls([[value]], 0)

    @property
    def total_degree(self) -> int:
        nz = np.argwhere(self.coeffs != 0)
        return int(nz.sum(axis=1).max()) if nz.size else -1

    def __call__(self, x, y):
        return npp.polyval2d(x, y, self.coeffs)

    def _coerce(self, other):
        if isinstance(other, BiPoly):
            return other
        if np.isscalar(other):
            return BiPoly.const(float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        d = max(self.max_degree, other.max_degree)
        out = np.zeros((d + 1, d + 1))
        out[: self.max_degree + 1, : self.max_degree + 1] += self.coeffs
        out[: other.max_degree + 1, : other.max_degree + 1] += other.coeffs
        return BiPoly(out, d)

    __radd__ = __add__

    def __neg__(self) -> BiPoly:
        return BiPoly(-self.coeffs, self.max_degree)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            return BiPoly(self.coeffs * float(other), self.max_degree)
        if not isinstance(other, BiPoly):
            return NotImplemented
        d = self.max_degree + other.max_degree
        out = np.zeros((d + 1, d + 1))
        nb = other.max_degree + 1
        for i, j in zip(*np.nonzero(self.coeffs)):
            out[i : i + nb, j : j + nb] += self.coeffs[i, j] * other.coeffs
        return BiPoly(out, d)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        terms = {(int(i), int(j)): float(self.coeffs[i, j]) for i, j in zip(*np.nonzero(self.coeffs))}
        return f"BiPoly({terms}, max_degree={self.max_degree})"


def bipoly_eval(p: BiPoly, x: float, y: float) -> float:
    return float(p(x, y))
