"""Homogeneous polynomial arithmetic on fixed monomial bases.

A :class:`MonomialBasis` is the ordered list of all degree-d monomials
in n variables; the order (descending lexicographic on exponent
tuples, equivalently the order ``combinations_with_replacement``
produces variable multisets in) is fixed repo-wide and is the single
source of truth for every coefficient vector in the package.  A
:class:`Poly` is a coefficient vector over one such basis, so all
polynomials here are homogeneous (forms); sums of different degrees
are rejected.

The text format read by :func:`load_poly` is a header line ``n d``
followed by one line per monomial, ``e1 e2 ... en c``; unlisted
monomials are zero and ``#`` starts a comment.
"""

from __future__ import annotations

from itertools import combinations_with_replacement
from math import comb, factorial
from pathlib import Path

import numpy as np

__all__ = [
    "MonomialBasis",
    "monomials",
    "Poly",
    "sphere_multiplier",
    "load_poly",
    "dump_poly",
]

_BASES: dict[tuple[int, int], "MonomialBasis"] = {}


class MonomialBasis:
    """All exponent tuples of total degree d in n variables, ordered.

    ``exps`` has shape (size, n) with ``size = C(n+d-1, d)``; row i is
    the exponent vector of the i-th monomial.  Instances are interned:
    use :func:`monomials` rather than the constructor so equal bases
    are the same object.
    """

    __slots__ = ("n", "d", "exps", "_index")

    def __init__(self, n: int, d: int):
        if n < 1 or d < 0:
            raise ValueError(f"need n >= 1 and d >= 0, got n={n}, d={d}")
        self.n = n
        self.d = d
        rows = np.zeros((comb(n + d - 1, d), n), dtype=np.int64)
        for i, pick in enumerate(combinations_with_replacement(range(n), d)):
            for v in pick:
                rows[i, v] += 1
        rows.setflags(write=False)
        self.exps = rows
        self._index = {tuple(row): i for i, row in enumerate(rows.tolist())}

    def __len__(self):
        return self.exps.shape[0]

    def index_of(self, exp) -> int:
        """Position of an exponent tuple; raises ValueError if absent."""
        key = tuple(int(e) for e in exp)
        try:
            return self._index[key]
        except KeyError:
            raise ValueError(f"{key} is not a degree-{self.d} monomial "
                             f"in {self.n} variables") from None

    def __repr__(self):
        return f"MonomialBasis(n={self.n}, d={self.d}, size={len(self)})"


def monomials(n: int, d: int) -> MonomialBasis:
    """The interned degree-d monomial basis in n variables."""
    key = (int(n), int(d))
    if key not in _BASES:
        _BASES[key] = MonomialBasis(*key)
    return _BASES[key]


class Poly:
    """A form: coefficient vector over a :class:`MonomialBasis`.

    Supports +, -, scalar and polynomial multiplication, pointwise
    evaluation and gradients.  Addition requires matching degree.
    """

    __slots__ = ("basis", "coef")

    def __init__(self, basis: MonomialBasis, coef):
        coef = np.asarray(coef, dtype=np.float64)
        if coef.shape != (len(basis),):
            raise ValueError(f"coefficient length {coef.shape} does not match "
                             f"basis size {len(basis)}")
        if not np.all(np.isfinite(coef)):
            raise ValueError("non-finite coefficient")
        self.basis = basis
        self.coef = coef

    @classmethod
    def zero(cls, n: int, d: int) -> "Poly":
        return cls(monomials(n, d), np.zeros(comb(n + d - 1, d)))

    @classmethod
    def from_terms(cls, n: int, d: int, terms) -> "Poly":
        """Build from a mapping (or iterable of pairs) exponent tuple -> coefficient."""
        basis = monomials(n, d)
        coef = np.zeros(len(basis))
        items = terms.items() if hasattr(terms, "items") else terms
        for exp, c in items:
            coef[basis.index_of(exp)] += c
        return cls(basis, coef)

    @property
    def n(self) -> int:
        return self.basis.n

    @property
    def degree(self) -> int:
        return self.basis.d

    def terms(self):
        """Iterate (exponent tuple, coefficient) over nonzero terms."""
        for i in np.nonzero(self.coef)[0]:
            yield tuple(self.basis.exps[i].tolist()), float(self.coef[i])

    # -- arithmetic ----------------------------------------------------------

    def _like(self, other) -> "Poly":
        if not isinstance(other, Poly) or other.basis is not self.basis:
            raise ValueError("operands must share one monomial basis")
        return other

    def __add__(self, other):
        return Poly(self.basis, self.coef + self._like(other).coef)

    def __sub__(self, other):
        return Poly(self.basis, self.coef - self._like(other).coef)

    def __neg__(self):
        return Poly(self.basis, -self.coef)

    def __mul__(self, other):
        if np.isscalar(other):
            return Poly(self.basis, self.coef * float(other))
        if not isinstance(other, Poly) or other.n != self.n:
            raise ValueError("can only multiply by a scalar or a form in the same variables")
        out_basis = monomials(self.n, self.degree + other.degree)
        ia = np.nonzero(self.coef)[0]
        ib = np.nonzero(other.coef)[0]
        coef = np.zeros(len(out_basis))
        if ia.size and ib.size:
            sums = (self.basis.exps[ia][:, None, :]
                    + other.basis.exps[ib][None, :, :]).reshape(-1, self.n)
            prods = np.outer(self.coef[ia], other.coef[ib]).ravel()
            idx = np.fromiter((out_basis._index[tuple(row)] for row in sums.tolist()),
                              dtype=np.int64, count=sums.shape[0])
            np.add.at(coef, idx, prods)
        return Poly(out_basis, coef)

    __rmul__ = __mul__

    # -- evaluation ----------------------------------------------------------

    def eval(self, points) -> np.ndarray | float:
        """Evaluate at one point (n,) or a stack of points (m, n)."""
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        if single:
            pts = pts[None, :]
        if pts.shape[1] != self.n:
            raise ValueError(f"points must have {self.n} columns")
        out = np.empty(pts.shape[0])
        exps = self.basis.exps
        for lo in range(0, pts.shape[0], 128):
            chunk = pts[lo:lo + 128]
            mono = np.prod(chunk[:, None, :] ** exps[None, :, :], axis=2)
            out[lo:lo + 128] = mono @ self.coef
        return float(out[0]) if single else out

    def grad(self, x) -> np.ndarray:
        """Gradient at one point."""
        x = np.asarray(x, dtype=np.float64)
        exps = self.basis.exps
        g = np.zeros(self.n)
        for k in range(self.n):
            ek = exps[:, k]
            live = np.nonzero((self.coef != 0) & (ek > 0))[0]
            if live.size == 0:
                continue
            dexps = exps[live].copy()
            dexps[:, k] -= 1
            mono = np.prod(x[None, :] ** dexps, axis=1)
            g[k] = np.sum(self.coef[live] * ek[live] * mono)
        return g

    def __repr__(self):
        parts = [f"{c:g}*x^{exp}" for exp, c in list(self.terms())[:6]]
        more = "" if np.count_nonzero(self.coef) <= 6 else " + ..."
        body = " + ".join(parts) if parts else "0"
        return f"Poly({body}{more})"


def sphere_multiplier(n: int, d: int) -> Poly:
    """The form ``(x_1**2 + ... + x_n**2)**d`` via multinomial expansion."""
    if n < 1 or d < 0:
        raise ValueError(f"need n >= 1 and d >= 0, got n={n}, d={d}")
    terms = {}
    for pick in combinations_with_replacement(range(n), d):
        counts = np.bincount(np.asarray(pick, dtype=np.int64), minlength=n)
        c = factorial(d)
        for cnt in counts:
            c //= factorial(int(cnt))
        terms[tuple(int(2 * e) for e in counts)] = float(c)
    return Poly.from_terms(n, 2 * d, terms)


def load_poly(f) -> Poly:
    """Read the ``n d`` / ``e1 .. en c`` text format; see module docstring."""
    if isinstance(f, (str, Path)):
        with open(f, "r", encoding="utf-8") as fh:
            return load_poly(fh)
    lines = enumerate(f, start=1)
    header = None
    for lineno, line in lines:
        parts = line.split("#", 1)[0].split()
        if parts:
            header = parts
            break
    if header is None or len(header) != 2:
        raise ValueError("polynomial file must start with a header line 'n degree'")
    try:
        n, d = int(header[0]), int(header[1])
    except ValueError:
        raise ValueError(f"bad header {' '.join(header)!r}") from None
    terms: dict[tuple, float] = {}
    for lineno, line in lines:
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        if len(parts) != n + 1:
            raise ValueError(f"line {lineno}: expected {n} exponents and a "
                             f"coefficient, got {len(parts)} fields")
        try:
            exp = tuple(int(t) for t in parts[:n])
            c = float(parts[n])
        except ValueError:
            raise ValueError(f"line {lineno}: malformed term") from None
        if any(e < 0 for e in exp) or sum(exp) != d:
            raise ValueError(f"line {lineno}: exponents {exp} do not sum to {d}")
        terms[exp] = terms.get(exp, 0.0) + c
    return Poly.from_terms(n, d, terms)


def dump_poly(p: Poly, f):
    """Write a polynomial in the format read by :func:`load_poly`."""
    if isinstance(f, (str, Path)):
        with open(f, "w", encoding="utf-8") as fh:
            dump_poly(p, fh)
            return
    f.write(f"{p.n} {p.degree}\n")
    for exp, c in p.terms():
        f.write(" ".join(str(e) for e in exp) + f" {c:.17g}\n")
