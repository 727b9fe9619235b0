"""Atoms: sparse rank-one vectors and vector pairs generating inner cones.

A rank-one atom is a vector u stored by support (``idx``) and values
(``val``); it contributes the psd matrix ``u u'`` scaled by a
nonnegative master weight.  A pair atom is an ordered pair of vectors
(v1, v2); it contributes ``V G V'`` where G is a free 2x2 psd matrix of
master variables.  An atom is *structured* when its nonzero entries are
all +-1 (for pairs: when it is a coordinate pair (e_i, e_j)), which is
what the classical inner approximations use:

* ``gen_U2(n)``: all u with at most 2 nonzeros in {-1, +1}, n**2 atoms.
  Nonnegative combinations of their outer products are exactly the
  diagonally dominant matrices.
* ``gen_V2(n)``: all coordinate pairs (e_i, e_j), i < j.  Their span
  with 2x2 psd weights is the scaled diagonally dominant matrices.

``U3Cursor`` and ``scan_triples`` enumerate the larger family with up
to 3 nonzeros in {-1, +1} in a fixed cyclic order, returning the atoms
most negative against a given matrix; column generation uses this as a
cheap combinatorial pricing rule.
"""

from __future__ import annotations

from itertools import combinations, islice
from math import comb
from pathlib import Path

import numpy as np

from . import conic
from .symmat import as_symmetric, tri_index

__all__ = [
    "RankOneAtom",
    "PairAtom",
    "AtomSet",
    "gen_U2",
    "gen_V2",
    "U3Cursor",
    "scan_triples",
    "cone_membership",
    "load_atoms",
    "dump_atoms",
]

_SIGNS = {
    1: np.array([[1.0]]),
    2: np.array([[1.0, 1.0], [1.0, -1.0]]),
    3: np.array([[1.0, 1.0, 1.0], [1.0, 1.0, -1.0],
                 [1.0, -1.0, 1.0], [1.0, -1.0, -1.0]]),
}
_SCAN_CHUNK = 8192


class RankOneAtom:
    """A vector stored by support; generates the ray ``w * u u'``, w >= 0.

    The sign is canonical (first nonzero positive) so that u and -u
    compare equal.  ``structured`` atoms have all entries in {-1, +1}
    and are kept unnormalized; dense atoms are scaled to unit norm.
    """

    __slots__ = ("n", "idx", "val", "structured")

    def __init__(self, n: int, idx, val):
        idx = np.asarray(idx, dtype=np.int64)
        val = np.asarray(val, dtype=np.float64)
        if idx.ndim != 1 or idx.shape != val.shape or idx.size == 0:
            raise ValueError("idx and val must be matching nonempty 1d arrays")
        if np.any(np.diff(idx) <= 0):
            order = np.argsort(idx)
            idx, val = idx[order], val[order]
            if np.any(np.diff(idx) == 0):
                raise ValueError("duplicate support index")
        if idx[0] < 0 or idx[-1] >= n or np.any(val == 0.0) or not np.all(np.isfinite(val)):
            raise ValueError("bad support or values")
        if val[0] < 0:
            val = -val
        self.n = int(n)
        self.structured = bool(np.all(np.abs(val) == 1.0))
        if not self.structured:
            val = val / np.linalg.norm(val)
        self.idx = idx
        self.val = val

    @classmethod
    def from_dense(cls, u, tol: float = 1e-12) -> "RankOneAtom":
        u = np.asarray(u, dtype=np.float64)
        nz = np.nonzero(np.abs(u) > tol * max(1.0, np.abs(u).max()))[0]
        return cls(u.size, nz, u[nz])

    def dense(self) -> np.ndarray:
        u = np.zeros(self.n)
        u[self.idx] = self.val
        return u

    def value(self, b: np.ndarray) -> float:
        """Quadratic form u' b u on the support."""
        sub = b[np.ix_(self.idx, self.idx)]
        return float(self.val @ sub @ self.val)

    def outer_entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Upper-triangle COO (i, j, value) of the outer product ``u u'``."""
        k = self.idx.size
        a, b = np.triu_indices(k)
        return self.idx[a], self.idx[b], self.val[a] * self.val[b]

    def key(self):
        if not self.structured:
            return None
        return ("u", tuple(self.idx.tolist()), tuple(int(v) for v in self.val))

    def __repr__(self):
        terms = " ".join(f"{i}:{v:g}" for i, v in zip(self.idx, self.val))
        return f"RankOneAtom({terms})"


class PairAtom:
    """An ordered pair of vectors sharing a support; generates ``V G V'``.

    G ranges over 2x2 psd matrices, so a pair atom is worth a whole
    2-dimensional block rather than a single ray.  Structured pairs are
    the coordinate pairs (e_i, e_j).
    """

    __slots__ = ("n", "idx", "vecs", "structured")

    def __init__(self, n: int, idx, vecs):
        idx = np.asarray(idx, dtype=np.int64)
        vecs = np.asarray(vecs, dtype=np.float64)
        if vecs.shape != (idx.size, 2) or idx.size == 0:
            raise ValueError("vecs must have shape (len(idx), 2)")
        if np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= n:
            raise ValueError("support must be strictly increasing and in range")
        if not np.all(np.isfinite(vecs)):
            raise ValueError("non-finite pair entries")
        self.n = int(n)
        self.idx = idx
        self.structured = bool(idx.size == 2 and np.array_equal(vecs, np.eye(2)))
        self.vecs = vecs

    @classmethod
    def from_dense(cls, v1, v2, tol: float = 1e-12) -> "PairAtom":
        v1 = np.asarray(v1, dtype=np.float64)
        v2 = np.asarray(v2, dtype=np.float64)
        scale = max(1.0, np.abs(v1).max(), np.abs(v2).max())
        nz = np.nonzero((np.abs(v1) > tol * scale) | (np.abs(v2) > tol * scale))[0]
        return cls(v1.size, nz, np.column_stack([v1[nz], v2[nz]]))

    def dense(self) -> np.ndarray:
        v = np.zeros((self.n, 2))
        v[self.idx] = self.vecs
        return v

    def outer_entries(self, which: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Upper-triangle COO of the basis block for G entry ``which``.

        which = 0, 1, 2 selects the coefficient matrix of g11, g12, g22
        in ``V G V' = g11 v1 v1' + g12 (v1 v2' + v2 v1') + g22 v2 v2'``.
        """
        k = self.idx.size
        a, b = np.triu_indices(k)
        v1, v2 = self.vecs[:, 0], self.vecs[:, 1]
        if which == 0:
            vals = v1[a] * v1[b]
        elif which == 1:
            vals = v1[a] * v2[b] + v2[a] * v1[b]
        elif which == 2:
            vals = v2[a] * v2[b]
        else:
            raise ValueError("which must be 0, 1 or 2")
        return self.idx[a], self.idx[b], vals

    def key(self):
        if not self.structured:
            return None
        return ("p", int(self.idx[0]), int(self.idx[1]))

    def __repr__(self):
        terms = " ".join(f"{i}:{v1:g}:{v2:g}" for i, (v1, v2) in zip(self.idx, self.vecs))
        return f"PairAtom({terms})"


class AtomSet:
    """Ordered, duplicate-free collection of atoms over a common dimension.

    Structured atoms deduplicate exactly by support and signs.  Dense
    rank-one atoms deduplicate by angle (|cos| >= 1 - 1e-9 counts as
    the same ray); dense pairs by subspace (both principal cosines
    against a stored pair >= 1 - 1e-8).
    """

    def __init__(self, n: int):
        self.n = int(n)
        self.atoms: list[RankOneAtom | PairAtom] = []
        self._keys: set = set()
        self._dense_u: list[np.ndarray] = []
        self._dense_v: list[np.ndarray] = []

    def __len__(self):
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)

    def __getitem__(self, i):
        return self.atoms[i]

    @property
    def n_rank_one(self) -> int:
        return sum(1 for a in self.atoms if isinstance(a, RankOneAtom))

    @property
    def n_pairs(self) -> int:
        return sum(1 for a in self.atoms if isinstance(a, PairAtom))

    def add(self, atom) -> bool:
        """Add ``atom`` unless already present; returns True when added."""
        if atom.n != self.n:
            raise ValueError(f"atom dimension {atom.n} != set dimension {self.n}")
        key = atom.key()
        if key is not None:
            if key in self._keys:
                return False
            self._keys.add(key)
        elif isinstance(atom, RankOneAtom):
            u = atom.dense()
            for w in self._dense_u:
                if abs(w @ u) >= 1.0 - 1e-9:
                    return False
            self._dense_u.append(u)
        else:
            v = atom.dense()
            q = np.linalg.qr(v)[0]
            for w in self._dense_v:
                if np.linalg.svd(w.T @ q, compute_uv=False).min() >= 1.0 - 1e-8:
                    return False
            self._dense_v.append(q)
        self.atoms.append(atom)
        return True

    def extend(self, atoms) -> int:
        """Add many atoms; returns how many were actually new."""
        return sum(1 for a in atoms if self.add(a))


def gen_U2(n: int) -> AtomSet:
    """All vectors with at most 2 nonzeros in {-1, +1}: n**2 atoms.

    Order: the coordinate vectors e_0 .. e_{n-1}, then for each i < j
    the sum e_i + e_j followed by the difference e_i - e_j.
    """
    s = AtomSet(n)
    for i in range(n):
        s.add(RankOneAtom(n, [i], [1.0]))
    for i in range(n - 1):
        for j in range(i + 1, n):
            s.add(RankOneAtom(n, [i, j], [1.0, 1.0]))
            s.add(RankOneAtom(n, [i, j], [1.0, -1.0]))
    return s


def gen_V2(n: int) -> AtomSet:
    """All coordinate pairs (e_i, e_j), i < j, as pair atoms."""
    s = AtomSet(n)
    for i in range(n - 1):
        for j in range(i + 1, n):
            s.add(PairAtom(n, [i, j], np.eye(2)))
    return s


class U3Cursor:
    """Position in the cyclic enumeration of sign vectors with <= 3 nonzeros.

    The cycle visits supports of size 1, then 2, then 3; supports of
    equal size in lexicographic order; and for each support the sign
    patterns with leading +1 in a fixed order (size 2: ++, +-; size 3:
    +++, ++-, +-+, +--).  Total cycle length n + 2*C(n,2) + 4*C(n,3).
    The cursor is a plain integer position, so it can be saved and
    restored across runs.
    """

    def __init__(self, n: int, pos: int = 0):
        if n < 1:
            raise ValueError("n must be positive")
        self.n = int(n)
        self.block_starts = (0, n, n + 2 * comb(n, 2))
        self.length = n + 2 * comb(n, 2) + 4 * comb(n, 3)
        if not 0 <= pos < self.length:
            raise ValueError(f"pos {pos} out of range [0, {self.length})")
        self.pos = int(pos)

    def state(self) -> tuple[int, int]:
        return (self.n, self.pos)

    @classmethod
    def from_state(cls, state) -> "U3Cursor":
        n, pos = state
        return cls(n, pos)

    def _locate(self, pos: int) -> tuple[int, int, int]:
        """Map a position to (support size, support rank, sign rank)."""
        b1, b2 = self.block_starts[1], self.block_starts[2]
        if pos < b1:
            return 1, pos, 0
        if pos < b2:
            return 2, (pos - b1) // 2, (pos - b1) % 2
        return 3, (pos - b2) // 4, (pos - b2) % 4

    def __repr__(self):
        return f"U3Cursor(n={self.n}, pos={self.pos})"


def _chunk_values(b: np.ndarray, m: int, sup: np.ndarray) -> np.ndarray:
    """Values u' b u for every sign pattern of every support row, (k, 2**(m-1))."""
    d = np.diag(b)
    if m == 1:
        return d[sup]
    i, j = sup[:, 0], sup[:, 1]
    if m == 2:
        q = d[i] + d[j]
        t = 2.0 * b[i, j]
        return np.column_stack([q + t, q - t])
    k = sup[:, 2]
    q = d[i] + d[j] + d[k]
    tij, tik, tjk = 2.0 * b[i, j], 2.0 * b[i, k], 2.0 * b[j, k]
    return np.column_stack([q + tij + tik + tjk, q + tij - tik - tjk,
                            q - tij + tik - tjk, q - tij - tik + tjk])


def scan_triples(b, cursor: U3Cursor, t1: int = 300000, t2: int = 5000,
                 tol: float = 1e-9) -> tuple[list[RankOneAtom], int]:
    """Scan the cursor's cycle for atoms with ``u' b u < -tol * max(1, ||b||_F)``.

    Walks the cycle starting at the cursor until ``t1`` violating
    vectors have been collected or one full cycle has been scanned,
    advances the cursor past what was scanned, and returns the at most
    ``t2`` most negative atoms (sorted ascending by value, ties in scan
    order) together with the number of candidates evaluated.  The t1
    cap is checked once per scan chunk, so a call may collect slightly
    more before stopping.
    """
    b = as_symmetric(b)
    n = cursor.n
    if b.shape[0] != n:
        raise ValueError(f"matrix dimension {b.shape[0]} != cursor dimension {n}")
    thresh = -tol * max(1.0, float(np.linalg.norm(b)))
    scanned = 0
    found = 0
    chunks: list[tuple[np.ndarray, int, np.ndarray, np.ndarray]] = []

    while scanned < cursor.length and found < t1:
        m, srank, sign0 = cursor._locate(cursor.pos)
        spb = _SIGNS[m].shape[0]
        block_sups = comb(n, m)
        want = -(-(cursor.length - scanned) // spb)  # ceil, in supports
        take = min(_SCAN_CHUNK, block_sups - srank, want)
        it = islice(combinations(range(n), m), srank, srank + take)
        sup = np.array(list(it), dtype=np.int64).reshape(take, m)
        vals = _chunk_values(b, m, sup)
        flat = vals.ravel()
        if sign0:
            flat = flat.copy()
            flat[:sign0] = np.inf
        hit = np.nonzero(flat < thresh)[0]
        if hit.size:
            chunks.append((flat[hit], m, sup[hit // spb], hit % spb))
            found += hit.size
        scanned += take * spb - sign0
        cursor.pos = (cursor.pos + take * spb - sign0) % cursor.length

    if not chunks:
        return [], scanned
    all_vals = np.concatenate([c[0] for c in chunks])
    order = np.argsort(all_vals, kind="stable")[:t2]
    cum = np.cumsum([0] + [c[0].size for c in chunks])
    out = []
    for g in order:
        ci = int(np.searchsorted(cum, g, side="right")) - 1
        _, m, sups, signs = chunks[ci]
        local = g - cum[ci]
        out.append(RankOneAtom(n, sups[local], _SIGNS[m][signs[local]]))
    return out, scanned


def cone_membership(a, atoms, feas_tol: float = 1e-8) -> bool:
    """Whether ``a`` is a nonnegative combination of the atoms' matrices.

    Solves the exact feasibility LP/SOCP: one equality per upper
    triangle entry of ``a``, one weight per rank-one atom (one 2x2 psd
    block per pair atom).  Returns True on a feasible decomposition.
    """
    a = as_symmetric(a)
    n = a.shape[0]
    model = conic.ConicModel("min")
    iu, ju = np.triu_indices(n)
    rows = model.new_eq_rows(a[iu, ju])
    for atom in atoms:
        if atom.n != n:
            raise ValueError("atom dimension mismatch")
        if isinstance(atom, RankOneAtom):
            w = model.add_var(lb=0.0)
            i, j, v = atom.outer_entries()
            r = [tri_index(n, int(p), int(q)) for p, q in zip(i, j)]
            model.eq_entries(r, np.full(len(r), w), v)
        else:
            g = [model.add_var(), model.add_var(), model.add_var()]
            for which in range(3):
                i, j, v = atom.outer_entries(which)
                r = [tri_index(n, int(p), int(q)) for p, q in zip(i, j)]
                model.eq_entries(r, np.full(len(r), g[which]), v)
            model.add_psd2(*g)
    del rows
    sol = conic.solve(model, feas_tol=feas_tol)
    if sol.status == conic.OPTIMAL:
        return True
    if sol.status == conic.INFEASIBLE:
        return False
    raise conic.ConicError(f"membership solve failed: {sol.raw_status}")


def dump_atoms(atoms: AtomSet, f):
    """Write an atom set as text: header ``atoms n``, one atom per line.

    Rank-one lines are ``u idx:val ...``; pair lines are
    ``p idx:val1:val2 ...``.
    """
    if isinstance(f, (str, Path)):
        with open(f, "w", encoding="utf-8") as fh:
            dump_atoms(atoms, fh)
            return
    f.write(f"atoms {atoms.n}\n")
    for a in atoms:
        if isinstance(a, RankOneAtom):
            f.write("u " + " ".join(f"{i}:{v:.17g}" for i, v in zip(a.idx, a.val)) + "\n")
        else:
            f.write("p " + " ".join(f"{i}:{v1:.17g}:{v2:.17g}"
                                    for i, (v1, v2) in zip(a.idx, a.vecs)) + "\n")


def load_atoms(f) -> AtomSet:
    """Read an atom set written by :func:`dump_atoms`."""
    if isinstance(f, (str, Path)):
        with open(f, "r", encoding="utf-8") as fh:
            return load_atoms(fh)
    header = f.readline().split()
    if len(header) != 2 or header[0] != "atoms":
        raise ValueError("atom file must start with 'atoms n'")
    out = AtomSet(int(header[1]))
    for lineno, line in enumerate(f, start=2):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        kind, terms = parts[0], parts[1:]
        try:
            if kind == "u":
                pairs = [t.split(":") for t in terms]
                out.add(RankOneAtom(out.n, [int(p[0]) for p in pairs],
                                    [float(p[1]) for p in pairs]))
            elif kind == "p":
                trips = [t.split(":") for t in terms]
                out.add(PairAtom(out.n, [int(t[0]) for t in trips],
                                 [[float(t[1]), float(t[2])] for t in trips]))
            else:
                raise ValueError(f"unknown atom kind {kind!r}")
        except (IndexError, ValueError) as e:
            raise ValueError(f"bad atom on line {lineno}: {e}") from None
    return out
