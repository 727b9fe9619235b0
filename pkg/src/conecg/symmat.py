"""Symmetric matrix utilities: cone tests, decompositions, text io.

All predicates take a square array-like, symmetrize it by averaging
with its transpose, and test the documented property:

``is_psd``
    smallest eigenvalue >= -tol * max(1, ||A||_F).
``is_dd``
    diagonal dominance, A_ii >= sum_{j != i} |A_ij| exactly (no
    tolerance; callers wanting slack can add eps*I themselves).
``is_sdd``
    existence of 2x2 psd blocks M^{ij} with A = sum_{i<j} M^{ij}
    (embedded), tested by an SOCP feasibility problem with slack.

``dd_decompose`` writes a diagonally dominant matrix as an explicit
nonnegative combination of rank-one outer products u u' where every u
has at most two nonzero entries, all equal to +-1.
"""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import conic

__all__ = [
    "as_symmetric",
    "frob",
    "tri_pairs",
    "tri_index",
    "EigenDecomposition",
    "eigh",
    "is_psd",
    "is_dd",
    "is_sdd",
    "dd_decompose",
    "load_matrix",
    "dump_matrix",
]


def as_symmetric(a) -> np.ndarray:
    """Return ``(a + a') / 2`` as a float array, validating shape and finiteness."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return (a + a.T) / 2.0


def frob(a) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64)))


@lru_cache(maxsize=64)
def tri_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays (i, j) of the upper triangle (i <= j), row-major."""
    i, j = np.triu_indices(n)
    i.setflags(write=False)
    j.setflags(write=False)
    return i, j


def tri_index(n: int, i: int, j: int) -> int:
    """Position of entry (i, j), i <= j, in the row-major upper triangle."""
    if not 0 <= i <= j < n:
        raise ValueError(f"need 0 <= i <= j < n, got ({i}, {j}) with n={n}")
    return i * (2 * n - i + 1) // 2 + (j - i)


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray   # ascending
    eigenvectors: np.ndarray  # columns, orthonormal


def eigh(a) -> EigenDecomposition:
    """Eigendecomposition of the symmetrized input, eigenvalues ascending."""
    w, v = np.linalg.eigh(as_symmetric(a))
    return EigenDecomposition(w, v)


def is_psd(a, tol: float = 1e-8) -> bool:
    """Whether the smallest eigenvalue clears ``-tol * max(1, ||A||_F)``."""
    a = as_symmetric(a)
    w = np.linalg.eigvalsh(a)
    return bool(w[0] >= -tol * max(1.0, float(np.linalg.norm(a))))


def is_dd(a) -> bool:
    """Exact diagonal dominance with nonnegative diagonal."""
    a = as_symmetric(a)
    off = np.abs(a).sum(axis=1) - np.abs(np.diag(a))
    return bool(np.all(np.diag(a) >= off))


def is_sdd(a, feas_tol: float = 1e-8) -> bool:
    """Whether ``a`` is scaled diagonally dominant (a sum of 2x2 psd blocks).

    Solves min t such that ``a + t*I`` decomposes into 2x2 psd blocks;
    the minimum is negative or zero exactly when ``a`` itself
    decomposes, so we accept ``t <= feas_tol * max(1, ||a||_F)``.
    Minimizing a slack rather than solving pure feasibility keeps the
    answer stable when ``a`` sits on the cone boundary.
    """
    a = as_symmetric(a)
    n = a.shape[0]
    if n == 1:
        return bool(a[0, 0] >= -feas_tol)
    m = conic.ConicModel("min")
    t = m.add_var(obj=1.0)
    rows = {}
    iu, ju = tri_pairs(n)
    for i, j in zip(iu, ju):
        rows[(int(i), int(j))] = m.add_eq([], [], a[i, j])
    m.eq_entries([rows[(i, i)] for i in range(n)], [t] * n, [-1.0] * n)
    for i in range(n - 1):
        for j in range(i + 1, n):
            g = [m.add_var(), m.add_var(), m.add_var()]
            m.eq_entries([rows[(i, i)], rows[(i, j)], rows[(j, j)]], g, [1.0, 1.0, 1.0])
            m.add_psd2(*g)
    sol = conic.solve(m)
    if sol.status != conic.OPTIMAL:
        raise conic.ConicError(f"sdd test solve failed: {sol.raw_status}")
    return bool(sol.obj <= feas_tol * max(1.0, frob(a)))


def dd_decompose(a) -> list[tuple[float, np.ndarray]]:
    """Write a dd matrix as ``sum w_k u_k u_k'`` with structured ``u_k``.

    Every returned vector has at most two nonzero entries, all equal to
    +-1, and every weight is positive.  Off-diagonal mass a_ij goes to
    ``e_i + sign(a_ij) e_j`` with weight |a_ij|; what the diagonal has
    left beyond the off-diagonal row sums goes to single-spike vectors.
    Raises ValueError when the input is not diagonally dominant.
    """
    a = as_symmetric(a)
    if not is_dd(a):
        raise ValueError("matrix is not diagonally dominant")
    n = a.shape[0]
    out: list[tuple[float, np.ndarray]] = []
    resid = np.diag(a).astype(np.float64).copy()
    for i in range(n - 1):
        for j in range(i + 1, n):
            w = abs(a[i, j])
            if w == 0.0:
                continue
            u = np.zeros(n)
            u[i] = 1.0
            u[j] = 1.0 if a[i, j] > 0 else -1.0
            out.append((float(w), u))
            resid[i] -= w
            resid[j] -= w
    for i in range(n):
        if resid[i] > 0.0:
            u = np.zeros(n)
            u[i] = 1.0
            out.append((float(resid[i]), u))
    return out


def load_matrix(f) -> np.ndarray:
    """Read a symmetric matrix from text: first token n, then n*n entries.

    Whitespace (including newlines) separates tokens; ``#`` starts a
    comment running to end of line.  The entries are symmetrized by
    averaging.  Accepts a path or an open text file.
    """
    if isinstance(f, (str, Path)):
        with open(f, "r", encoding="utf-8") as fh:
            return load_matrix(fh)
    tokens = []
    for line in f:
        tokens.extend(line.split("#", 1)[0].split())
    if not tokens:
        raise ValueError("empty matrix file")
    try:
        n = int(tokens[0])
    except ValueError:
        raise ValueError(f"matrix file must start with the dimension, got {tokens[0]!r}")
    if n <= 0:
        raise ValueError(f"matrix dimension must be positive, got {n}")
    if len(tokens) != 1 + n * n:
        raise ValueError(f"expected {n * n} entries for n={n}, got {len(tokens) - 1}")
    vals = np.array([float(t) for t in tokens[1:]]).reshape(n, n)
    return as_symmetric(vals)


def dump_matrix(a, f):
    """Write a matrix in the format read by :func:`load_matrix`."""
    a = as_symmetric(a)
    if isinstance(f, (str, Path)):
        with open(f, "w", encoding="utf-8") as fh:
            dump_matrix(a, fh)
            return
    f.write(f"{a.shape[0]}\n")
    for row in a:
        f.write(" ".join(format(v, ".17g") for v in row) + "\n")
