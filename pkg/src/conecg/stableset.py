"""Upper bounds on the stability number of a graph.

The bound family minimizes lambda subject to ``lambda*(I + A) - J``
dominating, entrywise, a matrix from an inner approximation of the psd
cone (dd for the LP level, sdd for the SOCP level, then the cones
grown by column generation).  Every feasible lambda upper-bounds the
stability number alpha(G).  Initialization is always feasible:
``lambda0 = n - min_degree + 1`` works with an explicit split
``lambda0*(I + A) - J = D + N`` where D is diagonally dominant and N
is entrywise nonnegative, see :func:`init_lambda`.

The master is modeled with explicit slack S >= 0 (one variable per
upper-triangle entry), so the equality duals assemble into a matrix
Xbar with ``(A + I) . Xbar = 1`` and ``Xbar >= 0`` entrywise; pricing
then looks for vectors with ``u' Xbar u < 0`` exactly as in the
generic engine.

Graphs use 1-based vertex names, as in the DIMACS text format this
module reads and writes.
"""

from __future__ import annotations

import time
from itertools import combinations
from pathlib import Path

import numpy as np

from . import conic
from .atoms import AtomSet, PairAtom, RankOneAtom, U3Cursor, gen_U2, gen_V2, scan_triples
from .cgengine import (CgConfig, CgRecord, CgTrace, MasterSolution,
                       assemble_dual_matrix, price_eig)
from .polynomials import Poly
from .polyopt import r_dsos_bound, r_sdsos_bound
from .symmat import frob, tri_pairs

__all__ = [
    "Graph",
    "petersen",
    "complete_graph",
    "empty_graph",
    "cycle_graph",
    "path_graph",
    "er_graph",
    "load_graph",
    "dump_graph",
    "stability_number",
    "lp2_bound",
    "init_lambda",
    "dsos1_bound",
    "sdsos1_bound",
    "cg_stableset",
    "stable_set_form",
    "hierarchy_bound",
    "summary_line",
]

_INIT_MSG = (
    "stable-set master reported infeasible, which is impossible (lambda = "
    "n - min_degree + 1 is always feasible with a diagonally dominant "
    "certificate); this indicates a solver or modeling failure")


class Graph:
    """Simple undirected graph on vertices 1..n."""

    __slots__ = ("n", "edges")

    def __init__(self, n: int, edges=()):
        if n < 1:
            raise ValueError("graph needs at least one vertex")
        seen = set()
        for e in edges:
            i, j = int(e[0]), int(e[1])
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            if not (1 <= i <= n and 1 <= j <= n):
                raise ValueError(f"edge ({i}, {j}) out of range 1..{n}")
            seen.add((min(i, j), max(i, j)))
        self.n = int(n)
        self.edges = tuple(sorted(seen))

    @property
    def m(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for i, j in self.edges:
            a[i - 1, j - 1] = a[j - 1, i - 1] = 1.0
        return a

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=np.int64)
        for i, j in self.edges:
            d[i - 1] += 1
            d[j - 1] += 1
        return d

    def complement(self) -> "Graph":
        present = set(self.edges)
        return Graph(self.n, [e for e in combinations(range(1, self.n + 1), 2)
                              if e not in present])

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


def petersen() -> Graph:
    """The Petersen graph: 2-subsets of a 5-set, adjacent when disjoint."""
    subsets = list(combinations(range(5), 2))
    edges = [(a + 1, b + 1) for a in range(10) for b in range(a + 1, 10)
             if not set(subsets[a]) & set(subsets[b])]
    return Graph(10, edges)


def complete_graph(n: int) -> Graph:
    return Graph(n, combinations(range(1, n + 1), 2))


def empty_graph(n: int) -> Graph:
    return Graph(n)


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise ValueError("a cycle needs at least 3 vertices")
    return Graph(n, [(i, i % n + 1) for i in range(1, n + 1)])


def path_graph(n: int) -> Graph:
    return Graph(n, [(i, i + 1) for i in range(1, n)])


def er_graph(n: int, p: float, seed: int = 0) -> Graph:
    """Erdos-Renyi G(n, p): each pair included independently."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    rng = np.random.default_rng(seed)
    pairs = list(combinations(range(1, n + 1), 2))
    draws = rng.random(len(pairs))
    return Graph(n, [e for e, u in zip(pairs, draws) if u < p])


def load_graph(f) -> Graph:
    """Read DIMACS-like text: 'p edge n m' then 'e i j' lines, 1-based."""
    if isinstance(f, (str, Path)):
        with open(f, "r", encoding="utf-8") as fh:
            return load_graph(fh)
    n = m = None
    edges = []
    for lineno, line in enumerate(f, start=1):
        parts = line.split()
        if not parts or parts[0] == "c":
            continue
        if parts[0] == "p":
            if n is not None:
                raise ValueError(f"line {lineno}: duplicate problem line")
            if len(parts) != 4 or parts[1] != "edge":
                raise ValueError(f"line {lineno}: expected 'p edge n m'")
            n, m = int(parts[2]), int(parts[3])
        elif parts[0] == "e":
            if n is None:
                raise ValueError(f"line {lineno}: edge before the problem line")
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected 'e i j'")
            edges.append((int(parts[1]), int(parts[2])))
        else:
            raise ValueError(f"line {lineno}: unknown record {parts[0]!r}")
    if n is None:
        raise ValueError("missing 'p edge n m' line")
    g = Graph(n, edges)
    if g.m != m:
        raise ValueError(f"header says {m} edges but file has {g.m} distinct ones")
    return g


def dump_graph(g: Graph, f):
    """Write the DIMACS-like format read by :func:`load_graph`."""
    if isinstance(f, (str, Path)):
        with open(f, "w", encoding="utf-8") as fh:
            dump_graph(g, fh)
            return
    f.write(f"p edge {g.n} {g.m}\n")
    for i, j in g.edges:
        f.write(f"e {i} {j}\n")


def stability_number(g: Graph) -> int:
    """Exact alpha(G) by branching on a maximum-degree vertex; n <= 32."""
    if g.n > 32:
        raise ValueError("exhaustive stability number is limited to 32 vertices")
    adj = [0] * (g.n + 1)
    for i, j in g.edges:
        adj[i] |= 1 << j
        adj[j] |= 1 << i
    full = ((1 << (g.n + 1)) - 1) & ~1  # bits 1..n

    def rec(avail: int) -> int:
        if avail == 0:
            return 0
        pick, deg = -1, -1
        m = avail
        while m:
            v = (m & -m).bit_length() - 1
            d = bin(adj[v] & avail).count("1")
            if d > deg:
                pick, deg = v, d
            m &= m - 1
        if deg == 0:
            return bin(avail).count("1")  # the rest is independent: take it all
        with_v = 1 + rec(avail & ~adj[pick] & ~(1 << pick))
        without_v = rec(avail & ~(1 << pick))
        return max(with_v, without_v)

    return rec(full)


def lp2_bound(g: Graph) -> float:
    """The edge LP: max sum x, 0 <= x <= 1, x_i + x_j <= 1 on edges."""
    model = conic.ConicModel("max")
    x = model.add_vars(g.n, obj=1.0, lb=0.0)
    for v in range(g.n):
        model.add_ineq([x[v]], [-1.0], -1.0)
    for i, j in g.edges:
        model.add_ineq([x[i - 1], x[j - 1]], [-1.0, -1.0], -1.0)
    sol = conic.solve(model)
    if sol.status != conic.OPTIMAL:
        raise conic.ConicError(f"edge LP failed: {sol.raw_status}")
    return float(sol.obj)


def init_lambda(g: Graph) -> tuple[float, np.ndarray, np.ndarray]:
    """The always-feasible starting level and its certificate.

    Returns (lambda0, D, N) with lambda0 = n - min_degree + 1,
    D diagonally dominant, N entrywise nonnegative, and
    ``lambda0 * (I + A) - J = D + N`` exactly: D carries lambda0 - 1 on
    the diagonal and -1 on non-edges, N carries lambda0 - 1 on edges.
    """
    a = g.adjacency()
    lam0 = float(g.n - int(g.degrees().min()) + 1)
    offdiag = 1.0 - np.eye(g.n)
    d = (lam0 - 1.0) * np.eye(g.n) - (offdiag - a)
    nmat = (lam0 - 1.0) * a
    return lam0, d, nmat


def _stable_master(g: Graph, atoms: AtomSet, *, feas_tol: float = 1e-8,
                   backend: str | None = None) -> MasterSolution:
    """min lambda s.t. lambda*(I+A) - (atom cone combination) - S = J, S >= 0."""
    n = g.n
    ia = np.eye(n) + g.adjacency()
    model = conic.ConicModel("min")
    model.prefer_ipm = True
    iu, ju = tri_pairs(n)
    rows = model.new_eq_rows(np.ones(iu.size))
    lam = model.add_var(obj=1.0)
    nz = np.nonzero(ia[iu, ju])[0]
    model.eq_entries(nz, np.full(nz.size, lam), ia[iu, ju][nz])
    s_vars = model.add_vars(iu.size, lb=0.0)
    model.eq_entries(np.arange(iu.size), s_vars, -np.ones(iu.size))
    slots = []
    for atom in atoms:
        if isinstance(atom, RankOneAtom):
            w = model.add_var(lb=0.0)
            i, j, v = atom.outer_entries()
            r = i * (2 * n - i + 1) // 2 + (j - i)
            model.eq_entries(r, np.full(r.size, w), -v)
            slots.append(w)
        else:
            gv = [model.add_var(), model.add_var(), model.add_var()]
            for which in range(3):
                i, j, v = atom.outer_entries(which)
                r = i * (2 * n - i + 1) // 2 + (j - i)
                model.eq_entries(r, np.full(r.size, gv[which]), -v)
            model.add_psd2(*gv)
            slots.append(gv)
    del rows
    sol = conic.solve(model, feas_tol=feas_tol, backend=backend)
    if sol.status != conic.OPTIMAL:
        return MasterSolution(status=sol.status, raw_status=sol.raw_status)
    weights = [float(sol.x[s]) if isinstance(s, int) else sol.x[s].copy() for s in slots]
    return MasterSolution(status=conic.OPTIMAL, bound=float(sol.obj),
                          y=np.array([sol.x[lam]]), weights=weights,
                          mu=sol.dual_eq.copy(), raw_status=sol.raw_status)


def _bound_or_raise(g: Graph, atoms: AtomSet, **kw) -> tuple[float, list]:
    ms = _stable_master(g, atoms, **kw)
    if ms.status != conic.OPTIMAL:
        raise conic.ConicError(_INIT_MSG if ms.status == conic.INFEASIBLE
                               else f"stable-set master failed: {ms.raw_status}")
    return ms.bound, ms.weights


def dsos1_bound(g: Graph, **kw) -> tuple[float, list]:
    """The LP level: dd inner approximation over gen_U2(n) atoms.

    Returns (lambda, weights); lambda >= alpha(G).
    """
    return _bound_or_raise(g, gen_U2(g.n), **kw)


def sdsos1_bound(g: Graph, **kw) -> tuple[float, list]:
    """The SOCP level over gen_V2(n) pairs; between alpha(G) and the LP level."""
    return _bound_or_raise(g, gen_V2(g.n), **kw)


def cg_stableset(g: Graph, mode: str | None = None, pricing: str | None = None,
                 config: CgConfig | None = None) -> CgTrace:
    """Column generation on the stable-set master; nonincreasing bounds.

    Pricing runs on the dual matrix Xbar (which satisfies
    ``(A + I) . Xbar = 1`` and ``Xbar >= 0`` entrywise at every master
    optimum): eigenvector cuts or triples scanning, as in the generic
    engine.  Default triples budget here is t2 = 500 atoms per round.
    """
    if config is None:
        config = CgConfig(t2=500)
    if mode is not None:
        config.mode = mode
    if pricing is not None:
        config.pricing = pricing
    config = config.validated()
    atoms = gen_U2(g.n) if config.mode == "lp" else gen_V2(g.n)
    cursor = U3Cursor(g.n)
    trace = CgTrace(meta={"mode": config.mode, "pricing": config.pricing})
    t0 = time.perf_counter()
    added = 0

    for it in range(config.max_iters + 1):
        ms = _stable_master(g, atoms, feas_tol=config.feas_tol, backend=config.backend)
        elapsed = int(1000 * (time.perf_counter() - t0))
        if ms.status != conic.OPTIMAL:
            if ms.status == conic.INFEASIBLE:
                raise conic.ConicError(_INIT_MSG)
            trace.records.append(CgRecord(it, np.nan, added, ms.status, elapsed))
            trace.reason = f"solver_{ms.status}"
            return trace
        trace.records.append(CgRecord(it, ms.bound, added, ms.status, elapsed, y=ms.y))

        xbar = assemble_dual_matrix(ms.mu)
        if float(np.linalg.eigvalsh(xbar)[0]) >= -config.psd_tol * max(1.0, frob(xbar)):
            trace.converged = True
            trace.reason = "sdp_tight"
            break
        if it == config.max_iters:
            trace.reason = "max_iters"
            break
        if config.time_limit_s is not None and time.perf_counter() - t0 > config.time_limit_s:
            trace.reason = "time_limit"
            break
        if (config.improvement_tol > 0 and it > 0
                and abs(trace.records[-1].bound - trace.records[-2].bound) < config.improvement_tol):
            trace.reason = "stalled"
            break

        if config.pricing == "eig":
            fresh = price_eig(xbar, config.mode, config.cuts_per_iter, config.psd_tol)
            added = atoms.extend(fresh)
            if added == 0:
                trace.converged = not fresh
                trace.reason = "sdp_tight" if not fresh else "stalled"
                break
        else:
            added, span = 0, 0
            while added == 0 and span < cursor.length:
                fresh, scanned = scan_triples(xbar, cursor, config.t1, config.t2, config.psd_tol)
                span += scanned
                added = atoms.extend(fresh)
            if added == 0:
                trace.converged = True
                trace.reason = "saturated"
                break
    return trace


def stable_set_form(g: Graph, lam: float) -> Poly:
    """The quartic ``z' (lam*(I+A) - J) z`` with z = (x_1**2, ..., x_n**2).

    lam is a valid stability bound exactly when this form (times a
    power of sum x_i**2) lands in the dsos/sdsos cone, which is what
    :func:`hierarchy_bound` bisects on.
    """
    a = g.adjacency()
    mvals = lam * (np.eye(g.n) + a) - np.ones((g.n, g.n))
    terms: dict[tuple, float] = {}
    for i in range(g.n):
        for j in range(i, g.n):
            c = mvals[i, j] if i == j else 2.0 * mvals[i, j]
            if c == 0.0:
                continue
            e = [0] * g.n
            e[i] += 2
            e[j] += 2
            terms[tuple(e)] = terms.get(tuple(e), 0.0) + c
    return Poly.from_terms(g.n, 4, terms)


def hierarchy_bound(g: Graph, r: int, mode: str = "lp", lam_tol: float = 1e-3,
                    gram_cap: int = 400) -> float:
    """Smallest lambda (to lam_tol) whose stable-set form is r-dsos/r-sdsos.

    Bisects lambda on [0, lambda0]: infeasible at 0 (the form is
    negative somewhere), feasible at lambda0 by the init_lambda
    certificate, and feasibility is upward closed because raising
    lambda adds a form with only nonnegative even coefficients.
    Returns the feasible end of the final bracket.
    """
    if mode not in ("lp", "socp"):
        raise ValueError(f"mode must be 'lp' or 'socp', got {mode!r}")
    probe = r_dsos_bound if mode == "lp" else r_sdsos_bound
    lo, hi = 0.0, init_lambda(g)[0]
    while hi - lo > lam_tol:
        mid = (lo + hi) / 2.0
        if probe(stable_set_form(g, mid), r, gram_cap=gram_cap) >= -1e-9:
            hi = mid
        else:
            lo = mid
    return hi


def summary_line(label: str, g: Graph, trace: CgTrace, config: CgConfig) -> str:
    """The one-line run summary: graph,n,m,mode,pricing,final_bound,iters,converged."""
    return (f"{label},{g.n},{g.m},{config.mode},{config.pricing},"
            f"{trace.final_bound!r},{trace.iterations},{str(trace.converged).lower()}")
