"""Lower bounds for even forms on the unit sphere.

For a form p of degree 2d in n variables, the largest lambda with
``p - lambda * (sum x_i**2)**d`` admitting a diagonally dominant (or
scaled diagonally dominant) Gram matrix is an LP (or SOCP) whose value
lower-bounds the minimum of p on the unit sphere.  This module builds
those masters over explicit atom sets in Gram space, improves them by
column generation (eigenvector or triples pricing on the Gram-space
dual), generalizes to the r-multiplied hierarchies, and provides the
am-gm separation search plus a sampling oracle used to sandwich bounds
in tests.

Gram convention: coefficients are read off ``z' Q z`` where z is the
degree-d monomial basis, with mirrored Gram positions folded, so an
off-diagonal position contributes twice its value to its monomial.
The pricing matrix reverses the map: B[j, k] = mu[index of z_j z_k].
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from math import comb

import numpy as np

from . import conic
from .atoms import AtomSet, PairAtom, RankOneAtom, U3Cursor, gen_U2, gen_V2, scan_triples
from .cgengine import CgConfig, CgRecord, CgTrace, MasterSolution, price_eig
from .polynomials import MonomialBasis, Poly, monomials, sphere_multiplier
from .symmat import frob

__all__ = [
    "GramMap",
    "gram_map",
    "dsos_bound",
    "sdsos_bound",
    "r_dsos_bound",
    "r_sdsos_bound",
    "price_triples",
    "cg_polymin",
    "AmgmResult",
    "amgm_separation",
    "sphere_min_oracle",
]

_INTERNAL_INFEASIBLE_MSG = (
    "multiplier master reported infeasible, which is impossible (for small "
    "enough lambda the shifted form has a diagonally dominant Gram matrix); "
    "this indicates a solver or modeling failure")


class GramMap:
    """The linear map from Gram matrices to coefficient vectors.

    For the degree-d basis z, ``apply(Q)`` returns the coefficients of
    ``z' Q z`` in the degree-2d basis.  ``row_of[j, k]`` is the index
    of the monomial ``z_j * z_k``; every Gram position belongs to
    exactly one coefficient row.
    """

    def __init__(self, n: int, d: int):
        self.gram_basis = monomials(n, d)
        self.coef_basis = monomials(n, 2 * d)
        exps = self.gram_basis.exps
        N = len(self.gram_basis)
        index = self.coef_basis._index
        row = np.empty((N, N), dtype=np.int64)
        for j in range(N):
            sums = exps[j] + exps[j:]
            row[j, j:] = [index[tuple(s)] for s in sums.tolist()]
        iu, ju = np.triu_indices(N)
        row[ju, iu] = row[iu, ju]
        row.setflags(write=False)
        self.row_of = row

    @property
    def gram_size(self) -> int:
        return len(self.gram_basis)

    def apply(self, q) -> np.ndarray:
        """Coefficients of z' Q z (Q symmetrized first)."""
        q = np.asarray(q, dtype=np.float64)
        q = (q + q.T) / 2.0
        out = np.zeros(len(self.coef_basis))
        iu, ju = np.triu_indices(self.gram_size)
        fold = np.where(iu == ju, 1.0, 2.0)
        np.add.at(out, self.row_of[iu, ju], fold * q[iu, ju])
        return out

    def atom_columns(self, atom) -> list[tuple[np.ndarray, np.ndarray]]:
        """Coefficient columns of an atom's Gram matrices, as (rows, vals).

        One column for a rank-one atom, three (g11, g12, g22) for a
        pair atom.  Rows may repeat; entries at equal rows accumulate.
        """
        if isinstance(atom, RankOneAtom):
            parts = [atom.outer_entries()]
        else:
            parts = [atom.outer_entries(w) for w in range(3)]
        out = []
        for i, j, v in parts:
            fold = np.where(i == j, 1.0, 2.0)
            out.append((self.row_of[i, j], fold * v))
        return out

    def pricing_matrix(self, mu) -> np.ndarray:
        """B with B[j, k] = mu[row_of[j, k]]; atoms price by u' B u."""
        mu = np.asarray(mu, dtype=np.float64)
        if mu.shape != (len(self.coef_basis),):
            raise ValueError("dual length does not match the coefficient basis")
        return mu[self.row_of]


_GRAM_MAPS: dict[tuple[int, int], GramMap] = {}


def gram_map(n: int, d: int) -> GramMap:
    """Cached :class:`GramMap` for degree d in n variables."""
    key = (int(n), int(d))
    if key not in _GRAM_MAPS:
        _GRAM_MAPS[key] = GramMap(*key)
    return _GRAM_MAPS[key]


def _check_even_form(p: Poly) -> int:
    if p.degree % 2 != 0 or p.degree == 0:
        raise ValueError(f"need an even-degree form, got degree {p.degree}")
    return p.degree // 2


def _multiplier_master(b_coef: np.ndarray, s_coef: np.ndarray | None, gmap: GramMap,
                       atoms: AtomSet, *, feas_tol: float = 1e-8,
                       backend: str | None = None) -> MasterSolution:
    """max lambda s.t. lambda*s + (Gram cone combination) = b, entrywise.

    With ``s_coef`` None this is the pure feasibility version (is b in
    the cone), used by the bisection drivers.
    """
    model = conic.ConicModel("max")
    model.prefer_ipm = True
    rows = model.new_eq_rows(b_coef)
    lam = None
    if s_coef is not None:
        lam = model.add_var(obj=1.0)
        nz = np.nonzero(s_coef)[0]
        model.eq_entries(nz, np.full(nz.size, lam), s_coef[nz])
    slots = []
    for atom in atoms:
        cols = gmap.atom_columns(atom)
        if isinstance(atom, RankOneAtom):
            w = model.add_var(lb=0.0)
            model.eq_entries(cols[0][0], np.full(cols[0][0].size, w), cols[0][1])
            slots.append(w)
        else:
            g = [model.add_var(), model.add_var(), model.add_var()]
            for gv, (r, v) in zip(g, cols):
                model.eq_entries(r, np.full(r.size, gv), v)
            model.add_psd2(*g)
            slots.append(g)
    del rows
    sol = conic.solve(model, feas_tol=feas_tol, backend=backend)
    if sol.status != conic.OPTIMAL:
        return MasterSolution(status=sol.status, raw_status=sol.raw_status)
    weights = [float(sol.x[s]) if isinstance(s, int) else sol.x[s].copy() for s in slots]
    return MasterSolution(
        status=conic.OPTIMAL, bound=float(sol.obj),
        y=np.array([sol.x[lam]]) if lam is not None else np.zeros(0),
        weights=weights, mu=sol.dual_eq.copy(), raw_status=sol.raw_status)


def dsos_bound(p: Poly, **kw) -> tuple[float, list]:
    """Largest lambda with a dd Gram matrix for ``p - lambda*s``; LP.

    Returns (lambda, weights) where weights align with gen_U2 of the
    Gram basis.  Always feasible: for lambda negative enough the
    shifted form's Gram matrix can be made diagonally dominant.
    """
    d = _check_even_form(p)
    gmap = gram_map(p.n, d)
    ms = _multiplier_master(p.coef, sphere_multiplier(p.n, d).coef, gmap,
                            gen_U2(gmap.gram_size), **kw)
    if ms.status != conic.OPTIMAL:
        raise conic.ConicError(_INTERNAL_INFEASIBLE_MSG if ms.status == conic.INFEASIBLE
                               else f"dsos master failed: {ms.raw_status}")
    return ms.bound, ms.weights


def sdsos_bound(p: Poly, **kw) -> tuple[float, list]:
    """Largest lambda with an sdd Gram matrix; SOCP over gen_V2 pairs.

    Returns (lambda, blocks); blocks align with gen_V2 as (g11, g12,
    g22) triples.  Never below dsos_bound (the dd cone is contained in
    the sdd cone).
    """
    d = _check_even_form(p)
    gmap = gram_map(p.n, d)
    ms = _multiplier_master(p.coef, sphere_multiplier(p.n, d).coef, gmap,
                            gen_V2(gmap.gram_size), **kw)
    if ms.status != conic.OPTIMAL:
        raise conic.ConicError(_INTERNAL_INFEASIBLE_MSG if ms.status == conic.INFEASIBLE
                               else f"sdsos master failed: {ms.raw_status}")
    return ms.bound, ms.weights


def _r_bound(p: Poly, r: int, mode: str, gram_cap: int, **kw) -> float:
    d = _check_even_form(p)
    if r < 0:
        raise ValueError("r must be nonnegative")
    size = comb(p.n + d + r - 1, d + r)
    if size > gram_cap:
        raise ValueError(f"Gram basis size {size} exceeds the cap {gram_cap}; "
                         f"raise gram_cap to allow n={p.n}, degree {2 * (d + r)}")
    mult = p * sphere_multiplier(p.n, r) if r else p
    gmap = gram_map(p.n, d + r)
    atoms = gen_U2(size) if mode == "lp" else gen_V2(size)
    ms = _multiplier_master(mult.coef, sphere_multiplier(p.n, d + r).coef,
                            gmap, atoms, **kw)
    if ms.status != conic.OPTIMAL:
        raise conic.ConicError(_INTERNAL_INFEASIBLE_MSG if ms.status == conic.INFEASIBLE
                               else f"r-multiplied master failed: {ms.raw_status}")
    return ms.bound


def r_dsos_bound(p: Poly, r: int, gram_cap: int = 400, **kw) -> float:
    """Largest lambda with ``(p - lambda*s) * (sum x_i**2)**r`` dsos."""
    return _r_bound(p, r, "lp", gram_cap, **kw)


def r_sdsos_bound(p: Poly, r: int, gram_cap: int = 400, **kw) -> float:
    """Largest lambda with ``(p - lambda*s) * (sum x_i**2)**r`` sdsos."""
    return _r_bound(p, r, "socp", gram_cap, **kw)


def price_triples(b, cursor: U3Cursor, t1: int = 300000, t2: int = 5000,
                  tol: float = 1e-9) -> tuple[list[RankOneAtom], U3Cursor]:
    """Most violated sign-vector atoms against the pricing matrix b.

    Thin wrapper over :func:`conecg.atoms.scan_triples`: collects up to
    t1 vectors u with ``u' b u < 0`` starting at the cursor, returns
    the t2 most negative sorted ascending, and the advanced cursor.
    """
    found, _ = scan_triples(b, cursor, t1, t2, tol)
    return found, cursor


def cg_polymin(p: Poly, config: CgConfig | None = None) -> CgTrace:
    """Column generation on the sphere-multiplier master; lambda trace.

    Pricing runs on the Gram-space dual matrix B: eigenvector cuts
    (rank-one for lp mode, eigenvector pairs for socp) or triples
    scanning.  The bound sequence is nondecreasing and every value is a
    valid lower bound for p on the unit sphere.
    """
    config = (config or CgConfig()).validated()
    d = _check_even_form(p)
    gmap = gram_map(p.n, d)
    N = gmap.gram_size
    atoms = gen_U2(N) if config.mode == "lp" else gen_V2(N)
    s_coef = sphere_multiplier(p.n, d).coef
    cursor = U3Cursor(N)
    trace = CgTrace(meta={"mode": config.mode, "pricing": config.pricing})
    t0 = time.perf_counter()
    added = 0

    for it in range(config.max_iters + 1):
        ms = _multiplier_master(p.coef, s_coef, gmap, atoms,
                                feas_tol=config.feas_tol, backend=config.backend)
        elapsed = int(1000 * (time.perf_counter() - t0))
        if ms.status != conic.OPTIMAL:
            if ms.status == conic.INFEASIBLE:
                raise conic.ConicError(_INTERNAL_INFEASIBLE_MSG)
            trace.records.append(CgRecord(it, np.nan, added, ms.status, elapsed))
            trace.reason = f"solver_{ms.status}"
            return trace
        trace.records.append(CgRecord(it, ms.bound, added, ms.status, elapsed, y=ms.y))

        b = gmap.pricing_matrix(ms.mu)
        if float(np.linalg.eigvalsh(b)[0]) >= -config.psd_tol * max(1.0, frob(b)):
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
            fresh = price_eig(b, config.mode, config.cuts_per_iter, config.psd_tol)
            added = atoms.extend(fresh)
            if added == 0:
                trace.converged = not fresh
                trace.reason = "sdp_tight" if not fresh else "stalled"
                break
        else:
            added, span = 0, 0
            while added == 0 and span < cursor.length:
                fresh, scanned = scan_triples(b, cursor, config.t1, config.t2, config.psd_tol)
                span += scanned
                added = atoms.extend(fresh)
            if added == 0:
                trace.converged = True
                trace.reason = "saturated"
                break
    return trace


@dataclass
class AmgmResult:
    """Outcome of :func:`amgm_separation`.

    ``status`` is "found" (best objective negative: q is a separating
    certificate), "none" (search completed, no negative objective; q
    still holds the best candidate if any exists), or "budget" (node
    cap hit; fields reflect the best seen so far).
    """

    status: str
    objective: float | None = None
    q: Poly | None = None


def amgm_separation(mu, basis: MonomialBasis, k: int,
                    node_budget: int = 10**7) -> AmgmResult:
    """Search am-gm forms ``sum_c x^(a_c) - k x^(a_y)`` priced against mu.

    Enumerates, for every basis monomial y and every k-subset c of
    even-exponent monomials (y excluded, no repetition) satisfying the
    balance ``sum_c a_c = k * a_y``, the objective
    ``sum_c mu[c] - k * mu[y]``; such forms are nonnegative by the
    arithmetic-geometric mean inequality, and a negative objective
    means the form is a violated cut against the dual weights mu.
    Depth-first search with componentwise exponent bounds and a
    best-objective prune; candidate order (mu ascending, then basis
    order) makes the returned minimizer deterministic.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (len(basis),):
        raise ValueError("mu length does not match basis size")
    if k < 2:
        raise ValueError("k must be at least 2")
    exps = basis.exps
    even = np.nonzero(np.all(exps % 2 == 0, axis=1))[0]

    best_obj = np.inf
    best: tuple[int, tuple[int, ...]] | None = None
    nodes = 0
    out_of_budget = False

    for iy in range(len(basis)):
        target = k * exps[iy]
        pool = even[(even != iy) & np.all(exps[even] <= target, axis=1)]
        if pool.size < k:
            continue
        pool = pool[np.argsort(mu[pool], kind="stable")]
        pexp = exps[pool]
        pmu = mu[pool]
        prefix = np.concatenate([[0.0], np.cumsum(pmu)])
        base = -k * mu[iy]

        # chosen: positions into pool, increasing; s: partial exponent sum
        def dfs(start: int, chosen: list[int], s: np.ndarray, part: float):
            nonlocal best_obj, best, nodes, out_of_budget
            need = k - len(chosen)
            if need == 0:
                if np.array_equal(s, target) and base + part < best_obj:
                    best_obj = base + part
                    best = (iy, tuple(int(pool[c]) for c in chosen))
                return
            for pos in range(start, pool.size - need + 1):
                if nodes >= node_budget:
                    out_of_budget = True
                    return
                nodes += 1
                # cheapest completion from pos is the next `need` pool
                # entries; mu sorted ascending makes it monotone in pos,
                # so once it cannot beat the incumbent nothing later can
                if base + part + (prefix[pos + need] - prefix[pos]) >= best_obj:
                    return
                ns = s + pexp[pos]
                if np.all(ns <= target):
                    chosen.append(pos)
                    dfs(pos + 1, chosen, ns, part + pmu[pos])
                    chosen.pop()
                    if out_of_budget:
                        return

        dfs(0, [], np.zeros_like(target), 0.0)
        if out_of_budget:
            break

    if best is None:
        return AmgmResult("budget" if out_of_budget else "none")
    iy, subset = best
    terms: dict[tuple, float] = {tuple(exps[c].tolist()): 1.0 for c in subset}
    ykey = tuple(exps[iy].tolist())
    terms[ykey] = terms.get(ykey, 0.0) - float(k)
    q = Poly.from_terms(basis.n, basis.d, terms)
    status = "budget" if out_of_budget else ("found" if best_obj < 0 else "none")
    return AmgmResult(status, float(best_obj), q)


def sphere_min_oracle(p: Poly, samples: int = 4096, seed: int = 0,
                      polish: int = 12) -> float:
    """Upper bound on the minimum of p over the unit sphere.

    Evaluates p at ``samples`` seeded Gaussian directions, then runs
    BFGS on the scale-invariant quotient ``p(x) / ||x||**deg`` from the
    ``polish`` best starts.  Every reported value is p at a genuine
    unit vector, so the result is always a valid upper bound.
    """
    from scipy.optimize import minimize

    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((samples, p.n))
    norms = np.linalg.norm(pts, axis=1)
    norms[norms == 0] = 1.0
    pts /= norms[:, None]
    vals = p.eval(pts)
    best = float(np.min(vals))
    deg = p.degree

    def fun(x):
        r2 = float(x @ x)
        if r2 < 1e-12:
            return 0.0, np.zeros_like(x)
        r = np.sqrt(r2)
        px = p.eval(x)
        g = p.grad(x) / r ** deg - deg * px / r ** (deg + 2) * x
        return px / r ** deg, g

    for i in np.argsort(vals)[:polish]:
        res = minimize(fun, pts[i], jac=True, method="BFGS",
                       options={"maxiter": 200, "gtol": 1e-12})
        x = np.asarray(res.x)
        r = np.linalg.norm(x)
        if r > 1e-8:
            best = min(best, float(p.eval(x / r)))
    return best
