"""Small conic modeling layer over two LP/SOCP backends.

A :class:`ConicModel` holds indexed real variables (optionally bounded
below), linear equality rows, linear inequality rows of the form
``expr >= rhs``, and ``psd2`` triples ``(a1, a2, a3)`` constraining the
symmetric 2x2 matrix ``[[a1, a2], [a2, a3]]`` to be positive
semidefinite.  psd2 triples are lowered to one second-order cone each::

    (a1 + a3, 2*a2, a1 - a3) in Q^3

which is equivalent to ``a1, a3 >= 0`` and ``a1*a3 >= a2**2``.

Backends
--------
``highs``
    scipy.optimize.linprog (HiGHS).  Pure LPs only; rejects psd2 rows.
``clarabel``
    Clarabel interior point.  Handles LPs and second-order cones.

``resolve_backend`` picks a backend when none is requested: models with
psd2 rows (or with ``prefer_ipm`` set, see below) go to Clarabel, plain
LPs go to HiGHS.  The environment variable ``CONECG_BACKEND`` overrides
the automatic choice.  ``prefer_ipm`` exists because column-generation
masters want *central* duals: a simplex vertex dual of a degenerate
master is a poor pricing signal and can stall the cut loop, while the
interior-point dual lands near the analytic center of the optimal face.

Dual convention
---------------
``dual_eq[k]`` is the sensitivity d(objective)/d(rhs_k) in the model's
own sense.  For a max model this makes the equality duals exactly the
minimizing variables of the standard LP dual (``min b'mu`` subject to
``A'mu >= c`` on nonnegative variables), so reduced-cost pricing reads
``mu' a_col < c_col`` with no sign gymnastics.  ``dual_ineq`` is
reported nonnegative in both senses (``|d obj / d rhs|``).

Every solve that reports ``optimal`` is re-checked: primal residuals
must sit within ``feas_tol`` (scaled by max(1, ||rhs||_inf)) and the
primal and dual objectives must agree to about 1e-6 relative, else the
status is downgraded or an error is raised.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ConicError",
    "ConicModel",
    "ConicSolution",
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
    "NUMERICAL_FAILURE",
    "resolve_backend",
    "solve",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical_failure"

_BACKENDS = ("highs", "clarabel")
_DUALITY_RTOL = 1e-6


class ConicError(RuntimeError):
    """Modeling error or a solver failure that cannot be reported as a status."""


@dataclass
class ConicSolution:
    """Result of :func:`solve`.

    ``x``, ``obj``, ``dual_eq`` and ``dual_ineq`` are populated only when
    ``status == "optimal"``.  ``dual_eq[k]`` follows the sensitivity
    convention documented in the module docstring; ``dual_ineq`` entries
    are nonnegative up to solver tolerance.
    """

    status: str
    obj: float | None = None
    x: np.ndarray | None = None
    dual_eq: np.ndarray | None = None
    dual_ineq: np.ndarray | None = None
    raw_status: str = ""


class _RowBlock:
    """COO-accumulated linear rows sharing one constraint sense."""

    __slots__ = ("rhs", "rows", "cols", "vals")

    def __init__(self):
        self.rhs: list[float] = []
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []

    def __len__(self):
        return len(self.rhs)

    def matrix(self, nvars: int) -> sp.csc_matrix:
        if self.rows:
            r = np.concatenate(self.rows)
            c = np.concatenate(self.cols)
            v = np.concatenate(self.vals)
        else:
            r = c = v = np.zeros(0)
        return sp.csc_matrix((v, (r, c)), shape=(len(self.rhs), nvars))

    def max_col(self) -> int:
        return max((int(c.max()) for c in self.cols if c.size), default=-1)


def _as_index_array(a) -> np.ndarray:
    out = np.atleast_1d(np.asarray(a, dtype=np.int64))
    if out.ndim != 1:
        raise ConicError("index arrays must be one-dimensional")
    return out


def _as_value_array(a, size: int) -> np.ndarray:
    out = np.atleast_1d(np.asarray(a, dtype=np.float64))
    if out.shape != (size,):
        raise ConicError("coefficient array length does not match indices")
    if not np.all(np.isfinite(out)):
        raise ConicError("non-finite coefficient")
    return out


class ConicModel:
    """Incrementally built LP/SOCP in the form documented in the module."""

    def __init__(self, sense: str = "min"):
        if sense not in ("min", "max"):
            raise ConicError(f"sense must be 'min' or 'max', got {sense!r}")
        self.sense = sense
        self._obj: list[float] = []
        self._lb: list[float | None] = []
        self._eq = _RowBlock()
        self._ineq = _RowBlock()
        self._psd2: list[tuple[int, int, int]] = []
        #: request interior-point duals even for a pure LP (see module doc)
        self.prefer_ipm = False

    # -- variables ---------------------------------------------------------

    @property
    def nvars(self) -> int:
        return len(self._obj)

    @property
    def n_eq(self) -> int:
        return len(self._eq)

    @property
    def n_ineq(self) -> int:
        return len(self._ineq)

    @property
    def n_psd2(self) -> int:
        return len(self._psd2)

    def add_var(self, obj: float = 0.0, lb: float | None = None) -> int:
        """Add one variable; returns its index."""
        if not np.isfinite(obj) or (lb is not None and not np.isfinite(lb)):
            raise ConicError("non-finite objective or bound")
        self._obj.append(float(obj))
        self._lb.append(None if lb is None else float(lb))
        return len(self._obj) - 1

    def add_vars(self, count: int, obj=0.0, lb: float | None = None) -> np.ndarray:
        """Add ``count`` variables sharing a bound; returns their indices.

        ``obj`` may be a scalar or an array of per-variable costs.
        """
        start = len(self._obj)
        objs = np.broadcast_to(np.asarray(obj, dtype=np.float64), (count,))
        if not np.all(np.isfinite(objs)):
            raise ConicError("non-finite objective")
        self._obj.extend(objs.tolist())
        self._lb.extend([None if lb is None else float(lb)] * count)
        return np.arange(start, start + count)

    # -- constraints -------------------------------------------------------

    def add_eq(self, cols, vals, rhs: float) -> int:
        """Add one equality row ``sum(vals * x[cols]) == rhs``; returns row id."""
        return self._add_row(self._eq, cols, vals, rhs)

    def add_ineq(self, cols, vals, rhs: float) -> int:
        """Add one inequality row ``sum(vals * x[cols]) >= rhs``; returns row id."""
        return self._add_row(self._ineq, cols, vals, rhs)

    def _add_row(self, block: _RowBlock, cols, vals, rhs: float) -> int:
        cols = _as_index_array(cols)
        vals = _as_value_array(vals, cols.size)
        if not np.isfinite(rhs):
            raise ConicError("non-finite rhs")
        rid = len(block)
        block.rhs.append(float(rhs))
        block.rows.append(np.full(cols.size, rid, dtype=np.int64))
        block.cols.append(cols)
        block.vals.append(vals)
        return rid

    def new_eq_rows(self, rhs) -> np.ndarray:
        """Reserve a block of empty equality rows; returns their row ids."""
        return self._new_rows(self._eq, rhs)

    def new_ineq_rows(self, rhs) -> np.ndarray:
        """Reserve a block of empty ``>= rhs`` rows; returns their row ids."""
        return self._new_rows(self._ineq, rhs)

    def _new_rows(self, block: _RowBlock, rhs) -> np.ndarray:
        rhs = np.atleast_1d(np.asarray(rhs, dtype=np.float64))
        if not np.all(np.isfinite(rhs)):
            raise ConicError("non-finite rhs")
        start = len(block)
        block.rhs.extend(rhs.tolist())
        return np.arange(start, start + rhs.size)

    def eq_entries(self, rows, cols, vals):
        """Bulk-append coefficients to existing equality rows (COO style)."""
        self._entries(self._eq, rows, cols, vals)

    def ineq_entries(self, rows, cols, vals):
        """Bulk-append coefficients to existing inequality rows."""
        self._entries(self._ineq, rows, cols, vals)

    def _entries(self, block: _RowBlock, rows, cols, vals):
        rows = _as_index_array(rows)
        cols = _as_index_array(cols)
        if rows.size != cols.size:
            raise ConicError("rows and cols must have equal length")
        vals = _as_value_array(vals, cols.size)
        if rows.size and (rows.min() < 0 or rows.max() >= len(block)):
            raise ConicError("row id out of range")
        block.rows.append(rows)
        block.cols.append(cols)
        block.vals.append(vals)

    def add_psd2(self, a1: int, a2: int, a3: int):
        """Constrain ``[[x[a1], x[a2]], [x[a2], x[a3]]]`` to be psd."""
        tri = (int(a1), int(a2), int(a3))
        if len(set(tri)) != 3:
            raise ConicError(f"psd2 indices must be distinct, got {tri}")
        self._psd2.append(tri)

    # -- misc ----------------------------------------------------------------

    def objective(self) -> np.ndarray:
        return np.asarray(self._obj, dtype=np.float64)

    def _validate(self):
        n = self.nvars
        if n == 0:
            raise ConicError("model has no variables")
        hi = max(self._eq.max_col(), self._ineq.max_col(),
                 max((max(t) for t in self._psd2), default=-1))
        if hi >= n:
            raise ConicError(f"variable index {hi} out of range (nvars={n})")

    def dump(self, f=None) -> str | None:
        """Write a plain-text dump of the model; returns it if ``f`` is None."""
        out = f if f is not None else io.StringIO()
        out.write(f"conic {self.sense} nvars={self.nvars} neq={self.n_eq} "
                  f"nineq={self.n_ineq} npsd2={self.n_psd2}\n")
        for j, (c, lb) in enumerate(zip(self._obj, self._lb)):
            out.write(f"var {j} obj={c:.17g} lb={'-inf' if lb is None else format(lb, '.17g')}\n")
        for name, block, op in (("eq", self._eq, "="), ("ineq", self._ineq, ">=")):
            mat = block.matrix(self.nvars).tocsr()
            for r in range(len(block)):
                lo, hi = mat.indptr[r], mat.indptr[r + 1]
                terms = " ".join(f"{j}:{v:.17g}"
                                 for j, v in zip(mat.indices[lo:hi], mat.data[lo:hi]))
                out.write(f"{name} {r}: {terms} {op} {block.rhs[r]:.17g}\n")
        for t in self._psd2:
            out.write(f"psd2 {t[0]} {t[1]} {t[2]}\n")
        if f is None:
            return out.getvalue()
        return None


# ---------------------------------------------------------------------------
# solving


def resolve_backend(model: ConicModel, backend: str | None = None) -> str:
    """Pick a backend for ``model``; see the module docstring for the rules."""
    choice = backend or os.environ.get("CONECG_BACKEND") or None
    if choice is None:
        choice = "clarabel" if (model.n_psd2 or model.prefer_ipm) else "highs"
    if choice not in _BACKENDS:
        raise ConicError(f"unknown backend {choice!r}; expected one of {_BACKENDS}")
    if choice == "highs" and model.n_psd2:
        raise ConicError("the highs backend cannot solve psd2 constraints")
    return choice


def solve(model: ConicModel, *, feas_tol: float = 1e-8, gap_tol: float = 1e-8,
          time_limit: float | None = None, backend: str | None = None) -> ConicSolution:
    """Solve ``model`` and return a :class:`ConicSolution`.

    ``feas_tol`` bounds the accepted primal residual of an ``optimal``
    answer (relative to max(1, ||rhs||_inf)); the backend is asked to
    solve about one digit tighter.  ``gap_tol`` is the relative duality
    gap target passed to interior-point backends.
    """
    model._validate()
    chosen = resolve_backend(model, backend)
    if chosen == "highs":
        sol = _solve_highs(model, feas_tol, time_limit)
    else:
        sol = _solve_clarabel(model, feas_tol, gap_tol, time_limit)
    if sol.status == OPTIMAL:
        _check_primal(model, sol, feas_tol)
    return sol


def _bad(sol_status: str, raw: str) -> ConicSolution:
    return ConicSolution(status=sol_status, raw_status=raw)


def _check_primal(model: ConicModel, sol: ConicSolution, feas_tol: float):
    """Downgrade an 'optimal' answer whose primal residuals exceed feas_tol."""
    x = sol.x
    rhs_scale = 1.0
    worst = 0.0
    if model.n_eq:
        A = model._eq.matrix(model.nvars)
        b = np.asarray(model._eq.rhs)
        rhs_scale = max(rhs_scale, float(np.abs(b).max(initial=0.0)))
        worst = max(worst, float(np.abs(A @ x - b).max(initial=0.0)))
    if model.n_ineq:
        A = model._ineq.matrix(model.nvars)
        b = np.asarray(model._ineq.rhs)
        rhs_scale = max(rhs_scale, float(np.abs(b).max(initial=0.0)))
        worst = max(worst, float((b - A @ x).max(initial=0.0)))
    lb = np.array([-np.inf if v is None else v for v in model._lb])
    worst = max(worst, float((lb - x).max(initial=0.0)))
    for a1, a2, a3 in model._psd2:
        lam_min = 0.5 * (x[a1] + x[a3]) - 0.5 * np.hypot(x[a1] - x[a3], 2 * x[a2])
        worst = max(worst, -lam_min)
    if worst > feas_tol * rhs_scale:
        sol.status = NUMERICAL_FAILURE
        sol.raw_status += f" primal residual {worst:.3e} exceeds {feas_tol:.1e}*{rhs_scale:.3g}"


def _solve_highs(model: ConicModel, feas_tol: float, time_limit: float | None) -> ConicSolution:
    from scipy.optimize import linprog

    n = model.nvars
    sigma = 1.0 if model.sense == "min" else -1.0
    c = sigma * model.objective()
    A_eq = model._eq.matrix(n) if model.n_eq else None
    b_eq = np.asarray(model._eq.rhs) if model.n_eq else None
    # expr >= rhs  ->  -expr <= -rhs
    A_ub = (-model._ineq.matrix(n)) if model.n_ineq else None
    b_ub = -np.asarray(model._ineq.rhs) if model.n_ineq else None
    bounds = [(lb, None) for lb in model._lb]
    options = {
        "presolve": True,
        "primal_feasibility_tolerance": max(1e-10, 0.1 * feas_tol),
        "dual_feasibility_tolerance": max(1e-10, 0.1 * feas_tol),
    }
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs", options=options)
    raw = f"highs status={res.status} {res.message}"
    if res.status == 2:
        return _bad(INFEASIBLE, raw)
    if res.status == 3:
        return _bad(UNBOUNDED, raw)
    if res.status != 0:
        return _bad(NUMERICAL_FAILURE, raw)

    x = np.asarray(res.x)
    y_min = np.asarray(res.eqlin.marginals) if model.n_eq else np.zeros(0)
    w_min = np.asarray(res.ineqlin.marginals) if model.n_ineq else np.zeros(0)
    _check_lp_duality(model, res.fun, x, c, A_eq, b_eq, A_ub, b_ub, y_min, w_min)
    return ConicSolution(
        status=OPTIMAL,
        obj=sigma * res.fun,
        x=x,
        dual_eq=(y_min if model.sense == "min" else -y_min),
        dual_ineq=-w_min,  # nonnegative in both senses
        raw_status=raw,
    )


def _check_lp_duality(model, fun, x, c, A_eq, b_eq, A_ub, b_ub, y, w):
    """Strong-duality identity in the internal min form; raises on violation."""
    rc = c.copy()
    dual_obj = 0.0
    if A_eq is not None:
        rc -= A_eq.T @ y
        dual_obj += float(b_eq @ y)
    if A_ub is not None:
        rc -= A_ub.T @ w
        dual_obj += float(b_ub @ w)
    for j, lb in enumerate(model._lb):
        if lb is not None and lb != 0.0:
            dual_obj += lb * rc[j]
    scale = max(1.0, abs(fun), float(np.abs(x).max(initial=0.0)))
    if abs(dual_obj - fun) > _DUALITY_RTOL * scale:
        raise ConicError(
            f"duality check failed: primal {fun:.12g} vs dual {dual_obj:.12g}")


def _solve_clarabel(model: ConicModel, feas_tol: float, gap_tol: float,
                    time_limit: float | None) -> ConicSolution:
    import clarabel

    n = model.nvars
    sigma = 1.0 if model.sense == "min" else -1.0
    q = sigma * model.objective()

    # stacked constraint rows: eq block, nonneg block (lb rows then ineq
    # rows), then one 3-row SOC block per psd2 triple.  Clarabel solves
    # min q'x s.t. Ax + s = b, s in K.
    blocks_r, blocks_c, blocks_v, bparts = [], [], [], []

    def push(mat: sp.csc_matrix, rhs: np.ndarray, row0: int):
        coo = mat.tocoo()
        blocks_r.append(coo.row + row0)
        blocks_c.append(coo.col)
        blocks_v.append(coo.data)
        bparts.append(rhs)

    row0 = 0
    n_eq = model.n_eq
    if n_eq:
        push(model._eq.matrix(n), np.asarray(model._eq.rhs), row0)
        row0 += n_eq

    lb_idx = [j for j, lb in enumerate(model._lb) if lb is not None]
    lb_val = np.asarray([model._lb[j] for j in lb_idx], dtype=np.float64)
    n_nn = len(lb_idx) + model.n_ineq
    if lb_idx:
        # x_j >= lb  ->  -x_j + s = -lb, s >= 0
        blocks_r.append(np.arange(row0, row0 + len(lb_idx)))
        blocks_c.append(np.asarray(lb_idx, dtype=np.int64))
        blocks_v.append(-np.ones(len(lb_idx)))
        bparts.append(-lb_val)
        row0 += len(lb_idx)
    if model.n_ineq:
        push(-model._ineq.matrix(n), -np.asarray(model._ineq.rhs), row0)
        row0 += model.n_ineq

    n_soc = model.n_psd2
    if n_soc:
        t = np.asarray(model._psd2, dtype=np.int64)
        base = row0 + 3 * np.arange(n_soc)
        # s = (a1 + a3, 2 a2, a1 - a3)
        blocks_r.append(np.repeat(base, 2))
        blocks_c.append(t[:, [0, 2]].ravel())
        blocks_v.append(np.tile([-1.0, -1.0], n_soc))
        blocks_r.append(base + 1)
        blocks_c.append(t[:, 1])
        blocks_v.append(np.full(n_soc, -2.0))
        blocks_r.append(np.repeat(base + 2, 2))
        blocks_c.append(t[:, [0, 2]].ravel())
        blocks_v.append(np.tile([-1.0, 1.0], n_soc))
        bparts.append(np.zeros(3 * n_soc))
        row0 += 3 * n_soc

    A = sp.csc_matrix(
        (np.concatenate(blocks_v) if blocks_v else np.zeros(0),
         (np.concatenate(blocks_r) if blocks_r else np.zeros(0, dtype=np.int64),
          np.concatenate(blocks_c) if blocks_c else np.zeros(0, dtype=np.int64))),
        shape=(row0, n))
    b = np.concatenate(bparts) if bparts else np.zeros(0)

    cones = []
    if n_eq:
        cones.append(clarabel.ZeroConeT(n_eq))
    if n_nn:
        cones.append(clarabel.NonnegativeConeT(n_nn))
    cones.extend(clarabel.SecondOrderConeT(3) for _ in range(n_soc))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = max(1e-10, 0.1 * feas_tol)
    settings.tol_gap_rel = max(1e-12, 0.1 * gap_tol)
    settings.tol_gap_abs = max(1e-12, 0.1 * gap_tol)
    if time_limit is not None:
        settings.time_limit = float(time_limit)

    solver = clarabel.DefaultSolver(sp.csc_matrix((n, n)), q, A, b, cones, settings)
    res = solver.solve()
    status = res.status
    raw = f"clarabel {status}"
    S = clarabel.SolverStatus
    if status in (S.PrimalInfeasible,):
        return _bad(INFEASIBLE, raw)
    if status in (S.DualInfeasible,):
        return _bad(UNBOUNDED, raw)
    if status not in (S.Solved, S.AlmostSolved):
        return _bad(NUMERICAL_FAILURE, raw)

    x = np.asarray(res.x)
    z = np.asarray(res.z)
    fun = float(q @ x)
    # conic duality: primal q'x, dual -b'z
    scale = max(1.0, abs(fun), float(np.abs(x).max(initial=0.0)))
    if abs(fun + float(b @ z)) > _DUALITY_RTOL * scale:
        return _bad(NUMERICAL_FAILURE, raw + " (duality gap)")
    z_eq = z[:n_eq]
    z_in = z[n_eq + len(lb_idx):n_eq + n_nn]
    return ConicSolution(
        status=OPTIMAL,
        obj=sigma * fun,
        x=x,
        dual_eq=(-z_eq if model.sense == "min" else z_eq.copy()),
        dual_ineq=z_in.copy(),  # |d obj / d rhs|, both senses
        raw_status=raw,
    )
