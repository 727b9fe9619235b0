"""Column generation for SDPs over growing atom cones.

The target problem is ``max b'y  s.t.  C - sum_i y_i A_i  psd``.  The
restricted master replaces the psd cone by the cone generated by a
finite atom set (rank-one outer products and 2x2 pair blocks), imposing

    C - sum_i y_i A_i = sum_k w_k B_k      (entrywise, upper triangle)

with nonnegative weights on rank-one atoms and free 2x2 psd blocks on
pair atoms.  Since every atom matrix is psd, each master bound is a
lower bound on the SDP optimum, and bounds can only improve as atoms
accumulate.

The master's equality duals mu (one per upper-triangle entry) assemble
into the dual matrix X* via ``X*_ii = mu_ii`` and ``X*_ij = mu_ij / 2``
for i < j.  At a master optimum, X* satisfies ``A_i . X* = b_i`` and is
nonnegative against every atom in the master; if X* is psd the bound
equals the SDP value, and otherwise its most negative eigenvectors (or
sign vectors with at most three nonzeros that are negative against X*)
are exactly the atoms whose addition can move the bound.

Masters are rebuilt from scratch each iteration and are solved with
interior-point duals by default: vertex duals of these (highly
degenerate) masters are valid but sit at corners of the optimal face
and make poor pricing directions, which can stall the loop on
symmetric instances.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import conic
from .atoms import AtomSet, PairAtom, RankOneAtom, U3Cursor, gen_U2, gen_V2, scan_triples
from .symmat import as_symmetric, frob, tri_pairs

__all__ = [
    "SdpProblem",
    "CgConfig",
    "CgRecord",
    "CgTrace",
    "MasterSolution",
    "solve_master_lp",
    "solve_master_socp",
    "assemble_dual_matrix",
    "price_eig",
    "run",
    "random_spectrahedron",
    "load_sdp",
    "dump_sdp",
    "read_trace",
]

_INIT_INFEASIBLE_MSG = (
    "restricted master is infeasible: no y puts C - sum y_i A_i inside the cone "
    "generated by the supplied atoms. The gen_U2/gen_V2 initializations only "
    "guarantee feasibility when the target slack can be made diagonally dominant "
    "(as in the polynomial and stable-set masters); for a general SDP, pass an "
    "atom set known to contain a feasible decomposition."
)


@dataclass
class SdpProblem:
    """Data of ``max b'y s.t. C - sum_i y_i A_i psd``."""

    C: np.ndarray
    A: list[np.ndarray]
    b: np.ndarray

    def __post_init__(self):
        self.C = as_symmetric(self.C)
        self.A = [as_symmetric(a) for a in self.A]
        self.b = np.atleast_1d(np.asarray(self.b, dtype=np.float64))
        if len(self.A) != self.b.size:
            raise ValueError(f"{len(self.A)} constraint matrices but {self.b.size} objective entries")
        if any(a.shape != self.C.shape for a in self.A):
            raise ValueError("all matrices must share the dimension of C")
        if not np.all(np.isfinite(self.b)):
            raise ValueError("non-finite objective vector")

    @property
    def n(self) -> int:
        return self.C.shape[0]

    @property
    def m(self) -> int:
        return self.b.size


@dataclass
class CgConfig:
    """Knobs for a column-generation run.

    ``mode`` picks the master/pricing family: "lp" prices rank-one
    atoms, "socp" prices eigenvector pairs (with a rank-one fallback
    when only one eigenvalue is negative).  ``pricing`` is "eig" or
    "triples"; triples pricing scans sign vectors with at most 3
    nonzeros in a fixed cyclic order, collecting at most ``t1``
    violations and adding the ``t2`` most violated per round.
    ``improvement_tol`` stops the run when the bound moves less than
    this between iterations; 0 disables the check.
    """

    mode: str = "lp"
    pricing: str = "eig"
    cuts_per_iter: int = 1
    t1: int = 300000
    t2: int = 5000
    max_iters: int = 20
    time_limit_s: float | None = None
    psd_tol: float = 1e-8
    improvement_tol: float = 0.0
    feas_tol: float = 1e-8
    backend: str | None = None

    def validated(self) -> "CgConfig":
        if self.mode not in ("lp", "socp"):
            raise ValueError(f"mode must be 'lp' or 'socp', got {self.mode!r}")
        if self.pricing not in ("eig", "triples"):
            raise ValueError(f"pricing must be 'eig' or 'triples', got {self.pricing!r}")
        if min(self.cuts_per_iter, self.t1, self.t2) < 1 or self.max_iters < 0:
            raise ValueError("cuts_per_iter, t1, t2 must be >= 1 and max_iters >= 0")
        if self.time_limit_s is not None and self.time_limit_s <= 0:
            raise ValueError("time_limit_s must be positive")
        return self


@dataclass
class CgRecord:
    """One master solve: the row written to the trace CSV.

    ``atoms_added`` counts atoms added by the pricing round *before*
    this solve (0 for the first row).  ``y`` keeps the master's
    variable values for feasibility checks; it is not serialized.
    """

    iteration: int
    bound: float
    atoms_added: int
    status: str
    elapsed_ms: int
    y: np.ndarray | None = None


@dataclass
class CgTrace:
    """Bound trajectory of one run plus the termination certificate."""

    records: list[CgRecord] = field(default_factory=list)
    converged: bool = False
    reason: str = ""
    certificate: dict | None = None
    meta: dict = field(default_factory=dict)

    def bounds(self) -> np.ndarray:
        return np.array([r.bound for r in self.records])

    @property
    def final_bound(self) -> float:
        return self.records[-1].bound

    @property
    def iterations(self) -> int:
        return len(self.records) - 1

    def write_csv(self, f, extra_meta: dict | None = None):
        """Write '# key=value' metadata lines, a header, one row per record."""
        if isinstance(f, (str, Path)):
            with open(f, "w", encoding="utf-8") as fh:
                self.write_csv(fh, extra_meta)
                return
        meta = dict(self.meta)
        if extra_meta:
            meta.update(extra_meta)
        meta.setdefault("converged", str(self.converged).lower())
        meta.setdefault("reason", self.reason)
        for k, v in meta.items():
            f.write(f"# {k}={v}\n")
        f.write("iter,bound,atoms_added,status,elapsed_ms\n")
        for r in self.records:
            f.write(f"{r.iteration},{r.bound!r},{r.atoms_added},{r.status},{r.elapsed_ms}\n")


def read_trace(f) -> tuple[list[CgRecord], dict]:
    """Parse a CSV written by :meth:`CgTrace.write_csv`.

    Parsing stops at the first non-record line after the header, so a
    stream carrying a trailing summary (as the CLI prints on stdout)
    still round-trips.
    """
    if isinstance(f, (str, Path)):
        with open(f, "r", encoding="utf-8") as fh:
            return read_trace(fh)
    meta: dict = {}
    records: list[CgRecord] = []
    header_seen = False
    for line in f:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k] = v
            continue
        if not header_seen:
            if line != "iter,bound,atoms_added,status,elapsed_ms":
                raise ValueError(f"unexpected trace header {line!r}")
            header_seen = True
            continue
        try:
            it, bound, added, status, ms = line.split(",")
            records.append(CgRecord(int(it), float(bound), int(added), status, int(ms)))
        except ValueError:
            break
    if not header_seen:
        raise ValueError("not a trace CSV: missing header line")
    return records, meta


@dataclass
class MasterSolution:
    """Optimal data of one restricted master.

    ``weights`` aligns with the atom set: a float per rank-one atom, a
    length-3 array (g11, g12, g22) per pair atom.  ``mu`` holds the
    equality duals in upper-triangle order.
    """

    status: str
    bound: float | None = None
    y: np.ndarray | None = None
    weights: list | None = None
    mu: np.ndarray | None = None
    raw_status: str = ""


def _solve_master(prob: SdpProblem, atoms: AtomSet, *, feas_tol: float = 1e-8,
                  backend: str | None = None, prefer_ipm: bool = True) -> MasterSolution:
    if len(atoms) == 0:
        raise ValueError("master needs a nonempty atom set")
    n = prob.n
    if atoms.n != n:
        raise ValueError(f"atom dimension {atoms.n} != problem dimension {n}")
    model = conic.ConicModel("max")
    model.prefer_ipm = prefer_ipm
    iu, ju = tri_pairs(n)
    rows = model.new_eq_rows(prob.C[iu, ju])
    y_vars = model.add_vars(prob.m, obj=prob.b)
    for t, a in enumerate(prob.A):
        nz = np.nonzero(a[iu, ju])[0]
        model.eq_entries(nz, np.full(nz.size, y_vars[t]), a[iu, ju][nz])
    slots = []
    for atom in atoms:
        if isinstance(atom, RankOneAtom):
            w = model.add_var(lb=0.0)
            i, j, v = atom.outer_entries()
            r = i * (2 * n - i + 1) // 2 + (j - i)
            model.eq_entries(r, np.full(r.size, w), v)
            slots.append(w)
        else:
            g = [model.add_var(), model.add_var(), model.add_var()]
            for which in range(3):
                i, j, v = atom.outer_entries(which)
                r = i * (2 * n - i + 1) // 2 + (j - i)
                model.eq_entries(r, np.full(r.size, g[which]), v)
            model.add_psd2(*g)
            slots.append(g)
    del rows
    sol = conic.solve(model, feas_tol=feas_tol, backend=backend)
    if sol.status != conic.OPTIMAL:
        return MasterSolution(status=sol.status, raw_status=sol.raw_status)
    weights = [float(sol.x[s]) if isinstance(s, int) else sol.x[s].copy() for s in slots]
    return MasterSolution(status=conic.OPTIMAL, bound=float(sol.obj),
                          y=sol.x[y_vars].copy(), weights=weights,
                          mu=sol.dual_eq.copy(), raw_status=sol.raw_status)


def solve_master_lp(prob: SdpProblem, atoms: AtomSet, **kw) -> MasterSolution:
    """Restricted master over rank-one atoms only (an LP)."""
    if atoms.n_pairs:
        raise ValueError("LP master accepts rank-one atoms only")
    return _solve_master(prob, atoms, **kw)


def solve_master_socp(prob: SdpProblem, atoms: AtomSet, **kw) -> MasterSolution:
    """Restricted master allowing pair atoms (an SOCP)."""
    return _solve_master(prob, atoms, **kw)


def assemble_dual_matrix(mu) -> np.ndarray:
    """Dual matrix X* from upper-triangle equality duals.

    Off-diagonal duals count each mirrored entry pair once, so they
    split in half across the two positions: X*_ii = mu_ii and
    X*_ij = X*_ji = mu_ij / 2.
    """
    mu = np.asarray(mu, dtype=np.float64)
    n = int((np.sqrt(8 * mu.size + 1) - 1) / 2 + 0.5)
    if n * (n + 1) // 2 != mu.size:
        raise ValueError(f"dual length {mu.size} is not a triangular number")
    iu, ju = tri_pairs(n)
    x = np.zeros((n, n))
    x[iu, ju] = mu / 2.0
    x += x.T
    x[np.arange(n), np.arange(n)] = mu[iu == ju]
    return x


def price_eig(x, mode: str = "lp", k: int = 1, psd_tol: float = 1e-8) -> list:
    """Atoms from the most negative eigenvectors of the dual matrix.

    LP mode returns up to ``k`` rank-one atoms.  SOCP mode returns up
    to ``k`` pairs of consecutive negative eigenvectors, falling back
    to a single rank-one atom when only one negative eigenvalue
    remains.  Returns [] when x is psd to within the tolerance.
    """
    x = as_symmetric(x)
    w, v = np.linalg.eigh(x)
    neg = np.nonzero(w < -psd_tol * max(1.0, float(np.linalg.norm(x))))[0]
    out: list = []
    if mode == "lp":
        for i in neg[:k]:
            out.append(RankOneAtom.from_dense(v[:, i]))
    elif mode == "socp":
        pos = 0
        while len(out) < k and pos < neg.size:
            if pos + 1 < neg.size:
                out.append(PairAtom.from_dense(v[:, neg[pos]], v[:, neg[pos + 1]]))
                pos += 2
            else:
                out.append(RankOneAtom.from_dense(v[:, neg[pos]]))
                pos += 1
    else:
        raise ValueError(f"mode must be 'lp' or 'socp', got {mode!r}")
    return out


def _certificate(prob: SdpProblem, ms: MasterSolution, atoms: AtomSet) -> dict:
    """Reconstruct the atom combination and compare against C - sum y A."""
    target = prob.C - sum(y * a for y, a in zip(ms.y, prob.A)) if prob.m \
        else prob.C.copy()
    rec = np.zeros_like(target)
    for atom, w in zip(atoms, ms.weights):
        if isinstance(atom, RankOneAtom):
            u = atom.dense()
            rec += w * np.outer(u, u)
        else:
            v = atom.dense()
            g = np.array([[w[0], w[1]], [w[1], w[2]]])
            rec += v @ g @ v.T
    resid = frob(target - rec) / max(1.0, frob(prob.C))
    min_eig = float(np.linalg.eigvalsh(rec)[0])
    return {
        "residual": resid,
        "reconstruction_min_eig": min_eig,
        "ok": bool(resid <= 1e-6 and min_eig >= -1e-7 * max(1.0, frob(rec))),
    }


def run(prob: SdpProblem, config: CgConfig | None = None,
        atoms: AtomSet | None = None) -> CgTrace:
    """Column-generation loop; returns the bound trace.

    Starts from ``atoms`` (default gen_U2 for lp mode, gen_V2 for
    socp), alternates master solves with pricing rounds, and stops on:
    a psd dual (``sdp_tight``: the bound is the SDP value), pricing
    that yields nothing new (``stalled`` for eig, ``saturated`` once a
    whole triples cycle produces no violation), ``max_iters``,
    ``time_limit``, improvement below ``improvement_tol``, or a solver
    failure.  The trace has one record per master solve, so at most
    ``max_iters + 1`` records.
    """
    config = (config or CgConfig()).validated()
    if atoms is None:
        atoms = gen_U2(prob.n) if config.mode == "lp" else gen_V2(prob.n)
    cursor = U3Cursor(prob.n)
    trace = CgTrace(meta={"mode": config.mode, "pricing": config.pricing})
    t0 = time.perf_counter()
    added = 0
    last_ms = None

    for it in range(config.max_iters + 1):
        ms = _solve_master(prob, atoms, feas_tol=config.feas_tol, backend=config.backend)
        elapsed = int(1000 * (time.perf_counter() - t0))
        if ms.status != conic.OPTIMAL:
            if ms.status == conic.INFEASIBLE:
                raise conic.ConicError(_INIT_INFEASIBLE_MSG if it == 0 else
                                       "master became infeasible after adding atoms; "
                                       "this cannot happen and indicates a solver failure")
            trace.records.append(CgRecord(it, np.nan, added, ms.status, elapsed))
            trace.reason = f"solver_{ms.status}"
            return trace
        last_ms = ms
        trace.records.append(CgRecord(it, ms.bound, added, ms.status, elapsed, y=ms.y))

        x = assemble_dual_matrix(ms.mu)
        wmin = float(np.linalg.eigvalsh(x)[0])
        if wmin >= -config.psd_tol * max(1.0, frob(x)):
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
            fresh = price_eig(x, config.mode, config.cuts_per_iter, config.psd_tol)
            added = atoms.extend(fresh)
            if added == 0:
                trace.converged = not fresh
                trace.reason = "sdp_tight" if not fresh else "stalled"
                break
        else:
            added, span = 0, 0
            while added == 0 and span < cursor.length:
                fresh, scanned = scan_triples(x, cursor, config.t1, config.t2, config.psd_tol)
                span += scanned
                added = atoms.extend(fresh)
            if added == 0:
                trace.converged = True
                trace.reason = "saturated"
                break

    if last_ms is not None:
        trace.certificate = _certificate(prob, last_ms, atoms)
    return trace


def random_spectrahedron(n: int, seed: int = 0) -> SdpProblem:
    """Demo instance: maximize y1 + y2 over {y : I - y1 E - y2 F psd}.

    E and F are independent symmetric matrices with standard normal
    entries (symmetrized), drawn from the seeded generator.
    """
    rng = np.random.default_rng(seed)
    e = as_symmetric(rng.standard_normal((n, n)))
    f = as_symmetric(rng.standard_normal((n, n)))
    return SdpProblem(C=np.eye(n), A=[e, f], b=np.array([1.0, 1.0]))


def load_sdp(f) -> SdpProblem:
    """Read 'm n', then C as an n x n block, then m blocks 'b_i' + A_i."""
    if isinstance(f, (str, Path)):
        with open(f, "r", encoding="utf-8") as fh:
            return load_sdp(fh)
    tokens: list[str] = []
    for line in f:
        tokens.extend(line.split("#", 1)[0].split())
    if len(tokens) < 2:
        raise ValueError("sdp file must start with 'm n'")
    try:
        m, n = int(tokens[0]), int(tokens[1])
    except ValueError:
        raise ValueError(f"bad sdp header {tokens[:2]}") from None
    if m < 0 or n < 1:
        raise ValueError(f"bad sdp sizes m={m}, n={n}")
    need = 2 + n * n + m * (1 + n * n)
    if len(tokens) != need:
        raise ValueError(f"expected {need} values for m={m}, n={n}, got {len(tokens)}")
    vals = iter(tokens[2:])

    def block():
        return np.array([float(next(vals)) for _ in range(n * n)]).reshape(n, n)

    c = block()
    bs, mats = [], []
    for _ in range(m):
        bs.append(float(next(vals)))
        mats.append(block())
    return SdpProblem(C=c, A=mats, b=np.array(bs) if m else np.zeros(0))


def dump_sdp(prob: SdpProblem, f):
    """Write the format read by :func:`load_sdp`."""
    if isinstance(f, (str, Path)):
        with open(f, "w", encoding="utf-8") as fh:
            dump_sdp(prob, fh)
            return
    f.write(f"{prob.m} {prob.n}\n")

    def block(a):
        for row in a:
            f.write(" ".join(format(v, ".17g") for v in row) + "\n")

    block(prob.C)
    for bi, ai in zip(prob.b, prob.A):
        f.write(f"{bi:.17g}\n")
        block(ai)
