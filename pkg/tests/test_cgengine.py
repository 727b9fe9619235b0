"""Tests for the restricted-master solvers and the column-generation loop."""

import io
import math

import numpy as np
import pytest

from conecg.atoms import AtomSet, gen_U2, gen_V2
from conecg.cgengine import (
    CgConfig,
    CgRecord,
    CgTrace,
    SdpProblem,
    assemble_dual_matrix,
    dump_sdp,
    load_sdp,
    price_eig,
    random_spectrahedron,
    read_trace,
    run,
    solve_master_lp,
    solve_master_socp,
)
from conecg.conic import ConicError
from conecg.symmat import eigh, is_psd


def gap22():
    """max y s.t. [[1, y], [y, 4]] psd; optimum 2, dd optimum 1."""
    return SdpProblem(C=np.array([[1.0, 0.0], [0.0, 4.0]]),
                      A=[np.array([[0.0, -1.0], [-1.0, 0.0]])],
                      b=np.array([1.0]))


def test_sdp_problem_validation():
    with pytest.raises(ValueError):
        SdpProblem(C=np.eye(2), A=[np.eye(3)], b=np.array([1.0]))
    with pytest.raises(ValueError):
        SdpProblem(C=np.eye(2), A=[np.eye(2)], b=np.array([1.0, 2.0]))


def test_master_lp_dd_optimum():
    # dd feasibility of [[1,y],[y,4]] requires |y| <= 1
    ms = solve_master_lp(gap22(), gen_U2(2))
    assert ms.status == "optimal"
    assert ms.bound == pytest.approx(1.0, abs=1e-6)


def test_master_socp_sdd_optimum():
    # 2x2 sdd = psd, so the sdd master is exact: y = 2
    ms = solve_master_socp(gap22(), gen_V2(2))
    assert ms.status == "optimal"
    assert ms.bound == pytest.approx(2.0, abs=1e-6)


def test_master_lp_rejects_pair_atoms():
    with pytest.raises(ValueError):
        solve_master_lp(gap22(), gen_V2(2))


def test_dual_matrix_assembly_and_feasibility():
    prob = gap22()
    ms = solve_master_lp(prob, gen_U2(2))
    x = assemble_dual_matrix(ms.mu)
    # unique optimal dual of the dd master
    assert np.allclose(x, [[1.0, -0.5], [-0.5, 0.0]], atol=1e-6)
    # dual feasibility for the sdp: <A_i, X> = b_i
    assert float(np.sum(prob.A[0] * x)) == pytest.approx(1.0, abs=1e-6)


def test_master_weights_reconstruct_slack():
    prob = gap22()
    atoms = gen_U2(2)
    ms = solve_master_lp(prob, atoms)
    rec = np.zeros((2, 2))
    for a, w in zip(atoms, ms.weights):
        u = a.dense()
        rec += w * np.outer(u, u)
    want = prob.C - ms.y[0] * prob.A[0]
    assert np.allclose(rec, want, atol=1e-7)


def test_price_eig_lp_most_negative_direction():
    x = np.diag([1.0, -2.0, 3.0])
    cuts = price_eig(x, "lp", k=2)
    assert len(cuts) == 1  # only one negative eigenvalue
    u = cuts[0].dense()
    assert cuts[0].value(x) == pytest.approx(-2.0, abs=1e-9)
    assert abs(u[1]) == pytest.approx(1.0)


def test_price_eig_socp_pairs():
    x = np.diag([-3.0, -2.0, 5.0])
    cuts = price_eig(x, "socp")
    assert len(cuts) == 1
    v = cuts[0].dense()
    assert v.shape == (3, 2)
    # the pair spans the two most negative eigenvectors
    assert np.allclose(sorted(np.abs(v).sum(axis=0)), [1.0, 1.0])


def test_price_eig_socp_single_negative_falls_back_to_rank_one():
    x = np.diag([1.0, -2.0, 3.0])
    cuts = price_eig(x, "socp")
    assert len(cuts) == 1
    assert cuts[0].dense().ndim == 1


def test_price_eig_psd_no_cut():
    assert price_eig(np.eye(3), "lp") == []


def test_one_eigen_cut_value():
    # adding the most negative eigenvector of the dd dual
    # X* = [[1,-1/2],[-1/2,0]] to U_{2,2} moves the bound to 4 - 3*sqrt(2)/2
    prob = gap22()
    atoms = gen_U2(2)
    ms = solve_master_lp(prob, atoms)
    cuts = price_eig(assemble_dual_matrix(ms.mu), "lp", k=1)
    assert len(cuts) == 1
    atoms.extend(cuts)
    ms2 = solve_master_lp(prob, atoms)
    assert ms2.bound == pytest.approx(4.0 - 3.0 * math.sqrt(2) / 2, abs=1e-6)


def test_run_lp_converges_on_gap22():
    tr = run(gap22(), CgConfig(mode="lp", pricing="eig", max_iters=40))
    b = tr.bounds()
    assert b[0] == pytest.approx(1.0, abs=1e-6)
    # nondecreasing up to interior-point noise
    assert all(b[i + 1] >= b[i] - 1e-7 for i in range(len(b) - 1))
    assert tr.final_bound == pytest.approx(2.0, abs=1e-6)
    assert tr.converged and tr.reason == "sdp_tight"
    assert tr.certificate["ok"]


def test_run_socp_tight_immediately_on_gap22():
    tr = run(gap22(), CgConfig(mode="socp", max_iters=5))
    assert tr.iterations == 0
    assert tr.final_bound == pytest.approx(2.0, abs=1e-6)
    assert tr.reason == "sdp_tight"


def test_run_iterates_stay_feasible():
    prob = random_spectrahedron(8, seed=1)
    tr = run(prob, CgConfig(mode="lp", max_iters=5))
    for rec in tr.records:
        s = prob.C - sum(yi * ai for yi, ai in zip(rec.y, prob.A))
        assert is_psd(s, tol=1e-7)
        assert eigh(s).eigenvalues[0] >= -1e-7


def test_run_respects_max_iters_and_counts():
    tr = run(random_spectrahedron(10, seed=0),
             CgConfig(mode="lp", max_iters=5))
    assert tr.iterations == 5
    assert len(tr.records) == 6
    assert tr.records[0].atoms_added == 0
    assert all(r.atoms_added >= 1 for r in tr.records[1:])
    assert not tr.converged and tr.reason == "max_iters"


def test_run_time_limit():
    tr = run(random_spectrahedron(10, seed=0),
             CgConfig(mode="lp", max_iters=10**6, time_limit_s=1e-9))
    assert tr.reason == "time_limit"
    assert len(tr.records) == 1


def test_run_socp_beats_lp_at_init():
    for seed in (0, 1, 2):
        prob = random_spectrahedron(10, seed=seed)
        lo = run(prob, CgConfig(mode="lp", max_iters=0)).final_bound
        hi = run(prob, CgConfig(mode="socp", max_iters=0)).final_bound
        assert hi >= lo - 1e-7


def test_run_rejects_infeasible_start():
    # zero A_i pins the slack to C itself, which is not dd
    prob = SdpProblem(C=np.array([[1.0, 2.0], [2.0, 1.0]]),
                      A=[np.zeros((2, 2))], b=np.array([0.0]))
    with pytest.raises(ConicError):
        run(prob, CgConfig(mode="lp", max_iters=2))


def test_config_validation():
    with pytest.raises(ValueError):
        CgConfig(mode="sdp").validated()
    with pytest.raises(ValueError):
        CgConfig(pricing="newton").validated()
    with pytest.raises(ValueError):
        CgConfig(max_iters=-1).validated()
    assert CgConfig().validated().t2 == 5000


def test_custom_initial_atoms():
    prob = gap22()
    atoms = AtomSet(2)
    atoms.extend(gen_U2(2))
    tr = run(prob, CgConfig(mode="lp", max_iters=0), atoms=atoms)
    assert tr.final_bound == pytest.approx(1.0, abs=1e-6)


def test_random_spectrahedron_deterministic():
    a = random_spectrahedron(6, seed=42)
    b = random_spectrahedron(6, seed=42)
    assert np.array_equal(a.C, b.C)
    assert all(np.array_equal(x, y) for x, y in zip(a.A, b.A))
    assert np.array_equal(a.b, b.b)
    c = random_spectrahedron(6, seed=43)
    assert not np.array_equal(a.A[0], c.A[0])
    for m in a.A:
        assert np.allclose(m, m.T)


def test_trace_csv_roundtrip():
    recs = [CgRecord(0, 1.0, 0, "optimal", 12),
            CgRecord(1, 1.5, 2, "optimal", 15)]
    tr = CgTrace(records=recs, converged=True, reason="sdp_tight",
                 certificate={}, meta={"instance": "demo"})
    buf = io.StringIO()
    tr.write_csv(buf, extra_meta={"seed": 7})
    text = buf.getvalue()
    assert "# instance=demo" in text
    assert "# seed=7" in text
    assert "iter,bound,atoms_added,status,elapsed_ms" in text
    buf.seek(0)
    recs2, meta = read_trace(buf)
    assert meta["reason"] == "sdp_tight"
    assert len(recs2) == 2
    assert recs2[1].bound == 1.5
    assert recs2[1].atoms_added == 2


def test_trace_csv_repr_bounds_are_exact():
    tr = CgTrace(records=[CgRecord(0, 1.0 / 3.0, 0, "optimal", 1)],
                 converged=False, reason="max_iters", certificate={}, meta={})
    buf = io.StringIO()
    tr.write_csv(buf)
    buf.seek(0)
    recs, _ = read_trace(buf)
    assert recs[0].bound == 1.0 / 3.0  # bit-exact via repr round-trip


def test_sdp_io_roundtrip():
    prob = random_spectrahedron(4, seed=5)
    buf = io.StringIO()
    dump_sdp(prob, buf)
    buf.seek(0)
    again = load_sdp(buf)
    assert np.allclose(prob.C, again.C, atol=1e-15)
    assert all(np.allclose(x, y, atol=1e-15) for x, y in zip(prob.A, again.A))
    assert np.allclose(prob.b, again.b)


def test_sdp_io_rejects_truncated():
    with pytest.raises(ValueError):
        load_sdp(io.StringIO("1 2\n1 0\n0 1\n"))
