"""Tests for the conic-solver layer: statuses, duals, both backends."""

import io

import numpy as np
import pytest

from conecg.conic import (
    INFEASIBLE,
    NUMERICAL_FAILURE,
    OPTIMAL,
    UNBOUNDED,
    ConicError,
    ConicModel,
    resolve_backend,
    solve,
)

BACKENDS = ["highs", "clarabel"]


def knapsack_model():
    """max 3a + 2b s.t. a + b <= 4, 0 <= a <= 3, 0 <= b <= 3."""
    m = ConicModel("max")
    a = m.add_var(obj=3.0, lb=0.0)
    b = m.add_var(obj=2.0, lb=0.0)
    m.add_ineq([a], [-1.0], -3.0)   # a <= 3
    m.add_ineq([b], [-1.0], -3.0)   # b <= 3
    m.add_ineq([a, b], [-1.0, -1.0], -4.0)  # a + b <= 4
    return m, a, b


@pytest.mark.parametrize("backend", BACKENDS)
def test_lp_optimum_and_duals(backend):
    m, a, b = knapsack_model()
    sol = solve(m, backend=backend)
    assert sol.status == OPTIMAL
    assert sol.obj == pytest.approx(11.0, abs=1e-7)
    assert sol.x[a] == pytest.approx(3.0, abs=1e-7)
    assert sol.x[b] == pytest.approx(1.0, abs=1e-7)
    # dual_ineq is >= 0 in both senses; binding rows 0 and 2 carry
    # marginal value 1 and 2 resp. (d obj / d rhs in the model's sense).
    assert sol.dual_ineq[1] == pytest.approx(0.0, abs=1e-7)
    assert sol.dual_ineq[0] == pytest.approx(1.0, abs=1e-7)
    assert sol.dual_ineq[2] == pytest.approx(2.0, abs=1e-7)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("sense", ["min", "max"])
def test_eq_dual_sign_convention(backend, sense):
    # sense-invariant contract: dual_eq = d(obj)/d(rhs) in the model's
    # own sense. min x s.t. x = c gives +1; max -x s.t. x = c gives -1.
    m = ConicModel(sense)
    x = m.add_var(obj=1.0 if sense == "min" else -1.0)
    m.add_eq([x], [1.0], 5.0)
    sol = solve(m, backend=backend)
    assert sol.status == OPTIMAL
    assert sol.x[x] == pytest.approx(5.0, abs=1e-7)
    want = 1.0 if sense == "min" else -1.0
    assert sol.dual_eq[0] == pytest.approx(want, abs=1e-6)


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible(backend):
    m = ConicModel("min")
    x = m.add_var(obj=1.0, lb=0.0)
    m.add_ineq([x], [-1.0], 1.0)  # -x >= 1 with x >= 0
    sol = solve(m, backend=backend)
    assert sol.status == INFEASIBLE


@pytest.mark.parametrize("backend", BACKENDS)
def test_unbounded(backend):
    m = ConicModel("max")
    x = m.add_var(obj=1.0, lb=0.0)
    sol = solve(m, backend=backend)
    assert sol.status == UNBOUNDED


def test_psd2_socp_min_trace():
    # min a1 + a3 s.t. [[a1, 2], [2, a3]] psd, a1 <= 8.
    # optimum a1 = a3 = 2 by am-gm (a1*a3 >= 4).
    m = ConicModel("min")
    a1 = m.add_var(obj=1.0)
    a2 = m.add_var()
    a3 = m.add_var(obj=1.0)
    m.add_eq([a2], [1.0], 2.0)
    m.add_ineq([a1], [-1.0], -8.0)
    m.add_psd2(a1, a2, a3)
    sol = solve(m)
    assert sol.status == OPTIMAL
    assert sol.obj == pytest.approx(4.0, abs=1e-6)
    assert sol.x[a1] * sol.x[a3] >= 4.0 - 1e-6


def test_psd2_forces_diagonal_nonneg():
    m = ConicModel("min")
    a1 = m.add_var(obj=1.0)
    a2 = m.add_var()
    a3 = m.add_var()
    m.add_eq([a2], [1.0], 0.0)
    m.add_eq([a3], [1.0], 1.0)
    m.add_psd2(a1, a2, a3)
    sol = solve(m)
    assert sol.status == OPTIMAL
    assert sol.obj == pytest.approx(0.0, abs=1e-6)


def test_highs_rejects_psd2():
    m = ConicModel("min")
    a1 = m.add_var(obj=1.0)
    a2 = m.add_var()
    a3 = m.add_var()
    m.add_psd2(a1, a2, a3)
    with pytest.raises(ConicError):
        solve(m, backend="highs")


def test_resolve_backend_env_and_auto(monkeypatch):
    m = ConicModel("min")
    m.add_var(obj=1.0, lb=0.0)
    monkeypatch.delenv("CONECG_BACKEND", raising=False)
    assert resolve_backend(m, None) == "highs"
    m.prefer_ipm = True
    assert resolve_backend(m, None) == "clarabel"
    monkeypatch.setenv("CONECG_BACKEND", "clarabel")
    m.prefer_ipm = False
    assert resolve_backend(m, None) == "clarabel"
    # explicit request beats the env var
    assert resolve_backend(m, "highs") == "highs"
    monkeypatch.setenv("CONECG_BACKEND", "nonsense")
    with pytest.raises(ConicError):
        resolve_backend(m, None)


def test_new_rows_and_bulk_entries():
    m = ConicModel("max")
    x = m.add_vars(3, obj=1.0, lb=0.0)
    rows = m.new_eq_rows(np.array([1.0, 2.0]))
    m.eq_entries([rows[0], rows[0], rows[1]], [x[0], x[1], x[2]],
                 [1.0, 1.0, 1.0])
    sol = solve(m)
    assert sol.status == OPTIMAL
    assert sol.obj == pytest.approx(3.0, abs=1e-7)


def test_duplicate_coo_entries_sum():
    m = ConicModel("min")
    x = m.add_var(obj=1.0, lb=0.0)
    r = m.new_eq_rows(np.array([6.0]))
    m.eq_entries([r[0], r[0]], [x, x], [1.0, 2.0])  # 3x = 6
    sol = solve(m)
    assert sol.x[x] == pytest.approx(2.0, abs=1e-8)


def test_free_variables_supported():
    m = ConicModel("min")
    x = m.add_var(obj=1.0)  # free
    m.add_ineq([x], [1.0], -7.0)
    sol = solve(m)
    assert sol.obj == pytest.approx(-7.0, abs=1e-7)


def test_dump_is_readable():
    m, _, _ = knapsack_model()
    buf = io.StringIO()
    m.dump(buf)
    text = buf.getvalue()
    assert "max" in text and "ineq" in text
