import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from batchdenoise.bandwidth import (
    EPS_FRACTION,
    PsoParams,
    allocation_violations,
    equal_allocation,
    evaluate_allocation,
    project_feasible,
    pso_optimize,
)
from batchdenoise.model import generation_budgets, quality
from batchdenoise.scheduler import stacking

from conftest import SOLO, make_scenario

SMALL = PsoParams(swarm_size=12, iterations=15, seed=3)


def test_equal_allocation():
    x = equal_allocation(20, 40_000.0)
    assert np.all(x == 2000.0) and x.sum() == 40_000.0
    assert equal_allocation(1, 40_000.0).tolist() == [40_000.0]
    with pytest.raises(ValueError):
        equal_allocation(0, 1.0)


def test_projection_examples():
    B = 40_000.0
    eps = EPS_FRACTION * B
    assert project_feasible([1000.0, 2000.0], B).tolist() == [1000.0, 2000.0]
    np.testing.assert_allclose(project_feasible([30_000.0, 30_000.0], B), [20_000.0, 20_000.0])
    got = project_feasible([-5.0, 50_000.0], B)
    # clamp to (eps, B), then shrink only the free entry so the sum hits B
    assert got[0] == eps
    assert got[1] == pytest.approx(B - eps, abs=1e-9)
    assert got.sum() <= B


@settings(max_examples=300)
@given(
    st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40),
    st.floats(1.0, 1e7),
)
def test_projection_always_feasible(raw, B):
    x = project_feasible(raw, B)
    assert allocation_violations(x, B) == []


def test_evaluate_single_service_chain():
    sc = make_scenario([10.0], [8.0])
    # D_ct = 24576 / (40000 * 8) = 0.0768 s, budget 9.9232 s, 9.9232 / 0.3783 = 26.2 -> 26 steps
    assert evaluate_allocation(sc, [40_000.0]) == quality(26, sc.quality_model)


def test_evaluate_starved_links_are_outages():
    sc = make_scenario([5.0, 6.0], content_size=1e9)
    eps = EPS_FRACTION * sc.total_bandwidth
    assert evaluate_allocation(sc, [eps, eps]) == sc.quality_model.q_outage


def test_evaluate_matches_full_stacking():
    rng = np.random.default_rng(11)
    sc = make_scenario(rng.uniform(2, 20, 12), rng.uniform(5, 10, 12))
    alloc = project_feasible(rng.uniform(0, 8000, 12), sc.total_bandwidth)
    _, q, _ = stacking(sc, generation_budgets(sc, alloc))
    assert evaluate_allocation(sc, alloc) == q


@pytest.mark.parametrize("seed", range(10))
def test_more_bandwidth_never_hurts(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 15))
    sc = make_scenario(rng.uniform(1, 15, K), rng.uniform(5, 10, K))
    alloc = rng.dirichlet(np.ones(K)) * sc.total_bandwidth / 2
    for scheduler in ("stacking", "single_instance", "greedy"):
        assert evaluate_allocation(sc, 2 * alloc, scheduler) <= evaluate_allocation(sc, alloc, scheduler)


def test_pso_params_validation():
    for bad in (dict(swarm_size=1), dict(iterations=-1), dict(inertia=1.0), dict(c1=0.0)):
        with pytest.raises(ValueError):
            PsoParams(**bad)


def test_pso_single_service_takes_everything():
    sc = make_scenario([6.0], [5.0])
    res = pso_optimize(sc, SMALL)
    assert abs(res.allocation[0] - sc.total_bandwidth) <= 0.01 * sc.total_bandwidth


def test_pso_symmetric_services_split_evenly():
    sc = make_scenario([3.0, 3.0], [5.0, 5.0], total_bandwidth=20_000.0)
    res = pso_optimize(sc, PsoParams(swarm_size=20, iterations=40, seed=1))
    a, b = res.allocation
    assert abs(a - b) / sc.total_bandwidth <= 0.05


def test_pso_trace_and_determinism():
    rng = np.random.default_rng(5)
    sc = make_scenario(rng.uniform(1, 20, 10), rng.uniform(5, 10, 10), total_bandwidth=10_000.0)
    r1 = pso_optimize(sc, SMALL)
    r2 = pso_optimize(sc, SMALL)
    assert r1.trace == r2.trace and r1.allocation.tobytes() == r2.allocation.tobytes()
    assert len(r1.trace) == SMALL.iterations + 1
    assert all(b <= a for a, b in zip(r1.trace, r1.trace[1:]))
    assert r1.value == r1.trace[-1] == evaluate_allocation(sc, r1.allocation)


def test_pso_zero_iterations_is_best_initial():
    sc = make_scenario([2.0, 9.0, 15.0], [5.0, 7.0, 9.0], total_bandwidth=5000.0)
    seen = []
    res = pso_optimize(sc, PsoParams(swarm_size=8, iterations=0, seed=2), observer=seen.append)
    assert len(seen) == 1
    values = [evaluate_allocation(sc, row) for row in seen[0]]
    assert res.value == min(values)
    assert res.trace == [min(values)]


def test_pso_only_evaluates_feasible_points_and_beats_equal():
    rng = np.random.default_rng(8)
    sc = make_scenario(rng.uniform(1, 10, 8), rng.uniform(5, 10, 8), total_bandwidth=8000.0)
    seen = []
    res = pso_optimize(sc, SMALL, observer=seen.append)
    for swarm in seen:
        for row in swarm:
            assert allocation_violations(row, sc.total_bandwidth) == []
    equal = equal_allocation(sc.K, sc.total_bandwidth)
    assert seen[0][0].tolist() == equal.tolist()
    assert res.value <= evaluate_allocation(sc, equal)


@pytest.mark.parametrize("scheduler", ["single_instance", "greedy", "fixed_size"])
def test_pso_drives_baseline_objectives(scheduler):
    rng = np.random.default_rng(1)
    sc = make_scenario(rng.uniform(1, 10, 6), rng.uniform(5, 10, 6), total_bandwidth=6000.0)
    res = pso_optimize(sc, SMALL, scheduler=scheduler)
    assert res.value == evaluate_allocation(sc, res.allocation, scheduler)


def test_pso_rejects_unknown_scheduler():
    with pytest.raises(ValueError):
        pso_optimize(make_scenario([1.0]), SMALL, scheduler="nope")
