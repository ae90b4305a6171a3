"""Comparison schedulers and a brute-force oracle for tiny instances.

All baselines order services by deadline (budget, then id, break ties) and
stop a service before it would overrun, exactly like the STACKING batch
step does.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Callable, Optional, Sequence

from batchdenoise.model import Scenario, batch_delay, mean_quality
from batchdenoise.scheduler import (
    ActiveServiceState,
    Batch,
    Schedule,
    _initial_states,
    batch_commit,
    build_schedule,
    elapse,
)

ORACLE_MAX_K = 3
ORACLE_MAX_HORIZON = 8


def _run_policy(
    scenario: Scenario, budgets: Sequence[float], width: Callable[[int], int]
) -> Schedule:
    m = scenario.delay_model
    priority = {
        s.id: (s.deadline_tau, float(tb), s.id) for s, tb in zip(scenario.services, budgets)
    }
    states = _initial_states(scenario.ids, budgets)
    steps: dict[int, int] = {}
    batches: list[Batch] = []
    t = prev = 0.0
    while True:
        active, finalized = elapse(states, prev, m)
        steps.update((s.id, s.T_c) for s in finalized)
        if not active:
            break
        active.sort(key=lambda s: priority[s.id])
        X = min(max(width(len(active)), 1), len(active))
        batch, states, finalized = batch_commit(active, X, t, m, index=len(batches) + 1)
        steps.update((s.id, s.T_c) for s in finalized)
        if batch.members:
            batches.append(batch)
            t = t + batch.duration
            prev = batch.duration
        else:
            prev = 0.0
    return build_schedule(scenario.ids, batches, steps)


def single_instance(scenario: Scenario, budgets: Sequence[float]) -> Schedule:
    """One task per batch; the tightest-deadline service runs until it must stop."""
    return _run_policy(scenario, budgets, lambda n: 1)


def greedy_batching(scenario: Scenario, budgets: Sequence[float]) -> Schedule:
    """Every still-active service contributes a step to every batch."""
    return _run_policy(scenario, budgets, lambda n: n)


def default_fixed_size(K: int) -> int:
    return max(1, K // 2)


def fixed_size_batching(
    scenario: Scenario, budgets: Sequence[float], size: Optional[int] = None
) -> Schedule:
    """Batches of the ``size`` tightest-deadline active services (``floor(K/2)`` by default)."""
    if size is None:
        size = default_fixed_size(scenario.K)
    if size < 1:
        raise ValueError("fixed batch size must be >= 1")
    return _run_policy(scenario, budgets, lambda n: min(size, n))


def exhaustive_oracle(
    scenario: Scenario, budgets: Sequence[float], horizon: int = ORACLE_MAX_HORIZON
) -> tuple[Schedule, float]:
    """Best achievable mean quality by enumerating every batch sequence.

    Each batch is any non-empty subset of services, each contributing its
    next step; batches run back to back and a member must finish within its
    budget. Only meant as a test instrument.
    """
    K = scenario.K
    if K > ORACLE_MAX_K:
        raise ValueError(f"oracle supports at most {ORACLE_MAX_K} services, got {K}")
    if not 0 <= horizon <= ORACLE_MAX_HORIZON:
        raise ValueError(f"oracle horizon must be in [0, {ORACLE_MAX_HORIZON}], got {horizon}")
    m, qm = scenario.delay_model, scenario.quality_model
    caps = [float(x) for x in budgets]
    subsets = [
        c for r in range(1, K + 1) for c in itertools.combinations(range(K), r)
    ]

    @lru_cache(maxsize=None)
    def search(T: tuple, n: int, t: float) -> tuple[float, tuple]:
        best = (mean_quality(T, qm), ())
        if n == horizon:
            return best
        for sub in subsets:
            g = batch_delay(len(sub), m)
            if all(t + g <= caps[k] for k in sub):
                nxt = tuple(T[k] + 1 if k in sub else T[k] for k in range(K))
                val, path = search(nxt, n + 1, t + g)
                if val < best[0]:
                    best = (val, (sub,) + path)
        return best

    value, path = search((0,) * K, 0, 0.0)
    ids = scenario.ids
    counts = [0] * K
    batches: list[Batch] = []
    t = 0.0
    for n, sub in enumerate(path, start=1):
        members = []
        for k in sub:
            counts[k] += 1
            members.append((ids[k], counts[k]))
        g = batch_delay(len(sub), m)
        batches.append(Batch(index=n, start=t, members=tuple(members), duration=g))
        t = t + g
    schedule = build_schedule(ids, batches, dict(zip(ids, counts)))
    return schedule, value
