"""Compiled twin of the scheduling loop, used for search and PSO objectives.

Mirrors ``scheduler.stacking_run`` and the baseline policies step for step,
with the same floating-point operations in the same order, but only tracks
per-service step counts. Tests assert bit-identical agreement with the
plain-Python path.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from batchdenoise.model import Scenario, quality

STACKING = 0
SINGLE = 1
GREEDY = 2
FIXED = 3


@njit(cache=True)
def _before(k1, k2, mode, tprime, tau, rank, ids):
    if mode == STACKING:
        if tprime[k1] != tprime[k2]:
            return tprime[k1] < tprime[k2]
        if tau[k1] != tau[k2]:
            return tau[k1] < tau[k2]
        return ids[k1] < ids[k2]
    return rank[k1] < rank[k2]


@njit(cache=True)
def _run(budgets, ids, rank, a, b, mode, t_star, size, steps):
    K = budgets.shape[0]
    tau = budgets.copy()
    solo = a + b
    active = np.ones(K, dtype=np.bool_)
    te = np.zeros(K, dtype=np.int64)
    tprime = np.zeros(K, dtype=np.int64)
    order = np.empty(K, dtype=np.int64)
    for k in range(K):
        steps[k] = 0
    prev = 0.0
    while True:
        n = 0
        for k in range(K):
            if active[k]:
                tau[k] = tau[k] - prev
                e = math.floor(tau[k] / solo)
                if e <= 0:
                    active[k] = False
                else:
                    te[k] = e
                    tprime[k] = steps[k] + e
                    order[n] = k
                    n += 1
        if n == 0:
            break
        # insertion sort keeps ties stable and is fast for small K
        for i in range(1, n):
            cur = order[i]
            j = i - 1
            while j >= 0 and _before(cur, order[j], mode, tprime, tau, rank, ids):
                order[j + 1] = order[j]
                j -= 1
            order[j + 1] = cur

        if mode == STACKING:
            nf = 0
            te_max = 0
            tau_min = 0.0
            for i in range(n):
                k = order[i]
                if tprime[k] <= t_star:
                    if nf == 0 or te[k] > te_max:
                        te_max = te[k]
                    if nf == 0 or tau[k] < tau_min:
                        tau_min = tau[k]
                    nf += 1
            if nf > 0:
                fl = math.floor((tau_min - b * te_max) / (a * te_max))
                X = max(nf, min(n, fl))
            else:
                tp_min = tprime[order[0]]
                for i in range(1, n):
                    if tprime[order[i]] < tp_min:
                        tp_min = tprime[order[i]]
                fl = math.floor(((a + b) * tp_min - b * t_star) / (a * t_star))
                X = min(n, fl)
        elif mode == SINGLE:
            X = 1
        elif mode == GREEDY:
            X = n
        else:
            X = min(size, n)
        X = min(max(X, 1), n)

        nsel = X
        while nsel > 0:
            g = a * nsel + b
            worst = -1
            for i in range(nsel):
                k = order[i]
                if tau[k] < g:
                    if worst == -1:
                        worst = i
                    else:
                        w = order[worst]
                        if tau[k] < tau[w] or (tau[k] == tau[w] and ids[k] < ids[w]):
                            worst = i
            if worst == -1:
                break
            active[order[worst]] = False
            for i in range(worst, nsel - 1):
                order[i] = order[i + 1]
            nsel -= 1
        if nsel == 0:
            prev = 0.0
            continue
        for i in range(nsel):
            steps[order[i]] += 1
        prev = a * nsel + b


@njit(cache=True)
def _mean(steps, qtable):
    total = 0.0
    for k in range(steps.shape[0]):
        total += qtable[steps[k]]
    return total / steps.shape[0]


@njit(cache=True)
def _search(budgets, ids, a, b, ts_max, qtable):
    K = budgets.shape[0]
    steps = np.zeros(K, dtype=np.int64)
    rank = np.zeros(K, dtype=np.int64)
    best_q = np.inf
    best_ts = 1
    for ts in range(1, ts_max + 1):
        _run(budgets, ids, rank, a, b, STACKING, ts, 0, steps)
        q = _mean(steps, qtable)
        if q < best_q:
            best_q = q
            best_ts = ts
    return best_q, best_ts


@njit(cache=True)
def _evaluate_rows(budget_rows, ids, rank, a, b, mode, size, qtable):
    P, K = budget_rows.shape
    out = np.empty(P, dtype=np.float64)
    steps = np.zeros(K, dtype=np.int64)
    solo = a + b
    for p in range(P):
        row = budget_rows[p].copy()
        if mode == STACKING:
            top = row.max()
            ts_max = max(1, math.floor(top / solo))
            out[p] = _search(row, ids, a, b, ts_max, qtable)[0]
        else:
            _run(row, ids, rank, a, b, mode, 0, size, steps)
            out[p] = _mean(steps, qtable)
    return out


def quality_table(scenario: Scenario, max_budget: float) -> np.ndarray:
    m = scenario.delay_model
    top = max(1, math.floor(max(max_budget, 0.0) / (m.a + m.b))) + 2
    return np.array([quality(t, scenario.quality_model) for t in range(top + 1)], dtype=np.float64)


def _ids(scenario: Scenario) -> np.ndarray:
    return np.array(scenario.ids, dtype=np.int64)


def deadline_rank(scenario: Scenario, budgets: np.ndarray) -> np.ndarray:
    """Rank of each service when sorted by (deadline, budget, id)."""
    keys = sorted(
        range(scenario.K),
        key=lambda i: (scenario.services[i].deadline_tau, float(budgets[i]), scenario.services[i].id),
    )
    rank = np.empty(scenario.K, dtype=np.int64)
    for r, i in enumerate(keys):
        rank[i] = r
    return rank


def stacking_search(scenario: Scenario, budgets: np.ndarray) -> tuple[float, int]:
    budgets = np.ascontiguousarray(budgets, dtype=np.float64)
    m = scenario.delay_model
    ts_max = max(1, math.floor(float(budgets.max()) / (m.a + m.b)))
    qtable = quality_table(scenario, float(budgets.max()))
    q, ts = _search(budgets, _ids(scenario), m.a, m.b, ts_max, qtable)
    return float(q), int(ts)


def policy_steps(scenario: Scenario, budgets: np.ndarray, mode: int, size: int = 0, t_star: int = 1) -> np.ndarray:
    budgets = np.ascontiguousarray(budgets, dtype=np.float64)
    m = scenario.delay_model
    steps = np.zeros(scenario.K, dtype=np.int64)
    _run(budgets, _ids(scenario), deadline_rank(scenario, budgets), m.a, m.b, mode, t_star, size, steps)
    return steps


def evaluate_rows(scenario: Scenario, budget_rows: np.ndarray, mode: int, size: int = 0) -> np.ndarray:
    """Mean quality for each row of per-service budgets under one policy.

    The deadline ordering used by the baselines depends only on deadlines,
    with budgets as a tie-break; rows with tied deadlines are ranked per row.
    """
    rows = np.ascontiguousarray(np.atleast_2d(budget_rows), dtype=np.float64)
    m = scenario.delay_model
    qtable = quality_table(scenario, float(rows.max()))
    ids = _ids(scenario)
    deadlines = scenario.deadlines
    if mode == STACKING or len(np.unique(deadlines)) == len(deadlines):
        rank = deadline_rank(scenario, rows[0])
        return _evaluate_rows(rows, ids, rank, m.a, m.b, mode, size, qtable)
    out = np.empty(rows.shape[0])
    for p in range(rows.shape[0]):
        rank = deadline_rank(scenario, rows[p])
        out[p] = _evaluate_rows(rows[p : p + 1], ids, rank, m.a, m.b, mode, size, qtable)[0]
    return out
