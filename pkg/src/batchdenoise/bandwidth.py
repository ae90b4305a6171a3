"""Bandwidth allocation across services by particle swarm optimization.

The objective of an allocation is the mean quality the chosen scheduler
achieves once each service's transmission time has been deducted from its
deadline. Positions are repaired onto ``{eps <= B_k <= B, sum B_k <= B}``
before every evaluation, and the equal split is always particle 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from batchdenoise import _kernel
from batchdenoise.baselines import default_fixed_size
from batchdenoise.model import Scenario

EPS_FRACTION = 1e-6

SCHEDULERS = {
    "stacking": _kernel.STACKING,
    "single_instance": _kernel.SINGLE,
    "greedy": _kernel.GREEDY,
    "fixed_size": _kernel.FIXED,
}


@dataclass(frozen=True)
class PsoParams:
    swarm_size: int = 50
    iterations: int = 100
    inertia: float = 0.7
    c1: float = 1.5
    c2: float = 1.5
    velocity_clamp: float = 0.2  # fraction of total bandwidth
    seed: int = 0

    def __post_init__(self) -> None:
        if self.swarm_size < 2:
            raise ValueError("pso.swarm_size must be >= 2")
        if self.iterations < 0:
            raise ValueError("pso.iterations must be >= 0")
        if not 0 < self.inertia < 1:
            raise ValueError("pso.inertia must be in (0, 1)")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("pso.c1 and pso.c2 must be > 0")
        if not (self.velocity_clamp > 0):
            raise ValueError("pso.velocity_clamp must be > 0")


@dataclass(frozen=True)
class PsoResult:
    allocation: np.ndarray
    value: float
    trace: list[float]  # global-best mean FID after init (index 0) and each iteration


def equal_allocation(K: int, B: float) -> np.ndarray:
    if K < 1:
        raise ValueError("need at least one service")
    if not (B > 0):
        raise ValueError("total bandwidth must be > 0")
    return np.full(K, B / K)


def project_feasible(raw: Sequence[float], B: float) -> np.ndarray:
    """Clamp to ``[eps, B]`` and shrink proportionally if the sum exceeds ``B``.

    Entries pinned at the floor stay there; only the free ones are rescaled,
    so the result never dips below ``eps`` and never sums above ``B``.
    """
    return project_rows(np.asarray(raw, dtype=float)[None, :], B)[0]


def project_rows(raw: np.ndarray, B: float) -> np.ndarray:
    """Row-wise :func:`project_feasible` for a whole swarm."""
    if not (B > 0):
        raise ValueError("total bandwidth must be > 0")
    eps = EPS_FRACTION * B
    x = np.clip(np.asarray(raw, dtype=float), eps, B)
    for _ in range(x.shape[1] + 1):
        over = x.sum(axis=1) > B
        if not over.any():
            break
        free = x > eps
        room = B - eps * np.count_nonzero(~free, axis=1)
        free_sum = np.where(free, x, 0.0).sum(axis=1)
        scale = np.where(over, room / np.where(free_sum > 0, free_sum, 1.0), 1.0)
        x = np.maximum(np.where(free, x * scale[:, None], x), eps)
    # rounding can leave a sum a few ulps above B
    for i in np.flatnonzero(x.sum(axis=1) > B):
        row = x[i]
        while row.sum() > B:
            j = int(np.argmax(row))
            row[j] = max(eps, row[j] - (row.sum() - B) - np.spacing(B))
    return x


def allocation_violations(alloc: Sequence[float], B: float) -> list[str]:
    x = np.asarray(alloc, dtype=float)
    eps = EPS_FRACTION * B
    out = []
    if np.any(x < eps):
        out.append(f"entry below floor {eps}")
    if np.any(x > B):
        out.append("entry above total bandwidth")
    if x.sum() > B:
        out.append(f"sum {x.sum()} exceeds total bandwidth {B}")
    return out


def budgets_for(scenario: Scenario, allocations: np.ndarray) -> np.ndarray:
    """Generation budgets for one allocation (1-D) or a swarm of them (2-D)."""
    x = np.asarray(allocations, dtype=float)
    return scenario.deadlines - scenario.content_size / (x * scenario.efficiencies)


def _objective(scenario: Scenario, scheduler: str, size: Optional[int]):
    if scheduler not in SCHEDULERS:
        raise ValueError(f"unknown scheduler {scheduler!r}; pick from {sorted(SCHEDULERS)}")
    mode = SCHEDULERS[scheduler]
    if scheduler == "fixed_size" and size is None:
        size = default_fixed_size(scenario.K)

    def evaluate(rows: np.ndarray) -> np.ndarray:
        return _kernel.evaluate_rows(scenario, budgets_for(scenario, rows), mode, size or 0)

    return evaluate


def evaluate_allocation(
    scenario: Scenario,
    alloc: Sequence[float],
    scheduler: str = "stacking",
    size: Optional[int] = None,
) -> float:
    """Mean FID the scheduler achieves under this bandwidth split."""
    rows = np.asarray(alloc, dtype=float)[None, :]
    return float(_objective(scenario, scheduler, size)(rows)[0])


def pso_optimize(
    scenario: Scenario,
    params: PsoParams = PsoParams(),
    scheduler: str = "stacking",
    size: Optional[int] = None,
    observer: Optional[Callable[[np.ndarray], None]] = None,
) -> PsoResult:
    """Global-best PSO over the bandwidth split.

    ``observer`` (if given) sees every projected swarm right before it is
    evaluated. Deterministic for a fixed ``params.seed``.
    """
    evaluate = _objective(scenario, scheduler, size)
    rng = np.random.default_rng(params.seed)
    K, B = scenario.K, scenario.total_bandwidth
    P = params.swarm_size
    vmax = params.velocity_clamp * B

    x = rng.uniform(0.0, B, size=(P, K))
    x[0] = equal_allocation(K, B)
    x = project_rows(x, B)
    v = rng.uniform(-vmax, vmax, size=(P, K))
    if observer is not None:
        observer(x)
    f = evaluate(x)
    pbest, pbest_f = x.copy(), f.copy()
    i = int(np.argmin(pbest_f))
    gbest, gbest_f = pbest[i].copy(), float(pbest_f[i])
    trace = [gbest_f]

    for _ in range(params.iterations):
        r1 = rng.random((P, K))
        r2 = rng.random((P, K))
        v = params.inertia * v + params.c1 * r1 * (pbest - x) + params.c2 * r2 * (gbest - x)
        v = np.clip(v, -vmax, vmax)
        x = project_rows(x + v, B)
        if observer is not None:
            observer(x)
        f = evaluate(x)
        better = f < pbest_f
        pbest[better] = x[better]
        pbest_f[better] = f[better]
        i = int(np.argmin(pbest_f))
        if pbest_f[i] < gbest_f:
            gbest, gbest_f = pbest[i].copy(), float(pbest_f[i])
        trace.append(gbest_f)

    return PsoResult(allocation=gbest, value=gbest_f, trace=trace)
