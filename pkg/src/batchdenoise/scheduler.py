"""STACKING batch-denoising scheduler.

A run alternates three steps until no service can afford another step:

* cluster: charge the elapsed batch time to every active service, drop the
  ones that cannot fit one more solo step, sort the rest by the number of
  steps they could still reach (``T_prime``) and split off the tight
  cluster ``F = {T_prime <= T_star}``;
* pack: choose the batch size ``X_n`` from the tight cluster's slack;
* batch: take the first ``X_n`` services, evict any whose remaining budget
  cannot cover the batch, and advance every survivor by one step.

:func:`stacking` searches ``T_star`` over ``1..T_star_max``. The search
uses the compiled kernel in :mod:`batchdenoise._kernel`; the winning
``T_star`` is then replayed through the plain-Python path below so the
returned :class:`Schedule` is built by the readable implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from batchdenoise import _kernel
from batchdenoise.model import DelayModel, Scenario, batch_delay, mean_quality

# Absolute slack (seconds) for time comparisons in validation; covers
# accumulated rounding of back-to-back start times.
TIME_TOL = 1e-9


class NoCompletion(LookupError):
    """Raised when asking for the completion time of a service in outage."""


@dataclass(frozen=True)
class Batch:
    index: int
    start: float
    members: tuple[tuple[int, int], ...]  # (service id, step index)
    duration: float

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class Schedule:
    batches: tuple[Batch, ...]
    completed_steps: dict[int, int]
    completion_time: dict[int, Optional[float]]
    outage: dict[int, bool]

    @property
    def steps(self) -> list[int]:
        return list(self.completed_steps.values())

    def to_dict(self) -> dict:
        return {
            "batches": [
                {
                    "index": b.index,
                    "start": b.start,
                    "duration": b.duration,
                    "members": [list(m) for m in b.members],
                }
                for b in self.batches
            ],
            "services": [
                {
                    "id": k,
                    "completed_steps": self.completed_steps[k],
                    "completion_time": self.completion_time[k],
                    "outage": self.outage[k],
                }
                for k in self.completed_steps
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        batches = tuple(
            Batch(
                index=int(b["index"]),
                start=float(b["start"]),
                members=tuple((int(k), int(s)) for k, s in b["members"]),
                duration=float(b["duration"]),
            )
            for b in d["batches"]
        )
        services = d["services"]
        return cls(
            batches=batches,
            completed_steps={int(s["id"]): int(s["completed_steps"]) for s in services},
            completion_time={
                int(s["id"]): None if s["completion_time"] is None else float(s["completion_time"])
                for s in services
            },
            outage={int(s["id"]): bool(s["outage"]) for s in services},
        )


@dataclass
class ActiveServiceState:
    """Per-service bookkeeping while a run is in progress."""

    id: int
    T_c: int = 0
    tau_prime: float = 0.0
    T_e: int = 0
    T_prime: int = 0


def _sort_key(s: ActiveServiceState) -> tuple:
    return (s.T_prime, s.tau_prime, s.id)


def elapse(
    states: Iterable[ActiveServiceState], prev_batch_duration: float, m: DelayModel
) -> tuple[list[ActiveServiceState], list[ActiveServiceState]]:
    """Charge elapsed time to every state; split into (still active, finalized).

    A state is finalized once its remaining budget no longer covers a solo
    step. Input order is preserved.
    """
    solo = m.a + m.b
    active, finalized = [], []
    for s in states:
        tau = s.tau_prime - prev_batch_duration
        t_e = max(0, math.floor(tau / solo))
        new = replace(s, tau_prime=tau, T_e=t_e, T_prime=s.T_c + t_e)
        (active if t_e > 0 else finalized).append(new)
    return active, finalized


def cluster(
    states: Iterable[ActiveServiceState],
    prev_batch_duration: float,
    T_star: int,
    m: DelayModel,
) -> tuple[list[ActiveServiceState], list[ActiveServiceState], list[ActiveServiceState]]:
    """Returns ``(active sorted by T_prime, tight cluster F, finalized)``."""
    if T_star < 1:
        raise ValueError("T_star must be >= 1")
    active, finalized = elapse(states, prev_batch_duration, m)
    active.sort(key=_sort_key)
    tight = [s for s in active if s.T_prime <= T_star]
    return active, tight, finalized


def pack_size(
    states: Sequence[ActiveServiceState],
    F: Sequence[ActiveServiceState],
    T_star: int,
    m: DelayModel,
) -> int:
    """Batch size for the next batch.

    With a non-empty tight cluster, the batch is widened past ``|F|`` only as
    far as every member of ``F`` keeps its reachable step count. Otherwise
    the batch is as wide as possible while everyone can still reach
    ``T_star`` steps.
    """
    n = len(states)
    if n == 0:
        raise ValueError("pack_size needs a non-empty active set")
    a, b = m.a, m.b
    if F:
        te_max = max(s.T_e for s in F)
        tau_min = min(s.tau_prime for s in F)
        fl = math.floor((tau_min - b * te_max) / (a * te_max))
        X = max(len(F), min(n, fl))
    else:
        tp_min = min(s.T_prime for s in states)
        fl = math.floor(((a + b) * tp_min - b * T_star) / (a * T_star))
        X = min(n, fl)
    return min(max(X, 1), n)


def batch_commit(
    states: Sequence[ActiveServiceState],
    X_n: int,
    t_n: float,
    m: DelayModel,
    index: int = 1,
) -> tuple[Batch, list[ActiveServiceState], list[ActiveServiceState]]:
    """Run one batch over the first ``X_n`` states.

    Selected services whose remaining budget is below the batch latency are
    evicted one at a time (tightest budget first), shrinking the batch until
    everyone left fits. Evicted services are finalized with the steps they
    already have.

    Returns ``(batch, remaining active states, finalized states)``. The batch
    is empty (duration 0) when every candidate was evicted.
    """
    if not 1 <= X_n <= len(states):
        raise ValueError(f"X_n={X_n} out of range for {len(states)} active states")
    selected = list(states[:X_n])
    rest = list(states[X_n:])
    finalized: list[ActiveServiceState] = []
    while selected:
        g = batch_delay(len(selected), m)
        late = [s for s in selected if s.tau_prime < g]
        if not late:
            break
        worst = min(late, key=lambda s: (s.tau_prime, s.id))
        selected.remove(worst)
        finalized.append(worst)

    members = []
    survivors = []
    for s in selected:
        t_c = s.T_c + 1
        survivors.append(replace(s, T_c=t_c, T_prime=t_c + s.T_e))
        members.append((s.id, t_c))
    batch = Batch(index=index, start=t_n, members=tuple(members), duration=batch_delay(len(members), m))
    return batch, survivors + rest, finalized


def _initial_states(ids: Sequence[int], budgets: Sequence[float]) -> list[ActiveServiceState]:
    if len(ids) != len(budgets):
        raise ValueError(f"need {len(ids)} budgets, got {len(budgets)}")
    return [ActiveServiceState(id=k, tau_prime=float(tb)) for k, tb in zip(ids, budgets)]


def build_schedule(ids: Sequence[int], batches: list[Batch], steps: dict[int, int]) -> Schedule:
    """Assemble a :class:`Schedule` and derive completion times from the batches."""
    done_at: dict[tuple[int, int], float] = {}
    for b in batches:
        for member in b.members:
            done_at[member] = b.start + b.duration
    completed = {k: steps.get(k, 0) for k in ids}
    return Schedule(
        batches=tuple(batches),
        completed_steps=completed,
        completion_time={k: done_at[(k, t)] if t > 0 else None for k, t in completed.items()},
        outage={k: t == 0 for k, t in completed.items()},
    )


def stacking_run(
    scenario: Scenario, budgets: Sequence[float], T_star: int
) -> tuple[Schedule, float]:
    """One clustering-packing-batching pass for a fixed ``T_star``.

    Batches run back to back from ``t = 0``. Returns the schedule and the
    mean quality over all services (outages count at ``q_outage``).
    """
    if T_star < 1:
        raise ValueError("T_star must be >= 1")
    m = scenario.delay_model
    states = _initial_states(scenario.ids, budgets)
    steps: dict[int, int] = {}
    batches: list[Batch] = []
    t = 0.0
    prev = 0.0
    while True:
        active, tight, finalized = cluster(states, prev, T_star, m)
        steps.update((s.id, s.T_c) for s in finalized)
        if not active:
            break
        X = pack_size(active, tight, T_star, m)
        batch, states, finalized = batch_commit(active, X, t, m, index=len(batches) + 1)
        steps.update((s.id, s.T_c) for s in finalized)
        if batch.members:
            batches.append(batch)
            t = t + batch.duration
            prev = batch.duration
        else:
            prev = 0.0
    schedule = build_schedule(scenario.ids, batches, steps)
    return schedule, mean_quality(schedule.steps, scenario.quality_model)


def t_star_max(budgets: Sequence[float], m: DelayModel) -> int:
    """Largest step count any single service could finish running solo."""
    top = max(budgets) if len(budgets) else 0.0
    return max(1, math.floor(top / (m.a + m.b)))


def stacking(scenario: Scenario, budgets: Sequence[float]) -> tuple[Schedule, float, int]:
    """Full STACKING: best schedule over ``T_star = 1..T_star_max``.

    Ties go to the smaller ``T_star``. Returns ``(schedule, mean quality,
    best T_star)``.
    """
    _, best = _kernel.stacking_search(scenario, np.asarray(budgets, dtype=float))
    schedule, q = stacking_run(scenario, budgets, best)
    return schedule, q, best


def stacking_reference(scenario: Scenario, budgets: Sequence[float]) -> tuple[Schedule, float, int]:
    """Same as :func:`stacking` but searches ``T_star`` in pure Python. Slow."""
    best = None
    for ts in range(1, t_star_max(budgets, scenario.delay_model) + 1):
        sched, q = stacking_run(scenario, budgets, ts)
        if best is None or q < best[1]:
            best = (sched, q, ts)
    return best


def generation_delay(schedule: Schedule, k: int) -> float:
    """Completion time of service ``k``'s last step."""
    T_k = schedule.completed_steps[k]
    if T_k < 1:
        raise NoCompletion(f"service {k} completed no denoising step")
    for b in schedule.batches:
        if (k, T_k) in b.members:
            return b.start + b.duration
    raise NoCompletion(f"step {T_k} of service {k} is not in any batch")


@dataclass(frozen=True)
class Violation:
    constraint: str
    message: str


def validate_schedule(
    schedule: Schedule, scenario: Scenario, budgets: Sequence[float], tol: float = TIME_TOL
) -> list[Violation]:
    """Mechanically check a schedule; an empty list means it is valid.

    Constraint labels: ``membership``, ``exactly-once``, ``batch-duration``,
    ``batch-sequencing``, ``step-precedence``, ``generation-budget`` and
    ``bookkeeping``.
    """
    out: list[Violation] = []
    m = scenario.delay_model
    ids = scenario.ids
    known = set(ids)
    budget = dict(zip(ids, (float(x) for x in budgets)))

    where: dict[tuple[int, int], list[Batch]] = {}
    for b in schedule.batches:
        seen = set()
        for k, s in b.members:
            if k not in known:
                out.append(Violation("membership", f"batch {b.index}: unknown service {k}"))
                continue
            if not (isinstance(s, int) and s >= 1):
                out.append(Violation("membership", f"batch {b.index}: bad step index {s!r} for {k}"))
                continue
            if k in seen:
                out.append(Violation("membership", f"batch {b.index}: service {k} appears twice"))
            seen.add(k)
            where.setdefault((k, s), []).append(b)
        if not b.members:
            out.append(Violation("membership", f"batch {b.index} is empty"))
        if not math.isclose(b.duration, batch_delay(b.size, m), rel_tol=0.0, abs_tol=tol):
            out.append(
                Violation("batch-duration", f"batch {b.index}: duration {b.duration} != g({b.size})")
            )

    for prev, nxt in zip(schedule.batches, schedule.batches[1:]):
        if prev.start + prev.duration > nxt.start + tol:
            out.append(
                Violation(
                    "batch-sequencing",
                    f"batch {nxt.index} starts at {nxt.start} before batch {prev.index} "
                    f"ends at {prev.start + prev.duration}",
                )
            )
    if schedule.batches and schedule.batches[0].start < -tol:
        out.append(Violation("batch-sequencing", "first batch starts before t=0"))

    for k in ids:
        if k not in schedule.completed_steps:
            out.append(Violation("bookkeeping", f"service {k} missing from schedule"))
            continue
        T_k = schedule.completed_steps[k]
        for s in range(1, T_k + 1):
            n_hits = len(where.get((k, s), []))
            if n_hits != 1:
                out.append(Violation("exactly-once", f"service {k} step {s} assigned {n_hits} times"))
        extra = [s for (kk, s) in where if kk == k and s > T_k]
        if extra:
            out.append(
                Violation("exactly-once", f"service {k} has steps {sorted(extra)} beyond T_k={T_k}")
            )
        for s in range(1, T_k):
            cur, nxt = where.get((k, s)), where.get((k, s + 1))
            if cur and nxt and cur[0].start + cur[0].duration > nxt[0].start + tol:
                out.append(
                    Violation(
                        "step-precedence",
                        f"service {k}: step {s + 1} (batch {nxt[0].index}) starts before "
                        f"step {s} (batch {cur[0].index}) ends",
                    )
                )
        if schedule.outage.get(k) != (T_k == 0):
            out.append(Violation("bookkeeping", f"service {k}: outage flag inconsistent"))
        if T_k >= 1 and where.get((k, T_k)):
            last = where[(k, T_k)][0]
            d_cg = last.start + last.duration
            if d_cg > budget[k] + tol:
                out.append(
                    Violation(
                        "generation-budget",
                        f"service {k} finishes generation at {d_cg} past budget {budget[k]}",
                    )
                )
            recorded = schedule.completion_time.get(k)
            if recorded is None or not math.isclose(recorded, d_cg, rel_tol=0.0, abs_tol=tol):
                out.append(Violation("bookkeeping", f"service {k}: completion time {recorded} != {d_cg}"))
    return out
