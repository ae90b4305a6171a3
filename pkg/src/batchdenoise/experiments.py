"""Scenario generation, scheme comparison and parameter sweeps."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from batchdenoise import baselines
from batchdenoise.bandwidth import PsoParams, equal_allocation, pso_optimize
from batchdenoise.model import (
    DelayModel,
    QualityModel,
    Scenario,
    ServiceRequest,
    generation_budgets,
    mean_quality,
    transmission_delay,
)
from batchdenoise.scheduler import TIME_TOL, Schedule, stacking, validate_schedule

log = logging.getLogger(__name__)

SCHEMES = ("proposed", "single_instance", "greedy", "fixed_size", "equal_bandwidth")

# scheme -> scheduler whose objective drives its bandwidth search (None = equal split)
_PSO_SCHEDULER = {
    "proposed": "stacking",
    "single_instance": "single_instance",
    "greedy": "greedy",
    "fixed_size": "fixed_size",
    "equal_bandwidth": None,
}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    K: int = 20
    deadline_range: tuple[float, float] = (7.0, 20.0)
    efficiency_range: tuple[float, float] = (5.0, 10.0)
    total_bandwidth: float = 40_000.0
    content_size: float = 24576.0
    delay_model: DelayModel = field(default_factory=DelayModel)
    quality_model: QualityModel = field(default_factory=QualityModel)
    pso: PsoParams = field(default_factory=PsoParams)
    replications: int = 10
    fixed_batch_size: Optional[int] = None
    k_values: tuple[int, ...] = (5, 10, 15, 20, 25)
    tau_min_values: tuple[float, ...] = (1.0, 4.0, 7.0, 10.0)
    oracle_K: int = 2
    oracle_horizon: int = 8

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError("K must be >= 1")
        for name in ("deadline_range", "efficiency_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} must satisfy min <= max, got ({lo}, {hi})")
        if not self.deadline_range[0] > 0:
            raise ValueError("deadline_range minimum must be > 0")
        if not self.efficiency_range[0] > 0:
            raise ValueError("efficiency_range minimum must be > 0")
        if not self.total_bandwidth > 0:
            raise ValueError("total_bandwidth must be > 0")
        if not self.content_size > 0:
            raise ValueError("content_size must be > 0")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.fixed_batch_size is not None and self.fixed_batch_size < 1:
            raise ValueError("fixed_batch_size must be >= 1")
        if any(k < 1 for k in self.k_values):
            raise ValueError("k_values must all be >= 1")
        if any(not v > 0 for v in self.tau_min_values):
            raise ValueError("tau_min_values must all be > 0")
        if not 1 <= self.oracle_K <= baselines.ORACLE_MAX_K:
            raise ValueError(f"oracle_K must be in [1, {baselines.ORACLE_MAX_K}]")
        if not 0 <= self.oracle_horizon <= baselines.ORACLE_MAX_HORIZON:
            raise ValueError(f"oracle_horizon must be in [0, {baselines.ORACLE_MAX_HORIZON}]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["deadline_range"] = list(self.deadline_range)
        d["efficiency_range"] = list(self.efficiency_range)
        d["k_values"] = list(self.k_values)
        d["tau_min_values"] = list(self.tau_min_values)
        return d


@dataclass(frozen=True)
class TimelineRow:
    scheme: str
    replicate: int
    service: int
    tau: float
    d_cg: Optional[float]
    d_ct: float
    d_e2e: Optional[float]
    steps: int
    outage: bool


@dataclass
class ComparisonResult:
    schemes: tuple[str, ...]
    mean_fid: dict[str, float]
    outages: dict[str, int]
    per_replicate: dict[str, list[float]]
    timeline: list[TimelineRow]
    runs: list[dict]

    def table(self) -> list[dict]:
        return [
            {
                "scheme": s,
                "mean_fid": self.mean_fid[s],
                "outages": self.outages[s],
                "replications": len(self.per_replicate[s]),
            }
            for s in self.schemes
        ]


def _sub_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def generate_scenario(config: ExperimentConfig, replicate_index: int) -> Scenario:
    """Uniform deadlines and spectral efficiencies from ``(seed, replicate_index)``.

    Services are drawn row by row, so the first ``k`` services of a larger
    scenario match a ``k``-service scenario with the same seed.
    """
    rng = np.random.default_rng([config.seed, replicate_index])
    u = rng.random((config.K, 2))
    (dlo, dhi), (elo, ehi) = config.deadline_range, config.efficiency_range
    deadlines = dlo + u[:, 0] * (dhi - dlo)
    etas = elo + u[:, 1] * (ehi - elo)
    services = tuple(
        ServiceRequest(id=k, deadline_tau=float(d), spectral_efficiency=float(e))
        for k, (d, e) in enumerate(zip(deadlines, etas))
    )
    return Scenario(
        services=services,
        total_bandwidth=config.total_bandwidth,
        content_size=config.content_size,
        delay_model=config.delay_model,
        quality_model=config.quality_model,
    )


def timeline_report(
    scenario: Scenario,
    allocation: Sequence[float],
    schedule: Schedule,
    scheme: str = "",
    replicate: int = 0,
) -> list[TimelineRow]:
    """End-to-end delay breakdown per service.

    Raises ``ValueError`` if a completed service misses its deadline.
    """
    rows = []
    for svc, bw in zip(scenario.services, allocation):
        d_ct = transmission_delay(float(bw), svc.spectral_efficiency, scenario.content_size)
        d_cg = schedule.completion_time[svc.id]
        d_e2e = None if d_cg is None else d_cg + d_ct
        if d_e2e is not None and d_e2e > svc.deadline_tau + TIME_TOL:
            raise ValueError(
                f"service {svc.id} finishes at {d_e2e}, after its deadline {svc.deadline_tau}"
            )
        rows.append(
            TimelineRow(
                scheme=scheme,
                replicate=replicate,
                service=svc.id,
                tau=svc.deadline_tau,
                d_cg=d_cg,
                d_ct=d_ct,
                d_e2e=d_e2e,
                steps=schedule.completed_steps[svc.id],
                outage=schedule.outage[svc.id],
            )
        )
    return rows


def _schedule_for(scheme: str, scenario: Scenario, budgets: np.ndarray, fixed_size: Optional[int]):
    if scheme in ("proposed", "equal_bandwidth"):
        schedule, _, best = stacking(scenario, budgets)
        return schedule, best
    if scheme == "single_instance":
        return baselines.single_instance(scenario, budgets), None
    if scheme == "greedy":
        return baselines.greedy_batching(scenario, budgets), None
    if scheme == "fixed_size":
        return baselines.fixed_size_batching(scenario, budgets, fixed_size), None
    raise ValueError(f"unknown scheme {scheme!r}")


def run_scheme(
    config: ExperimentConfig, scenario: Scenario, scheme: str, replicate: int
) -> dict:
    """Allocate bandwidth and schedule one scenario under one scheme."""
    scheduler = _PSO_SCHEDULER[scheme]
    trace = None
    if scheduler is None:
        alloc = equal_allocation(scenario.K, scenario.total_bandwidth)
    else:
        params = replace(config.pso, seed=_sub_seed(config.seed, config.pso.seed, replicate, SCHEMES.index(scheme)))
        res = pso_optimize(scenario, params, scheduler=scheduler, size=config.fixed_batch_size)
        alloc, trace = res.allocation, res.trace
    budgets = generation_budgets(scenario, alloc)
    schedule, best_ts = _schedule_for(scheme, scenario, budgets, config.fixed_batch_size)
    problems = validate_schedule(schedule, scenario, budgets)
    if problems:
        raise AssertionError(f"{scheme} produced an invalid schedule: {problems[:3]}")
    return {
        "replicate": replicate,
        "scheme": scheme,
        "allocation": [float(x) for x in alloc],
        "budgets": [float(x) for x in budgets],
        "mean_fid": mean_quality(schedule.steps, scenario.quality_model),
        "best_t_star": best_ts,
        "pso_trace": trace,
        "schedule": schedule,
    }


def run_comparison(
    config: ExperimentConfig, schemes: Optional[Iterable[str]] = None
) -> ComparisonResult:
    schemes = tuple(schemes) if schemes is not None else SCHEMES
    for s in schemes:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme {s!r}; pick from {SCHEMES}")
    per_rep: dict[str, list[float]] = {s: [] for s in schemes}
    outages = {s: 0 for s in schemes}
    timeline: list[TimelineRow] = []
    runs = []
    for r in range(config.replications):
        scenario = generate_scenario(config, r)
        for s in schemes:
            run = run_scheme(config, scenario, s, r)
            per_rep[s].append(run["mean_fid"])
            outages[s] += sum(run["schedule"].outage.values())
            timeline.extend(timeline_report(scenario, run["allocation"], run["schedule"], s, r))
            runs.append(run)
        log.debug("replicate %d done: %s", r, {s: per_rep[s][-1] for s in schemes})
    return ComparisonResult(
        schemes=schemes,
        mean_fid={s: float(np.mean(per_rep[s])) for s in schemes},
        outages=outages,
        per_replicate=per_rep,
        timeline=timeline,
        runs=runs,
    )


@dataclass
class SweepResult:
    axis: str
    values: list[float]
    rows: list[dict]
    results: list[ComparisonResult]


def _sweep(axis: str, points: list[tuple[float, ExperimentConfig]], schemes) -> SweepResult:
    rows, results = [], []
    for value, cfg in points:
        res = run_comparison(cfg, schemes)
        results.append(res)
        for row in res.table():
            rows.append({"axis": axis, "value": value, **row})
    return SweepResult(axis=axis, values=[v for v, _ in points], rows=rows, results=results)


def sweep_service_count(
    config: ExperimentConfig, K_values: Optional[Sequence[int]] = None, schemes=None
) -> SweepResult:
    K_values = config.k_values if K_values is None else K_values
    return _sweep("K", [(int(k), replace(config, K=int(k))) for k in K_values], schemes)


def sweep_min_delay(
    config: ExperimentConfig,
    tau_min_values: Optional[Sequence[float]] = None,
    tau_max: Optional[float] = None,
    schemes=None,
) -> SweepResult:
    """Deadlines drawn from ``U[tau_min, tau_max]`` for each ``tau_min``."""
    tau_min_values = config.tau_min_values if tau_min_values is None else tau_min_values
    tau_max = config.deadline_range[1] if tau_max is None else tau_max
    bad = [v for v in tau_min_values if v > tau_max]
    if bad:
        raise ValueError(f"tau_min values {bad} exceed tau_max={tau_max}")
    points = [
        (float(v), replace(config, deadline_range=(float(v), float(tau_max)))) for v in tau_min_values
    ]
    return _sweep("tau_min", points, schemes)


def rows_to_csv(rows: list[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k)) for k in columns})
    return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v
