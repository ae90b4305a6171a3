"""Command-line entry point.

Exit codes: 0 success, 1 usage or config error, 2 validation failure.
The output directory is ``--out``, else ``$BATCHDENOISE_OUT``, else ``./out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from batchdenoise import baselines
from batchdenoise.bandwidth import SCHEDULERS, equal_allocation, pso_optimize
from batchdenoise.config import ConfigError, config_from_dict, load_config
from batchdenoise.experiments import (
    SCHEMES,
    ExperimentConfig,
    _sub_seed,
    generate_scenario,
    rows_to_csv,
    run_comparison,
    sweep_min_delay,
    sweep_service_count,
    timeline_report,
)
from batchdenoise.model import Scenario, ServiceRequest, generation_budgets, mean_quality
from batchdenoise.scheduler import Schedule, stacking, validate_schedule

log = logging.getLogger("batchdenoise")

OUT_ENV = "BATCHDENOISE_OUT"

TIMELINE_COLUMNS = ("scheme", "replicate", "service", "tau", "d_cg", "d_ct", "d_e2e", "steps", "outage")
COMPARE_COLUMNS = ("scheme", "mean_fid", "outages", "replications")
SWEEP_COLUMNS = ("axis", "value", "scheme", "mean_fid", "outages", "replications")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="batchdenoise", description="Batch-denoising scheduling experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, schemes=True):
        p.add_argument("-c", "--config", help="YAML config (defaults if omitted)")
        p.add_argument("-o", "--out", help=f"output directory (else ${OUT_ENV}, else ./out)")
        p.add_argument("--seed", type=int, help="override the config seed")
        if schemes:
            p.add_argument(
                "--scheme", action="append", choices=SCHEMES, help="restrict to a scheme (repeatable)"
            )
        return p

    p = common(sub.add_parser("schedule", help="schedule one scenario"), schemes=False)
    p.add_argument("--scheduler", choices=sorted(SCHEDULERS), default="stacking")
    p.add_argument("--bandwidth", choices=("equal", "pso"), default="equal")
    p.add_argument("--replicate", type=int, default=0)

    p = common(sub.add_parser("allocate", help="PSO bandwidth allocation for one scenario"), schemes=False)
    p.add_argument("--scheduler", choices=sorted(SCHEDULERS), default="stacking")
    p.add_argument("--replicate", type=int, default=0)

    common(sub.add_parser("compare", help="compare all schemes at the configured K"))
    common(sub.add_parser("sweep-k", help="mean FID versus number of services"))
    common(sub.add_parser("sweep-tau", help="mean FID versus minimum deadline"))

    p = sub.add_parser("validate", help="check a schedule JSON written by `schedule`")
    p.add_argument("schedule_json")

    p = common(sub.add_parser("oracle-check", help="exhaustive oracle vs STACKING on a tiny instance"), schemes=False)
    return parser


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, Schedule):
        return o.to_dict()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _timeline_dicts(rows) -> list[dict]:
    return [r.__dict__ for r in rows]


def cmd_schedule(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    scenario = generate_scenario(cfg, args.replicate)
    if args.bandwidth == "pso":
        params = replace(cfg.pso, seed=_sub_seed(cfg.seed, cfg.pso.seed, args.replicate, 0))
        alloc = pso_optimize(scenario, params, scheduler=args.scheduler, size=cfg.fixed_batch_size).allocation
    else:
        alloc = equal_allocation(scenario.K, scenario.total_bandwidth)
    budgets = generation_budgets(scenario, alloc)
    best_ts = None
    if args.scheduler == "stacking":
        schedule, _, best_ts = stacking(scenario, budgets)
    elif args.scheduler == "single_instance":
        schedule = baselines.single_instance(scenario, budgets)
    elif args.scheduler == "greedy":
        schedule = baselines.greedy_batching(scenario, budgets)
    else:
        schedule = baselines.fixed_size_batching(scenario, budgets, cfg.fixed_batch_size)
    fid = mean_quality(schedule.steps, scenario.quality_model)
    bundle = {
        "scheduler": args.scheduler,
        "bandwidth": args.bandwidth,
        "replicate": args.replicate,
        "scenario": scenario.to_dict(),
        "allocation": alloc,
        "budgets": budgets,
        "best_t_star": best_ts,
        "mean_fid": fid,
        "schedule": schedule,
    }
    _write(out / "schedule.json", _dump(bundle))
    rows = timeline_report(scenario, alloc, schedule, args.scheduler, args.replicate)
    _write(out / "timeline.csv", rows_to_csv(_timeline_dicts(rows), TIMELINE_COLUMNS))
    print(f"{args.scheduler}: mean FID {fid:.4f} over {scenario.K} services, {len(schedule.batches)} batches")
    return 0


def cmd_allocate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    scenario = generate_scenario(cfg, args.replicate)
    params = replace(cfg.pso, seed=_sub_seed(cfg.seed, cfg.pso.seed, args.replicate, 0))
    res = pso_optimize(scenario, params, scheduler=args.scheduler, size=cfg.fixed_batch_size)
    budgets = generation_budgets(scenario, res.allocation)
    _write(
        out / "allocation.json",
        _dump(
            {
                "scheduler": args.scheduler,
                "replicate": args.replicate,
                "scenario": scenario.to_dict(),
                "allocation": res.allocation,
                "budgets": budgets,
                "mean_fid": res.value,
            }
        ),
    )
    trace_rows = [{"iteration": i, "best_mean_fid": v} for i, v in enumerate(res.trace)]
    _write(out / "pso_trace.csv", rows_to_csv(trace_rows, ("iteration", "best_mean_fid")))
    print(f"PSO ({args.scheduler}): mean FID {res.value:.4f} after {len(res.trace) - 1} iterations")
    return 0


def _comparison_bundle(cfg, res) -> dict:
    return {
        "config": cfg.to_dict(),
        "schemes": list(res.schemes),
        "mean_fid": res.mean_fid,
        "outages": res.outages,
        "per_replicate": res.per_replicate,
        "runs": res.runs,
    }


def cmd_compare(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    res = run_comparison(cfg, args.scheme)
    _write(out / "compare.csv", rows_to_csv(res.table(), COMPARE_COLUMNS))
    _write(out / "compare_timeline.csv", rows_to_csv(_timeline_dicts(res.timeline), TIMELINE_COLUMNS))
    _write(out / "compare.json", _dump(_comparison_bundle(cfg, res)))
    for row in res.table():
        print(f"{row['scheme']:>16}  mean FID {row['mean_fid']:9.4f}  outages {row['outages']}")
    return 0


def _sweep_cmd(args, name: str, run) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    sweep = run(cfg, schemes=args.scheme)
    _write(out / f"{name}.csv", rows_to_csv(sweep.rows, SWEEP_COLUMNS))
    timeline = [
        {"axis": sweep.axis, "value": value, **r.__dict__}
        for value, res in zip(sweep.values, sweep.results)
        for r in res.timeline
    ]
    _write(out / f"{name}_timeline.csv", rows_to_csv(timeline, ("axis", "value") + TIMELINE_COLUMNS))
    bundle = {
        "config": cfg.to_dict(),
        "axis": sweep.axis,
        "rows": sweep.rows,
        "points": [
            {"value": value, **_comparison_bundle(cfg, res)}
            for value, res in zip(sweep.values, sweep.results)
        ],
    }
    _write(out / f"{name}.json", _dump(bundle))
    for row in sweep.rows:
        print(f"{sweep.axis}={row['value']:<6} {row['scheme']:>16}  mean FID {row['mean_fid']:9.4f}")
    return 0


def cmd_validate(args) -> int:
    path = Path(args.schedule_json)
    if not path.is_file():
        raise UsageError(f"schedule file not found: {path}")
    try:
        bundle = json.loads(path.read_text(encoding="utf-8"))
        scenario = Scenario.from_dict(bundle["scenario"])
        schedule = Schedule.from_dict(bundle["schedule"])
        budgets = bundle["budgets"]
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"malformed schedule bundle {path}: {exc}") from None
    problems = validate_schedule(schedule, scenario, budgets)
    for v in problems:
        print(f"[{v.constraint}] {v.message}")
    if problems:
        print(f"{len(problems)} violation(s)")
        return 2
    print("valid: 0 violations")
    return 0


def cmd_oracle_check(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    m = cfg.delay_model
    rng = np.random.default_rng([cfg.seed, 7919])
    K, horizon = cfg.oracle_K, cfg.oracle_horizon
    # budgets capped so no schedule can need more than `horizon` batches
    budgets = rng.uniform(0.0, horizon * (m.a + m.b), size=K)
    scenario = Scenario(
        services=tuple(ServiceRequest(k, float(tb) if tb > 0 else 1.0, 1.0) for k, tb in enumerate(budgets)),
        total_bandwidth=cfg.total_bandwidth,
        content_size=cfg.content_size,
        delay_model=m,
        quality_model=cfg.quality_model,
    )
    oracle_sched, oracle_q = baselines.exhaustive_oracle(scenario, budgets, horizon)
    stack_sched, stack_q, best_ts = stacking(scenario, budgets)
    gap = (stack_q - oracle_q) / oracle_q
    _write(
        out / "oracle_check.json",
        _dump(
            {
                "budgets": budgets,
                "horizon": horizon,
                "oracle_mean_fid": oracle_q,
                "stacking_mean_fid": stack_q,
                "stacking_best_t_star": best_ts,
                "relative_gap": gap,
                "oracle_schedule": oracle_sched,
                "stacking_schedule": stack_sched,
            }
        ),
    )
    print(f"oracle mean FID   {oracle_q:.6f}")
    print(f"STACKING mean FID {stack_q:.6f}")
    print(f"relative gap      {gap:.6f}")
    if gap < 0 and not math.isclose(stack_q, oracle_q, rel_tol=1e-12):
        print("oracle beaten by heuristic: oracle is broken")
        return 2
    return 0


COMMANDS = {
    "schedule": cmd_schedule,
    "allocate": cmd_allocate,
    "compare": cmd_compare,
    "sweep-k": lambda a: _sweep_cmd(a, "sweep_k", sweep_service_count),
    "sweep-tau": lambda a: _sweep_cmd(a, "sweep_tau", sweep_min_delay),
    "validate": cmd_validate,
    "oracle-check": cmd_oracle_check,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
