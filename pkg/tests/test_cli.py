import csv
import json

import pytest

from batchdenoise.cli import main
from batchdenoise.config import (
    ConfigNotFound,
    ConfigParseError,
    ConfigValueError,
    config_from_dict,
    load_config,
)
from batchdenoise.experiments import SCHEMES, ExperimentConfig

TINY = """\
seed: 3
K: 5
replications: 2
pso: {swarm_size: 6, iterations: 4}
sweep: {k_values: [2, 4], tau_min_values: [2, 9]}
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(TINY)
    return p


def test_empty_config_gives_defaults(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    cfg = load_config(p)
    assert cfg == ExperimentConfig()
    assert (cfg.K, cfg.total_bandwidth, cfg.deadline_range, cfg.efficiency_range) == (
        20, 40_000.0, (7.0, 20.0), (5.0, 10.0)
    )


def test_partial_override_keeps_other_defaults():
    cfg = config_from_dict({"K": 40})
    assert cfg.K == 40
    assert cfg.delay_model == ExperimentConfig().delay_model
    assert cfg.pso == ExperimentConfig().pso


def test_bad_delay_model_names_field():
    with pytest.raises(ConfigValueError) as err:
        config_from_dict({"delay_model": {"a": -1}})
    assert err.value.key == "delay_model"
    assert "delay_model.a" in str(err.value)


@pytest.mark.parametrize(
    "raw, key",
    [
        ({"bogus": 1}, "bogus"),
        ({"pso": {"swarm": 3}}, "pso.swarm"),
        ({"K": "many"}, "K"),
        ({"K": 2.5}, "K"),
        ({"deadline_range": [9, 7]}, "deadline_range"),
        ({"replications": 0}, "replications"),
        ({"sweep": {"k_values": []}}, "sweep.k_values"),
        ({"oracle": {"K": 9}}, "oracle_K"),
    ],
)
def test_invalid_values_name_their_key(raw, key):
    with pytest.raises(ConfigValueError) as err:
        config_from_dict(raw)
    assert err.value.key == key


def test_missing_and_unparsable(tmp_path):
    with pytest.raises(ConfigNotFound):
        load_config(tmp_path / "nope.yaml")
    p = tmp_path / "broken.yaml"
    p.write_text("K: [1, 2\n")
    with pytest.raises(ConfigParseError):
        load_config(p)


def test_cli_config_errors_exit_1(tmp_path, capsys):
    assert main(["compare", "-c", str(tmp_path / "missing.yaml"), "-o", str(tmp_path)]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("delay_model: {a: -1}\n")
    assert main(["compare", "-c", str(bad), "-o", str(tmp_path)]) == 1
    assert "delay_model" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_schedule_then_validate(tiny_cfg, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["schedule", "-c", str(tiny_cfg), "-o", str(out)]) == 0
    bundle = json.loads((out / "schedule.json").read_text())
    assert bundle["scheduler"] == "stacking" and bundle["best_t_star"] >= 1
    rows = list(csv.DictReader((out / "timeline.csv").open()))
    assert len(rows) == 5
    assert main(["validate", str(out / "schedule.json")]) == 0
    assert "0 violations" in capsys.readouterr().out


def test_validate_flags_tampered_schedule(tiny_cfg, tmp_path, capsys):
    assert main(["schedule", "-c", str(tiny_cfg), "-o", str(tmp_path)]) == 0
    path = tmp_path / "schedule.json"
    bundle = json.loads(path.read_text())
    bundle["schedule"]["batches"][1]["start"] = 0.0
    path.write_text(json.dumps(bundle))
    assert main(["validate", str(path)]) == 2
    assert "batch-sequencing" in capsys.readouterr().out


def test_validate_missing_file_is_usage_error(tmp_path):
    assert main(["validate", str(tmp_path / "none.json")]) == 1


@pytest.mark.parametrize("scheduler", ["single_instance", "greedy", "fixed_size"])
def test_schedule_baselines_with_pso(tiny_cfg, tmp_path, scheduler):
    assert main(["schedule", "-c", str(tiny_cfg), "-o", str(tmp_path),
                 "--scheduler", scheduler, "--bandwidth", "pso"]) == 0
    assert main(["validate", str(tmp_path / "schedule.json")]) == 0


def test_allocate_outputs(tiny_cfg, tmp_path):
    assert main(["allocate", "-c", str(tiny_cfg), "-o", str(tmp_path)]) == 0
    alloc = json.loads((tmp_path / "allocation.json").read_text())
    assert sum(alloc["allocation"]) <= alloc["scenario"]["total_bandwidth"]
    trace = list(csv.DictReader((tmp_path / "pso_trace.csv").open()))
    assert [int(r["iteration"]) for r in trace] == list(range(5))
    values = [float(r["best_mean_fid"]) for r in trace]
    assert values == sorted(values, reverse=True)


def test_compare_writes_one_row_per_scheme(tiny_cfg, tmp_path):
    assert main(["compare", "-c", str(tiny_cfg), "-o", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "compare.csv").open()))
    assert [r["scheme"] for r in rows] == list(SCHEMES)
    bundle = json.loads((tmp_path / "compare.json").read_text())
    assert len(bundle["runs"]) == 2 * len(SCHEMES)


def test_scheme_filter_and_env_out_dir(tiny_cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("BATCHDENOISE_OUT", str(tmp_path / "env"))
    assert main(["compare", "-c", str(tiny_cfg), "--scheme", "greedy", "--scheme", "proposed"]) == 0
    rows = list(csv.DictReader((tmp_path / "env" / "compare.csv").open()))
    assert [r["scheme"] for r in rows] == ["greedy", "proposed"]


@pytest.mark.parametrize("cmd, name, values", [("sweep-k", "sweep_k", ["2", "4"]), ("sweep-tau", "sweep_tau", ["2.0", "9.0"])])
def test_sweeps(tiny_cfg, tmp_path, cmd, name, values):
    assert main([cmd, "-c", str(tiny_cfg), "-o", str(tmp_path), "--scheme", "proposed"]) == 0
    rows = list(csv.DictReader((tmp_path / f"{name}.csv").open()))
    assert [r["value"] for r in rows] == values
    assert (tmp_path / f"{name}.json").exists()
    assert (tmp_path / f"{name}_timeline.csv").exists()


def test_oracle_check(tiny_cfg, tmp_path, capsys):
    assert main(["oracle-check", "-c", str(tiny_cfg), "-o", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "oracle_check.json").read_text())
    assert report["relative_gap"] >= 0
    assert "relative gap" in capsys.readouterr().out


def test_seed_override_changes_scenario(tiny_cfg, tmp_path):
    main(["schedule", "-c", str(tiny_cfg), "-o", str(tmp_path / "a")])
    main(["schedule", "-c", str(tiny_cfg), "-o", str(tmp_path / "b"), "--seed", "99"])
    a = json.loads((tmp_path / "a" / "schedule.json").read_text())["scenario"]
    b = json.loads((tmp_path / "b" / "schedule.json").read_text())["scenario"]
    assert a != b
