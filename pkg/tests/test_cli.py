from __future__ import annotations

import json
from pathlib import Path

import pytest
import yaml

from gaussconj import cli
from gaussconj.config import load_config, parse_config
from gaussconj.core import SEED_ENV_VAR
from gaussconj.errors import ConfigurationError

TAIL = {
    "seed": 5,
    "ensemble": {"alpha": [1.0, 1.0]},
    "tail": {"u": [2.0, 1.5], "replicas": 3000, "max_halvings": 1, "H": {"value": 2.8, "stderr": 0.1}},
}
PICKANDS = {
    "seed": 6,
    "ensemble": {"alpha": [1.0, 2.0], "C": [1.0, 1.0]},
    "pickands": {"a": [0.2, 0.1, 0.05], "S": 2.0, "replicas": 2000, "epsilon": None},
}
SOJOURN = {
    "seed": 7,
    "ensemble": {"alpha": [1.0, 1.0]},
    "sojourn": {"u": [1.5, 2.0], "x": [0.5, 1.0], "sojourn_replicas": 2000, "B_replicas": 1000, "K": 600},
}
ORDER = {"seed": 8, "ensemble": {"alpha": [1.0, 1.0, 1.0]}, "order-stats": {"u": 2.0, "replicas": 2000, "halvings": 0}}
LIMIT = {"seed": 9, "ensemble": {"alpha": [1.0, 1.0]}, "limit-law": {"u": [1.0], "times": [0.0, 1.0], "limit_replicas": 500}}
SAMPLER = {"seed": 10, "validate-sampler": {"kind": "fbm", "alpha": [1.0], "m": 32, "replicas": 500, "pairs": [[1, 2], [5, 31]]}}

CASES = {
    "tail": TAIL,
    "pickands": PICKANDS,
    "sojourn": SOJOURN,
    "order-stats": ORDER,
    "limit-law": LIMIT,
    "validate-sampler": SAMPLER,
}


@pytest.fixture(autouse=True)
def _no_env_seed(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)


def write_cfg(tmp_path: Path, data: dict, name: str = "cfg.yaml") -> str:
    path = tmp_path / name
    path.write_text(json.dumps(data) if name.endswith(".json") else yaml.safe_dump(data))
    return str(path)


def run(tmp_path, command, data, *extra, out="out"):
    cfg = write_cfg(tmp_path, data)
    return cli.main([command, "--config", cfg, "--out", str(tmp_path / out), *extra])


@pytest.mark.parametrize("command", sorted(CASES))
def test_every_command_runs_and_reruns_identically(tmp_path, command):
    assert run(tmp_path, command, CASES[command], "--jobs", "1") == 0
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert man["command"] == command and man["master_seed"] == CASES[command]["seed"]
    assert man["seed_source"] == "config" and man["seed_env_var"] == SEED_ENV_VAR
    assert man["outputs"] and "result.json" in man["outputs"]
    same, new = cli.rerun_from_manifest(tmp_path / "out" / "manifest.json", tmp_path / "again", jobs=3)
    assert same, (man["outputs"], new["outputs"])
    for name in man["outputs"]:
        assert (tmp_path / "out" / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_seed_override_order(tmp_path, monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "77")
    assert run(tmp_path, "order-stats", ORDER, out="env") == 0
    man = json.loads((tmp_path / "env" / "manifest.json").read_text())
    assert (man["master_seed"], man["seed_source"], man["seed_env_value"]) == (77, "env", "77")
    assert run(tmp_path, "order-stats", ORDER, "--seed", "3", out="flag") == 0
    assert json.loads((tmp_path / "flag" / "manifest.json").read_text())["master_seed"] == 3


def test_format_selection(tmp_path):
    assert run(tmp_path, "tail", TAIL, "--format", "csv", out="csv") == 0
    names = set(json.loads((tmp_path / "csv" / "manifest.json").read_text())["outputs"])
    assert "result.json" not in names and "tail_sweep.csv" in names
    assert run(tmp_path, "tail", TAIL, "--format", "json", out="js") == 0
    names = set(json.loads((tmp_path / "js" / "manifest.json").read_text())["outputs"])
    assert "result.json" in names and "tail_sweep.csv" not in names


def test_tail_sweep_has_one_row_per_level(tmp_path):
    assert run(tmp_path, "tail", TAIL) == 0
    lines = (tmp_path / "out" / "tail_sweep.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + len(TAIL["tail"]["u"])
    us = [float(line.split(",")[0]) for line in (tmp_path / "out" / "ratio_vs_u.csv").read_text().splitlines()[1:]]
    assert us == sorted(us)


def test_plot_data_files(tmp_path):
    assert run(tmp_path, "pickands", PICKANDS, out="p") == 0
    names = cli.emit_plot_data(tmp_path / "p", tmp_path / "plots")
    assert names == ["H_vs_a.csv"]
    table = (tmp_path / "p" / "pickands_table.csv").read_text().strip().splitlines()
    hv = (tmp_path / "plots" / "H_vs_a.csv").read_text().strip().splitlines()
    assert len(hv) == len(table)
    res = json.loads((tmp_path / "p" / "result.json").read_text())
    assert "certificate_holds" in res["lower_bound"]

    assert run(tmp_path, "sojourn", SOJOURN, out="s") == 0
    names = cli.emit_plot_data(tmp_path / "s", tmp_path / "splots")
    assert "berman_overlay_u1.5.csv" in names and "berman_overlay_sensitivity_u2.csv" in names
    header = (tmp_path / "splots" / "berman_overlay_u1.5.csv").read_text().splitlines()[0]
    assert header == "x,lhs,B_hat,lhs_err,B_err"

    assert cli.main(["plot-data", str(tmp_path / "nothing")]) == 1


def test_invalid_alpha_exits_one(tmp_path, capsys):
    bad = dict(TAIL, ensemble={"alpha": [2.5, 1.0]})
    assert run(tmp_path, "tail", bad) == 1
    err = capsys.readouterr().err
    assert "(0,2]" in err
    rec = json.loads((tmp_path / "out" / "error.json").read_text())
    assert rec["exit_code"] == 1


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(extra=1),
        lambda d: d["tail"].update(bogus=True),
        lambda d: d["tail"].update(u=[-1.0]),
        lambda d: d["tail"].update(replicas=[10]),
        lambda d: d.update(schema_version=2),
        lambda d: d.update(variant={"tag": "order_stat", "j": 5}),
    ],
)
def test_config_errors_exit_one(tmp_path, mutate):
    data = json.loads(json.dumps(TAIL))
    mutate(data)
    assert run(tmp_path, "tail", data) == 1


def test_missing_block_and_bad_args(tmp_path):
    assert run(tmp_path, "sojourn", TAIL) == 1
    assert run(tmp_path, "tail", TAIL, "--jobs", "0") == 1
    assert cli.main(["tail"]) == 1
    assert cli.main(["tail", "--config", str(tmp_path / "missing.yaml")]) == 1


def test_refusal_exits_two_with_advice(tmp_path):
    data = {
        "seed": 1,
        "ensemble": {"alpha": [1.0, 1.0]},
        "limit-law": {"u": [6.0], "times": [0.0], "max_draws": 10**6, "limit_replicas": 10},
    }
    assert run(tmp_path, "limit-law", data) == 2
    rec = json.loads((tmp_path / "out" / "error.json").read_text())
    assert rec["exit_code"] == 2 and rec["advice"]["u_max"] > 0

    cert = json.loads(json.dumps(PICKANDS))
    cert["pickands"].update(epsilon=1e-6, certify="raise")
    assert run(tmp_path, "pickands", cert, out="cert") == 2
    rec = json.loads((tmp_path / "cert" / "error.json").read_text())
    assert rec["advice"]["K"] > 0


def test_json_config_accepted(tmp_path):
    cfg = write_cfg(tmp_path, ORDER, "cfg.json")
    assert cli.main(["order-stats", "--config", cfg, "--out", str(tmp_path / "o")]) == 0


def test_load_config_errors(tmp_path):
    p = tmp_path / "broken.yaml"
    p.write_text("ensemble: [unclosed")
    with pytest.raises(ConfigurationError):
        load_config(p)
    with pytest.raises(ConfigurationError):
        parse_config([1, 2])
    with pytest.raises(ConfigurationError):
        parse_config({"ensemble": {"alpha": [1.0], "theta": [{"kind": "uniform", "atoms": [[1, 1]]}]}})


def test_time_changed_config_roundtrip():
    cfg = parse_config(
        {
            "ensemble": {"alpha": [1.0], "theta": [{"kind": "discrete", "atoms": [[0.5, 0.5], [1.5, 0.5]]}]},
            "variant": {"tag": "time_changed"},
            "tail": {"u": [1.5]},
        }
    )
    assert cfg.block("tail").u == [1.5]
    again = parse_config(cfg.to_dict())
    assert again == cfg
