import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from hlfspn.cli import main
from hlfspn.config import ConfigError, load_config, parse_config

ROOT = Path(__file__).parents[1]
GOLDEN = Path(__file__).parent / "golden"

BASE_HLF = {"arrival_rate": 10, "block_timeout_ms": 2000, "commit_time_ms": 1150, "order_time_ms": 15,
            "endorse_time_ms": 160, "block_size": 10, "endorse_queue_size": 10}


def config_file(tmp_path, data, name="exp.yaml"):
    path = tmp_path / name
    path.write_text(data if isinstance(data, str) else yaml.safe_dump(data))
    return path


def read(path):
    return Path(path).read_bytes()


def test_empty_config(tmp_path, capsys):
    assert main(["run", str(config_file(tmp_path, ""))]) == 1
    assert "missing field: hlf" in capsys.readouterr().err


def test_yaml_syntax_error_has_line(tmp_path, capsys):
    path = config_file(tmp_path, "hlf:\n  arrival_rate: [10\n")
    assert main(["metrics", str(path)]) == 1
    assert "line" in capsys.readouterr().err


@pytest.mark.parametrize("data, fragment", [
    ({"hlf": {**BASE_HLF, "colour": 3}}, "hlf.colour"),
    ({"hlf": {k: v for k, v in BASE_HLF.items() if k != "block_size"}}, "missing field: hlf.block_size"),
    ({"hlf": {**BASE_HLF, "block_size": 0}}, "block_size"),
    ({"hlf": BASE_HLF, "engine": {"backend": "abacus"}}, "engine.backend"),
    ({"hlf": BASE_HLF, "engine": {"speed": 1}}, "engine.speed"),
    ({"hlf": BASE_HLF, "engine": {"replications": 0}}, "replications"),
    ({"hlf": BASE_HLF, "experiment": {"metrics": {}, "rank": {}}}, "exactly one"),
    ({"hlf": BASE_HLF, "experiment": {"plot": {}}}, "experiment.plot"),
    ({"hlf": BASE_HLF, "experiment": {"sweep": {"factor": "Colour"}}}, "experiment.sweep.factor"),
])
def test_config_diagnostics(data, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(data)


def test_factor_table_names_accepted():
    data = {"hlf": {"Arrival Rate": 12, **{k: v for k, v in BASE_HLF.items() if k != "arrival_rate"}},
            "experiment": {"metrics": {}}}
    assert parse_config(data).hlf.arrival_rate == 12


def test_overrides():
    cfg = parse_config({"hlf": BASE_HLF}, ["hlf.block_size=20", "engine.backend=simulation"], "metrics")
    assert cfg.hlf.block_size == 20 and cfg.backend == "simulation"
    with pytest.raises(ConfigError):
        parse_config({"hlf": BASE_HLF}, ["hlf.block_size"], "metrics")


@pytest.mark.parametrize("name", ["baseline.yaml", "rank_mrt.yaml", "sweep_arrival.yaml", "validation.yaml"])
def test_shipped_configs_parse(name):
    cfg = load_config(ROOT / "configs" / name)
    assert cfg.experiment in ("metrics", "sweep", "rank", "validate")


def test_metrics_output_and_manifest(tmp_path):
    out = tmp_path / "out"
    assert main(["metrics", str(ROOT / "configs" / "baseline.yaml"), "-o", str(out)]) == 0
    lines = (out / "metrics.csv").read_text().splitlines()
    assert len(lines) == 2
    row = dict(zip(lines[0].split(","), lines[1].split(",")))
    assert float(row["mrt_ms"]) == pytest.approx(1953.21, rel=1e-4)
    for col in ("mrt_ms", "tps_eq3", "tps_counted", "util_endorse", "util_block", "p_discard", "block_size"):
        assert col in row
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["files"]["metrics.csv"] == hashlib.sha256(read(out / "metrics.csv")).hexdigest()
    assert manifest["seed"] == 20240601 and manifest["version"]
    assert len(manifest["config_sha256"]) == 64
    assert not list(out.glob(".*"))  # no temp files left behind


def test_bit_identical_reruns(tmp_path):
    args = ["metrics", "--backend", "simulation", "--set", "engine.horizon_ms=50000",
            "--set", "engine.replications=3", "--workers", "1"]
    assert main(args + ["-o", str(tmp_path / "a")]) == 0
    assert main(args + ["-o", str(tmp_path / "b")]) == 0
    for name in ("metrics.csv", "manifest.json"):
        assert read(tmp_path / "a" / name) == read(tmp_path / "b" / name)
    assert main(args + ["--set", "engine.base_seed=1", "-o", str(tmp_path / "c")]) == 0
    assert read(tmp_path / "a" / "metrics.csv") != read(tmp_path / "c" / "metrics.csv")


def test_sweep_command(tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", "--factor", "Arrival Rate", "--points", "3", "--metric", "discard",
                 "-o", str(out)]) == 0
    lines = (out / "sweep_arrival_rate_discard.csv").read_text().splitlines()
    assert lines[0] == "arrival_rate,p_discard,half_width"
    values = [float(l.split(",")[1]) for l in lines[1:]]
    assert len(values) == 3 and values == sorted(values)


def test_rank_command(tmp_path):
    out = tmp_path / "r"
    assert main(["rank", "--metric", "tps", "--points", "2", "-o", str(out)]) == 0
    lines = (out / "sensitivity_tps.csv").read_text().splitlines()
    assert lines[0] == "rank,factor,index,min,max,argmin,argmax"
    assert len(lines) == 8
    assert len(list(out.glob("sweep_*_tps.csv"))) == 7
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["files"]) == 8


def test_validate_command(tmp_path, capsys):
    out = tmp_path / "v"
    args = ["validate", str(ROOT / "configs" / "validation.yaml"), "--set", "engine.horizon_ms=100000",
            "--set", "engine.replications=2", "-o", str(out)]
    assert main(args) == 0
    assert "Welch t" in (out / "validation.txt").read_text()
    assert (out / "validation.csv").read_text().startswith("exp_mean_ms,")


def test_validate_missing_measurements(tmp_path, capsys):
    assert main(["validate", "--csv", str(tmp_path / "nope.csv")]) == 1
    assert "input error" in capsys.readouterr().err


def test_backend_error_exit_code(capsys):
    assert main(["metrics", "--set", "engine.state_cap=100", "-o", "/tmp/unused"]) == 2
    assert "StateSpaceError" in capsys.readouterr().err


def test_describe_golden(capsys):
    assert main(["describe"]) == 0
    first = capsys.readouterr().out
    assert first == (GOLDEN / "describe_baseline.txt").read_text()
    assert "m(P2) >= 1 && m(P2) < 10" in first
    assert main(["describe", str(ROOT / "configs" / "baseline.yaml")]) == 0
    assert capsys.readouterr().out == first


def test_describe_block_size_one(capsys):
    assert main(["describe", "--set", "hlf.block_size=1"]) == 0
    out = capsys.readouterr().out
    assert out == (GOLDEN / "describe_block_size_1.txt").read_text()
    assert "guard unsatisfiable" in out


def test_describe_in_fresh_process():
    run = lambda: subprocess.run([sys.executable, "-m", "hlfspn.cli", "describe"],  # noqa: E731
                                 capture_output=True, check=True).stdout
    first = run()
    assert first == run() == (GOLDEN / "describe_baseline.txt").read_bytes()
