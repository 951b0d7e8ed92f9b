import csv
import io
import json
import os
import re
import subprocess
import sys
from pathlib import Path

import pytest

from hrp import report
from hrp.cli import UsageError, main, parse_seeds, parse_values
from hrp.config import NetworkConfig
from hrp.report import CSV_COLUMNS, atomic_write, build_manifest, write_report

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_YAML = ROOT / "configs" / "default.yaml"


def _rows(path):
    return list(csv.DictReader(io.StringIO(Path(path).read_text())))


# --- argument parsing ---------------------------------------------------------------

@pytest.mark.parametrize("text, expected", [
    ("200000:600000:100000", [200000, 300000, 400000, 500000, 600000]),
    ("1e6:2e6:0.5e6", [1e6, 1.5e6, 2e6]),
    ("2e9,10e9,20e9", [2e9, 10e9, 20e9]),
    ("4", [4]),
    ("1:10:4", [1, 5, 9]),
])
def test_parse_values(text, expected):
    assert parse_values(text) == expected


@pytest.mark.parametrize("text", ["5:1:1", "1:5:0", "1:2", "a:b:c", "x"])
def test_parse_values_rejects(text):
    with pytest.raises(UsageError):
        parse_values(text)


def test_parse_seeds():
    assert parse_seeds("0..3") == [0, 1, 2, 3]
    assert parse_seeds("7,2,9") == [7, 2, 9]
    with pytest.raises(UsageError):
        parse_seeds("3..1")
    with pytest.raises(UsageError):
        parse_seeds("a..b")


# --- subcommands -------------------------------------------------------------------

def test_validate_shipped_default(capsys):
    assert main(["validate-config", "--config", str(DEFAULT_YAML)]) == 0
    out = capsys.readouterr().out
    assert NetworkConfig.from_yaml(out) == NetworkConfig()
    # canonical form: the shipped file is its own serialization
    assert out == DEFAULT_YAML.read_text()


def test_unknown_config_key_is_a_usage_error(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("allocation:\n  n_maxx: 5\nscenario:\n  seed: 1\nplotting: {}\n")
    assert main(["validate-config", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "allocation.n_maxx" in err and "plotting" in err


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 2


def test_bad_arguments_exit_2(tmp_path):
    assert main(["run", "--objective", "fastest"]) == 2
    assert main(["sweep", "--axis", "n-max", "--jobs", "0", "--out", str(tmp_path)]) == 2
    assert main(["sweep", "--axis", "n-max", "--values", "9:1:1", "--out", str(tmp_path)]) == 2
    assert main([]) == 2


def test_run_twice_is_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", "--objective", "max-min", "--seed", "7", "--out", str(out), "--quiet"]) == 0
        outs.append(out)
    for f in ("report.csv", "report.json"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    manifest = json.loads((outs[0] / "manifest.json").read_text())
    assert manifest["seeds"] == [7] and manifest["objectives"] == ["max_min"]
    assert "timestamp" in manifest and manifest["version"]
    assert NetworkConfig.from_sections(manifest["config"]) == NetworkConfig()


def test_run_report_schema(tmp_path):
    assert main(["run", "--seeds", "0..1", "--out", str(tmp_path), "--quiet"]) == 0
    text = (tmp_path / "report.csv").read_text()
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    rows = _rows(tmp_path / "report.csv")
    assert len(rows) == 2 * 4
    assert re.fullmatch(r"-?\d\.\d{16}e[+-]\d\d", rows[0]["coverage_pct"])
    payload = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert len(payload["rows"]) == 8
    assert all(r["config_hash"] == NetworkConfig().config_hash() for r in payload["rows"])
    assert (tmp_path / "report.json").read_text().endswith("\n")


def test_n_max_sweep_row_count(tmp_path):
    code = main(["sweep", "--axis", "n-max", "--values", "200000:600000:100000", "--seeds", "0..2",
                 "--objective", "proportional", "--out", str(tmp_path), "--quiet"])
    assert code == 0
    rows = _rows(tmp_path / "report.csv")
    assert len(rows) == 5 * 3
    assert sorted({int(r["axis_value"]) for r in rows}) == [200000, 300000, 400000, 500000, 600000]
    payload = json.loads((tmp_path / "report.json").read_text())
    assert len(payload["aggregates"]) == 5
    assert payload["manifest"]["axis"] == "n_max"


def test_infeasible_only_exits_1(tmp_path):
    cfg = tmp_path / "tight.yaml"
    cfg.write_text("allocation:\n  n_max: 1000\n")
    assert main(["run", "--config", str(cfg), "--seed", "0", "--out", str(tmp_path / "o"), "--quiet"]) == 1
    rows = _rows(tmp_path / "o" / "report.csv")
    assert {r["solver_status"] for r in rows} == {"infeasible"}


def test_dump_gp(tmp_path, capsys):
    assert main(["dump-gp", "--objective", "min-ris", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert "ris_budget" in out and "log-sum-exp" in out and "rate_floor[0]" in out
    target = tmp_path / "gp.txt"
    assert main(["dump-gp", "--objective", "all", "--seed", "0", "--out", str(target)]) == 0
    body = target.read_text()
    assert body.count("### ") == 3 and "level[0]" in body


def test_module_entry_point_and_log_env(tmp_path):
    env = dict(os.environ, HRP_LOG="DEBUG")
    proc = subprocess.run(
        [sys.executable, "-m", "hrp", "run", "--seed", "0", "--objective", "proportional",
         "--out", str(tmp_path)],
        capture_output=True, text=True, env=env, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert "DEBUG" in proc.stderr
    assert "seed 0: coverage" in proc.stdout


# --- atomic output ------------------------------------------------------------------

def test_atomic_write_leaves_old_file_on_failure(tmp_path, monkeypatch):
    target = tmp_path / "report.csv"
    target.write_text("old\n")

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(report.os, "replace", boom)
    with pytest.raises(OSError):
        atomic_write(target, "new\n")
    assert target.read_text() == "old\n"
    assert [p.name for p in tmp_path.iterdir()] == ["report.csv"]


def test_report_render_error_touches_nothing(tmp_path):
    manifest = build_manifest(NetworkConfig(), "run", [0], ["sum_rate"])
    bad_row = {c: 0 for c in CSV_COLUMNS}
    bad_row["solver_status"] = object()      # renders in CSV, not in JSON
    with pytest.raises(TypeError):
        write_report([bad_row], manifest, tmp_path)
    assert list(tmp_path.iterdir()) == []
