# tests/test_cli.py
import json

import pandas as pd
import pytest

from config.settings import settings
from main import run
from schemas.reports import validate_payload


def _report(out):
    return json.loads((out / "report.json").read_text())


def test_oracle_case_prints_delta_coefficients(tmp_path, capsys):
    out = tmp_path / "oracle"
    code = run(["oracle", "--case", "II.II", "--order", "t2", "--out", str(out), "--no-cache"])
    assert code == 0
    assert capsys.readouterr().out.splitlines()[0] == "1/4, 1/3, 1/6"
    payload = _report(out)
    assert validate_payload(payload, "report")
    assert payload["config"]["params"]["case"] == "II.II"
    assert len(pd.read_csv(out / "series.csv")) == 3


def test_oracle_uses_the_table_cache(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "ORACLE_CACHE_DIR", str(tmp_path / "cache"))
    args = ["oracle", "--case", "II;IK", "--out", str(tmp_path / "run")]
    assert run(args) == 0
    assert _report(tmp_path / "run")["tracker"]["oracle"]["cache_misses"] == 1
    assert run(args) == 0
    assert _report(tmp_path / "run")["tracker"]["oracle"]["cache_hits"] == 1


def test_config_file_fills_missing_flags(tmp_path, capsys):
    cfg = tmp_path / "run.env"
    cfg.write_text("CASE=II.II\nORDER=t2\nNO_CACHE=true\nSEED=11\n")
    out = tmp_path / "out"
    assert run(["oracle", "--config", str(cfg), "--seed", "3", "--out", str(out)]) == 0
    assert "1/4, 1/3, 1/6" in capsys.readouterr().out
    assert _report(out)["config"]["seed"] == 3


def test_unknown_config_key_is_a_usage_error(tmp_path):
    cfg = tmp_path / "run.env"
    cfg.write_text("BOGUS=1\n")
    assert run(["oracle", "--config", str(cfg), "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["plot"],
        ["oracle", "--order", "t5"],
        ["oracle", "--case", "II.II", "--workers", "0", "--no-cache"],
    ],
)
def test_usage_errors(argv):
    assert run(argv) == 2


def test_runtime_errors_exit_one(tmp_path, capsys):
    args = ["expected-sig", "--manifold", "sphere:d=2,r=1", "--t", "0.05", "--level", "0", "--samples", "10"]
    assert run(args + ["--out", str(tmp_path)]) == 1
    assert "error:" in capsys.readouterr().err
    assert run(["geometry-check", "--manifold", "donut:q=1", "--out", str(tmp_path)]) == 1
    assert run(["sig", "--manifold", "euclidean:d=2", "--x", "0,0,0", "--y", "1,1", "--out", str(tmp_path)]) == 1


def test_geodesic_signature(tmp_path):
    out = tmp_path / "sig"
    args = ["sig", "--manifold", "euclidean:d=2", "--x", "0,0", "--y", "3,4", "--level", "3", "--out", str(out)]
    assert run(args) == 0
    norms = _report(out)["result"]["normalized_norms"]
    assert norms == pytest.approx([5.0, 5.0, 5.0], rel=1e-9)


def test_bridge_sample_writes_paths(tmp_path):
    out = tmp_path / "paths"
    args = [
        "bridge-sample", "--manifold", "circle:r=1", "--x", "1,0", "--y", "0.9553364891,0.2955202067",
        "--t", "0.05", "--count", "2", "--steps", "16", "--out", str(out),
    ]
    assert run(args) == 0
    assert (out / "paths" / "bridge_0001.csv").exists()
    rows = _report(out)["result"]["paths"]
    assert all(r["end_gap"] < 1e-12 for r in rows)


def test_same_seed_gives_identical_reports(tmp_path):
    base = ["expected-sig", "--manifold", "euclidean:d=2", "--t", "0.1", "--level", "2", "--samples", "64",
            "--steps", "4", "--seed", "5"]
    assert run(base + ["--workers", "1", "--out", str(tmp_path / "a")]) == 0
    assert run(base + ["--workers", "3", "--out", str(tmp_path / "b")]) == 0
    a, b = _report(tmp_path / "a"), _report(tmp_path / "b")
    assert a["result"] == b["result"]


def test_pde_euclidean(tmp_path, capsys):
    out = tmp_path / "pde"
    assert run(["pde", "--problem", "euclidean", "--t", "1", "--level", "4", "--dim", "2", "--out", str(out)]) == 0
    assert _report(out)["result"]["max_diff_closed_form"] < 1e-10


@pytest.mark.parametrize("command", ["recon-curvature", "pde"])
def test_help_names_the_default_lifetime_grid(command, capsys):
    assert run([command, "--help"]) == 0
    assert "0.02,0.04,0.06,0.08,0.1" in " ".join(capsys.readouterr().out.split())
