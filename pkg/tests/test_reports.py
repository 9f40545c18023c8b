# tests/test_reports.py
import json

import jsonschema
import pytest

from schemas.reports import DistanceReport, DistanceRow, Report, RunConfig, validate_payload, write_report
from utils.run_tracker import RunTracker


def _distance_report():
    row = DistanceRow(n=2, t_n=1 / 64, estimate=0.98, stderr=0.01, oracle=1.0, samples=100)
    return DistanceReport(manifold="euclidean:d=2", x=[0.0, 0.0], y=[0.6, 0.8], kappa=1.0, rows=[row])


def test_report_envelope_is_written_and_valid(tmp_path):
    tracker = RunTracker()
    tracker.add_block(10, discarded=1, exited=1)
    config = RunConfig(command="recon-distance", manifold="euclidean:d=2", params={"nmax": 2})
    report = Report(config=config, tracker=tracker.get_summary(), result=_distance_report().model_dump())
    path = write_report(report, tmp_path / "out", "recon_distance")
    payload = json.loads(path.read_text())
    assert payload["config"]["seed"] == 7
    assert payload["tracker"]["sampling"]["paths_discarded"] == 1
    assert payload["result"]["rows"][0]["n"] == 2


def test_unknown_command_is_rejected():
    payload = {"config": {"command": "plot", "seed": 1, "steps": 4, "params": {}}, "tracker": {}, "result": {}}
    with pytest.raises(jsonschema.ValidationError):
        validate_payload(payload, "report")


def test_distance_rows_are_required():
    payload = _distance_report().model_dump()
    payload["rows"] = []
    with pytest.raises(jsonschema.ValidationError):
        validate_payload(payload, "recon_distance")


def test_result_schema_checked_on_write(tmp_path):
    report = Report(config=RunConfig(command="recon-distance"), result={"manifold": "circle:r=1"})
    with pytest.raises(jsonschema.ValidationError):
        write_report(report, tmp_path, "recon_distance")
    assert not (tmp_path / "report.json").exists()


def test_tracker_summary():
    tracker = RunTracker()
    tracker.add_block(4)
    tracker.add_cache_lookup(True)
    tracker.add_cache_lookup(False)
    tracker.add_oracle_case(2)
    summary = tracker.get_summary()
    assert summary["sampling"]["paths_sampled"] == 4
    assert summary["sampling"]["discard_fraction"] == 0.0
    assert summary["oracle"] == {"cases_evaluated": 2, "cache_hits": 1, "cache_misses": 1}
