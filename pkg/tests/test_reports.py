import csv
import json

import numpy as np

from src.reports import (
    SWEEP_FIELDS,
    ReportHeader,
    ReportPayload,
    ReportWriter,
    RunReport,
    jsonable,
    load_report,
    payload_json,
    report_schema,
)
from src.storage import RunLog


def make_report(wall_time=0.5, **result):
    return RunReport(
        header=ReportHeader(started_at="2026-01-01T00:00:00+00:00", wall_time_s=wall_time),
        payload=ReportPayload(experiment="lower-bound", seed=4, mode="exact", config={"seed": 4}, result=result),
    )


class TestJsonable:
    def test_numpy_values(self):
        data = jsonable({"a": np.float64(1.5), "b": np.arange(3), 2: (np.int64(7),)})
        assert data == {"a": 1.5, "b": [0, 1, 2], "2": [7]}
        json.dumps(data)

    def test_non_finite(self):
        assert jsonable([float("inf"), -float("inf"), float("nan")]) == ["inf", "-inf", "nan"]


class TestReportWriter:
    def test_save_and_load(self, tmp_path):
        writer = ReportWriter(tmp_path / "out")
        report = make_report(ratio=1.25)
        path = writer.save_report(report)
        assert path.name == "lower-bound_seed4.json"
        loaded = load_report(path)
        assert loaded.payload == report.payload

    def test_payload_ignores_header(self):
        assert payload_json(make_report(0.1, x=1)) == payload_json(make_report(9.0, x=1))
        assert json.loads(payload_json(make_report(x=1)))["result"] == {"x": 1}

    def test_sweep_csv(self, tmp_path):
        writer = ReportWriter(tmp_path)
        rows = [{"k": 2, "opt_value": 2.75, "best_oblivious_value": 2.0, "ratio": 1.375, "k_prime": 1,
                 "r_vector": "2", "mode": "full_groups", "extra": "dropped"}]
        path = writer.write_sweep(rows, "sweep.csv")
        with open(path, newline="") as f:
            read = list(csv.DictReader(f))
        assert list(read[0].keys()) == SWEEP_FIELDS
        assert read[0]["opt_value"] == "2.75"

    def test_schema_names_both_parts(self):
        assert {"header", "payload"} <= set(report_schema()["properties"])


class TestRunLog:
    def test_runs_are_listed_newest_first(self, tmp_path):
        log = RunLog(str(tmp_path / "db" / "runs.db"))
        first = log.log_run("sinr", 1, "ok", 0, "a.yaml", "a.json")
        second = log.log_run("simulate", 2, "config_error", 2, "b.yaml", errors="bad")
        assert second > first
        runs = log.recent_runs()
        assert [r["id"] for r in runs] == [second, first]
        assert runs[0]["errors"] == "bad"
        assert runs[1]["report_path"] == "a.json"
        assert len(log.recent_runs(limit=1)) == 1
