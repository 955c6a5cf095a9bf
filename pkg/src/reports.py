"""
Run reports: a JSON document with a timing header and a deterministic payload,
plus CSV exports for per-round traces and lower-bound sweeps.
"""
import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from src import __version__

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
TRACE_FIELDS = ["round", "bidder", "mechanism", "bid", "available", "outcome", "payment", "utility"]
SWEEP_FIELDS = ["k", "opt_value", "best_oblivious_value", "ratio", "k_prime", "r_vector", "mode"]


class ReportHeader(BaseModel):
    """Everything that may differ between two runs of the same config."""

    version: str = __version__
    schema_version: int = REPORT_SCHEMA_VERSION
    started_at: str
    wall_time_s: float


class ReportPayload(BaseModel):
    experiment: str
    seed: int
    mode: str
    samples: Optional[int] = None
    status: str = "ok"
    exit_code: int = 0
    config: Dict[str, Any]
    result: Dict[str, Any] = Field(default_factory=dict)
    artifacts: List[str] = Field(default_factory=list)


class RunReport(BaseModel):
    header: ReportHeader
    payload: ReportPayload


def jsonable(obj):
    """Plain JSON values: numpy scalars and arrays unwrapped, non-finite floats spelled out."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def report_schema() -> Dict:
    return RunReport.model_json_schema()


def payload_json(report: RunReport) -> str:
    """Canonical payload text; identical for the same config and seed."""
    return json.dumps(report.payload.model_dump(mode="json"), sort_keys=True, indent=2, ensure_ascii=False)


class ReportWriter:
    """Write reports and CSV artifacts into one output directory."""

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def save_report(self, report: RunReport, name: Optional[str] = None) -> Path:
        payload = report.payload
        filename = self.output_dir / (name or f"{payload.experiment}_seed{payload.seed}.json")
        document = {
            "header": report.header.model_dump(mode="json"),
            "payload": json.loads(payload_json(report)),
        }
        with open(filename, "w", encoding="utf-8") as f:
            json.dump(document, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write("\n")
        logger.info("report written to %s", filename)
        return filename

    def write_rows(self, filename: str, fieldnames: List[str], rows: Iterable[Dict]) -> Path:
        path = self.output_dir / filename
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore")
            writer.writeheader()
            count = 0
            for row in rows:
                writer.writerow(row)
                count += 1
        logger.info("wrote %d rows to %s", count, path)
        return path

    def write_trace(self, trace, filename: str) -> Path:
        return self.write_rows(filename, TRACE_FIELDS, trace.rows())

    def write_sweep(self, rows: List[Dict], filename: str) -> Path:
        return self.write_rows(filename, SWEEP_FIELDS, rows)


def load_report(path: Path) -> RunReport:
    with open(path, "r", encoding="utf-8") as f:
        return RunReport.model_validate(json.load(f))
