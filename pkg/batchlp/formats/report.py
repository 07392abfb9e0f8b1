from __future__ import annotations

import csv
from enum import Enum
from typing import IO, Any, Dict, Iterable, List, Optional

import numpy as np
from pydantic import BaseModel, confloat

try:
    orjson_enabled = True
    import orjson as json
except ImportError:
    orjson_enabled = False
    import json

from batchlp.tuner import TuneReport

REPORT_FORMAT_VERSION = "1"

TUNE_HEADER = ("width", "total_s", "per_column_s", "chosen")
BENCH_HEADER = ("family", "instance", "m", "n", "nnz", "S", "runtime_s", "iters")


class ProblemRecord(BaseModel):
    index: int
    status: str
    objective: Optional[float] = None
    iterations: int = 0
    primal_residual: Optional[float] = None
    dual_residual: Optional[float] = None
    relative_gap: Optional[float] = None


class PhaseTimings(BaseModel):
    load: confloat(ge=0) = 0.0
    norm_estimate: confloat(ge=0) = 0.0
    solve: confloat(ge=0) = 0.0


class RunReport(BaseModel):
    """
    The machine readable outcome of one CLI run.

    `format_version` changes whenever a field is renamed or removed. Non-finite
    numbers are written as null.
    """

    format_version: str = REPORT_FORMAT_VERSION
    command: str
    problem: Optional[str] = None
    problems: List[ProblemRecord] = []
    timings: PhaseTimings = PhaseTimings()
    config: Dict[str, Any] = {}
    driver: Optional[Dict[str, Any]] = None


class BenchRow(BaseModel):
    family: str
    instance: str
    m: int
    n: int
    nnz: int
    S: int
    runtime_s: float
    iters: int


def to_plain(value: Any) -> Any:
    """Converts models, enums and arrays to JSON types, non-finite floats to None."""
    if isinstance(value, BaseModel):
        return to_plain(value.dict())
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


def dumps_report(report: RunReport) -> str:
    data = to_plain(report)
    if orjson_enabled:
        return json.dumps(data, option=json.OPT_INDENT_2).decode()
    return json.dumps(data, indent=2)


def loads_report(text: str) -> RunReport:
    return RunReport.parse_obj(json.loads(text))


def write_tune_csv(report: TuneReport, stream: IO[str]):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TUNE_HEADER)
    for t in report.timings:
        writer.writerow(
            (t.width, f"{t.total_seconds:.9f}", f"{t.per_column_seconds:.9e}", int(t.width == report.chosen_width))
        )


def write_bench_csv(rows: Iterable[BenchRow], stream: IO[str]):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(BENCH_HEADER)
    for row in rows:
        writer.writerow(
            (row.family, row.instance, row.m, row.n, row.nnz, row.S, f"{row.runtime_s:.6f}", row.iters)
        )


def read_csv(stream: IO[str]) -> List[Dict[str, str]]:
    return list(csv.DictReader(stream))
