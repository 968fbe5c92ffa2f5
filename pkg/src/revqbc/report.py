"""Experiment reports and their bit-stable serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

CSV_HEADER = ("experiment", "n", "trials", "seed", "estimate", "stderr", "exact", "aborts", "wall_time")
SIGNIFICANT_DIGITS = 12


def round_sig(value: float) -> float:
    if value is None or not math.isfinite(value):
        return value
    return float(f"{value:.{SIGNIFICANT_DIGITS}g}")


def _round_tree(obj):
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return round_sig(obj)
    if isinstance(obj, dict):
        return {str(k): _round_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_tree(v) for v in obj]
    if hasattr(obj, "item"):
        return _round_tree(obj.item())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


@dataclass
class ExperimentReport:
    experiment: str
    n: int
    trials: int
    seed: int
    estimate: float
    stderr: float
    exact: Optional[float]
    aborts: int
    wall_time: float
    config: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    flagged: bool = False

    def __post_init__(self):
        self.estimate = round_sig(float(self.estimate))
        self.stderr = round_sig(float(self.stderr))
        self.exact = None if self.exact is None else round_sig(float(self.exact))
        self.wall_time = round_sig(float(self.wall_time))
        self.config = _round_tree(self.config)
        self.details = _round_tree(self.details)

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        if not include_timing:
            d["wall_time"] = 0.0
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(**{f.name: d[f.name] for f in fields(cls) if f.name in d})

    def csv_row(self, include_timing: bool = True) -> list[str]:
        exact = "" if self.exact is None else f"{self.exact:.12g}"
        wall = f"{self.wall_time:.12g}" if include_timing else "0"
        return [self.experiment, str(self.n), str(self.trials), str(self.seed),
                f"{self.estimate:.12g}", f"{self.stderr:.12g}", exact, str(self.aborts), wall]


def render_report(report: ExperimentReport, fmt: str = "json", include_timing: bool = True) -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(include_timing), indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerow(report.csv_row(include_timing))
        return buf.getvalue()
    raise ValueError(f"unknown report format {fmt!r}")


def write_report(report: ExperimentReport, path, fmt: str = "json", include_timing: bool = True) -> None:
    Path(path).write_text(render_report(report, fmt, include_timing), encoding="utf-8")


def read_report(path) -> ExperimentReport:
    return ExperimentReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def report_from_csv(text: str) -> dict[str, Any]:
    rows = list(csv.reader(io.StringIO(text)))
    return dict(zip(rows[0], rows[1]))
