"""Loading and grouping of training metrics JSONL files.

Input records follow the experiment runner's schema:
    {"run": str, "update": int, "t": float, "metric": str,
     "value": float, "method": str}
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

log = logging.getLogger("distillreport")

REQUIRED_FIELDS = ("run", "update", "metric", "value", "method")


class InputError(Exception):
    pass


@dataclass
class RunSeries:
    """Ordered (update, value) points for one (run, metric) pair."""

    run: str
    method: str
    metric: str
    points: list = field(default_factory=list)   # [(update, value)]

    def final_value(self):
        return self.points[-1][1] if self.points else None


def _parse_line(line):
    rec = json.loads(line)
    if not isinstance(rec, dict):
        raise ValueError("record is not an object")
    for f in REQUIRED_FIELDS:
        if f not in rec:
            raise ValueError(f"missing field {f!r}")
    return (str(rec["run"]), str(rec["method"]), str(rec["metric"]),
            int(rec["update"]), float(rec["value"]))


def load_metrics(paths):
    """Parse one or more metrics JSONL files into RunSeries.

    Series are grouped by (run, metric), points sorted by update with
    duplicates resolved to the last record seen. Malformed lines are
    counted and logged, never fatal; zero parseable lines across all
    inputs is an error.
    """
    grouped = {}   # (run, metric) -> (method, {update: value})
    parsed = 0
    malformed = 0
    for path in paths:
        with open(path, encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                try:
                    run, method, metric, update, value = _parse_line(line)
                except (ValueError, json.JSONDecodeError) as e:
                    malformed += 1
                    log.warning("%s: skipping malformed line (%s)", path, e)
                    continue
                parsed += 1
                key = (run, metric)
                if key not in grouped:
                    grouped[key] = (method, {})
                grouped[key][1][update] = value
    if malformed:
        log.warning("%d malformed line(s) skipped", malformed)
    if parsed == 0:
        if malformed:
            raise InputError("no parseable metric records in input")
        log.warning("no metric records found")
        return []
    series = []
    for (run, metric), (method, points) in sorted(grouped.items()):
        series.append(RunSeries(run=run, method=method, metric=metric,
                                points=sorted(points.items())))
    return series
