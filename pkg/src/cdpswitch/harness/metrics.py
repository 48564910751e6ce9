"""Run metrics and their CSV/JSON serialization.

CSV columns follow the field order of :class:`MetricsReport`. Dict-valued
fields (``drop_causes``, ``per_backend``, ``switches``) are written as compact
JSON strings in their column. Per-second timeseries, when present, go to a
sibling file ``<stem>.timeseries.csv`` with columns :data:`TIMESERIES_COLUMNS`.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

TIMESERIES_COLUMNS = ("second", "sent", "received", "dropped", "bytes_on_link")


class MetricsIoError(OSError):
    pass


@dataclass
class MetricsReport:
    packets_sent: int = 0
    packets_received: int = 0
    packets_dropped: int = 0
    in_flight_at_shutdown: int = 0
    payload_integrity_failures: int = 0
    bytes_original: int = 0
    bytes_on_link_compressed_segment: int = 0
    frame_bytes_on_link: int = 0
    compression_ratio: float = 1.0
    compressed_count: int = 0
    bypassed_count: int = 0
    fallback_count: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    table_lookups: int = 0
    latency_extern_p50_us: float = 0.0
    latency_extern_p95_us: float = 0.0
    latency_extern_p99_us: float = 0.0
    latency_passthrough_p50_us: float = 0.0
    latency_passthrough_p95_us: float = 0.0
    latency_passthrough_p99_us: float = 0.0
    reorder_count: int = 0
    backend_failures: int = 0
    orphan_completions: int = 0
    duration_s: float = 0.0
    drop_causes: dict[str, int] = field(default_factory=dict)
    per_backend: dict[str, dict[str, int]] = field(default_factory=dict)
    switches: dict[str, dict[str, int]] = field(default_factory=dict)
    timeseries: list[dict[str, float]] = field(default_factory=list, repr=False)

    @property
    def counters(self) -> dict[str, Any]:
        """Everything except timing-dependent fields."""
        skip = {"duration_s", "timeseries", "switches"}
        return {k: v for k, v in asdict(self).items() if k not in skip and "latency" not in k}


_DICT_FIELDS = {"drop_causes", "per_backend", "switches"}
CSV_COLUMNS = tuple(f.name for f in fields(MetricsReport) if f.name != "timeseries")

METRICS_JSON_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "MetricsReport",
    "type": "object",
    "required": list(CSV_COLUMNS),
    "additionalProperties": False,
    "properties": {
        **{
            f.name: {"type": "integer", "minimum": 0}
            for f in fields(MetricsReport)
            if f.type in ("int", int)
        },
        **{
            f.name: {"type": "number", "minimum": 0}
            for f in fields(MetricsReport)
            if f.type in ("float", float)
        },
        "compression_ratio": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "drop_causes": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
        "per_backend": {
            "type": "object",
            "additionalProperties": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
        },
        "switches": {
            "type": "object",
            "additionalProperties": {"type": "object", "additionalProperties": {"type": "integer"}},
        },
        "timeseries": {
            "type": "array",
            "items": {
                "type": "object",
                "required": list(TIMESERIES_COLUMNS),
                "properties": {c: {"type": "number", "minimum": 0} for c in TIMESERIES_COLUMNS},
            },
        },
    },
}


def percentile(values: list[float], q: float) -> float:
    """Inclusive-method percentile, ``q`` in [0, 100]; 0.0 for no samples."""
    if not values:
        return 0.0
    if len(values) == 1:
        return float(values[0])
    if q == 50:
        return float(statistics.median(values))
    cuts = statistics.quantiles(values, n=100, method="inclusive")
    return float(cuts[int(q) - 1])


def compression_ratio(on_link: int, original: int) -> float:
    return on_link / original if original else 1.0


def to_json(report: MetricsReport) -> str:
    return json.dumps(asdict(report), indent=2, sort_keys=False)


def _csv_row(report: MetricsReport) -> dict[str, str]:
    row = {}
    data = asdict(report)
    for name in CSV_COLUMNS:
        value = data[name]
        if name in _DICT_FIELDS:
            row[name] = json.dumps(value, separators=(",", ":"), sort_keys=True)
        else:
            # repr keeps floats exact for the parse-back roundtrip
            row[name] = repr(value) if isinstance(value, float) else str(value)
    return row


def emit_metrics(report: MetricsReport, fmt: str, path: str | Path) -> None:
    path = Path(path)
    try:
        if fmt == "json":
            path.write_text(to_json(report) + "\n")
        elif fmt == "csv":
            with path.open("w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
                writer.writeheader()
                writer.writerow(_csv_row(report))
            if report.timeseries:
                ts_path = path.with_name(path.stem + ".timeseries.csv")
                with ts_path.open("w", newline="") as fh:
                    writer = csv.DictWriter(fh, fieldnames=TIMESERIES_COLUMNS)
                    writer.writeheader()
                    writer.writerows(report.timeseries)
        else:
            raise ValueError(f"unknown metrics format {fmt!r}")
    except OSError as exc:
        raise MetricsIoError(f"cannot write metrics to {path}: {exc}") from exc


def load_csv(path: str | Path) -> MetricsReport:
    with Path(path).open(newline="") as fh:
        row = next(csv.DictReader(fh))
    kwargs: dict[str, Any] = {}
    for f in fields(MetricsReport):
        if f.name == "timeseries":
            continue
        raw = row[f.name]
        if f.name in _DICT_FIELDS:
            kwargs[f.name] = json.loads(raw)
        elif f.type in ("float", float):
            kwargs[f.name] = float(raw)
        else:
            kwargs[f.name] = int(raw)
    return MetricsReport(**kwargs)


def load_json(path: str | Path) -> MetricsReport:
    return MetricsReport(**json.loads(Path(path).read_text()))
