"""JSON and flat-CSV serialization of benchmark reports.

CSV files use a fixed column order and ``\\n`` line endings. Timing fields
are left out of the CSVs so that reruns with the same seed are byte-identical;
they appear only in the JSON outputs of the scaling run.
"""

from __future__ import annotations

import csv
import io
import json
from typing import Sequence

from .harness import MetricsReport, SweepReport
from .scaling import ScalingReport

METRICS_COLUMNS = (
    "router",
    "n_edits",
    "codebook_size",
    "reliability",
    "generalization",
    "locality",
    "op",
    "mean_unrelated_displacement",
)
SWEEP_COLUMNS = (
    "axis",
    "value",
    "router",
    "reliability",
    "generalization",
    "locality",
    "op",
    "mean_unrelated_displacement",
    "inserted",
    "refined",
    "conflict_inserted",
)
SCALING_COLUMNS = (
    "n_edits",
    "codebook_size",
    "reliability",
    "generalization",
    "locality",
    "op",
    "parameter_count",
    "stored_bytes",
)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def metrics_csv(report: MetricsReport) -> str:
    rows = [
        (report.router, m.n_edits, m.codebook_size, m.reliability, m.generalization, m.locality, m.op,
         m.mean_unrelated_displacement)
        for m in report.per_checkpoint
    ]
    return _csv(METRICS_COLUMNS, rows)


def sweep_csv(report: SweepReport) -> str:
    rows = [
        (report.axis, r.value, report.router, r.reliability, r.generalization, r.locality, r.op,
         r.mean_unrelated_displacement, r.counts.get("inserted", 0), r.counts.get("refined", 0),
         r.counts.get("conflict_inserted", 0))
        for r in report.rows
    ]
    return _csv(SWEEP_COLUMNS, rows)


def scaling_csv(report: ScalingReport) -> str:
    rows = [
        (r.metrics.n_edits, r.metrics.codebook_size, r.metrics.reliability, r.metrics.generalization,
         r.metrics.locality, r.metrics.op, r.parameter_count, r.stored_bytes)
        for r in report.rows
    ]
    return _csv(SCALING_COLUMNS, rows)


def scaling_dict(report: ScalingReport) -> dict:
    return {
        "dim": report.dim,
        "config": report.config,
        "rows": [
            {
                "n_edits": r.metrics.n_edits,
                "codebook_size": r.metrics.codebook_size,
                "reliability": r.metrics.reliability,
                "generalization": r.metrics.generalization,
                "locality": r.metrics.locality,
                "op": r.metrics.op,
                "parameter_count": r.parameter_count,
                "stored_bytes": r.stored_bytes,
                "elapsed_s": r.elapsed_s,
            }
            for r in report.rows
        ],
        "latency_half_s": report.latency_half_s,
        "latency_full_s": report.latency_full_s,
        "latency_ratio": report.latency_ratio,
        "memory_max_deviation": report.memory_max_deviation,
    }


def to_json(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


__all__ = [
    "METRICS_COLUMNS",
    "SCALING_COLUMNS",
    "SWEEP_COLUMNS",
    "metrics_csv",
    "scaling_csv",
    "scaling_dict",
    "sweep_csv",
    "to_json",
]
