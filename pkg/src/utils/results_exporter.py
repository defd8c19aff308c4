"""
Results Exporter - CSV + JSON files for run logs and aggregates

Per run, with stem ``{policy}_{model}_{task}_{seed}``:
    {stem}_curve.csv      blocks, accepted, <metric columns>
    {stem}_decisions.csv  one row per transmission attempt
    {stem}.json           config echo, header and summary statistics
Per aggregate, with stem ``{policy}_{model}_{task}_aggregate``:
    {stem}_curve.csv      blocks, mean_<metric>, stderr_<metric> ...
    {stem}.json           config, seeds, histogram, final means

No timestamps or wall-clock data are written, so equal runs give equal bytes.
"""

from __future__ import annotations

import csv
import json
import os
from typing import TYPE_CHECKING, Optional

from .arq import INFINITE_UNCERTAINTY

if TYPE_CHECKING:
    from ..agents.acquisition_agent import AggregateCurve, RunLog

DECISION_COLUMNS = ["round", "sample_id", "label", "T", "uncertainty", "threshold", "snr", "decision"]


def _fmt(value) -> str:
    if value is INFINITE_UNCERTAINTY:
        return "inf"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _stem(header: dict, suffix) -> str:
    return f"{header['policy']}_{header['model']}_{header['task']}_{suffix}"


def run_stem(log: "RunLog") -> str:
    return _stem(log.header, log.header["seed"])


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2, sort_keys=False)
        f.write("\n")


def save_run(log: "RunLog", out_dir: str) -> list[str]:
    """
    Write one run's curve, decision trace and JSON summary.

    Returns:
        Paths of the files written
    """
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, run_stem(log))
    metric_names = log.metric_names

    curve_path = f"{stem}_curve.csv"
    with open(curve_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["blocks", "accepted", *metric_names])
        for point in log.curve:
            values = point.metrics.as_dict()
            writer.writerow([point.blocks, point.accepted, *(_fmt(values[m]) for m in metric_names)])

    decisions_path = f"{stem}_decisions.csv"
    with open(decisions_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(DECISION_COLUMNS)
        for record in log.records:
            for t, trace in enumerate(record.traces, start=1):
                writer.writerow([
                    record.round,
                    record.sample_id,
                    record.label,
                    t,
                    _fmt(trace.uncertainty_value),
                    _fmt(trace.snr_threshold),
                    _fmt(trace.effective_snr),
                    trace.decision.value,
                ])

    json_path = f"{stem}.json"
    header = {k: v for k, v in log.header.items() if k != "config"}
    _write_json(json_path, {"config": log.header["config"], "header": header, "summary": log.summary()})
    return [curve_path, decisions_path, json_path]


def save_aggregate(result: "AggregateCurve", out_dir: str, config: Optional[dict] = None, label: str = "aggregate") -> list[str]:
    """Write the mean/stderr curve and a JSON summary of a set of repetitions"""
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, _stem(result.header, label))
    names = list(result.mean)

    curve_path = f"{stem}_curve.csv"
    with open(curve_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["blocks", *(c for m in names for c in (f"mean_{m}", f"stderr_{m}"))])
        for i, blocks in enumerate(result.grid):
            row = [int(blocks)]
            for m in names:
                row += [_fmt(float(result.mean[m][i])), _fmt(float(result.stderr[m][i]))]
            writer.writerow(row)

    json_path = f"{stem}.json"
    header = {k: v for k, v in result.header.items() if k not in ("config", "pool_class_ratio")}
    _write_json(json_path, {
        "config": config if config is not None else result.header.get("config"),
        "header": header,
        "runs": result.run_count,
        "final_mean": {m: float(result.mean[m][-1]) for m in names},
        "final_stderr": {m: float(result.stderr[m][-1]) for m in names},
        "uncertainty_histogram": result.histogram,
    })
    return [curve_path, json_path]
