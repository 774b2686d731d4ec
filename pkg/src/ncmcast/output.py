"""CSV and JSON writers for traces, sweeps, schedules and summaries."""

from __future__ import annotations

import csv
import json

from .engine import Metrics

TRACE_FORMAT_VERSION = 1
SWEEP_COLUMNS = ["parameter", "value", "seeds", "avg_total_backlog", "drop_pct",
                 "throughput_pct", "throughput_per_slot", "arrived", "delivered",
                 "dropped", "idle_slots"]


def trace_header(m: int) -> list[str]:
    return (["slot"] + [f"Q_{i}" for i in range(m)]
            + ["total", "lyapunov", "schedule_id", "delivered", "dropped"])


def write_trace_csv(metrics: Metrics, fh) -> None:
    if metrics.queue_trace is None:
        raise ValueError("trace CSV needs a run with record_queues=True")
    qt = metrics.queue_trace
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(trace_header(qt.shape[1]))
    for t in range(metrics.slots):
        w.writerow([t, *qt[t].tolist(), int(metrics.backlog_trace[t]),
                    repr(float(metrics.lyapunov_trace[t])), int(metrics.schedule_trace[t]),
                    int(metrics.delivered_trace[t]), int(metrics.dropped_trace[t])])


def write_sweep_csv(points, fh) -> None:
    w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for p in points:
        w.writerow(p.row())


def write_schedules_csv(schedules, m: int, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["schedule"] + [f"q_{i}" for i in range(m)])
    for s in schedules:
        row = [0] * m
        for i in s.parts:
            row[i] = 1
        w.writerow([f"S_{s.id}", *row])


def write_json(obj, fh) -> None:
    json.dump(obj, fh, indent=2)
    fh.write("\n")
