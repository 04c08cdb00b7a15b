"""Metrics table I/O and boxplot summary statistics.

Quartiles use linear interpolation between order statistics: the q-quantile
of n sorted values sits at position q(n - 1).  Whiskers follow Tukey: the most
extreme values still within 1.5 IQR of the box.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

METRIC_COLUMNS = ("strategy", "stage", "re", "variable", "replicate", "test_mse", "epochs_to_stop", "stop_reason")
SUMMARY_STATS = ("n", "median", "q1", "q3", "iqr", "whisker_low", "whisker_high", "min", "max", "mean")


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class MetricRow:
    strategy: str
    stage: int
    re: float
    variable: str
    replicate: int
    test_mse: Optional[float]
    epochs_to_stop: int
    stop_reason: str

    def cells(self) -> list[str]:
        return [
            self.strategy,
            str(self.stage),
            format(self.re, "g"),
            self.variable,
            str(self.replicate),
            "" if self.test_mse is None else format(self.test_mse, ".17g"),
            str(self.epochs_to_stop),
            self.stop_reason,
        ]


def write_metrics(path, rows: Iterable[MetricRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in rows:
            w.writerow(row.cells())


def read_metrics(path) -> list[MetricRow]:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"metrics file not found: {p}")
    rows = []
    with open(p, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != METRIC_COLUMNS:
            raise ReportError(f"{p}: expected header {','.join(METRIC_COLUMNS)}")
        for lineno, rec in enumerate(reader, 2):
            try:
                rows.append(
                    MetricRow(
                        rec[0], int(rec[1]), float(rec[2]), rec[3], int(rec[4]),
                        None if rec[5] == "" else float(rec[5]), int(rec[6]), rec[7],
                    )
                )
            except (IndexError, ValueError) as exc:
                raise ReportError(f"{p}:{lineno}: {exc}") from None
    return rows


def box_stats(values: Sequence[float]) -> dict[str, float]:
    a = np.sort(np.asarray(values, dtype=float))
    if a.size == 0:
        raise ReportError("no values to summarize")
    q1, med, q3 = np.quantile(a, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    inside = a[(a >= q1 - 1.5 * iqr) & (a <= q3 + 1.5 * iqr)]
    return {
        "n": float(a.size),
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "iqr": float(iqr),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "min": float(a[0]),
        "max": float(a[-1]),
        "mean": float(a.mean()),
    }


def group_key(row: MetricRow, variable: Optional[str] = None) -> str:
    return f"{row.strategy}|{row.stage}|{row.re:g}|{variable or row.variable}"


def summarize(rows: Sequence[MetricRow]) -> list[tuple[str, str, float]]:
    """(group, stat, value) triples for test MSE and epochs-to-stop, groups in first-seen order."""
    if not rows:
        raise ReportError("metrics table is empty")
    groups: dict[str, list[float]] = {}
    for row in rows:
        if row.test_mse is not None:
            groups.setdefault(group_key(row), []).append(row.test_mse)
    epochs: dict[str, dict[int, int]] = {}
    for row in rows:
        if row.stop_reason != "diverged":
            key = f"{row.strategy}|{row.stage}|epochs"
            epochs.setdefault(key, {})[row.replicate] = row.epochs_to_stop
    out = []
    for key, vals in groups.items():
        out.extend((key, stat, value) for stat, value in box_stats(vals).items())
    for key, per_rep in epochs.items():
        out.extend((key, stat, value) for stat, value in box_stats(list(per_rep.values())).items())
    failed = sum(1 for r in rows if r.stop_reason == "diverged")
    if failed:
        out.append(("all", "diverged_rows", float(failed)))
    return out


def write_summary(path, triples) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("group", "stat", "value"))
        for group, stat, value in triples:
            w.writerow((group, stat, format(value, ".17g")))


def read_summary(path) -> dict[tuple[str, str], float]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return {(g, s): float(v) for g, s, v in reader}


def report(in_path, out_path) -> list[tuple[str, str, float]]:
    triples = summarize(read_metrics(in_path))
    write_summary(out_path, triples)
    return triples
