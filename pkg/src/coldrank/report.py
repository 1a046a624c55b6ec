"""Render aggregates as tables (CSV, aligned text, LaTeX rows) and emit
plot-ready CSV series. No figure rendering happens here; every series is
written as an ``x,y`` CSV for external plotting, with full precision kept
in the JSON artifacts and 3-decimal formatting in human-readable tables.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .harness import AblationRow, AggregateResult
from .metrics import ExposureReport, GtPositionStats


class ReportError(ValueError):
    pass


PLOT_KINDS = ("recall_curve", "histogram", "cumulative_exposure", "scatter", "bar")


@dataclass
class PlotSeries:
    name: str
    kind: str
    points: list[tuple[float, float]]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PLOT_KINDS:
            raise ReportError(f"unknown plot kind {self.kind!r}")
        if self.kind in ("recall_curve", "cumulative_exposure"):
            ys = [y for _, y in self.points]
            if any(b < a for a, b in zip(ys, ys[1:])):
                raise ReportError(f"{self.kind} series must be non-decreasing")


def _fmt_cell(mean: float, sd: float | None) -> str:
    if sd is None:
        return f"{mean:.3f}"
    return f"{mean:.3f} ± {sd:.3f}"


def _main_columns(agg: AggregateResult) -> list[str]:
    k = agg.meta.get("k", 10)
    cutoffs = agg.meta.get("recall_cutoffs")
    if cutoffs is None:
        cutoffs = sorted({int(m.split("@")[1]) for metrics in agg.pipelines.values()
                          for m in metrics if m.startswith("recall@")})
    columns = [("hr", f"HR@{k}"), ("ndcg", f"nDCG@{k}")]
    columns.extend((f"recall@{c}", f"Recall@{c}") for c in cutoffs)
    return columns


def emit_main_table(agg: AggregateResult, format: str = "text") -> str:
    """Main results table: one row per pipeline, quality then coverage.

    ``csv`` emits raw full-precision mean/sd columns (round-trippable);
    ``text`` and ``latex`` format cells as "mean ± sd" with 3 decimals.
    """
    columns = _main_columns(agg)
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        header = ["model"]
        for key, _ in columns:
            header.extend([f"{key}_mean", f"{key}_sd"])
        writer.writerow(header)
        for name, metrics in agg.pipelines.items():
            row: list[str | float] = [name]
            for key, _ in columns:
                mean, sd = metrics.get(key, (float("nan"), None))
                row.extend([repr(mean), "" if sd is None else repr(sd)])
            writer.writerow(row)
        return buf.getvalue()
    rows = []
    for name, metrics in agg.pipelines.items():
        cells = []
        for key, _ in columns:
            if key in metrics:
                cells.append(_fmt_cell(*metrics[key]))
            else:
                cells.append("-")
        rows.append((name, cells))
    labels = [label for _, label in columns]
    if format == "latex":
        lines = ["Model & " + " & ".join(labels) + r" \\"]
        lines.extend(name + " & " + " & ".join(cells) + r" \\" for name, cells in rows)
        return "\n".join(lines) + "\n"
    if format == "text":
        name_w = max(len("Model"), *(len(name) for name, _ in rows))
        widths = [max(len(label), *(len(cells[i]) for _, cells in rows))
                  for i, label in enumerate(labels)]
        lines = ["Model".ljust(name_w) + "  " +
                 "  ".join(label.rjust(w) for label, w in zip(labels, widths))]
        for name, cells in rows:
            lines.append(name.ljust(name_w) + "  " +
                         "  ".join(cell.rjust(w) for cell, w in zip(cells, widths)))
        return "\n".join(lines) + "\n"
    raise ReportError(f"unknown table format {format!r}")


def parse_main_csv(text: str) -> dict[str, dict[str, tuple[float, float | None]]]:
    """Inverse of emit_main_table(format="csv"), for round-trip checks."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    keys = [h[:-5] for h in header[1::2]]  # strip _mean
    out: dict[str, dict[str, tuple[float, float | None]]] = {}
    for row in reader:
        metrics = {}
        for i, key in enumerate(keys):
            mean = float(row[1 + 2 * i])
            sd_raw = row[2 + 2 * i]
            metrics[key] = (mean, None if sd_raw == "" else float(sd_raw))
        out[row[0]] = metrics
    return out


def write_main_tables(agg: AggregateResult, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for fmt, suffix in (("csv", "csv"), ("text", "txt"), ("latex", "tex")):
        path = out / f"main_results.{suffix}"
        path.write_text(emit_main_table(agg, fmt), encoding="utf-8")
        paths[fmt] = path
    return paths


def emit_ablation_table(rows: Sequence[AblationRow], format: str = "csv") -> str:
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["pool_size", "hr", "ndcg", "rerank_seconds"])
        for row in rows:
            writer.writerow([row.pool_size, repr(row.hr), repr(row.ndcg),
                             repr(row.rerank_seconds)])
        return buf.getvalue()
    if format == "text":
        lines = [f"{'Pool':>6}  {'HR':>8}  {'nDCG':>8}  {'Time/user (s)':>14}"]
        for row in rows:
            lines.append(f"{row.pool_size:>6}  {row.hr:>8.3f}  {row.ndcg:>8.3f}  "
                         f"{row.rerank_seconds:>14.3f}")
        return "\n".join(lines) + "\n"
    raise ReportError(f"unknown table format {format!r}")


# ---------------------------------------------------------------------------
# plot data

def recall_curve_series(agg: AggregateResult) -> list[PlotSeries]:
    series = []
    for name, metrics in agg.pipelines.items():
        points = sorted((float(m.split("@")[1]), mean)
                        for m, (mean, _) in metrics.items() if m.startswith("recall@"))
        if points:
            series.append(PlotSeries(name=f"recall_curve_{name}", kind="recall_curve",
                                     points=points, metadata={"pipeline": name}))
    return series


def cumulative_exposure_series(counts: Sequence[int], name: str = "cumulative_exposure") -> PlotSeries:
    """Cumulative exposure share by descending-exposure item rank."""
    if not counts:
        raise ReportError("no exposure counts")
    ordered = sorted(counts, reverse=True)
    total = float(sum(ordered))
    if total <= 0:
        raise ReportError("exposure counts sum to zero")
    points = []
    running = 0.0
    for rank, count in enumerate(ordered, start=1):
        running += count
        points.append((float(rank), running / total))
    return PlotSeries(name=name, kind="cumulative_exposure", points=points)


def gt_position_histogram_series(stats: GtPositionStats,
                                 name: str = "gt_position_histogram") -> PlotSeries:
    centers = [(a + b) / 2.0 for a, b in zip(stats.histogram_edges, stats.histogram_edges[1:])]
    points = list(zip(centers, (float(c) for c in stats.histogram_counts)))
    return PlotSeries(name=name, kind="histogram", points=points,
                      metadata={"median": repr(stats.median)})


def score_histogram_series(bin_edges: Sequence[float], masses: Sequence[float],
                           name: str) -> PlotSeries:
    centers = [(a + b) / 2.0 for a, b in zip(bin_edges, bin_edges[1:])]
    if len(centers) != len(masses):  # degenerate single-bin report
        centers = list(bin_edges[:len(masses)])
    return PlotSeries(name=name, kind="histogram",
                      points=[(float(c), float(m)) for c, m in zip(centers, masses)])


def bar_series(agg: AggregateResult, metric: str, name: str | None = None) -> PlotSeries:
    points = []
    labels = []
    for i, (pipeline, metrics) in enumerate(agg.pipelines.items()):
        if metric in metrics:
            points.append((float(i), metrics[metric][0]))
            labels.append(pipeline)
    if not points:
        raise ReportError(f"metric {metric!r} absent from aggregate")
    return PlotSeries(name=name or f"bar_{metric.replace('@', '_at_')}", kind="bar",
                      points=points, metadata={"labels": "|".join(labels)})


def scatter_series(points: Sequence[tuple[float, float]], name: str) -> PlotSeries:
    return PlotSeries(name=name, kind="scatter", points=[(float(x), float(y)) for x, y in points])


def write_plot_series(series: Sequence[PlotSeries], out_dir: str | Path) -> list[Path]:
    """One CSV per series under ``out_dir``/plots, header ``x,y``,
    deterministic ordering; metadata lands in ``<name>.meta.json``."""
    plots = Path(out_dir) / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    paths = []
    for s in sorted(series, key=lambda s: s.name):
        path = plots / f"{s.name}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y"])
            for x, y in s.points:
                writer.writerow([repr(float(x)), repr(float(y))])
        if s.metadata:
            meta_path = plots / f"{s.name}.meta.json"
            meta_path.write_text(json.dumps(s.metadata, indent=2, sort_keys=True) + "\n",
                                 encoding="utf-8")
        paths.append(path)
    return paths


def write_stat_tests(payload: Mapping, path: str | Path) -> Path:
    """Serialize comparison reports; insertion order is kept for diffability."""
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


def write_exposure_table(exposures: Mapping[str, ExposureReport], path: str | Path) -> Path:
    """Combined top-1 exposure CSV with a leading pipeline column."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pipeline", "rank", "item_id", "count", "cumulative_share",
                         "unique_top1", "gini"])
        for pipeline in sorted(exposures):
            exposure = exposures[pipeline]
            ordered = sorted(exposure.top1_histogram.items(), key=lambda kv: (-kv[1], kv[0]))
            total = float(sum(exposure.top1_histogram.values()))
            running = 0.0
            for rank, (item_id, count) in enumerate(ordered, start=1):
                running += count
                writer.writerow([pipeline, rank, item_id, count, repr(running / total),
                                 exposure.unique_top1, repr(exposure.gini)])
    return path


def write_exposure_csv(exposure: ExposureReport, path: str | Path) -> Path:
    path = Path(path)
    ordered = sorted(exposure.top1_histogram.items(), key=lambda kv: (-kv[1], kv[0]))
    total = float(sum(exposure.top1_histogram.values()))
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "item_id", "count", "cumulative_share"])
        running = 0.0
        for rank, (item_id, count) in enumerate(ordered, start=1):
            running += count
            writer.writerow([rank, item_id, count, repr(running / total)])
    return path
