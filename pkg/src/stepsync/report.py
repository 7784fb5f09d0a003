"""Write experiment reports: results JSON, per-cell curve CSVs and SVG response plots."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path

from .harness import ExperimentReport

FORMATS = ("json", "csv", "svg")
CURVE_COLUMNS = ("offset", "mean_relative_asynchrony_s", "sem_s", "n")


def _num(x):
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def curve_csv_text(summary) -> str:
    buf = io.StringIO()
    buf.write("# schema_version=1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for off, m, s, n in zip(summary.curve_offsets, summary.curve_mean, summary.curve_sem,
                            summary.curve_n):
        w.writerow((off, _num(m), _num(s), n))
    return buf.getvalue()


def _plot(summary, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "stepsync"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.axvspan(-0.25, 0.25, color="0.85", zorder=0)
    ax.axhline(0.0, color="k", linestyle=":", linewidth=1)
    ms = [1000 * v if not math.isnan(v) else math.nan for v in summary.curve_mean]
    es = [1000 * v if not math.isnan(v) else 0.0 for v in summary.curve_sem]
    ax.errorbar(summary.curve_offsets, ms, yerr=es, marker="o", capsize=3, color="C0")
    ax.set_xticks(summary.curve_offsets)
    ax.set_xticklabels([f"T{o:+d}" if o else "T" for o in summary.curve_offsets])
    ax.set_xlabel("step")
    ax.set_ylabel("relative asynchrony (ms)")
    ax.set_title(f"{summary.cell} (n={summary.n_included})")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(report: ExperimentReport, formats, out_dir) -> list:
    """Write the requested formats under ``out_dir``; returns the paths written.

    ``json`` writes ``results.json``, ``csv`` one ``curves/<cell>.csv`` per
    condition cell and ``svg`` one ``plots/<cell>.svg`` per cell.
    """
    formats = list(formats)
    unknown = set(formats) - set(FORMATS)
    if unknown:
        raise ValueError(f"unknown report formats {sorted(unknown)}")
    if not formats:
        return []
    if not report.trials:
        raise ValueError("report has no trials")
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "json" in formats:
            path = out / "results.json"
            path.write_text(report.to_json())
            written.append(path)
        if "csv" in formats:
            (out / "curves").mkdir(exist_ok=True)
            for s in report.summaries:
                path = out / "curves" / f"{s.cell}.csv"
                path.write_text(curve_csv_text(s))
                written.append(path)
        if "svg" in formats:
            (out / "plots").mkdir(exist_ok=True)
            for s in report.summaries:
                path = out / "plots" / f"{s.cell}.svg"
                _plot(s, path)
                written.append(path)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write report: {exc.strerror}", exc.filename) from exc
    return written
