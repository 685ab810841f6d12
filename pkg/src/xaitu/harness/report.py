"""CSV and static SVG emission for experiment outputs."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def write_csv(rows: Sequence[dict], path: str | Path, columns: Sequence[str] | None = None) -> Path:
    path = Path(path)
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in columns})
    return path


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    if x is None:
        return ""
    return x


def line_chart(
    rows: Iterable[dict],
    *,
    x: str,
    y: str,
    group: str,
    path: str | Path,
    title: str = "",
    logy: bool = True,
    ylabel: str | None = None,
) -> Path:
    """One line per ``group`` value; rows with a missing ``y`` are dropped."""
    series = defaultdict(list)
    for row in rows:
        val = row.get(y)
        if val is None or val != val:  # NaN
            continue
        if logy and val <= 0:
            continue
        series[row[group]].append((row[x], val))
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for name in sorted(series):
        pts = sorted(series[name])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=str(name))
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(x)
    ax.set_ylabel(ylabel or y)
    if title:
        ax.set_title(title)
    if series:
        ax.legend(fontsize="small")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    # A fixed hash salt keeps the SVG identical between runs.
    with matplotlib.rc_context({"svg.hashsalt": "xaitu", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
