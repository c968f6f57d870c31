"""CSV metrics and coverage/length boxplots."""

from __future__ import annotations

import csv
import math
from collections import OrderedDict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiments import MetricsRecord  # noqa: E402

_SVG_META = {"Date": None, "Creator": None}


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def emit_csv(records, path):
    """Write one row per record.

    Baselines get blank ``k`` and ``xi`` cells; ``avg_length`` is blank when
    every region of a repetition was the whole line.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MetricsRecord.columns)
        for r in records:
            w.writerow([_cell(getattr(r, c)) for c in MetricsRecord.columns])


def read_csv(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(MetricsRecord(
                row["example"], row["setting"], row["method"],
                int(row["k"]) if row["k"] else None,
                float(row["xi"]) if row["xi"] else None,
                int(row["rep"]), float(row["coverage"]), float(row["avg_length"] or "nan"),
                int(row["inf_regions"]), int(row["seed"])))
    return out


def group_label(r) -> str:
    if r.method == "conformal":
        parts = [f"k={r.k}"]
        if r.xi is not None:
            parts.append(f"xi={r.xi:g}")
        return " ".join(parts)
    return r.method.upper()


def grouped(records, field):
    """``{label: values}`` in first-seen order, one box per method/k/xi group."""
    groups = OrderedDict()
    for r in records:
        groups.setdefault((r.setting, group_label(r)), []).append(getattr(r, field))
    return groups


def emit_boxplot_svg(records, path, field="coverage", nominal=None):
    """Boxplot of ``field`` per group; a dashed line marks the nominal level.

    Returns the box labels, left to right.
    """
    groups = grouped(records, field)
    if not groups:
        raise ValueError("no records to plot")
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(groups) + 1.5), 3.2))
    settings = {s for s, _ in groups}
    labels = [lab if len(settings) == 1 else f"{s}: {lab}" for s, lab in groups]
    data = [[v for v in vals if math.isfinite(v)] for vals in groups.values()]
    ax.boxplot(data, widths=0.6)
    ax.set_xticks(range(1, len(labels) + 1), labels, rotation=30, ha="right")
    if nominal is not None:
        ax.axhline(nominal, color="0.3", linestyle="--", linewidth=0.8)
    ax.set_ylabel("coverage" if field == "coverage" else "average length")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    with matplotlib.rc_context({"svg.hashsalt": "rlconformal"}):
        fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return labels


def summarize(records):
    """Mean coverage and length per group, as printable lines."""
    cov = grouped(records, "coverage")
    length = grouped(records, "avg_length")
    lines = []
    for key, c in cov.items():
        ln = [v for v in length[key] if math.isfinite(v)]
        mean_len = sum(ln) / len(ln) if ln else math.nan
        lines.append(f"{key[0]:>3} {key[1]:<14} coverage {sum(c) / len(c):.3f}  "
                     f"length {mean_len:.2f}  reps {len(c)}")
    return lines
