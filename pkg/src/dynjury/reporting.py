"""Report assembly: per-method tau tables with significance columns, judge
selection frequencies, importance and bin-analysis tables, and small
dependency-free SVG charts. Every figure also exists as CSV."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .stats import StatsError, cliffs_delta, wilcoxon_one_sided
from .util import fmt_float

METHOD_DYNAMIC = "dynamic_jury"
STATIC_METHODS = ("average_all", "average_top_k", "weighted_regression", "weighted_tau")

NA = "NA"


@dataclass(frozen=True)
class ReportRow:
    method: str
    dataset: str  # dataset name or "Overall"
    mean_tau: float | None
    std_tau: float | None
    p_value: float | None  # one-sided Wilcoxon: dynamic_jury > method
    delta: float | None  # Cliff's delta, dynamic_jury vs method
    n_seeds: int


def _clean(values: Sequence[float | None]) -> list[float]:
    return [v for v in values if v is not None]


def build_report_rows(
    taus: dict[str, dict[str, list[float | None]]],
    reference: str = METHOD_DYNAMIC,
) -> list[ReportRow]:
    """taus[method][dataset] holds one tau per seed (None = undefined).

    Significance columns compare each method against the reference over
    paired seeds; the reference row carries no p-value or delta.
    """
    methods = list(taus)
    datasets: list[str] = sorted({d for m in taus.values() for d in m})
    if "Overall" in datasets:
        datasets.remove("Overall")
        datasets.insert(0, "Overall")
    ordered = [m for m in (reference, *STATIC_METHODS) if m in methods]
    ordered += sorted(m for m in methods if m not in ordered)

    rows: list[ReportRow] = []
    for method in ordered:
        for dataset in datasets:
            per_seed = taus[method].get(dataset, [])
            clean = _clean(per_seed)
            if not clean:
                rows.append(ReportRow(method, dataset, None, None, None, None, 0))
                continue
            mean = float(np.mean(clean))
            std = float(np.std(clean, ddof=1)) if len(clean) > 1 else 0.0
            p_value = None
            delta = None
            if method != reference and reference in taus:
                ref_seed = taus[reference].get(dataset, [])
                paired = [
                    (a, b)
                    for a, b in zip(ref_seed, per_seed)
                    if a is not None and b is not None
                ]
                if paired:
                    ref_vals = [a for a, _ in paired]
                    vals = [b for _, b in paired]
                    try:
                        p_value = wilcoxon_one_sided(ref_vals, vals).p_one_sided
                    except StatsError:
                        p_value = None
                    delta = cliffs_delta(ref_vals, vals).delta
            rows.append(ReportRow(method, dataset, mean, std, p_value, delta, len(clean)))
    return rows


def write_report_csv(path: str | Path, rows: Sequence[ReportRow]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("method,dataset,tau,std,p_value,cliffs_delta\n")
        for row in rows:
            fh.write(
                ",".join(
                    [
                        row.method,
                        row.dataset,
                        fmt_float(row.mean_tau) if row.mean_tau is not None else NA,
                        fmt_float(row.std_tau) if row.std_tau is not None else NA,
                        fmt_float(row.p_value) if row.p_value is not None else NA,
                        fmt_float(row.delta) if row.delta is not None else NA,
                    ]
                )
                + "\n"
            )


def write_selection_frequency_csv(
    path: str | Path,
    pool: Sequence[str],
    rank_counts: dict[str, list[int]],
    total_verdicts: int,
) -> None:
    """Per judge: how often it was selected at each reliability rank."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    k = max((len(v) for v in rank_counts.values()), default=0)
    with open(path, "w", encoding="utf-8") as fh:
        header = ["judge"] + [f"rank_{i + 1}" for i in range(k)] + ["selected", "selection_rate"]
        fh.write(",".join(header) + "\n")
        for judge in pool:
            counts = rank_counts.get(judge, [0] * k)
            selected = sum(counts)
            rate = selected / total_verdicts if total_verdicts else 0.0
            fh.write(
                ",".join([judge] + [str(c) for c in counts] + [str(selected), fmt_float(rate)])
                + "\n"
            )


def write_importance_csv(
    path: str | Path, top_by_judge: dict[str, list[tuple[str, float, float]]]
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("judge,rank,feature,importance_mean,importance_std\n")
        for judge in sorted(top_by_judge):
            for rank, (feature, mean, std) in enumerate(top_by_judge[judge], start=1):
                fh.write(f"{judge},{rank},{feature},{fmt_float(mean)},{fmt_float(std)}\n")


def write_bin_analysis_csv(path: str | Path, analysis) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("feature,bin,count,judge,tau,selection_rate,selection_count\n")
        for stats in analysis.bins:
            for judge in sorted(stats.tau_by_judge):
                tau = stats.tau_by_judge[judge]
                fh.write(
                    ",".join(
                        [
                            analysis.feature_name,
                            stats.label,
                            str(stats.count),
                            judge,
                            fmt_float(tau) if tau is not None else NA,
                            fmt_float(stats.selection_rate_by_judge[judge]),
                            str(stats.selection_count_by_judge[judge]),
                        ]
                    )
                    + "\n"
                )


def _svg_header(width: int, height: int, title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<title>{title}</title>',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="14" '
        f'font-family="sans-serif">{title}</text>',
    ]


def svg_boxplot(
    path: str | Path,
    title: str,
    labels: Sequence[str],
    groups: Sequence[Sequence[float]],
) -> None:
    """Minimal boxplot (min, quartiles, max) with the median value printed."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    width = max(140 * len(labels) + 80, 320)
    height = 360
    plot_top, plot_bottom = 40, height - 70
    values = [v for group in groups for v in group]
    lo = min(values) if values else 0.0
    hi = max(values) if values else 1.0
    if math.isclose(lo, hi):
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo

    def y_at(v: float) -> float:
        return plot_bottom - (v - lo) / span * (plot_bottom - plot_top)

    parts = _svg_header(width, height, title)
    for idx, (label, group) in enumerate(zip(labels, groups)):
        cx = 80 + 140 * idx + 50
        if group:
            q0, q1, q2, q3, q4 = (float(q) for q in np.quantile(group, [0, 0.25, 0.5, 0.75, 1]))
            parts.append(
                f'<line x1="{cx}" y1="{y_at(q0):.1f}" x2="{cx}" y2="{y_at(q4):.1f}" '
                'stroke="black"/>'
            )
            parts.append(
                f'<rect x="{cx - 30}" y="{y_at(q3):.1f}" width="60" '
                f'height="{max(y_at(q1) - y_at(q3), 1):.1f}" fill="#9ecae1" stroke="black"/>'
            )
            parts.append(
                f'<line x1="{cx - 30}" y1="{y_at(q2):.1f}" x2="{cx + 30}" y2="{y_at(q2):.1f}" '
                'stroke="black" stroke-width="2"/>'
            )
            parts.append(
                f'<text x="{cx}" y="{y_at(q2) - 6:.1f}" text-anchor="middle" font-size="10" '
                f'font-family="sans-serif">{fmt_float(q2, 4)}</text>'
            )
        parts.append(
            f'<text x="{cx}" y="{height - 40}" text-anchor="middle" font-size="10" '
            f'font-family="sans-serif" transform="rotate(20 {cx} {height - 40})">{label}</text>'
        )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def svg_bar(
    path: str | Path, title: str, labels: Sequence[str], values: Sequence[float]
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    width = max(90 * len(labels) + 80, 320)
    height = 320
    plot_top, plot_bottom = 40, height - 70
    hi = max(list(values) + [1e-9])
    parts = _svg_header(width, height, title)
    for idx, (label, value) in enumerate(zip(labels, values)):
        cx = 60 + 90 * idx + 35
        bar_height = (value / hi) * (plot_bottom - plot_top)
        y = plot_bottom - bar_height
        parts.append(
            f'<rect x="{cx - 25}" y="{y:.1f}" width="50" height="{bar_height:.1f}" '
            'fill="#a1d99b" stroke="black"/>'
        )
        parts.append(
            f'<text x="{cx}" y="{y - 5:.1f}" text-anchor="middle" font-size="10" '
            f'font-family="sans-serif">{fmt_float(value, 4)}</text>'
        )
        parts.append(
            f'<text x="{cx}" y="{height - 40}" text-anchor="middle" font-size="10" '
            f'font-family="sans-serif" transform="rotate(20 {cx} {height - 40})">{label}</text>'
        )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")
