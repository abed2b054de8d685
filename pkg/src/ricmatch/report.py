"""Hand-emitted SVG line charts for sweep results.

Output bytes depend only on the input points: coordinates are rounded to
two decimals, plans are drawn in sorted order and no timestamps are
embedded.
"""

from __future__ import annotations

import json
import os
from collections import defaultdict
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .experiments import CurvePoint, EnvelopeEntry, Metric, SweepResult, best_instance_envelope, read_points_csv

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 170, 30, 50
PALETTE = ("#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
ENVELOPE_COLOR = "#ff7f0e"

X_LABELS = {"data_fraction": "fraction of training data", "time_budget": "training-time budget (normalised)",
            "xapp": "training samples"}
Y_LABELS = {Metric.MAPE: "validation MAPE (%)", Metric.ACCURACY: "accuracy (%)"}


def mean_curves(points: Sequence[CurvePoint]) -> dict[str, list[tuple[float, float]]]:
    """Per plan, the mean-over-seeds metric at each x, sorted by x."""
    acc = defaultdict(list)
    for p in points:
        acc[(p.plan_id, p.x)].append(p.metric)
    curves = defaultdict(list)
    for (plan_id, x), vals in sorted(acc.items()):
        curves[plan_id].append((x, float(np.mean(vals))))
    return dict(curves)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick(v: float) -> str:
    return f"{v:.3g}"


def render_svg(points: Sequence[CurvePoint], envelope: Sequence[EnvelopeEntry], metric: Metric,
               x_label: str = "x", title: str = "") -> str:
    """One polyline per plan plus the best-instance envelope, drawn last."""
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B
    x0, y0 = MARGIN_L, MARGIN_T + ph
    curves = mean_curves(points)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    if title:
        out.append(f'<text x="{WIDTH // 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x0 + pw}" y2="{y0}" stroke="black"/>')
    out.append(f'<line class="axis" x1="{x0}" y1="{MARGIN_T}" x2="{x0}" y2="{y0}" stroke="black"/>')
    out.append(f'<text x="{x0 + pw // 2}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">'
               f'{escape(x_label)}</text>')
    out.append(f'<text x="16" y="{MARGIN_T + ph // 2}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {MARGIN_T + ph // 2})">{escape(Y_LABELS[metric])}</text>')

    xs = [x for c in curves.values() for x, _ in c] + [e.x for e in envelope]
    ys = [y for c in curves.values() for _, y in c] + [e.metric for e in envelope]
    if not xs:
        out.append(f'<text class="empty" x="{x0 + pw // 2}" y="{MARGIN_T + ph // 2}" text-anchor="middle" '
                   f'font-size="14">no data</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    xlo, xhi = min(xs), max(xs)
    ylo, yhi = min(ys), max(ys)
    if xhi == xlo:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    if yhi == ylo:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad

    def sx(x):
        return x0 + (x - xlo) / (xhi - xlo) * pw

    def sy(y):
        return y0 - (y - ylo) / (yhi - ylo) * ph

    for k in range(5):
        tx = xlo + k * (xhi - xlo) / 4
        ty = ylo + k * (yhi - ylo) / 4
        out.append(f'<line x1="{_fmt(sx(tx))}" y1="{y0}" x2="{_fmt(sx(tx))}" y2="{y0 + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(sx(tx))}" y="{y0 + 18}" text-anchor="middle" font-size="10">{_tick(tx)}</text>')
        out.append(f'<line x1="{x0 - 5}" y1="{_fmt(sy(ty))}" x2="{x0}" y2="{_fmt(sy(ty))}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8}" y="{_fmt(sy(ty) + 3)}" text-anchor="end" font-size="10">{_tick(ty)}</text>')

    legend_x = x0 + pw + 15
    for i, (plan_id, curve) in enumerate(sorted(curves.items())):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in curve)
        out.append(f'<polyline class="plan" data-plan="{escape(plan_id)}" points="{pts}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5"/>')
        ly = MARGIN_T + 10 + 16 * i
        out.append(f'<line x1="{legend_x}" y1="{ly}" x2="{legend_x + 20}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="1.5"/>')
        out.append(f'<text x="{legend_x + 25}" y="{ly + 4}" font-size="11">{escape(plan_id)}</text>')
    if envelope:
        pts = " ".join(f"{_fmt(sx(e.x))},{_fmt(sy(e.metric))}" for e in envelope)
        out.append(f'<polyline class="envelope" points="{pts}" fill="none" stroke="{ENVELOPE_COLOR}" '
                   f'stroke-width="3" stroke-dasharray="6 3"/>')
        ly = MARGIN_T + 10 + 16 * len(curves)
        out.append(f'<line x1="{legend_x}" y1="{ly}" x2="{legend_x + 20}" y2="{ly}" stroke="{ENVELOPE_COLOR}" '
                   f'stroke-width="3" stroke-dasharray="6 3"/>')
        out.append(f'<text x="{legend_x + 25}" y="{ly + 4}" font-size="11">best instance</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_result(result: SweepResult) -> str:
    kind = result.config.get("sweep", "")
    return render_svg(result.points, result.envelope, result.metric, X_LABELS.get(kind, "x"), result.sweep)


def load_result(csv_path) -> SweepResult:
    """Rebuild a SweepResult from a result CSV and, if present, its JSON summary."""
    points = read_points_csv(csv_path)
    json_path = os.path.splitext(csv_path)[0] + ".json"
    config: dict = {}
    metric: Optional[Metric] = None
    if os.path.exists(json_path):
        try:
            with open(json_path, encoding="utf-8") as f:
                summary = json.load(f)
            config = summary.get("config", {})
            metric = Metric(summary["metric"])
        except (ValueError, KeyError) as exc:
            raise ValueError(f"{json_path}: malformed result summary: {exc}") from None
    if metric is None:
        metric = Metric.ACCURACY if any(p.extra for p in points) else Metric.MAPE
    name = os.path.splitext(os.path.basename(csv_path))[0]
    result = SweepResult(name, metric, config, points)
    result.envelope = best_instance_envelope(result)
    return result


def summary_text(result: SweepResult) -> str:
    curves = mean_curves(result.points)
    lines = [f"{result.sweep}: metric={result.metric.value} plans={len(curves)} points={len(result.points)}"]
    for e in result.envelope:
        lines.append(f"  x={e.x:.6g} best={e.plan_id} {result.metric.value}={e.metric:.4f}")
    return "\n".join(lines) + "\n"
