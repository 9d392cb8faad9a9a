"""Self-contained SVG histograms of singular values.

Output depends only on the inputs: numbers are written with fixed precision
and no timestamps, so re-rendering gives byte-identical files.
"""
from __future__ import annotations

import json
from typing import Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 400
PAD_L, PAD_R, PAD_T, PAD_B = 56, 20, 36, 44


def _f(x: float) -> str:
    return f"{x:.2f}"


def histogram_svg(
    bins: Sequence[tuple[float, float, int]],
    outliers: Sequence[float] = (),
    bulk_edge: float | None = None,
    title: str = "",
    metadata: dict | None = None,
) -> str:
    """Bars for ``(left, right, count)`` bins, dashed lines at each outlier."""
    if not bins:
        raise ValueError("no histogram bins to draw")
    x_hi = max(max(b[1] for b in bins), max(outliers, default=0.0), bulk_edge or 0.0)
    y_hi = max(max(b[2] for b in bins), 1)
    pw, ph = WIDTH - PAD_L - PAD_R, HEIGHT - PAD_T - PAD_B

    def X(v):
        return PAD_L + pw * v / x_hi

    def Y(c):
        return PAD_T + ph * (1.0 - c / y_hi)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">'
    ]
    if metadata is not None:
        out.append(f"<metadata>{escape(json.dumps(metadata, sort_keys=True))}</metadata>")
    out.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    if title:
        out.append(f'<text x="{WIDTH // 2}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>')
    for left, right, count in bins:
        if count <= 0:
            continue
        x0, x1 = X(left), X(right)
        out.append(
            f'<rect x="{_f(x0)}" y="{_f(Y(count))}" width="{_f(max(x1 - x0, 0.5))}" '
            f'height="{_f(Y(0) - Y(count))}" fill="#4c72b0"/>'
        )
    # axes
    out.append(f'<line x1="{PAD_L}" y1="{_f(Y(0))}" x2="{WIDTH - PAD_R}" y2="{_f(Y(0))}" stroke="black"/>')
    out.append(f'<line x1="{PAD_L}" y1="{PAD_T}" x2="{PAD_L}" y2="{_f(Y(0))}" stroke="black"/>')
    for i in range(6):
        v = x_hi * i / 5
        out.append(f'<text x="{_f(X(v))}" y="{_f(Y(0) + 16)}" text-anchor="middle">{v:.2f}</text>')
    out.append(f'<text x="{PAD_L - 6}" y="{_f(Y(y_hi) + 4)}" text-anchor="end">{y_hi}</text>')
    out.append(f'<text x="{PAD_L - 6}" y="{_f(Y(0) + 4)}" text-anchor="end">0</text>')
    out.append(f'<text x="{WIDTH // 2}" y="{HEIGHT - 8}" text-anchor="middle">singular value</text>')
    if bulk_edge is not None:
        out.append(
            f'<line x1="{_f(X(bulk_edge))}" y1="{PAD_T}" x2="{_f(X(bulk_edge))}" y2="{_f(Y(0))}" '
            f'stroke="gray" stroke-dasharray="2,3"><title>bulk edge {bulk_edge:.4f}</title></line>'
        )
    for s in outliers:
        out.append(
            f'<line x1="{_f(X(s))}" y1="{PAD_T}" x2="{_f(X(s))}" y2="{_f(Y(0))}" '
            f'stroke="#c44e52" stroke-width="1.5" stroke-dasharray="6,4"><title>outlier {s:.4f}</title></line>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
