"""Minimal deterministic SVG line charts.

Hand-rolled so emitted bytes depend only on the data; plotting libraries
embed metadata that breaks byte-identical reruns.
"""

from __future__ import annotations

from typing import Sequence

WIDTH = 640
HEIGHT = 400
MARGIN_LEFT = 70
MARGIN_RIGHT = 20
MARGIN_TOP = 40
MARGIN_BOTTOM = 50


def _fmt(value: float) -> str:
    return f"{float(value):.6g}"


def line_chart(
    xs: Sequence[float],
    ys: Sequence[float],
    title: str,
    x_label: str = "",
    y_label: str = "",
) -> str:
    """Render one polyline with axes and min/max tick labels."""
    if len(xs) != len(ys) or not xs:
        raise ValueError("xs and ys must be equal-length and non-empty")
    x_min, x_max = min(xs), max(xs)
    y_min, y_max = min(ys), max(ys)
    x_span = (x_max - x_min) or 1.0
    y_span = (y_max - y_min) or 1.0

    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def px(x: float) -> float:
        return MARGIN_LEFT + (x - x_min) / x_span * plot_w

    def py(y: float) -> float:
        return MARGIN_TOP + plot_h - (y - y_min) / y_span * plot_h

    points = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(xs, ys))
    axis_bottom = MARGIN_TOP + plot_h
    axis_right = MARGIN_LEFT + plot_w
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{_escape(title)}</text>',
        f'<line x1="{MARGIN_LEFT}" y1="{axis_bottom}" x2="{axis_right}" y2="{axis_bottom}" '
        f'stroke="black"/>',
        f'<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{axis_bottom}" '
        f'stroke="black"/>',
        f'<text x="{MARGIN_LEFT}" y="{axis_bottom + 18}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">{_fmt(x_min)}</text>',
        f'<text x="{axis_right}" y="{axis_bottom + 18}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">{_fmt(x_max)}</text>',
        f'<text x="{MARGIN_LEFT - 6}" y="{axis_bottom + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{_fmt(y_min)}</text>',
        f'<text x="{MARGIN_LEFT - 6}" y="{MARGIN_TOP + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{_fmt(y_max)}</text>',
        f'<text x="{WIDTH // 2}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{_escape(x_label)}</text>',
        f'<text x="16" y="{HEIGHT // 2}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 16 {HEIGHT // 2})">{_escape(y_label)}</text>',
        f'<polyline points="{points}" fill="none" stroke="#1f6fb2" stroke-width="1.5"/>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
