"""Self-contained SVG line charts: axes, polylines and shaded +-1 std bands."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape, quoteattr

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf"]


def fmt(x: float) -> str:
    """9-significant-digit rendering shared with the CSV writer."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return format(float(x), ".9g")


@dataclass
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    std: Sequence[float] | None = None
    dashed: bool = False


@dataclass
class Panel:
    title: str
    xlabel: str
    ylabel: str
    series: list[Series] = field(default_factory=list)


def _finite(values) -> list[float]:
    return [float(v) for v in values if v is not None and math.isfinite(float(v))]


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks, v = [], start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _panel_svg(panel: Panel, ox: float, oy: float, w: float, h: float) -> list[str]:
    left, right, top, bottom = 60.0, 20.0, 30.0, 45.0
    px0, px1, py0, py1 = ox + left, ox + w - right, oy + top, oy + h - bottom
    xs = _finite(v for s in panel.series for v in s.x)
    ys = []
    for s in panel.series:
        sd = s.std if s.std is not None else [0.0] * len(s.y)
        for y, e in zip(s.y, sd):
            if y is not None and math.isfinite(y):
                e = e if e is not None and math.isfinite(e) else 0.0
                ys += [y - e, y + e]
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y_lo, y_hi = (min(ys + [0.0]), max(ys)) if ys else (0.0, 1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    y_hi += 0.05 * (y_hi - y_lo)

    def X(v):
        return px0 + (v - x_lo) / (x_hi - x_lo) * (px1 - px0)

    def Y(v):
        return py1 - (v - y_lo) / (y_hi - y_lo) * (py1 - py0)

    out = [f'<g class="panel" data-title={quoteattr(panel.title)}>']
    out.append(f'<text x="{(px0 + px1) / 2:.1f}" y="{oy + 18:.1f}" text-anchor="middle" font-size="14">{escape(panel.title)}</text>')
    out.append(f'<rect x="{px0:.1f}" y="{py0:.1f}" width="{px1 - px0:.1f}" height="{py1 - py0:.1f}" fill="none" stroke="#333"/>')
    for t in _nice_ticks(y_lo, y_hi):
        if y_lo <= t <= y_hi:
            out.append(f'<line x1="{px0 - 4:.1f}" y1="{Y(t):.1f}" x2="{px0:.1f}" y2="{Y(t):.1f}" stroke="#333"/>')
            out.append(f'<text x="{px0 - 6:.1f}" y="{Y(t) + 4:.1f}" text-anchor="end" font-size="10">{t:g}</text>')
    for t in _nice_ticks(x_lo, x_hi):
        if x_lo <= t <= x_hi:
            out.append(f'<line x1="{X(t):.1f}" y1="{py1:.1f}" x2="{X(t):.1f}" y2="{py1 + 4:.1f}" stroke="#333"/>')
            out.append(f'<text x="{X(t):.1f}" y="{py1 + 16:.1f}" text-anchor="middle" font-size="10">{t:g}</text>')
    out.append(f'<text x="{(px0 + px1) / 2:.1f}" y="{py1 + 34:.1f}" text-anchor="middle" font-size="12">{escape(panel.xlabel)}</text>')
    out.append(
        f'<text x="{ox + 14:.1f}" y="{(py0 + py1) / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 {ox + 14:.1f} {(py0 + py1) / 2:.1f})">{escape(panel.ylabel)}</text>'
    )
    for k, s in enumerate(panel.series):
        color = COLORS[k % len(COLORS)]
        pts = [(x, y) for x, y in zip(s.x, s.y) if y is not None and math.isfinite(y)]
        if s.std is not None:
            band = [(x, y, e) for x, y, e in zip(s.x, s.y, s.std) if math.isfinite(y) and math.isfinite(e)]
            if band:
                upper = " ".join(f"{X(x):.2f},{Y(y + e):.2f}" for x, y, e in band)
                lower = " ".join(f"{X(x):.2f},{Y(y - e):.2f}" for x, y, e in reversed(band))
                out.append(f'<polygon class="band" points="{upper} {lower}" fill="{color}" fill-opacity="0.18" stroke="none"/>')
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        data_x = " ".join(fmt(x) for x in s.x)
        data_y = " ".join(fmt(y) for y in s.y)
        points = " ".join(f"{X(x):.2f},{Y(y):.2f}" for x, y in pts)
        out.append(
            f'<polyline class="series" data-label={quoteattr(s.label)} data-x="{data_x}" data-y="{data_y}" '
            f'points="{points}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>'
        )
        ly = py0 + 12 + 14 * k
        out.append(f'<line x1="{px1 - 120:.1f}" y1="{ly - 4:.1f}" x2="{px1 - 104:.1f}" y2="{ly - 4:.1f}" stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{px1 - 100:.1f}" y="{ly:.1f}" font-size="10">{escape(s.label)}</text>')
    out.append("</g>")
    return out


def render(panels: Sequence[Panel], title: str = "", metadata: dict | None = None, panel_size=(520, 360)) -> str:
    pw, ph = panel_size
    cols = min(len(panels), 3) or 1
    rows = math.ceil(len(panels) / cols) if panels else 1
    head = 30 if title else 0
    width, height = pw * cols, ph * rows + head
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">'
    ]
    if metadata is not None:
        lines.append(f"<metadata>{escape(json.dumps(metadata, sort_keys=True))}</metadata>")
    lines.append('<rect width="100%" height="100%" fill="#fff"/>')
    if title:
        lines.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="16">{escape(title)}</text>')
    for i, panel in enumerate(panels):
        lines += _panel_svg(panel, (i % cols) * pw, head + (i // cols) * ph, pw, ph)
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
