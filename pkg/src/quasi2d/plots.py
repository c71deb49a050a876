"""Deterministic SVG line/marker plots and histograms (no timestamps, fixed
number formatting) so that artifacts can be compared byte for byte."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence

PLOT_KINDS = ("decay-loglog", "certificate-vs-t", "residual-vs-M", "ratio-histogram")
WIDTH, HEIGHT = 640, 420
MARGIN = {"left": 70, "right": 170, "top": 40, "bottom": 50}
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf", "#7f7f7f")
LOG_FLOOR = 1e-300


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float, log: bool) -> str:
    if log:
        return f"1e{int(round(v))}"
    return f"{v:.3g}"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        step = max(1, (b - a) // 6)
        return [float(x) for x in range(a, b + 1, step)]
    if hi == lo:
        return [lo]
    raw = (hi - lo) / 5
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out, x = [], start
    while x <= hi + 1e-12 * abs(hi):
        out.append(round(x, 12))
        x += step
    return out


class _Canvas:
    def __init__(self, title: str, xlabel: str, ylabel: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="14">{_escape(title)}</text>',
        ]
        self.x0, self.x1 = MARGIN["left"], WIDTH - MARGIN["right"]
        self.y0, self.y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
        self.xlabel, self.ylabel = xlabel, ylabel

    def frame(self, xr, yr, xlog, ylog):
        self.xr, self.yr = xr, yr
        p = self.parts
        p.append(f'<rect x="{self.x0}" y="{self.y1}" width="{self.x1 - self.x0}" height="{self.y0 - self.y1}" '
                 f'fill="none" stroke="black"/>')
        for t in _ticks(*xr, xlog):
            x = self.sx(t)
            p.append(f'<line x1="{_fmt(x)}" y1="{self.y0}" x2="{_fmt(x)}" y2="{self.y0 + 5}" stroke="black"/>')
            p.append(f'<text x="{_fmt(x)}" y="{self.y0 + 18}" text-anchor="middle">{_tick_label(t, xlog)}</text>')
        for t in _ticks(*yr, ylog):
            y = self.sy(t)
            p.append(f'<line x1="{self.x0 - 5}" y1="{_fmt(y)}" x2="{self.x0}" y2="{_fmt(y)}" stroke="black"/>')
            p.append(f'<text x="{self.x0 - 8}" y="{_fmt(y + 4)}" text-anchor="end">{_tick_label(t, ylog)}</text>')
        p.append(f'<text x="{(self.x0 + self.x1) / 2}" y="{HEIGHT - 12}" text-anchor="middle">'
                 f'{_escape(self.xlabel)}</text>')
        p.append(f'<text x="16" y="{(self.y0 + self.y1) / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {(self.y0 + self.y1) / 2})">{_escape(self.ylabel)}</text>')

    def sx(self, v: float) -> float:
        lo, hi = self.xr
        return self.x0 + (0.5 if hi == lo else (v - lo) / (hi - lo)) * (self.x1 - self.x0)

    def sy(self, v: float) -> float:
        lo, hi = self.yr
        return self.y0 - (0.5 if hi == lo else (v - lo) / (hi - lo)) * (self.y0 - self.y1)

    def legend(self, names: Sequence[str]):
        for i, name in enumerate(names):
            y = self.y1 + 14 + 16 * i
            color = PALETTE[i % len(PALETTE)]
            self.parts.append(f'<rect x="{self.x1 + 12}" y="{y - 9}" width="10" height="10" fill="{color}"/>')
            self.parts.append(f'<text x="{self.x1 + 28}" y="{y}">{_escape(name[:20])}</text>')

    def svg(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _transform(points, xlog: bool, ylog: bool):
    out = []
    for x, y in points:
        if (xlog and x <= 0) or not math.isfinite(x) or not math.isfinite(y):
            continue
        tx = math.log10(x) if xlog else float(x)
        ty = math.log10(max(y, LOG_FLOOR)) if ylog else float(y)
        out.append((tx, ty))
    return out


def _padded(values: list[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        return lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_plot(series: Mapping[str, Sequence[tuple[float, float]]], title: str, xlabel: str, ylabel: str,
              xlog: bool, ylog: bool) -> str:
    data = {name: _transform(pts, xlog, ylog) for name, pts in series.items()}
    data = {k: v for k, v in data.items() if v}
    if not data:
        raise ValueError("series: nothing to plot")
    xs = [x for pts in data.values() for x, _ in pts]
    ys = [y for pts in data.values() for _, y in pts]
    canvas = _Canvas(title, xlabel + (" (log10)" if xlog else ""), ylabel + (" (log10)" if ylog else ""))
    canvas.frame(_padded(xs), _padded(ys), xlog, ylog)
    for i, (name, pts) in enumerate(data.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = [(canvas.sx(x), canvas.sy(y)) for x, y in pts]
        if len(coords) > 1:
            path = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in coords)
            canvas.parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in coords:
            canvas.parts.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" fill="{color}"/>')
    canvas.legend(list(data))
    return canvas.svg()


def histogram(values: Sequence[float], title: str, xlabel: str, bins: int = 20,
              marker: float | None = None) -> str:
    vals = [float(v) for v in values if math.isfinite(v)]
    if not vals:
        raise ValueError("series: nothing to plot")
    lo, hi = min(vals), max(vals)
    if marker is not None:
        lo, hi = min(lo, marker), max(hi, marker)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    width = (hi - lo) / bins
    counts = [0] * bins
    for v in vals:
        counts[min(bins - 1, int((v - lo) / width))] += 1
    canvas = _Canvas(title, xlabel, "count")
    canvas.frame((lo, hi), (0.0, max(counts) * 1.05), False, False)
    for b, c in enumerate(counts):
        x = canvas.sx(lo + b * width)
        x2 = canvas.sx(lo + (b + 1) * width)
        y = canvas.sy(c)
        canvas.parts.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(x2 - x)}" '
                            f'height="{_fmt(canvas.y0 - y)}" fill="{PALETTE[0]}" stroke="white"/>')
    if marker is not None:
        xm = canvas.sx(marker)
        canvas.parts.append(f'<line x1="{_fmt(xm)}" y1="{canvas.y0}" x2="{_fmt(xm)}" y2="{canvas.y1}" '
                            f'stroke="{PALETTE[1]}" stroke-dasharray="4 3"/>')
    return canvas.svg()


def emit_plot(series, kind: str, path, title: str = "") -> Path:
    """Write one SVG.

    ``series`` maps a name to (x, y) points; for ``ratio-histogram`` it is a
    mapping with ``values`` and optionally ``marker`` (a bound to draw).
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"kind: must be one of {PLOT_KINDS}")
    if not series:
        raise ValueError("series: empty")
    if kind == "decay-loglog":
        svg = line_plot(series, title or "singular-value tail vs size", "size", "tail", True, True)
    elif kind == "certificate-vs-t":
        svg = line_plot(series, title or "path certificates", "t", "value", False, True)
    elif kind == "residual-vs-M":
        svg = line_plot(series, title or "quadrature residual", "M", "residual", True, True)
    else:
        svg = histogram(series["values"], title or "ratios", "ratio", marker=series.get("marker"))
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    return out
