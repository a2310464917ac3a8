"""Deterministic static SVG line charts for raw vs smoothed series with peak
markers. No plotting stack: the elements are emitted directly."""

from __future__ import annotations

from pathlib import Path

from .signals import SignalSeries

_W, _H = 960, 360
_MARGIN = 48


def _scale(values: list[float], lo: float, hi: float, out_lo: float, out_hi: float) -> list[float]:
    span = hi - lo if hi > lo else 1.0
    return [out_lo + (v - lo) * (out_hi - out_lo) / span for v in values]


def _polyline(xs: list[float], ys: list[float], color: str, width: float) -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return (f'<polyline fill="none" stroke="{color}" stroke-width="{width}" '
            f'points="{pts}"/>')


def plot_series_svg(path: str | Path, raw: SignalSeries,
                    smoothed: SignalSeries | None = None,
                    peaks: list[int] | None = None,
                    title: str = "") -> None:
    """Raw series in gray, smoothed overlay in blue, peaks as red dots."""
    indices = [int(i) for i in raw.indices]
    series_values = [list(map(float, raw.values))]
    if smoothed is not None:
        series_values.append(list(map(float, smoothed.values)))
    lo = min(min(v) for v in series_values)
    hi = max(max(v) for v in series_values)

    x_lo, x_hi = float(indices[0]), float(indices[-1] if indices[-1] > indices[0] else indices[0] + 1)
    xs = _scale([float(i) for i in indices], x_lo, x_hi, _MARGIN, _W - _MARGIN)

    def ys_of(values: list[float]) -> list[float]:
        return _scale(values, lo, hi, _H - _MARGIN, _MARGIN)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<line x1="{_MARGIN}" y1="{_H - _MARGIN}" x2="{_W - _MARGIN}" '
        f'y2="{_H - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" '
        f'y2="{_H - _MARGIN}" stroke="black"/>',
        _polyline(xs, ys_of(series_values[0]), "#9a9a9a", 1.0),
    ]
    if smoothed is not None:
        parts.append(_polyline(xs, ys_of(series_values[1]), "#1f77b4", 1.8))
    if peaks:
        peak_set = set(peaks)
        values = series_values[1] if smoothed is not None else series_values[0]
        ys = ys_of(values)
        for x, y, idx in zip(xs, ys, indices):
            if idx in peak_set:
                parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3.5" fill="#d62728"/>')
    if title:
        parts.append(f'<text x="{_MARGIN}" y="{_MARGIN - 16}" font-family="sans-serif" '
                     f'font-size="14">{title}</text>')
    parts.append(f'<text x="{_W - _MARGIN}" y="{_H - _MARGIN + 28}" text-anchor="end" '
                 f'font-family="sans-serif" font-size="12">frame index</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
