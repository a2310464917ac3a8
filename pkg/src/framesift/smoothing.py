"""Series smoothing (Savitzky-Golay and FFT low-pass) and local-maxima picking."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import savgol_filter

from .signals import SignalSeries


@dataclass(frozen=True)
class SmoothingSpec:
    """Which smoother to run and its knobs.

    savgol uses (window, polyorder); fft uses keep_fraction. Unused fields
    are carried so one config section can describe either method.
    """

    method: str = "fft"
    window: int = 31
    polyorder: int = 3
    keep_fraction: float = 0.05

    def validate(self) -> None:
        if self.method not in ("savgol", "fft"):
            raise ValueError(f"smoothing method must be 'savgol' or 'fft', got {self.method!r}")
        if self.method == "savgol":
            if self.window < 3 or self.window % 2 == 0:
                raise ValueError(f"savgol window must be an odd integer >= 3, got {self.window}")
            if not 0 <= self.polyorder < self.window:
                raise ValueError(
                    f"savgol polyorder must satisfy 0 <= polyorder < window, got {self.polyorder}")
        else:
            if not 0.0 < self.keep_fraction <= 1.0:
                raise ValueError(f"fft keep_fraction must be in (0, 1], got {self.keep_fraction}")


def savgol_smooth(series: SignalSeries, window: int, polyorder: int) -> SignalSeries:
    """Least-squares polynomial smoothing over a centered window.

    Interior samples take the fitted value at the window center; each edge
    takes the polynomial fitted to its first/last window evaluated at the
    edge offsets.
    """
    SmoothingSpec(method="savgol", window=window, polyorder=polyorder).validate()
    if len(series) < window:
        raise ValueError(f"series of length {len(series)} is shorter than window {window}")
    smoothed = savgol_filter(series.values, window_length=window,
                             polyorder=polyorder, mode="interp")
    return series.with_values(smoothed)


def fft_lowpass(series: SignalSeries, keep_fraction: float) -> SignalSeries:
    """Zero every DFT bin above ceil(keep_fraction * N/2), then invert."""
    SmoothingSpec(method="fft", keep_fraction=keep_fraction).validate()
    n = len(series)
    if n < 2:
        raise ValueError("fft_lowpass needs a series of length >= 2")
    spectrum = np.fft.rfft(series.values)
    cutoff = math.ceil(keep_fraction * n / 2.0)
    spectrum[cutoff + 1:] = 0.0
    return series.with_values(np.fft.irfft(spectrum, n=n))


def smooth(series: SignalSeries, spec: SmoothingSpec) -> SignalSeries:
    spec.validate()
    if spec.method == "savgol":
        return savgol_smooth(series, spec.window, spec.polyorder)
    return fft_lowpass(series, spec.keep_fraction)


def _peak_positions(values: np.ndarray) -> list[int]:
    """Strict interior maxima; a plateau counts once, at its first position."""
    peaks: list[int] = []
    n = len(values)
    i = 1
    while i < n - 1:
        if values[i] > values[i - 1]:
            j = i
            while j + 1 < n and values[j + 1] == values[i]:
                j += 1
            if j < n - 1 and values[j + 1] < values[i]:
                peaks.append(i)
            i = j + 1
        else:
            i += 1
    return peaks


def _prominence(values: np.ndarray, pos: int) -> float:
    """Peak height above the higher of the two flanking minima.

    Each flank extends until a strictly higher sample or the series border.
    """
    v = values[pos]
    left = v
    k = pos - 1
    while k >= 0 and values[k] <= v:
        left = min(left, values[k])
        k -= 1
    right = v
    k = pos + 1
    while k < len(values) and values[k] <= v:
        right = min(right, values[k])
        k += 1
    return float(v - max(left, right))


def peaks_with_prominence(series: SignalSeries) -> list[tuple[int, float, float]]:
    """All strict local maxima as (frame_index, value, prominence) rows."""
    out = []
    for pos in _peak_positions(series.values):
        out.append((int(series.indices[pos]), float(series.values[pos]),
                    _prominence(series.values, pos)))
    return out


def local_maxima(series: SignalSeries, min_prominence: float = 0.0) -> list[int]:
    """Frame indices of strict local maxima, dropping those with prominence
    below min_prominence. Endpoints are never maxima."""
    if min_prominence < 0:
        raise ValueError(f"min_prominence must be >= 0, got {min_prominence}")
    out = []
    for pos in _peak_positions(series.values):
        if min_prominence > 0 and _prominence(series.values, pos) < min_prominence:
            continue
        out.append(int(series.indices[pos]))
    return out


def write_peaks_csv(path: str | Path, series: SignalSeries,
                    min_prominence: float = 0.0) -> list[int]:
    """Write peaks.csv (frame_index,value,prominence) and return the kept indices."""
    rows = peaks_with_prominence(series)
    lines = ["frame_index,value,prominence"]
    kept = []
    for idx, value, prom in rows:
        if min_prominence > 0 and prom < min_prominence:
            continue
        lines.append(f"{idx},{value:.9g},{prom:.9g}")
        kept.append(idx)
    Path(path).write_text("\n".join(lines) + "\n")
    return kept
