"""Per-frame scalar signals: Otsu threshold, inverse-binarization ratio,
opponent-color colorfulness, and Sobel gradient sharpness.

All statistics run in float64. A signal over a whole video is collected into
a :class:`SignalSeries` aligned with the source frame indices.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .ingest import (
    IDENTITY_PREPROCESS,
    FramePixels,
    FrameSequence,
    PreprocessSpec,
    apply_preprocess,
    to_grayscale,
)

METRICS = ("binarization_ratio", "colorfulness", "sharpness")


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Per-pixel boolean raster, row-major, same layout as FramePixels."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.bits)
        if arr.dtype != np.bool_ or arr.ndim != 2:
            raise ValueError(f"mask must be a 2-D bool array, got {arr.dtype} ndim={arr.ndim}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def true_count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def to_frame(self, maxval: int = 255) -> FramePixels:
        """Render as an 8-bit image (true -> maxval) for export."""
        return FramePixels(np.where(self.bits, np.uint8(maxval), np.uint8(0)))


@dataclass
class SignalSeries:
    """One real value per frame index for a single video."""

    video_id: str
    frame_rate: float
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.indices.shape != self.values.shape or self.indices.ndim != 1:
            raise ValueError("indices and values must be 1-D arrays of equal length")
        if len(self.indices) > 1 and not np.all(np.diff(self.indices) > 0):
            raise ValueError("frame indices must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("series values must be finite")

    def __len__(self) -> int:
        return len(self.indices)

    def with_values(self, values: np.ndarray) -> "SignalSeries":
        return SignalSeries(self.video_id, self.frame_rate, self.indices.copy(), values)

    def items(self) -> list[tuple[int, float]]:
        return [(int(i), float(v)) for i, v in zip(self.indices, self.values)]


def otsu_threshold(gray: FramePixels) -> int:
    """Threshold maximizing between-class variance of the 256-bin histogram.

    Classes split as (value <= t) vs (value > t), matching binarize_inverse.
    Ties resolve to the smallest t; a constant image returns its own value.
    """
    if gray.channels != 1:
        raise ValueError("otsu_threshold expects a grayscale frame")
    flat = gray.samples
    hist = np.bincount(flat, minlength=256).astype(np.float64)
    levels = np.arange(256, dtype=np.float64)
    n = hist.sum()
    w0 = np.cumsum(hist)
    s0 = np.cumsum(hist * levels)
    w1 = n - w0
    s1 = s0[-1] - s0
    valid = (w0 > 0) & (w1 > 0)
    if not valid.any():
        return int(flat[0])
    # Between-class variance up to the constant factor 1/n^2.
    num = (s0 * w1 - s1 * w0) ** 2
    den = np.where(valid, w0 * w1, 1.0)
    score = np.where(valid, num / den, -np.inf)
    return int(np.argmax(score))


def binarize_inverse(gray: FramePixels, thresh: int, maxval: int = 255) -> BinaryMask:
    """Inverse threshold: pixel > thresh -> false, otherwise true.

    maxval only affects image export (see BinaryMask.to_frame); the mask
    itself stores booleans.
    """
    if gray.channels != 1:
        raise ValueError("binarize_inverse expects a grayscale frame")
    if not 0 <= thresh <= 255:
        raise ValueError(f"thresh must be in [0, 255], got {thresh}")
    if not 0 <= maxval <= 255:
        raise ValueError(f"maxval must be in [0, 255], got {maxval}")
    return BinaryMask(gray.pixels <= thresh)


def binarization_ratio(gray: FramePixels) -> float:
    """Fraction of pixels marked true by inverse Otsu thresholding."""
    mask = binarize_inverse(gray, otsu_threshold(gray))
    return mask.true_count / (gray.width * gray.height)


def colorfulness(frame: FramePixels) -> float:
    """Opponent-color colorfulness: sigma_rgyb + 0.3 * mu_rgyb.

    rg = R - G, yb = (R + G)/2 - B; sigma uses population variance.
    """
    if frame.channels != 3:
        raise ValueError("colorfulness expects an RGB frame")
    rgb = frame.pixels.astype(np.float64)
    rg = rgb[:, :, 0] - rgb[:, :, 1]
    yb = 0.5 * (rgb[:, :, 0] + rgb[:, :, 1]) - rgb[:, :, 2]
    sigma = float(np.sqrt(rg.var() + yb.var()))
    mu = float(np.sqrt(rg.mean() ** 2 + yb.mean() ** 2))
    return sigma + 0.3 * mu


def _sobel_magnitude_mean(values: np.ndarray) -> float:
    """Mean gradient magnitude over interior pixels of a real-valued raster."""
    a = np.asarray(values, dtype=np.float64)
    gx = (a[:-2, 2:] + 2.0 * a[1:-1, 2:] + a[2:, 2:]) \
        - (a[:-2, :-2] + 2.0 * a[1:-1, :-2] + a[2:, :-2])
    gy = (a[2:, :-2] + 2.0 * a[2:, 1:-1] + a[2:, 2:]) \
        - (a[:-2, :-2] + 2.0 * a[:-2, 1:-1] + a[:-2, 2:])
    return float(np.sqrt(gx * gx + gy * gy).mean())


def sharpness(gray: FramePixels) -> float:
    """Mean 3x3 Sobel gradient magnitude over the interior of a grayscale frame."""
    if gray.channels != 1:
        raise ValueError("sharpness expects a grayscale frame")
    if gray.width < 3 or gray.height < 3:
        raise ValueError(f"sharpness needs at least 3x3 pixels, got {gray.width}x{gray.height}")
    return _sobel_magnitude_mean(gray.pixels)


def _metric_fn(metric: str) -> Callable[[FramePixels], float]:
    if metric == "binarization_ratio":
        return lambda f: binarization_ratio(to_grayscale(f))
    if metric == "colorfulness":
        return colorfulness
    if metric == "sharpness":
        return lambda f: sharpness(to_grayscale(f))
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def compute_series(seq: FrameSequence, metric: str,
                   preprocess: PreprocessSpec = IDENTITY_PREPROCESS,
                   jobs: int | None = 1) -> SignalSeries:
    """Apply the preprocess chain, then one metric per frame.

    Output is index-aligned with the input sequence. ``jobs`` > 1 fans frames
    out over a thread pool; order is preserved either way.
    """
    if len(seq) == 0:
        raise ValueError("cannot compute a signal series over an empty sequence")
    fn = _metric_fn(metric)

    def one(item: tuple[int, FramePixels]) -> float:
        idx, frame = item
        try:
            return fn(apply_preprocess(frame, preprocess))
        except Exception as exc:
            raise type(exc)(f"frame {idx}: {exc}") from exc

    if jobs is not None and jobs == 1:
        values = [one(item) for item in seq.frames]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            values = list(pool.map(one, seq.frames))
    return SignalSeries(seq.video_id, seq.frame_rate,
                        np.array(seq.indices(), dtype=np.int64),
                        np.array(values, dtype=np.float64))


# ---------------------------------------------------------------------------
# CSV interchange: one file per (video, metric), header frame_index,value.

def write_series_csv(path: str | Path, series: SignalSeries) -> None:
    lines = ["frame_index,value"]
    lines += [f"{int(i)},{v:.9g}" for i, v in zip(series.indices, series.values)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_series_csv(path: str | Path, video_id: str | None = None,
                    frame_rate: float = 1.0) -> SignalSeries:
    path = Path(path)
    lines = path.read_text().strip().splitlines()
    if not lines or lines[0].strip() != "frame_index,value":
        raise ValueError(f"{path}: expected header 'frame_index,value'")
    indices, values = [], []
    for ln in lines[1:]:
        idx, val = ln.split(",")
        indices.append(int(idx))
        values.append(float(val))
    return SignalSeries(video_id or path.stem, frame_rate,
                        np.array(indices, dtype=np.int64),
                        np.array(values, dtype=np.float64))
