"""Entropy masking, mask composition, contour extraction and selection.

The final region-of-interest mask is product AND (NOT hand) AND entropy;
contours are 8-connected components of that mask with Moore-traced
boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .ingest import FramePixels, read_image, write_image
from .signals import BinaryMask, otsu_threshold


@dataclass(frozen=True)
class EntropySpec:
    """Local-entropy filter parameters and how the entropy map is binarized."""

    neighborhood_radius: int = 5
    bins: int = 256
    binarize_method: str = "otsu"
    fixed_threshold: float = 0.0

    def validate(self) -> None:
        if self.neighborhood_radius < 1:
            raise ValueError(f"neighborhood_radius must be >= 1, got {self.neighborhood_radius}")
        if self.bins < 2:
            raise ValueError(f"bins must be >= 2, got {self.bins}")
        if self.binarize_method not in ("otsu", "fixed"):
            raise ValueError(f"binarize_method must be 'otsu' or 'fixed', got {self.binarize_method!r}")


@dataclass(frozen=True)
class Contour:
    """One 8-connected foreground component.

    bbox is (x0, y0, x1, y1) inclusive; boundary is the closed clockwise
    Moore trace starting at the topmost-leftmost pixel, as (x, y) pairs.
    """

    region_id: int
    area: int
    bbox: tuple[int, int, int, int]
    boundary: tuple[tuple[int, int], ...]


def local_entropy(gray: FramePixels, spec: EntropySpec) -> np.ndarray:
    """Per-pixel Shannon entropy (bits) of the intensity histogram over a
    (2r+1)-sided square neighborhood, clipped at the image borders."""
    if gray.channels != 1:
        raise ValueError("local_entropy expects a grayscale frame")
    spec.validate()
    r = spec.neighborhood_radius
    h, w = gray.height, gray.width
    quantized = (gray.pixels.astype(np.int32) * spec.bins) // 256

    rows = np.arange(h)
    cols = np.arange(w)
    y0 = np.maximum(rows - r, 0)
    y1 = np.minimum(rows + r, h - 1)
    x0 = np.maximum(cols - r, 0)
    x1 = np.minimum(cols + r, w - 1)
    area = np.multiply.outer(y1 - y0 + 1, x1 - x0 + 1).astype(np.float64)

    entropy = np.zeros((h, w), dtype=np.float64)
    present = np.unique(quantized)
    for b in present:
        indicator = (quantized == b).astype(np.int64)
        integral = np.zeros((h + 1, w + 1), dtype=np.int64)
        integral[1:, 1:] = indicator.cumsum(0).cumsum(1)
        counts = (integral[np.ix_(y1 + 1, x1 + 1)] - integral[np.ix_(y0, x1 + 1)]
                  - integral[np.ix_(y1 + 1, x0)] + integral[np.ix_(y0, x0)])
        p = counts / area
        nz = counts > 0
        entropy[nz] -= p[nz] * np.log2(p[nz])
    return entropy


def entropy_mask(gray: FramePixels, spec: EntropySpec = EntropySpec()) -> BinaryMask:
    """Binarize the local-entropy map; true marks textured pixels.

    With the otsu method the map is quantized to 256 levels over its own
    range first; a constant map yields an all-false mask.
    """
    spec.validate()
    emap = local_entropy(gray, spec)
    if spec.binarize_method == "fixed":
        return BinaryMask(emap > spec.fixed_threshold)
    lo = float(emap.min())
    hi = float(emap.max())
    if hi <= lo:
        return BinaryMask(np.zeros(emap.shape, dtype=bool))
    q = np.floor((emap - lo) * (255.0 / (hi - lo))).astype(np.uint8)
    t = otsu_threshold(FramePixels(q))
    return BinaryMask(q > t)


def combine_masks(product: BinaryMask, hand: BinaryMask, entropy: BinaryMask) -> BinaryMask:
    """product AND (NOT hand) AND entropy, pixelwise."""
    shapes = {product.bits.shape, hand.bits.shape, entropy.bits.shape}
    if len(shapes) > 1:
        raise ValueError(f"mask dimensions differ: {sorted(shapes)}")
    return BinaryMask(product.bits & ~hand.bits & entropy.bits)


# Moore neighborhood in clockwise order (x, y), y pointing down:
# W, NW, N, NE, E, SE, S, SW.
_MOORE = ((-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1))


def _moore_trace(mask: np.ndarray, start: tuple[int, int]) -> list[tuple[int, int]]:
    """Clockwise Moore-neighbor boundary trace from the topmost-leftmost pixel.

    Terminates by Jacob's criterion: the trace is complete when the start
    pixel is about to be left in the same direction as the first move.
    """
    h, w = mask.shape

    def fg(x: int, y: int) -> bool:
        return 0 <= x < w and 0 <= y < h and bool(mask[y, x])

    trace = [start]
    cur = start
    back = (start[0] - 1, start[1])  # west of a topmost-leftmost pixel is background
    first_dir = -1
    max_steps = 8 * mask.size + 16
    for _ in range(max_steps):
        base = _MOORE.index((back[0] - cur[0], back[1] - cur[1]))
        nxt = None
        for k in range(1, 9):
            d = (base + k) % 8
            cand = (cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1])
            if fg(*cand):
                nxt = cand
                new_back = (cur[0] + _MOORE[(base + k - 1) % 8][0],
                            cur[1] + _MOORE[(base + k - 1) % 8][1])
                break
        if nxt is None:
            return trace  # isolated pixel
        if first_dir < 0:
            first_dir = d
        elif cur == start and d == first_dir:
            break
        trace.append(nxt)
        cur, back = nxt, new_back
    if len(trace) > 1 and trace[-1] == trace[0]:
        trace.pop()
    return trace


def find_contours(mask: BinaryMask) -> list[Contour]:
    """8-connected components of the true pixels, in raster-scan order.

    Component areas count every member pixel, not just the boundary.
    """
    labels, count = ndimage.label(mask.bits, structure=np.ones((3, 3), dtype=np.int32))
    if count == 0:
        return []
    # Region ids follow first encounter in row-major order.
    vals, first_idx = np.unique(labels.reshape(-1), return_index=True)
    fg = vals > 0
    order = vals[fg][np.argsort(first_idx[fg])]
    slices = ndimage.find_objects(labels)

    contours = []
    for region_id, lab in enumerate(order):
        sl = slices[lab - 1]
        oy, ox = sl[0].start, sl[1].start
        sub = labels[sl] == lab
        ys, xs = np.nonzero(sub)  # row-major: first entry is topmost-leftmost
        bbox = (ox, oy, sl[1].stop - 1, sl[0].stop - 1)
        local = _moore_trace(sub, (int(xs[0]), int(ys[0])))
        boundary = tuple((x + ox, y + oy) for x, y in local)
        contours.append(Contour(region_id=region_id, area=len(ys), bbox=bbox,
                                boundary=boundary))
    return contours


def select_contours(contours: list[Contour], mode: str = "max") -> list[Contour]:
    """max: the single largest contour. rms: every contour with area above the
    root-mean-square of all areas, falling back to max when that is empty."""
    if mode not in ("max", "rms"):
        raise ValueError(f"contour mode must be 'max' or 'rms', got {mode!r}")
    if not contours:
        return []
    if mode == "max":
        best = min(contours, key=lambda c: (-c.area, c.region_id))
        return [best]
    rms = math.sqrt(sum(c.area ** 2 for c in contours) / len(contours))
    selected = [c for c in contours if c.area > rms]
    if not selected:
        return select_contours(contours, "max")
    return selected


def crop_to_contour(frame: FramePixels, contour: Contour, pad: int = 0) -> FramePixels:
    """Crop the contour's bounding box expanded by pad, clipped to the frame."""
    if pad < 0:
        raise ValueError(f"pad must be >= 0, got {pad}")
    x0, y0, x1, y1 = contour.bbox
    if not (0 <= x0 <= x1 < frame.width and 0 <= y0 <= y1 < frame.height):
        raise ValueError(f"contour bbox {contour.bbox} exceeds frame "
                         f"{frame.width}x{frame.height}")
    x0 = max(x0 - pad, 0)
    y0 = max(y0 - pad, 0)
    x1 = min(x1 + pad, frame.width - 1)
    y1 = min(y1 + pad, frame.height - 1)
    return FramePixels(frame.pixels[y0:y1 + 1, x0:x1 + 1].copy())


# ---------------------------------------------------------------------------
# Mask and contour interchange.

def write_mask(path: str | Path, mask: BinaryMask) -> None:
    write_image(path, mask.to_frame(255))


def read_mask(path: str | Path) -> BinaryMask:
    frame = read_image(path)
    if frame.channels != 1:
        raise ValueError(f"{path}: mask images must be single-channel")
    return BinaryMask(frame.pixels != 0)


def write_contours_csv(path: str | Path, contours: list[Contour]) -> None:
    lines = ["region_id,area,x0,y0,x1,y1"]
    for c in contours:
        x0, y0, x1, y1 = c.bbox
        lines.append(f"{c.region_id},{c.area},{x0},{y0},{x1},{y1}")
    Path(path).write_text("\n".join(lines) + "\n")
