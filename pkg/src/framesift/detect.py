"""Full per-video pipeline orchestration and duplicate suppression.

Stage order: preprocess every frame, compute the peak signal, smooth it,
pick local maxima, refine and gate candidates, then mask/crop/classify each
candidate. Masking failures (empty final mask) drop the candidate silently;
adapter failures abort the whole video.

The hand segmenter seat treats a null adapter as "no hands in this footage"
(an all-false hand mask) so that hand removal disappears from the mask
conjunction; a null PRODUCT adapter keeps its all-true contract, leaving the
entropy mask in charge.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adapters import ClassifierAdapter, SegmenterAdapter, classify, segment
from .config import PipelineConfig
from .ingest import (
    IDENTITY_PREPROCESS,
    FramePixels,
    FrameSequence,
    apply_preprocess,
    to_grayscale,
)
from .masking import (
    combine_masks,
    crop_to_contour,
    entropy_mask,
    find_contours,
    select_contours,
)
from .selection import select_candidates
from .signals import BinaryMask, compute_series
from .smoothing import local_maxima, smooth


@dataclass(frozen=True)
class Detection:
    """One (video, class, time) product sighting."""

    video_id: str
    class_id: int
    frame_index: int
    time_s: float


def frame_key(video_id: str, frame_index: int) -> str:
    """Adapter lookup key, e.g. ``v1/000042``."""
    return f"{video_id}/{frame_index:06d}"


def preprocess_sequence(seq: FrameSequence, config: PipelineConfig,
                        jobs: int | None = 1) -> FrameSequence:
    """Apply the ingest chain to every frame, keeping indices and channels."""
    spec = config.preprocess()

    def one(item: tuple[int, FramePixels]) -> tuple[int, FramePixels]:
        idx, frame = item
        return idx, apply_preprocess(frame, spec)

    if jobs is not None and jobs == 1:
        frames = [one(item) for item in seq.frames]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            frames = list(pool.map(one, seq.frames))
    return FrameSequence(seq.video_id, seq.frame_rate, frames)


def _mask_and_crop(frame: FramePixels, key: str, config: PipelineConfig,
                   product_segmenter: SegmenterAdapter | None,
                   hand_segmenter: SegmenterAdapter | None) -> list[FramePixels]:
    """Segment, compose masks, pick contours, crop. Empty masks yield no crops."""
    all_true = BinaryMask(np.ones((frame.height, frame.width), dtype=bool))
    all_false = BinaryMask(np.zeros((frame.height, frame.width), dtype=bool))

    if product_segmenter is not None:
        product = segment(product_segmenter, frame, key)
    else:
        product = all_true
    if hand_segmenter is not None and hand_segmenter.kind != "null":
        hand = segment(hand_segmenter, frame, key)
    else:
        hand = all_false
    entropy = entropy_mask(to_grayscale(frame), config.entropy)
    final = combine_masks(product, hand, entropy)

    contours = select_contours(find_contours(final), config.contour_mode)
    crops = []
    for contour in contours:
        crop = crop_to_contour(frame, contour, config.crop_pad)
        if config.re_segment:
            crop = _re_segment_crop(crop, config)
        crops.append(crop)
    return crops


def _re_segment_crop(crop: FramePixels, config: PipelineConfig) -> FramePixels:
    """One entropy-only masking pass over a crop; keeps the crop when the
    second mask comes up empty."""
    if crop.width < 2 or crop.height < 2:
        return crop
    second = entropy_mask(to_grayscale(crop), config.entropy)
    contours = select_contours(find_contours(second), config.contour_mode)
    if not contours:
        return crop
    return crop_to_contour(crop, contours[0], config.crop_pad)


def run_pipeline(seq: FrameSequence, config: PipelineConfig,
                 classifier: ClassifierAdapter,
                 product_segmenter: SegmenterAdapter | None = None,
                 hand_segmenter: SegmenterAdapter | None = None,
                 jobs: int | None = 1) -> list[Detection]:
    """Run the whole filtration-to-classification pipeline on one video.

    Returns raw detections sorted by frame index; duplicate suppression is a
    separate step (see :func:`dedupe`). Frames must be RGB.
    """
    config.validate()
    prepped = preprocess_sequence(seq, config, jobs=jobs)
    series = compute_series(prepped, config.selection_metric,
                            IDENTITY_PREPROCESS, jobs=jobs)
    smoothed = smooth(series, config.smoothing)
    peaks = local_maxima(smoothed, config.min_prominence)
    candidates = select_candidates(prepped, peaks, config)

    frames = prepped.by_index()
    detections = []
    for cand in candidates:
        frame = frames[cand.frame_index]
        key = frame_key(seq.video_id, cand.frame_index)
        if config.segmentation_enabled:
            crops = _mask_and_crop(frame, key, config,
                                   product_segmenter, hand_segmenter)
        else:
            crops = [frame]
        for crop in crops:
            prediction = classify(classifier, crop, key)
            detections.append(Detection(
                video_id=seq.video_id,
                class_id=prediction.class_id,
                frame_index=cand.frame_index,
                time_s=cand.frame_index / seq.frame_rate,
            ))
    detections.sort(key=lambda d: (d.frame_index, d.class_id))
    return detections


def dedupe(detections: list[Detection], window_s: float) -> list[Detection]:
    """Drop detections whose (video, class) already has a kept detection
    within window_s. Kept detections anchor the window; dropped ones never
    suppress anything."""
    if window_s < 0:
        raise ValueError(f"window_s must be >= 0, got {window_s}")
    times = [d.time_s for d in detections]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("dedupe input must be sorted by time_s")
    last_kept: dict[tuple[str, int], float] = {}
    out = []
    for det in detections:
        key = (det.video_id, det.class_id)
        anchor = last_kept.get(key)
        if anchor is not None and det.time_s - anchor <= window_s:
            continue
        last_kept[key] = det.time_s
        out.append(det)
    return out


# ---------------------------------------------------------------------------
# Detection files: challenge-style whole seconds plus a full-precision sidecar.

def write_detections_csv(path: str | Path, detections: list[Detection]) -> Path:
    """Write video_id,class_id,time_s (whole seconds). Returns the sidecar path
    (same stem + .full.csv) carrying frame_index and full-precision time."""
    path = Path(path)
    lines = ["video_id,class_id,time_s"]
    for d in detections:
        lines.append(f"{d.video_id},{d.class_id},{int(math.floor(d.time_s))}")
    path.write_text("\n".join(lines) + "\n")

    sidecar = path.with_suffix(".full.csv")
    lines = ["video_id,class_id,frame_index,time_s"]
    for d in detections:
        lines.append(f"{d.video_id},{d.class_id},{d.frame_index},{d.time_s!r}")
    sidecar.write_text("\n".join(lines) + "\n")
    return sidecar


def read_detections_csv(path: str | Path) -> list[Detection]:
    """Read a full-precision sidecar CSV back into detections."""
    path = Path(path)
    lines = path.read_text().strip().splitlines()
    if not lines or lines[0] != "video_id,class_id,frame_index,time_s":
        raise ValueError(f"{path}: expected a full-precision detections CSV "
                         f"(video_id,class_id,frame_index,time_s)")
    out = []
    for ln in lines[1:]:
        video_id, class_id, frame_index, time_s = ln.split(",")
        out.append(Detection(video_id=video_id, class_id=int(class_id),
                             frame_index=int(frame_index), time_s=float(time_s)))
    return out
