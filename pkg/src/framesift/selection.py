"""Candidate-frame refinement and gating.

Peaks from the smoothed signal become candidate frames: each peak is
replaced by the sharpest frame in a strided window around it, then the
candidate's colorfulness, binarization ratio, sharpness, and combined
colorfulness-binarization score are computed and thresholded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

from .ingest import FrameSequence, to_grayscale
from .signals import binarization_ratio, colorfulness, sharpness

if TYPE_CHECKING:
    from .config import PipelineConfig


@dataclass(frozen=True)
class CandidateFrame:
    """A refined peak frame with the values the keep/drop gate saw."""

    frame_index: int
    time_s: float
    c_ratio: float
    b_ratio: float
    sharpness: float
    cbt_value: float
    kept: bool


def cbt_metric(c_ratio: float, b_ratio: float) -> float:
    """sqrt(c_ratio^2 * b_ratio), the combined frame-keeping score."""
    if c_ratio < 0 or b_ratio < 0:
        raise ValueError(f"cbt_metric inputs must be nonnegative, got ({c_ratio}, {b_ratio})")
    return math.sqrt(c_ratio * c_ratio * b_ratio)


def refine_by_sharpness(peak: int, seq: FrameSequence, step: int = 7,
                        count: int = 7) -> int:
    """Pick the sharpest frame among `count` frames spaced `step` apart,
    centered on the peak; offsets falling outside the sequence are skipped.

    Ties prefer the peak itself, then the smallest frame index.
    """
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    frames = seq.by_index()
    if peak not in frames:
        raise ValueError(f"peak index {peak} not present in sequence {seq.video_id!r}")
    window = []
    for k in range(count):
        idx = peak + (k - count // 2) * step
        if idx in frames:
            window.append(idx)
    scored = [(sharpness(to_grayscale(frames[idx])), idx) for idx in window]
    best = max(s for s, _ in scored)
    tied = [idx for s, idx in scored if s == best]
    return peak if peak in tied else min(tied)


def evaluate_candidates(seq: FrameSequence, peaks: list[int],
                        config: "PipelineConfig") -> list[CandidateFrame]:
    """Refine every peak and score the result, recording the gate outcome.

    Duplicate peaks, and distinct peaks refining to the same frame, collapse
    to one candidate. Output is sorted by frame index.
    """
    refined: list[int] = []
    for peak in sorted(set(peaks)):
        idx = refine_by_sharpness(peak, seq, config.refine_step, config.refine_count)
        if idx not in refined:
            refined.append(idx)
    refined.sort()

    frames = seq.by_index()
    candidates = []
    for idx in refined:
        frame = frames[idx]
        gray = to_grayscale(frame)
        c_ratio = colorfulness(frame)
        b_ratio = binarization_ratio(gray)
        sharp = sharpness(gray)
        cbt = cbt_metric(c_ratio, b_ratio)
        kept = cbt > config.cbt_threshold and sharp > config.sharpness_threshold
        candidates.append(CandidateFrame(
            frame_index=idx,
            time_s=idx / seq.frame_rate,
            c_ratio=c_ratio,
            b_ratio=b_ratio,
            sharpness=sharp,
            cbt_value=cbt,
            kept=kept,
        ))
    return candidates


def select_candidates(seq: FrameSequence, peaks: list[int],
                      config: "PipelineConfig") -> list[CandidateFrame]:
    """Candidates that pass the configured gate, sorted by frame index."""
    return [c for c in evaluate_candidates(seq, peaks, config) if c.kept]


def write_candidates_csv(path: str | Path, candidates: list[CandidateFrame]) -> None:
    lines = ["frame_index,time_s,c_ratio,b_ratio,sharpness,cbt_value,kept"]
    for c in candidates:
        lines.append(f"{c.frame_index},{c.time_s:.9g},{c.c_ratio:.9g},{c.b_ratio:.9g},"
                     f"{c.sharpness:.9g},{c.cbt_value:.9g},{int(c.kept)}")
    Path(path).write_text("\n".join(lines) + "\n")
