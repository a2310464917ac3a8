from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from framesift.config import PipelineConfig
from framesift.ingest import FramePixels, FrameSequence
from framesift.selection import (
    cbt_metric,
    evaluate_candidates,
    refine_by_sharpness,
    select_candidates,
    write_candidates_csv,
)
from framesift.signals import sharpness

from conftest import uniform_rgb


def _flat(color=(60, 60, 60), w=12, h=12) -> FramePixels:
    return uniform_rgb(w, h, color)


def _textured(seed=0, w=12, h=12) -> FramePixels:
    rng = np.random.default_rng(seed)
    return FramePixels(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


def _seq(frames_by_index: dict[int, FramePixels], frame_rate=30.0) -> FrameSequence:
    items = sorted(frames_by_index.items())
    return FrameSequence("v", frame_rate, items)


class TestCbtMetric:
    def test_zero_colorfulness_is_zero(self):
        assert cbt_metric(0.0, 0.7) == 0.0

    def test_unit_case(self):
        assert cbt_metric(1.0, 1.0) == 1.0

    def test_hand_value(self):
        assert cbt_metric(0.5, 0.25) == pytest.approx(0.25, abs=1e-12)

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError):
            cbt_metric(-0.1, 0.5)
        with pytest.raises(ValueError):
            cbt_metric(0.5, -0.1)

    @given(c=st.floats(0, 100), b=st.floats(0, 1))
    @settings(max_examples=80, deadline=None)
    def test_monotone_in_each_argument(self, c, b):
        base = cbt_metric(c, b)
        assert cbt_metric(c + 1.0, b) >= base
        assert cbt_metric(c, min(b + 0.1, 1.0)) >= base

    def test_power_of_two_scaling_is_exact(self):
        for c, b in ((0.3, 0.7), (2.5, 0.11), (17.0, 1.0)):
            assert cbt_metric(4.0 * c, b) == 4.0 * cbt_metric(c, b)


class TestRefineBySharpness:
    def test_all_identical_returns_peak(self):
        seq = _seq({i: _flat() for i in range(0, 50)})
        assert refine_by_sharpness(25, seq, step=7, count=7) == 25

    def test_unique_sharp_frame_wins(self):
        frames = {i: _flat() for i in range(0, 30)}
        frames[18] = _textured()
        seq = _seq(frames)
        assert refine_by_sharpness(11, seq, step=7, count=7) == 18

    def test_window_clips_at_sequence_start(self):
        # peak 2 with step 7: negative offsets are skipped -> {2, 9, 16, 23}
        frames = {i: _flat() for i in range(0, 24)}
        frames[23] = _textured()
        seq = _seq(frames)
        assert refine_by_sharpness(2, seq, step=7, count=7) == 23

    def test_result_within_window_bounds(self):
        frames = {i: _textured(seed=i) for i in range(0, 60)}
        seq = _seq(frames)
        for peak in (3, 21, 30, 55):
            out = refine_by_sharpness(peak, seq, step=7, count=7)
            assert abs(out - peak) <= 3 * 7
            assert out in frames

    def test_tie_prefers_smallest_after_peak(self):
        sharp = _textured(seed=1)
        frames = {i: _flat() for i in range(0, 30)}
        frames[4] = sharp
        frames[18] = sharp  # same pixels, equal sharpness
        seq = _seq(frames)
        # peak at 11: window {4, 11, 18, 25}; 4 and 18 tie; smallest wins
        assert refine_by_sharpness(11, seq, step=7, count=7) == 4

    def test_missing_peak_errors(self):
        seq = _seq({0: _flat()})
        with pytest.raises(ValueError):
            refine_by_sharpness(5, seq)


class TestSelectCandidates:
    def _config(self, **kw) -> PipelineConfig:
        base = dict(sharpness_threshold=0.0, cbt_threshold=0.0,
                    refine_step=7, refine_count=7)
        base.update(kw)
        return PipelineConfig(**base)

    def test_no_peaks_no_candidates(self):
        seq = _seq({i: _flat() for i in range(10)})
        assert select_candidates(seq, [], self._config()) == []

    def test_colorful_sharp_frame_kept(self):
        frames = {i: _flat((128, 128, 128)) for i in range(20)}
        frames[10] = _textured(seed=3)
        seq = _seq(frames)
        (cand,) = select_candidates(seq, [10], self._config())
        assert cand.frame_index == 10
        assert cand.kept
        assert cand.cbt_value == pytest.approx(
            cand.c_ratio * np.sqrt(cand.b_ratio), abs=1e-9)
        assert cand.time_s == 10 / 30.0

    def test_sharpness_gate_111(self):
        frames = {i: _flat((128, 128, 128)) for i in range(20)}
        frames[10] = _textured(seed=3)
        seq = _seq(frames)
        true_sharp = sharpness(
            FramePixels(np.asarray(
                np.round(0.299 * frames[10].pixels[:, :, 0].astype(float)
                         + 0.587 * frames[10].pixels[:, :, 1]
                         + 0.114 * frames[10].pixels[:, :, 2]), dtype=np.uint8)))
        config = self._config(sharpness_threshold=111.0)
        kept = select_candidates(seq, [10], config)
        assert bool(kept) == (true_sharp > 111.0)

    def test_flat_frames_dropped_by_cbt_gate(self):
        seq = _seq({i: _flat((90, 90, 90)) for i in range(20)})
        # colorfulness of a gray frame is 0 -> cbt 0, not > 0
        assert select_candidates(seq, [10], self._config()) == []

    def test_duplicate_peaks_deduplicated(self):
        frames = {i: _flat((128, 128, 128)) for i in range(20)}
        frames[10] = _textured(seed=3)
        seq = _seq(frames)
        out = select_candidates(seq, [10, 10, 10], self._config())
        assert len(out) == 1

    def test_output_sorted_unique(self):
        frames = {i: _textured(seed=i) for i in range(40)}
        seq = _seq(frames)
        out = select_candidates(seq, [5, 25, 35, 5], self._config())
        indices = [c.frame_index for c in out]
        assert indices == sorted(set(indices))

    def test_candidates_csv(self, tmp_path):
        frames = {i: _textured(seed=3) for i in range(3)}
        seq = _seq(frames)
        cands = evaluate_candidates(seq, [1], self._config())
        path = tmp_path / "candidates.csv"
        write_candidates_csv(path, cands)
        lines = path.read_text().splitlines()
        assert lines[0] == "frame_index,time_s,c_ratio,b_ratio,sharpness,cbt_value,kept"
        assert len(lines) == 2
