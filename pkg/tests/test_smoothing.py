from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from framesift.signals import SignalSeries
from framesift.smoothing import (
    SmoothingSpec,
    fft_lowpass,
    local_maxima,
    peaks_with_prominence,
    savgol_smooth,
    smooth,
    write_peaks_csv,
)


def series(values, indices=None, frame_rate=30.0) -> SignalSeries:
    values = np.asarray(values, dtype=np.float64)
    if indices is None:
        indices = np.arange(len(values))
    return SignalSeries("v", frame_rate, np.asarray(indices), values)


def savgol_oracle(values: np.ndarray, window: int, polyorder: int) -> np.ndarray:
    """Per-window normal-equations fit; edges evaluate the first/last window's
    polynomial at the edge offsets."""
    n = len(values)
    half = window // 2

    def fit(ys, xs):
        A = np.vander(xs, polyorder + 1, increasing=True)
        return np.linalg.solve(A.T @ A, A.T @ ys)

    out = np.empty(n)
    xs = np.arange(-half, half + 1, dtype=np.float64)
    for i in range(half, n - half):
        beta = fit(values[i - half:i + half + 1], xs)
        out[i] = beta[0]
    head = fit(values[:window], np.arange(window, dtype=np.float64))
    for i in range(half):
        out[i] = np.polynomial.polynomial.polyval(float(i), head)
    tail = fit(values[n - window:], np.arange(window, dtype=np.float64))
    for i in range(n - half, n):
        out[i] = np.polynomial.polynomial.polyval(float(i - (n - window)), tail)
    return out


class TestSavgol:
    def test_constant_series_unchanged(self):
        s = series(np.full(20, 3.5))
        out = savgol_smooth(s, 5, 2)
        assert np.allclose(out.values, 3.5, atol=1e-12)

    def test_linear_series_unchanged(self):
        s = series(0.5 * np.arange(25) - 3.0)
        out = savgol_smooth(s, 7, 1)
        assert np.allclose(out.values, s.values, atol=1e-9)

    def test_quadratic_matches_normal_equations_oracle(self):
        x = np.arange(30, dtype=np.float64)
        s = series(0.3 * x ** 2 - 2 * x + 1)
        out = savgol_smooth(s, 7, 2)
        assert np.allclose(out.values, s.values, atol=1e-9)
        assert np.allclose(out.values, savgol_oracle(s.values, 7, 2), atol=1e-9)

    def test_noisy_series_matches_oracle_including_edges(self):
        rng = np.random.default_rng(3)
        vals = rng.normal(size=40)
        out = savgol_smooth(series(vals), 9, 3)
        assert np.allclose(out.values, savgol_oracle(vals, 9, 3), atol=1e-9)

    @given(degree=st.integers(0, 3), seed=st.integers(0, 10 ** 6))
    @settings(max_examples=30, deadline=None)
    def test_polynomial_reproduction(self, degree, seed):
        rng = np.random.default_rng(seed)
        coeffs = rng.uniform(-2, 2, size=degree + 1)
        x = np.arange(41, dtype=np.float64)
        vals = np.polynomial.polynomial.polyval(x, coeffs)
        out = savgol_smooth(series(vals), 9, 3)
        assert np.allclose(out.values, vals, atol=1e-9)

    def test_short_series_errors(self):
        with pytest.raises(ValueError, match="shorter than window"):
            savgol_smooth(series(np.zeros(4)), 5, 2)

    def test_even_window_rejected(self):
        with pytest.raises(ValueError):
            savgol_smooth(series(np.zeros(10)), 4, 2)

    def test_polyorder_must_be_below_window(self):
        with pytest.raises(ValueError):
            savgol_smooth(series(np.zeros(10)), 5, 5)


class TestFftLowpass:
    def test_keep_all_is_identity(self):
        rng = np.random.default_rng(1)
        vals = rng.normal(size=33)
        out = fft_lowpass(series(vals), 1.0)
        assert np.allclose(out.values, vals, atol=1e-9)

    def test_constant_series_unchanged(self):
        out = fft_lowpass(series(np.full(16, 2.25)), 0.1)
        assert np.allclose(out.values, 2.25, atol=1e-12)

    def test_sub_cutoff_sinusoid_preserved(self):
        n = 64
        t = np.arange(n)
        vals = np.cos(2 * np.pi * 2 * t / n)  # harmonic 2
        out = fft_lowpass(series(vals), 0.25)  # cutoff = ceil(0.25*32) = 8
        assert np.allclose(out.values, vals, atol=1e-6)

    def test_above_cutoff_sinusoid_removed_mean_kept(self):
        n = 64
        t = np.arange(n)
        vals = 1.5 + np.cos(2 * np.pi * 12 * t / n)  # harmonic 12 > cutoff 8
        out = fft_lowpass(series(vals), 0.25)
        assert np.allclose(out.values, 1.5, atol=1e-9)

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        vals = rng.normal(size=50)
        once = fft_lowpass(series(vals), 0.2)
        twice = fft_lowpass(once, 0.2)
        assert np.allclose(once.values, twice.values, atol=1e-9)

    def test_preserves_mean(self):
        rng = np.random.default_rng(4)
        vals = rng.normal(size=37)
        out = fft_lowpass(series(vals), 0.05)
        assert out.values.mean() == pytest.approx(vals.mean(), abs=1e-9)

    def test_fraction_validation(self):
        with pytest.raises(ValueError):
            fft_lowpass(series(np.zeros(8)), 0.0)
        with pytest.raises(ValueError):
            fft_lowpass(series(np.zeros(8)), 1.5)

    def test_dispatch(self):
        rng = np.random.default_rng(6)
        vals = rng.normal(size=40)
        spec = SmoothingSpec(method="fft", keep_fraction=0.3)
        assert np.allclose(smooth(series(vals), spec).values,
                           fft_lowpass(series(vals), 0.3).values)
        spec = SmoothingSpec(method="savgol", window=7, polyorder=2)
        assert np.allclose(smooth(series(vals), spec).values,
                           savgol_smooth(series(vals), 7, 2).values)


class TestLocalMaxima:
    def test_single_peak(self):
        assert local_maxima(series([1, 3, 2])) == [1]

    def test_monotone_has_no_peak(self):
        assert local_maxima(series([1, 2, 3, 4])) == []
        assert local_maxima(series([4, 3, 2, 1])) == []

    def test_plateau_reports_first_index(self):
        assert local_maxima(series([0, 2, 2, 0])) == [1]

    def test_plateau_touching_end_is_not_a_peak(self):
        assert local_maxima(series([0, 2, 2])) == []
        assert local_maxima(series([2, 2, 0])) == []

    def test_endpoints_never_peaks(self):
        assert local_maxima(series([5, 1, 4])) == []

    def test_indices_map_to_frame_indices(self):
        s = series([0, 5, 0], indices=[10, 20, 30])
        assert local_maxima(s) == [20]

    def test_prominence_filtering(self):
        # peaks at 2 (height 5, prominence 5) and 6 (height 3, prominence 2)
        vals = [0, 2, 5, 1, 1, 2, 3, 1, 0]
        s = series(vals)
        assert local_maxima(s) == [2, 6]
        assert local_maxima(s, min_prominence=3.0) == [2]

    def test_prominence_values(self):
        vals = [0, 2, 5, 1, 1, 2, 3, 1, 0]
        rows = {idx: prom for idx, _, prom in peaks_with_prominence(series(vals))}
        assert rows[2] == 5.0
        assert rows[6] == 2.0

    @given(st.lists(st.integers(-5, 5), min_size=3, max_size=40))
    @settings(max_examples=100, deadline=None)
    def test_reported_peaks_satisfy_definition(self, values):
        s = series(np.asarray(values, dtype=np.float64))
        found = local_maxima(s)
        assert found == sorted(set(found))
        positions = [int(np.where(s.indices == f)[0][0]) for f in found]
        for p in positions:
            assert 0 < p < len(values) - 1
            assert values[p] > values[p - 1]
            # plateau: first strictly-smaller value to the right is below
            q = p
            while q + 1 < len(values) and values[q + 1] == values[p]:
                q += 1
            assert q < len(values) - 1 and values[q + 1] < values[p]

    def test_peaks_csv(self, tmp_path):
        s = series([0, 2, 5, 1, 1, 2, 3, 1, 0])
        path = tmp_path / "peaks.csv"
        kept = write_peaks_csv(path, s, min_prominence=3.0)
        assert kept == [2]
        lines = path.read_text().splitlines()
        assert lines[0] == "frame_index,value,prominence"
        assert lines[1] == "2,5,5"
