from __future__ import annotations

import numpy as np
import pytest

from framesift.ingest import FramePixels


def gray_frame(values) -> FramePixels:
    return FramePixels(np.asarray(values, dtype=np.uint8))


def rgb_frame(values) -> FramePixels:
    arr = np.asarray(values, dtype=np.uint8)
    assert arr.ndim == 3 and arr.shape[2] == 3
    return FramePixels(arr)


def uniform_rgb(width: int, height: int, color) -> FramePixels:
    arr = np.empty((height, width, 3), dtype=np.uint8)
    arr[:] = np.asarray(color, dtype=np.uint8)
    return FramePixels(arr)


@pytest.fixture
def rng():
    return np.random.default_rng(202406)
