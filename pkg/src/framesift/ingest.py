"""Frame loading and pre-signal raster transforms.

Frames are 8-bit rasters (grayscale or RGB) wrapped in :class:`FramePixels`.
Every transform here is pure: it returns a new raster and never mutates its
input, so per-frame work is safe to parallelize.

Pixel arithmetic convention: compute in float64, round half away from zero,
clamp to [0, 255].
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

FRAME_FILE_PATTERN = re.compile(r"^(\d+)\.(png|ppm|pgm)$", re.IGNORECASE)


class FrameError(ValueError):
    """Raised for malformed rasters or unreadable frame files."""


def _round_u8(values: np.ndarray) -> np.ndarray:
    """Round half away from zero, then clamp to the 8-bit range."""
    rounded = np.sign(values) * np.floor(np.abs(values) + 0.5)
    return np.clip(rounded, 0, 255).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class FramePixels:
    """One 8-bit raster: (height, width) grayscale or (height, width, 3) RGB.

    The backing array is made read-only on construction; transforms return
    new instances.
    """

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        if arr.dtype != np.uint8:
            raise FrameError(f"frame samples must be uint8, got {arr.dtype}")
        if arr.ndim == 2:
            pass
        elif arr.ndim == 3 and arr.shape[2] == 3:
            pass
        else:
            raise FrameError(f"frame must be HxW or HxWx3, got shape {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise FrameError("frame must contain at least one pixel")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    @property
    def samples(self) -> np.ndarray:
        """Row-major flat view of the samples (length w*h*channels)."""
        return self.pixels.reshape(-1)

    def same_bytes(self, other: "FramePixels") -> bool:
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )


@dataclass
class FrameSequence:
    """Ordered frames of one video, indexed by the frame number parsed on load."""

    video_id: str
    frame_rate: float
    frames: list[tuple[int, FramePixels]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.frame_rate <= 0:
            raise FrameError(f"frame_rate must be positive, got {self.frame_rate}")
        indices = [i for i, _ in self.frames]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise FrameError("frame indices must be strictly increasing")
        if any(i < 0 for i in indices):
            raise FrameError("frame indices must be nonnegative")
        shapes = {f.pixels.shape for _, f in self.frames}
        if len(shapes) > 1:
            raise FrameError(f"mixed frame dimensions in sequence: {sorted(shapes)}")

    def __len__(self) -> int:
        return len(self.frames)

    def indices(self) -> list[int]:
        return [i for i, _ in self.frames]

    def by_index(self) -> dict[int, FramePixels]:
        return {i: f for i, f in self.frames}

    def time_of(self, frame_index: int) -> float:
        return frame_index / self.frame_rate


@dataclass(frozen=True)
class PreprocessSpec:
    """The pre-signal transform chain: centered crop, gain/bias, resize.

    ``resize_width``/``resize_height`` of ``None`` skip the resize step, which
    also makes ``IDENTITY_PREPROCESS`` a true no-op.
    """

    crop_fraction: float = 0.25
    gain: float = 1.1
    bias: float = 5.0
    resize_width: int | None = 224
    resize_height: int | None = 224

    def validate(self) -> None:
        if not 0.0 <= self.crop_fraction < 1.0:
            raise FrameError(f"crop_fraction must be in [0, 1), got {self.crop_fraction}")
        if self.gain <= 0:
            raise FrameError(f"gain must be positive, got {self.gain}")
        if (self.resize_width is None) != (self.resize_height is None):
            raise FrameError("resize dims must both be set or both be None")
        if self.resize_width is not None and (self.resize_width <= 0 or self.resize_height <= 0):
            raise FrameError("resize dims must be positive")


IDENTITY_PREPROCESS = PreprocessSpec(crop_fraction=0.0, gain=1.0, bias=0.0,
                                     resize_width=None, resize_height=None)


def crop_roi(frame: FramePixels, crop_fraction: float) -> FramePixels:
    """Retain the centered (1-f)*(1-f) region, removing f/2 from each side.

    Output dimensions and offsets both round down.
    """
    if not 0.0 <= crop_fraction < 1.0:
        raise FrameError(f"crop_fraction must be in [0, 1), got {crop_fraction}")
    if crop_fraction == 0.0:
        return frame
    out_w = int((1.0 - crop_fraction) * frame.width)
    out_h = int((1.0 - crop_fraction) * frame.height)
    if out_w == 0 or out_h == 0:
        raise FrameError(
            f"crop_fraction {crop_fraction} leaves no pixels of a "
            f"{frame.width}x{frame.height} frame"
        )
    x0 = int(crop_fraction / 2.0 * frame.width)
    y0 = int(crop_fraction / 2.0 * frame.height)
    return FramePixels(frame.pixels[y0:y0 + out_h, x0:x0 + out_w].copy())


def adjust_brightness_contrast(frame: FramePixels, gain: float, bias: float) -> FramePixels:
    """Apply s -> clamp(round(gain*s + bias)) per sample."""
    if gain <= 0:
        raise FrameError(f"gain must be positive, got {gain}")
    if gain == 1.0 and bias == 0.0:
        return frame
    out = _round_u8(frame.pixels.astype(np.float64) * gain + bias)
    return FramePixels(out)


def _axis_coords(out_size: int, in_size: int) -> np.ndarray:
    """Source coordinates for corner-aligned bilinear sampling."""
    if out_size == 1:
        return np.array([(in_size - 1) / 2.0])
    return np.arange(out_size, dtype=np.float64) * (in_size - 1) / (out_size - 1)


def resize_bilinear(frame: FramePixels, out_w: int, out_h: int) -> FramePixels:
    """Bilinear resize with corner pixel centers mapped onto corner pixel centers."""
    if out_w <= 0 or out_h <= 0:
        raise FrameError(f"resize dims must be positive, got {out_w}x{out_h}")
    if out_w == frame.width and out_h == frame.height:
        return frame
    src = frame.pixels.astype(np.float64)
    gray = src.ndim == 2
    if gray:
        src = src[:, :, None]

    xs = _axis_coords(out_w, frame.width)
    ys = _axis_coords(out_h, frame.height)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, frame.width - 1)
    y1 = np.minimum(y0 + 1, frame.height - 1)
    wx = (xs - x0)[None, :, None]
    wy = (ys - y0)[:, None, None]

    top = src[y0][:, x0] * (1.0 - wx) + src[y0][:, x1] * wx
    bot = src[y1][:, x0] * (1.0 - wx) + src[y1][:, x1] * wx
    out = top * (1.0 - wy) + bot * wy
    out = _round_u8(out)
    if gray:
        out = out[:, :, 0]
    return FramePixels(out)


GRAY_WEIGHTS = (0.299, 0.587, 0.114)  # ITU-R BT.601 luma


def to_grayscale(frame: FramePixels) -> FramePixels:
    """Collapse RGB to luma; a grayscale frame is returned unchanged."""
    if frame.channels == 1:
        return frame
    rgb = frame.pixels.astype(np.float64)
    luma = rgb[:, :, 0] * GRAY_WEIGHTS[0] + rgb[:, :, 1] * GRAY_WEIGHTS[1] + rgb[:, :, 2] * GRAY_WEIGHTS[2]
    return FramePixels(_round_u8(luma))


def apply_preprocess(frame: FramePixels, spec: PreprocessSpec,
                     grayscale: bool = False) -> FramePixels:
    """Run the crop -> gain/bias -> resize (-> grayscale) chain on one frame."""
    spec.validate()
    out = crop_roi(frame, spec.crop_fraction)
    out = adjust_brightness_contrast(out, spec.gain, spec.bias)
    if spec.resize_width is not None:
        out = resize_bilinear(out, spec.resize_width, spec.resize_height)
    if grayscale:
        out = to_grayscale(out)
    return out


# ---------------------------------------------------------------------------
# Image file IO: PNG via Pillow, binary PPM/PGM (P6/P5) natively.

def _read_pnm(data: bytes, path: Path) -> FramePixels:
    # Header tokens may be separated by whitespace and '#' comments.
    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(data):
            c = data[pos:pos + 1]
            if c == b"#":
                while pos < len(data) and data[pos:pos + 1] != b"\n":
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        return data[start:pos]

    magic = next_token()
    if magic not in (b"P5", b"P6"):
        raise FrameError(f"{path}: unsupported PNM magic {magic!r} (only binary P5/P6)")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise FrameError(f"{path}: malformed PNM header") from exc
    if maxval != 255:
        raise FrameError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace after maxval
    channels = 3 if magic == b"P6" else 1
    expected = width * height * channels
    raw = data[pos:pos + expected]
    if len(raw) != expected:
        raise FrameError(f"{path}: truncated PNM data ({len(raw)} of {expected} bytes)")
    arr = np.frombuffer(raw, dtype=np.uint8)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return FramePixels(arr.reshape(shape).copy())


def _write_pnm(frame: FramePixels) -> bytes:
    magic = b"P5" if frame.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, frame.width, frame.height)
    return header + frame.pixels.tobytes()


def read_image(path: str | Path) -> FramePixels:
    """Load a PNG or binary PPM/PGM file as an 8-bit raster."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FrameError(f"cannot read frame file {path}: {exc}") from exc
    if data[:2] in (b"P5", b"P6"):
        return _read_pnm(data, path)
    try:
        with Image.open(io.BytesIO(data)) as img:
            if img.mode == "L":
                arr = np.asarray(img, dtype=np.uint8)
            else:
                arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise FrameError(f"cannot decode image file {path}: {exc}") from exc
    return FramePixels(arr.copy())


def write_image(path: str | Path, frame: FramePixels) -> None:
    """Write PNG or binary PPM/PGM depending on the file suffix."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".ppm", ".pgm"):
        path.write_bytes(_write_pnm(frame))
    elif suffix == ".png":
        mode = "L" if frame.channels == 1 else "RGB"
        # low compression effort: lossless either way, and frame dumps are
        # written by the hundreds
        Image.fromarray(frame.pixels, mode=mode).save(path, format="PNG",
                                                      compress_level=1)
    else:
        raise FrameError(f"unsupported image suffix {suffix!r} (use .png, .ppm, or .pgm)")


def load_frame_dir(path: str | Path, frame_rate: float,
                   video_id: str | None = None) -> FrameSequence:
    """Load every numbered frame image in a directory, ordered numerically.

    Filenames must look like ``000042.png`` / ``000042.ppm``; the integer stem
    becomes the frame index.
    """
    path = Path(path)
    if not path.is_dir():
        raise FrameError(f"frame directory does not exist: {path}")
    entries: list[tuple[int, Path]] = []
    for child in path.iterdir():
        m = FRAME_FILE_PATTERN.match(child.name)
        if m:
            entries.append((int(m.group(1)), child))
    if not entries:
        raise FrameError(f"no frames in {path}")
    entries.sort(key=lambda e: e[0])
    seen: dict[int, Path] = {}
    for idx, file in entries:
        if idx in seen:
            raise FrameError(f"duplicate frame index {idx}: {seen[idx].name} and {file.name}")
        seen[idx] = file
    frames = [(idx, read_image(file)) for idx, file in entries]
    return FrameSequence(video_id=video_id or path.name, frame_rate=frame_rate, frames=frames)
