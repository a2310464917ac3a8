"""Training-image background replacement: rectangular or circular gradient
scenes composited behind a masked-out object.

Gradient rule: per pixel, ratio = 1 - d where d is the normalized distance
from the center (circular: Euclidean over the farthest-corner distance;
rectangular: Chebyshev over the half-extents), and
color = inner * ratio + outer * (1 - ratio).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import FramePixels, _round_u8, read_image, write_image
from .signals import BinaryMask

RGB = tuple[int, int, int]


@dataclass(frozen=True)
class GradientSpec:
    shape: str = "circular"
    inner_color: RGB = (255, 255, 255)
    outer_color: RGB = (32, 32, 32)
    center: tuple[float, float] | None = None  # pixel coords; None = image center

    def validate(self) -> None:
        if self.shape not in ("rectangular", "circular"):
            raise ValueError(f"gradient shape must be rectangular or circular, got {self.shape!r}")
        for color in (self.inner_color, self.outer_color):
            if len(color) != 3 or any(not 0 <= c <= 255 for c in color):
                raise ValueError(f"gradient colors must be RGB triples in 0..255, got {color}")


def gradient_background(width: int, height: int, spec: GradientSpec) -> FramePixels:
    """Render a gradient scene: inner_color at the center fading to
    outer_color at the boundary (rectangular) or corners (circular)."""
    spec.validate()
    if width <= 0 or height <= 0:
        raise ValueError(f"gradient dims must be positive, got {width}x{height}")
    cx, cy = spec.center if spec.center is not None else ((width - 1) / 2.0, (height - 1) / 2.0)
    xs = np.arange(width, dtype=np.float64) - cx
    ys = np.arange(height, dtype=np.float64) - cy

    if spec.shape == "circular":
        corner = max(
            np.hypot(x - cx, y - cy) for x in (0.0, width - 1.0) for y in (0.0, height - 1.0)
        )
        dist = np.hypot(ys[:, None], xs[None, :]) / (corner if corner > 0 else 1.0)
    else:
        hx = max(cx, width - 1 - cx)
        hy = max(cy, height - 1 - cy)
        dist = np.maximum(np.abs(xs[None, :]) / (hx if hx > 0 else 1.0),
                          np.abs(ys[:, None]) / (hy if hy > 0 else 1.0))

    ratio = np.clip(1.0 - dist, 0.0, 1.0)[:, :, None]
    inner = np.array(spec.inner_color, dtype=np.float64)
    outer = np.array(spec.outer_color, dtype=np.float64)
    return FramePixels(_round_u8(inner * ratio + outer * (1.0 - ratio)))


def composite(object_img: FramePixels, mask: BinaryMask,
              background: FramePixels) -> FramePixels:
    """Hard matte: object where the mask is true, background elsewhere."""
    if object_img.channels != 3 or background.channels != 3:
        raise ValueError("composite expects RGB object and background images")
    dims = {(object_img.height, object_img.width),
            (mask.height, mask.width),
            (background.height, background.width)}
    if len(dims) > 1:
        raise ValueError(f"composite dimensions differ: {sorted(dims)}")
    out = np.where(mask.bits[:, :, None], object_img.pixels, background.pixels)
    return FramePixels(out.astype(np.uint8))


def random_gradient_spec(rng: np.random.Generator,
                         inner_range: tuple[int, int] = (180, 255),
                         outer_range: tuple[int, int] = (0, 120)) -> GradientSpec:
    """Draw a shape and color pair; inner defaults near-white like the tray."""
    shape = "rectangular" if rng.integers(0, 2) == 0 else "circular"
    inner = tuple(int(v) for v in rng.integers(inner_range[0], inner_range[1] + 1, size=3))
    outer = tuple(int(v) for v in rng.integers(outer_range[0], outer_range[1] + 1, size=3))
    return GradientSpec(shape=shape, inner_color=inner, outer_color=outer)


def replace_backgrounds(in_dir: str | Path, masks_dir: str | Path,
                        out_dir: str | Path, seed: int = 0,
                        inner_range: tuple[int, int] = (180, 255),
                        outer_range: tuple[int, int] = (0, 120)) -> Path:
    """Composite every image in a tree over a fresh random gradient scene.

    Masks live in a parallel tree under masks_dir with identical relative
    paths. Writes a mirror tree under out_dir plus a manifest CSV
    (input,output,shape,inner_rgb,outer_rgb,seed); returns the manifest path.
    """
    in_dir, masks_dir, out_dir = Path(in_dir), Path(masks_dir), Path(out_dir)
    if not in_dir.is_dir():
        raise ValueError(f"input directory does not exist: {in_dir}")
    images = sorted(p for p in in_dir.rglob("*")
                    if p.is_file() and p.suffix.lower() in (".png", ".ppm"))
    if not images:
        raise ValueError(f"no images under {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for i, src in enumerate(images):
        rel = src.relative_to(in_dir)
        mask_path = masks_dir / rel
        if not mask_path.is_file():
            raise ValueError(f"no mask for {rel} under {masks_dir}")
        img = read_image(src)
        mask_img = read_image(mask_path)
        if mask_img.channels != 1:
            raise ValueError(f"mask {mask_path} must be single-channel")
        mask = BinaryMask(mask_img.pixels != 0)

        # Per-image generator: reproducible regardless of tree ordering.
        rng = np.random.default_rng(seed * 1_000_003 + i)
        spec = random_gradient_spec(rng, inner_range, outer_range)
        background = gradient_background(img.width, img.height, spec)
        dst = out_dir / rel
        dst.parent.mkdir(parents=True, exist_ok=True)
        write_image(dst, composite(img, mask, background))
        rows.append((str(rel), str(dst), spec.shape,
                     "/".join(map(str, spec.inner_color)),
                     "/".join(map(str, spec.outer_color)), seed))

    manifest = out_dir / "prep_manifest.csv"
    with manifest.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["input", "output", "shape", "inner_rgb", "outer_rgb", "seed"])
        writer.writerows(rows)
    return manifest
