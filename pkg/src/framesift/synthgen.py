"""Synthetic checkout scenarios with exact ground truth.

Renders textured colored rectangles sliding across a near-white tray on a
gray surround, writes the frames in the same directory layout the pipeline
ingests, and emits a ground-truth event CSV plus a classifier-manifest CSV
covering every frame (object frames map to the object's class, all other
frames to a designated phantom class, which is what a real classifier would
hallucinate on empty crops).

Ground-truth windows are defined by the object's sprite rectangle
intersecting the centered ROI-crop region, using pre-blur geometry.
Everything is driven by one seed: a fixed spec renders byte-identical
frames on every run.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .evaluation import GroundTruthEvent, write_gt_csv
from .ingest import FramePixels, _round_u8, write_image

RGB = tuple[int, int, int]


@dataclass(frozen=True)
class ObjectEvent:
    """One product crossing the frame left to right over (enter_t, exit_t).

    The crossing speed follows from the window: the sprite starts fully off
    screen left at enter_t and is fully off screen right at exit_t.
    flicker_depth > 0 desaturates the object mid-crossing, which splits its
    colorfulness response into two peaks (a duplicate-detection stressor).
    """

    class_id: int
    enter_t: float
    exit_t: float
    color: RGB
    size_frac: float = 0.30
    texture_amount: int = 28
    flicker_depth: float = 0.0
    y_frac: float = 0.5


@dataclass(frozen=True)
class TintPulse:
    """A brief uniform color cast over the whole frame (a lighting flicker).

    Colorful but textureless: it creates a colorfulness peak that entropy
    masking later rejects.
    """

    t_start: float
    t_end: float
    color: RGB = (255, 120, 140)
    strength: float = 0.5


@dataclass(frozen=True)
class ScenarioSpec:
    video_id: str = "synth"
    width: int = 480
    height: int = 270
    frame_rate: float = 30.0
    duration_s: float = 30.0
    surround_rgb: RGB = (105, 105, 105)
    tray_rgb: RGB = (235, 233, 230)
    tray_fraction: float = 0.8
    noise_level: int = 0
    blur_px: int = 5
    roi_crop_fraction: float = 0.25
    phantom_class: int = 116
    hand_blobs: bool = False
    seed: int = 0
    events: tuple[ObjectEvent, ...] = ()
    pulses: tuple[TintPulse, ...] = ()

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("frame dims must be positive")
        if self.frame_rate <= 0 or self.duration_s <= 0:
            raise ValueError("frame_rate and duration_s must be positive")
        if not 0 < self.tray_fraction <= 1:
            raise ValueError("tray_fraction must be in (0, 1]")
        if not 0 <= self.roi_crop_fraction < 1:
            raise ValueError("roi_crop_fraction must be in [0, 1)")
        by_class: dict[int, list[ObjectEvent]] = {}
        for e in self.events:
            if not e.enter_t < e.exit_t <= self.duration_s:
                raise ValueError(f"event window ({e.enter_t}, {e.exit_t}) must satisfy "
                                 f"enter < exit <= duration {self.duration_s}")
            by_class.setdefault(e.class_id, []).append(e)
        for class_id, evs in by_class.items():
            evs.sort(key=lambda e: e.enter_t)
            for a, b in zip(evs, evs[1:]):
                if b.enter_t < a.exit_t:
                    raise ValueError(f"class {class_id} events overlap in time")

    @property
    def frame_count(self) -> int:
        return int(round(self.duration_s * self.frame_rate))


def default_scenario(seed: int = 0) -> ScenarioSpec:
    """Five well-separated products over 30 s at 30 fps, 480x270."""
    return ScenarioSpec(seed=seed, events=(
        ObjectEvent(class_id=3, enter_t=2.0, exit_t=5.0, color=(200, 40, 40)),
        ObjectEvent(class_id=17, enter_t=7.5, exit_t=10.5, color=(40, 170, 50)),
        ObjectEvent(class_id=42, enter_t=13.0, exit_t=16.0, color=(40, 70, 210)),
        ObjectEvent(class_id=88, enter_t=18.5, exit_t=21.5, color=(220, 160, 30)),
        ObjectEvent(class_id=105, enter_t=24.0, exit_t=27.0, color=(170, 40, 200)),
    ))


def duplicate_prone_scenario(seed: int = 0) -> ScenarioSpec:
    """The default five events made duplicate-prone: two of them flicker
    (double colorfulness peaks) and two textureless tint pulses fire on
    otherwise empty stretches."""
    base = default_scenario(seed)
    events = list(base.events)
    events[1] = replace(events[1], flicker_depth=0.65, enter_t=7.0, exit_t=11.0)
    events[3] = replace(events[3], flicker_depth=0.65, enter_t=18.0, exit_t=22.0)
    return replace(base, events=tuple(events), pulses=(
        TintPulse(t_start=11.8, t_end=12.6),
        TintPulse(t_start=22.8, t_end=23.6, color=(140, 220, 255)),
    ))


@dataclass
class GenerationResult:
    frames_dir: Path
    gt_path: Path
    classifier_manifest_path: Path
    scenario_path: Path
    events: list[GroundTruthEvent]


def _roi_bounds(spec: ScenarioSpec) -> tuple[int, int, int, int]:
    """(x0, y0, x1, y1) exclusive-end bounds of the centered ROI-crop region,
    mirroring crop_roi's rounding."""
    f = spec.roi_crop_fraction
    w = int((1.0 - f) * spec.width)
    h = int((1.0 - f) * spec.height)
    x0 = int(f / 2.0 * spec.width)
    y0 = int(f / 2.0 * spec.height)
    return x0, y0, x0 + w, y0 + h


def _sprite(spec: ScenarioSpec, event_idx: int, event: ObjectEvent) -> np.ndarray:
    """The object's fixed textured appearance, float64 (h, w, 3)."""
    oh = max(4, int(round(event.size_frac * spec.height)))
    ow = max(4, int(round(oh * 1.35)))
    rng = np.random.default_rng((spec.seed, 1013, event_idx))
    base = np.array(event.color, dtype=np.float64)
    noise = rng.integers(-event.texture_amount, event.texture_amount + 1,
                         size=(oh, ow, 3)).astype(np.float64)
    return np.clip(base[None, None, :] + noise, 0.0, 255.0)


def _event_x(spec: ScenarioSpec, event: ObjectEvent, sprite_w: int, t: float) -> int:
    progress = (t - event.enter_t) / (event.exit_t - event.enter_t)
    return int(np.floor(-sprite_w + (spec.width + sprite_w) * progress))


def _flicker_factor(event: ObjectEvent, t: float) -> float:
    if event.flicker_depth <= 0:
        return 1.0
    mid = 0.5 * (event.enter_t + event.exit_t)
    width = 0.15 * (event.exit_t - event.enter_t)
    z = (t - mid) / width
    return 1.0 - event.flicker_depth * float(np.exp(-0.5 * z * z))


def _box_blur_h(arr: np.ndarray, k: int) -> np.ndarray:
    """Centered horizontal box filter along axis 1 (the motion-blur line
    kernel), zero-padded at the borders."""
    if k <= 1:
        return arr
    pad = [(0, 0)] * arr.ndim
    pad[1] = (k // 2 + 1, (k - 1) // 2)  # extra left slot is the cumsum zero prefix
    padded = np.pad(arr, pad_width=pad, mode="constant")
    cs = np.cumsum(padded, axis=1, dtype=np.float64)
    return (cs[:, k:] - cs[:, :-k]) / float(k)


def _overlap(a0: int, a1: int, b0: int, b1: int) -> int:
    return max(0, min(a1, b1) - max(a0, b0))


def render_frame(spec: ScenarioSpec, sprites: list[np.ndarray],
                 frame_idx: int) -> FramePixels:
    """Render one frame deterministically from the spec and its sprites."""
    h, w = spec.height, spec.width
    t = frame_idx / spec.frame_rate
    frame = np.empty((h, w, 3), dtype=np.float64)
    frame[:] = np.array(spec.surround_rgb, dtype=np.float64)
    tw = int(round(spec.tray_fraction * w))
    th = int(round(spec.tray_fraction * h))
    tx = (w - tw) // 2
    ty = (h - th) // 2
    frame[ty:ty + th, tx:tx + tw] = np.array(spec.tray_rgb, dtype=np.float64)

    layer = np.zeros((h, w, 3), dtype=np.float64)
    alpha = np.zeros((h, w), dtype=np.float64)
    any_object = False
    for event_idx, event in enumerate(spec.events):
        if not event.enter_t <= t < event.exit_t:
            continue
        sprite = sprites[event_idx]
        oh, ow = sprite.shape[:2]
        x = _event_x(spec, event, ow, t)
        y = int(round(event.y_frac * h - oh / 2))
        sx0, sx1 = max(0, x), min(w, x + ow)
        sy0, sy1 = max(0, y), min(h, y + oh)
        if sx0 >= sx1 or sy0 >= sy1:
            continue
        any_object = True
        m = _flicker_factor(event, t)
        g0 = 0.299 * event.color[0] + 0.587 * event.color[1] + 0.114 * event.color[2]
        patch = g0 + (sprite[sy0 - y:sy1 - y, sx0 - x:sx1 - x] - g0) * m

        if spec.hand_blobs:
            hx0 = max(0, sx0 - ow // 2)
            hy0 = min(h, sy1 - oh // 4)
            hy1 = min(h, hy0 + oh // 3)
            layer[hy0:hy1, hx0:sx0] = np.array((120, 110, 100), dtype=np.float64)
            alpha[hy0:hy1, hx0:sx0] = 1.0

        layer[sy0:sy1, sx0:sx1] = patch
        alpha[sy0:sy1, sx0:sx1] = 1.0

    if any_object:
        blurred_layer = _box_blur_h(layer * alpha[:, :, None], spec.blur_px)
        blurred_alpha = _box_blur_h(alpha, spec.blur_px)
        frame = frame * (1.0 - blurred_alpha[:, :, None]) + blurred_layer

    for pulse in spec.pulses:
        if not pulse.t_start <= t < pulse.t_end:
            continue
        mid = 0.5 * (pulse.t_start + pulse.t_end)
        half = 0.5 * (pulse.t_end - pulse.t_start)
        s = pulse.strength * (1.0 - abs(t - mid) / half)
        frame = frame * (1.0 - s) + np.array(pulse.color, dtype=np.float64) * s

    if spec.noise_level > 0:
        rng = np.random.default_rng((spec.seed, 8111, frame_idx))
        frame = frame + rng.integers(-spec.noise_level, spec.noise_level + 1,
                                     size=frame.shape)
    return FramePixels(_round_u8(frame))


def ground_truth_events(spec: ScenarioSpec,
                        sprites: list[np.ndarray]) -> list[GroundTruthEvent]:
    """Per event, the first/last frame whose sprite rectangle intersects the
    ROI-crop region (at least one pixel)."""
    rx0, ry0, rx1, ry1 = _roi_bounds(spec)
    out = []
    for event_idx, event in enumerate(spec.events):
        oh, ow = sprites[event_idx].shape[:2]
        y = int(round(event.y_frac * spec.height - oh / 2))
        present = []
        for i in range(spec.frame_count):
            t = i / spec.frame_rate
            if not event.enter_t <= t < event.exit_t:
                continue
            x = _event_x(spec, event, ow, t)
            if _overlap(x, x + ow, rx0, rx1) > 0 and _overlap(y, y + oh, ry0, ry1) > 0:
                present.append(i)
        if present:
            out.append(GroundTruthEvent(
                video_id=spec.video_id, class_id=event.class_id,
                t_start=present[0] / spec.frame_rate,
                t_end=present[-1] / spec.frame_rate))
    return out


def _dominant_class(spec: ScenarioSpec, sprites: list[np.ndarray],
                    frame_idx: int) -> int:
    """Class of the object most present in this frame, else the phantom class."""
    rx0, ry0, rx1, ry1 = _roi_bounds(spec)
    t = frame_idx / spec.frame_rate
    best = None
    for event_idx, event in enumerate(spec.events):
        if not event.enter_t <= t < event.exit_t:
            continue
        oh, ow = sprites[event_idx].shape[:2]
        x = _event_x(spec, event, ow, t)
        y = int(round(event.y_frac * spec.height - oh / 2))
        on_frame = _overlap(x, x + ow, 0, spec.width) * _overlap(y, y + oh, 0, spec.height)
        if on_frame == 0:
            continue
        in_roi = _overlap(x, x + ow, rx0, rx1) * _overlap(y, y + oh, ry0, ry1)
        rank = (in_roi, on_frame, -event.enter_t)
        if best is None or rank > best[0]:
            best = (rank, event.class_id)
    return spec.phantom_class if best is None else best[1]


def format_scenario(spec: ScenarioSpec) -> str:
    lines = ["[scenario]"]
    for key in ("video_id", "width", "height", "frame_rate", "duration_s",
                "tray_fraction", "noise_level", "blur_px", "roi_crop_fraction",
                "phantom_class", "hand_blobs", "seed"):
        value = getattr(spec, key)
        if isinstance(value, bool):
            lines.append(f"{key} = {'true' if value else 'false'}")
        elif isinstance(value, str):
            lines.append(f'{key} = "{value}"')
        else:
            lines.append(f"{key} = {value}")
    for name in ("surround_rgb", "tray_rgb"):
        r, g, b = getattr(spec, name)
        lines.append(f'{name} = "{r}/{g}/{b}"')
    for n, e in enumerate(spec.events):
        lines += [f"", f"[event.{n}]",
                  f"class_id = {e.class_id}",
                  f"enter_t = {e.enter_t}", f"exit_t = {e.exit_t}",
                  f'color = "{e.color[0]}/{e.color[1]}/{e.color[2]}"',
                  f"size_frac = {e.size_frac}",
                  f"texture_amount = {e.texture_amount}",
                  f"flicker_depth = {e.flicker_depth}",
                  f"y_frac = {e.y_frac}"]
    for n, p in enumerate(spec.pulses):
        lines += [f"", f"[pulse.{n}]",
                  f"t_start = {p.t_start}", f"t_end = {p.t_end}",
                  f'color = "{p.color[0]}/{p.color[1]}/{p.color[2]}"',
                  f"strength = {p.strength}"]
    return "\n".join(lines) + "\n"


def _parse_rgb(text: str) -> RGB:
    parts = text.split("/")
    if len(parts) != 3:
        raise ValueError(f"expected 'r/g/b', got {text!r}")
    r, g, b = (int(p) for p in parts)
    return (r, g, b)


def load_scenario(path: str | Path) -> ScenarioSpec:
    """Read a scenario file previously written by format_scenario."""
    from .config import parse_config_text

    sections = parse_config_text(Path(path).read_text(), str(path))
    if "scenario" not in sections:
        raise ValueError(f"{path}: missing [scenario] section")
    s = dict(sections["scenario"])
    for key in ("surround_rgb", "tray_rgb"):
        if key in s:
            s[key] = _parse_rgb(s[key])
    for key in ("frame_rate", "duration_s", "tray_fraction", "roi_crop_fraction"):
        if key in s:
            s[key] = float(s[key])
    events = []
    pulses = []
    for name in sorted(k for k in sections if k.startswith("event.")):
        e = dict(sections[name])
        e["color"] = _parse_rgb(e["color"])
        for key in ("enter_t", "exit_t", "size_frac", "flicker_depth", "y_frac"):
            if key in e:
                e[key] = float(e[key])
        events.append(ObjectEvent(**e))
    for name in sorted(k for k in sections if k.startswith("pulse.")):
        p = dict(sections[name])
        if "color" in p:
            p["color"] = _parse_rgb(p["color"])
        for key in ("t_start", "t_end", "strength"):
            if key in p:
                p[key] = float(p[key])
        pulses.append(TintPulse(**p))
    spec = ScenarioSpec(**s, events=tuple(events), pulses=tuple(pulses))
    spec.validate()
    return spec


def generate(spec: ScenarioSpec, out_dir: str | Path,
             image_format: str = "png") -> GenerationResult:
    """Render all frames and write frames/, gt.csv, classifier_manifest.csv,
    and scenario.toml under out_dir."""
    spec.validate()
    if image_format not in ("png", "ppm"):
        raise ValueError(f"image_format must be png or ppm, got {image_format!r}")
    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    try:
        frames_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValueError(f"cannot create output directory {frames_dir}: {exc}") from exc

    sprites = [_sprite(spec, i, e) for i, e in enumerate(spec.events)]
    for i in range(spec.frame_count):
        frame = render_frame(spec, sprites, i)
        write_image(frames_dir / f"{i:06d}.{image_format}", frame)

    events = ground_truth_events(spec, sprites)
    gt_path = out_dir / "gt.csv"
    write_gt_csv(gt_path, events)

    manifest_path = out_dir / "classifier_manifest.csv"
    with manifest_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_key", "path_or_class"])
        for i in range(spec.frame_count):
            writer.writerow([f"{spec.video_id}/{i:06d}",
                             _dominant_class(spec, sprites, i)])

    scenario_path = out_dir / "scenario.toml"
    scenario_path.write_text(format_scenario(spec))
    return GenerationResult(frames_dir=frames_dir, gt_path=gt_path,
                            classifier_manifest_path=manifest_path,
                            scenario_path=scenario_path, events=events)
