"""Pluggable seats for the trained models the pipeline defers to.

Segmenters and classifiers are external concerns: a manifest adapter replays
precomputed outputs keyed by frame, an external-command adapter shells out
per frame via a temp-file protocol, and null/constant adapters keep the
pipeline runnable with no models at all.

Command protocol: the frame is written as PNG to $IN and the adapter is
invoked as ``cmd $IN $OUT``. A segmenter writes a PNG mask to $OUT; a
classifier prints one line ``class_id confidence`` on stdout.
"""

from __future__ import annotations

import csv
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import FramePixels, read_image, write_image
from .signals import BinaryMask

NUM_CLASSES = 116


class AdapterError(RuntimeError):
    """A model adapter could not produce a usable output."""


def _load_manifest(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise AdapterError(f"manifest file not found: {path}")
    table: dict[str, str] = {}
    with path.open(newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "frame_key":
                continue
            if len(row) != 2:
                raise AdapterError(f"{path}: malformed manifest row {row!r}")
            table[row[0]] = row[1]
    return table


def _run_command(template: str, in_path: Path, out_path: Path) -> subprocess.CompletedProcess:
    argv = shlex.split(template)
    if "$IN" in argv or "$OUT" in argv:
        argv = [str(in_path) if a == "$IN" else str(out_path) if a == "$OUT" else a
                for a in argv]
    else:
        argv = argv + [str(in_path), str(out_path)]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True)
    except OSError as exc:
        raise AdapterError(f"cannot invoke adapter command {argv[0]!r}: {exc}") from exc
    if proc.returncode != 0:
        raise AdapterError(
            f"adapter command exited {proc.returncode}: {' '.join(argv)}\n"
            f"stderr: {proc.stderr.strip()}")
    return proc


@dataclass
class SegmenterAdapter:
    """Produces a binary mask for a frame.

    kinds: ``manifest`` (mask image looked up by frame key, path relative to
    the manifest file), ``external_command``, ``null`` (all-true mask).
    """

    kind: str = "null"
    manifest_path: str | None = None
    command: str | None = None
    _table: dict[str, str] | None = field(default=None, repr=False)

    def validate(self) -> None:
        if self.kind not in ("manifest", "external_command", "null"):
            raise AdapterError(f"unknown segmenter kind {self.kind!r}")
        if self.kind == "manifest" and not self.manifest_path:
            raise AdapterError("manifest segmenter needs manifest_path")
        if self.kind == "external_command" and not self.command:
            raise AdapterError("external_command segmenter needs a command")

    def _lookup(self, frame_key: str) -> Path:
        if self._table is None:
            self._table = _load_manifest(self.manifest_path)
        if frame_key not in self._table:
            raise AdapterError(f"segmenter manifest has no entry for key {frame_key!r}")
        return Path(self.manifest_path).parent / self._table[frame_key]


@dataclass(frozen=True)
class ClassPrediction:
    class_id: int
    confidence: float


@dataclass
class ClassifierAdapter:
    """Assigns a product class (1..num_classes) to a crop.

    kinds: ``manifest`` (label by frame key, confidence 1.0),
    ``external_command``, ``constant``.
    """

    kind: str = "constant"
    manifest_path: str | None = None
    command: str | None = None
    constant_class: int = 1
    num_classes: int = NUM_CLASSES
    _table: dict[str, str] | None = field(default=None, repr=False)

    def validate(self) -> None:
        if self.kind not in ("manifest", "external_command", "constant"):
            raise AdapterError(f"unknown classifier kind {self.kind!r}")
        if self.kind == "manifest" and not self.manifest_path:
            raise AdapterError("manifest classifier needs manifest_path")
        if self.kind == "external_command" and not self.command:
            raise AdapterError("external_command classifier needs a command")
        if self.kind == "constant" and not 1 <= self.constant_class <= self.num_classes:
            raise AdapterError(f"constant class {self.constant_class} outside "
                               f"1..{self.num_classes}")

    def _lookup(self, frame_key: str) -> str:
        if self._table is None:
            self._table = _load_manifest(self.manifest_path)
        if frame_key not in self._table:
            raise AdapterError(f"classifier manifest has no entry for key {frame_key!r}")
        return self._table[frame_key]


def segment(adapter: SegmenterAdapter, frame: FramePixels, frame_key: str) -> BinaryMask:
    """Run one segmenter adapter on one frame; the result is never post-processed."""
    adapter.validate()
    if adapter.kind == "null":
        return BinaryMask(np.ones((frame.height, frame.width), dtype=bool))
    if adapter.kind == "manifest":
        mask_path = adapter._lookup(frame_key)
        try:
            img = read_image(mask_path)
        except Exception as exc:
            raise AdapterError(f"cannot read mask for key {frame_key!r}: {exc}") from exc
        mask = BinaryMask(img.pixels != 0 if img.channels == 1
                          else np.any(img.pixels != 0, axis=2))
    else:
        with tempfile.TemporaryDirectory(prefix="framesift-seg-") as tmp:
            in_path = Path(tmp) / "in.png"
            out_path = Path(tmp) / "out.png"
            write_image(in_path, frame)
            _run_command(adapter.command, in_path, out_path)
            if not out_path.is_file():
                raise AdapterError(f"segmenter command produced no mask file {out_path}")
            img = read_image(out_path)
            mask = BinaryMask(img.pixels != 0 if img.channels == 1
                              else np.any(img.pixels != 0, axis=2))
    if (mask.height, mask.width) != (frame.height, frame.width):
        raise AdapterError(
            f"mask for key {frame_key!r} is {mask.width}x{mask.height}, "
            f"frame is {frame.width}x{frame.height}")
    return mask


def _parse_prediction(text: str, num_classes: int, origin: str) -> ClassPrediction:
    fields = text.strip().splitlines()[0].split() if text.strip() else []
    if len(fields) != 2:
        raise AdapterError(f"{origin}: expected 'class_id confidence', got {text!r}")
    try:
        class_id = int(fields[0])
        confidence = float(fields[1])
    except ValueError as exc:
        raise AdapterError(f"{origin}: unparseable prediction {text!r}") from exc
    if not 1 <= class_id <= num_classes:
        raise AdapterError(f"{origin}: class_id {class_id} outside 1..{num_classes}")
    if not np.isfinite(confidence) or not 0.0 <= confidence <= 1.0:
        raise AdapterError(f"{origin}: confidence {confidence} outside [0, 1]")
    return ClassPrediction(class_id=class_id, confidence=confidence)


def classify(adapter: ClassifierAdapter, crop: FramePixels, frame_key: str) -> ClassPrediction:
    """Run one classifier adapter on one crop."""
    adapter.validate()
    if adapter.kind == "constant":
        return ClassPrediction(class_id=adapter.constant_class, confidence=1.0)
    if adapter.kind == "manifest":
        value = adapter._lookup(frame_key)
        try:
            class_id = int(value)
        except ValueError as exc:
            raise AdapterError(f"manifest class for key {frame_key!r} is not an "
                               f"integer: {value!r}") from exc
        if not 1 <= class_id <= adapter.num_classes:
            raise AdapterError(f"manifest class {class_id} for key {frame_key!r} "
                               f"outside 1..{adapter.num_classes}")
        return ClassPrediction(class_id=class_id, confidence=1.0)
    with tempfile.TemporaryDirectory(prefix="framesift-cls-") as tmp:
        in_path = Path(tmp) / "in.png"
        out_path = Path(tmp) / "out.txt"
        write_image(in_path, crop)
        proc = _run_command(adapter.command, in_path, out_path)
        return _parse_prediction(proc.stdout, adapter.num_classes,
                                 f"classifier command for key {frame_key!r}")
