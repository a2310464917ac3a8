"""Pipeline configuration: every tunable the detection run needs, a minimal
TOML-subset reader for preset files, and FRAMESIFT_* environment overrides.

Precedence, lowest to highest: built-in defaults, config file, environment,
command-line flags.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .ingest import PreprocessSpec
from .masking import EntropySpec
from .smoothing import SmoothingSpec

ENV_PREFIX = "FRAMESIFT_"

SECTIONS = ("ingest", "signals", "smoothing", "selection", "masking", "detect", "adapters")


class ConfigError(ValueError):
    """Raised for unparseable config text or out-of-range values."""


def _parse_scalar(text: str, where: str, bare_strings: bool = False) -> Any:
    """Parse one scalar. Config files require quoted strings; command-line
    --set values and environment variables may leave them bare."""
    text = text.strip()
    if not text:
        raise ConfigError(f"{where}: empty value")
    if len(text) >= 2 and text[0] == text[-1] and text[0] in ("'", '"'):
        return text[1:-1]
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if bare_strings:
        return text
    raise ConfigError(f"{where}: cannot parse value {text!r} "
                      f"(quote strings, use true/false for booleans)")


def _strip_comment(line: str) -> str:
    out = []
    quote = None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
        elif ch in ("'", '"'):
            quote = ch
        elif ch == "#":
            break
        out.append(ch)
    return "".join(out)


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, dict[str, Any]]:
    """Parse the TOML subset used by config and preset files: ``[section]``
    headers and scalar ``key = value`` lines."""
    data: dict[str, dict[str, Any]] = {}
    section: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        where = f"{origin}:{lineno}"
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise ConfigError(f"{where}: empty section name")
            data.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {raw!r}")
        if section is None:
            raise ConfigError(f"{where}: key outside any [section]")
        key, value = line.split("=", 1)
        data[section][key.strip()] = _parse_scalar(value, where)
    return data


@dataclass(frozen=True)
class AdapterSettings:
    """Where the pipeline finds its segmenters and classifier."""

    product_kind: str = "null"
    product_manifest: str = ""
    product_command: str = ""
    hand_kind: str = "null"
    hand_manifest: str = ""
    hand_command: str = ""
    classifier_kind: str = "constant"
    classifier_manifest: str = ""
    classifier_command: str = ""
    classifier_constant: int = 1


@dataclass(frozen=True)
class PipelineConfig:
    """All pipeline tunables with pinned defaults.

    The defaults are the full pipeline at its strongest settings: 25% total
    centered crop, colorfulness peak signal with FFT smoothing, 7x7 sharpness
    refinement, sharpness gate at 111, max-contour selection, and 1 s
    duplicate suppression.
    """

    # ingest
    crop_fraction: float = 0.25
    gain: float = 1.1
    bias: float = 5.0
    resize_width: int = 224
    resize_height: int = 224
    # signals
    selection_metric: str = "colorfulness"
    # smoothing
    smoothing: SmoothingSpec = SmoothingSpec()
    min_prominence: float = 0.0
    # selection
    refine_step: int = 7
    refine_count: int = 7
    sharpness_threshold: float = 111.0
    cbt_threshold: float = 0.0
    # masking
    segmentation_enabled: bool = True
    entropy: EntropySpec = EntropySpec()
    contour_mode: str = "max"
    crop_pad: int = 0
    re_segment: bool = False
    # detect
    dedupe_enabled: bool = True
    dedupe_window_s: float = 1.0
    # adapters
    adapters: AdapterSettings = field(default_factory=AdapterSettings)

    def validate(self) -> "PipelineConfig":
        if self.selection_metric not in ("binarization_ratio", "colorfulness", "sharpness"):
            raise ConfigError(f"unknown selection metric {self.selection_metric!r}")
        try:
            self.preprocess().validate()
            self.smoothing.validate()
            self.entropy.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.min_prominence < 0:
            raise ConfigError(f"min_prominence must be >= 0, got {self.min_prominence}")
        if self.refine_step < 1 or self.refine_count < 1:
            raise ConfigError("refine_step and refine_count must be >= 1")
        if self.contour_mode not in ("max", "rms"):
            raise ConfigError(f"contour_mode must be 'max' or 'rms', got {self.contour_mode!r}")
        if self.crop_pad < 0:
            raise ConfigError(f"crop_pad must be >= 0, got {self.crop_pad}")
        if self.dedupe_window_s < 0:
            raise ConfigError(f"dedupe_window_s must be >= 0, got {self.dedupe_window_s}")
        return self

    def preprocess(self) -> PreprocessSpec:
        return PreprocessSpec(crop_fraction=self.crop_fraction, gain=self.gain,
                              bias=self.bias, resize_width=self.resize_width,
                              resize_height=self.resize_height)

    def to_sections(self) -> dict[str, dict[str, Any]]:
        a = self.adapters
        return {
            "ingest": {
                "crop_fraction": self.crop_fraction,
                "gain": self.gain,
                "bias": self.bias,
                "resize_width": self.resize_width,
                "resize_height": self.resize_height,
            },
            "signals": {"metric": self.selection_metric},
            "smoothing": {
                "method": self.smoothing.method,
                "window": self.smoothing.window,
                "polyorder": self.smoothing.polyorder,
                "keep_fraction": self.smoothing.keep_fraction,
                "min_prominence": self.min_prominence,
            },
            "selection": {
                "refine_step": self.refine_step,
                "refine_count": self.refine_count,
                "sharpness_threshold": self.sharpness_threshold,
                "cbt_threshold": self.cbt_threshold,
            },
            "masking": {
                "enabled": self.segmentation_enabled,
                "entropy_radius": self.entropy.neighborhood_radius,
                "entropy_bins": self.entropy.bins,
                "entropy_binarize": self.entropy.binarize_method,
                "entropy_fixed_threshold": self.entropy.fixed_threshold,
                "contour_mode": self.contour_mode,
                "crop_pad": self.crop_pad,
                "re_segment": self.re_segment,
            },
            "detect": {
                "dedupe_enabled": self.dedupe_enabled,
                "dedupe_window_s": self.dedupe_window_s,
            },
            "adapters": {
                "product_kind": a.product_kind,
                "product_manifest": a.product_manifest,
                "product_command": a.product_command,
                "hand_kind": a.hand_kind,
                "hand_manifest": a.hand_manifest,
                "hand_command": a.hand_command,
                "classifier_kind": a.classifier_kind,
                "classifier_manifest": a.classifier_manifest,
                "classifier_command": a.classifier_command,
                "classifier_constant": a.classifier_constant,
            },
        }


_KEY_MAP: dict[tuple[str, str], str] = {
    ("ingest", "crop_fraction"): "crop_fraction",
    ("ingest", "gain"): "gain",
    ("ingest", "bias"): "bias",
    ("ingest", "resize_width"): "resize_width",
    ("ingest", "resize_height"): "resize_height",
    ("signals", "metric"): "selection_metric",
    ("smoothing", "method"): "smoothing.method",
    ("smoothing", "window"): "smoothing.window",
    ("smoothing", "polyorder"): "smoothing.polyorder",
    ("smoothing", "keep_fraction"): "smoothing.keep_fraction",
    ("smoothing", "min_prominence"): "min_prominence",
    ("selection", "refine_step"): "refine_step",
    ("selection", "refine_count"): "refine_count",
    ("selection", "sharpness_threshold"): "sharpness_threshold",
    ("selection", "cbt_threshold"): "cbt_threshold",
    ("masking", "enabled"): "segmentation_enabled",
    ("masking", "entropy_radius"): "entropy.neighborhood_radius",
    ("masking", "entropy_bins"): "entropy.bins",
    ("masking", "entropy_binarize"): "entropy.binarize_method",
    ("masking", "entropy_fixed_threshold"): "entropy.fixed_threshold",
    ("masking", "contour_mode"): "contour_mode",
    ("masking", "crop_pad"): "crop_pad",
    ("masking", "re_segment"): "re_segment",
    ("detect", "dedupe_enabled"): "dedupe_enabled",
    ("detect", "dedupe_window_s"): "dedupe_window_s",
    ("adapters", "product_kind"): "adapters.product_kind",
    ("adapters", "product_manifest"): "adapters.product_manifest",
    ("adapters", "product_command"): "adapters.product_command",
    ("adapters", "hand_kind"): "adapters.hand_kind",
    ("adapters", "hand_manifest"): "adapters.hand_manifest",
    ("adapters", "hand_command"): "adapters.hand_command",
    ("adapters", "classifier_kind"): "adapters.classifier_kind",
    ("adapters", "classifier_manifest"): "adapters.classifier_manifest",
    ("adapters", "classifier_command"): "adapters.classifier_command",
    ("adapters", "classifier_constant"): "adapters.classifier_constant",
}

_NUMERIC_FLOAT = {"crop_fraction", "gain", "bias", "smoothing.keep_fraction",
                  "min_prominence", "sharpness_threshold", "cbt_threshold",
                  "entropy.fixed_threshold", "dedupe_window_s"}


def config_from_sections(sections: dict[str, dict[str, Any]],
                         base: PipelineConfig | None = None) -> PipelineConfig:
    cfg = base or PipelineConfig()
    smoothing = cfg.smoothing
    entropy = cfg.entropy
    adapters = cfg.adapters
    plain: dict[str, Any] = {}
    for section, keys in sections.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in keys.items():
            target = _KEY_MAP.get((section, key))
            if target is None:
                raise ConfigError(f"unknown config key {key!r} in section [{section}]")
            if target in _NUMERIC_FLOAT and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            if target.startswith("smoothing."):
                smoothing = replace(smoothing, **{target.split(".", 1)[1]: value})
            elif target.startswith("entropy."):
                entropy = replace(entropy, **{target.split(".", 1)[1]: value})
            elif target.startswith("adapters."):
                adapters = replace(adapters, **{target.split(".", 1)[1]: value})
            else:
                plain[target] = value
    cfg = replace(cfg, smoothing=smoothing, entropy=entropy, adapters=adapters, **plain)
    return cfg.validate()


def env_overrides(environ: dict[str, str] | None = None) -> dict[str, dict[str, Any]]:
    """Collect FRAMESIFT_<SECTION>_<KEY>=value overrides from the environment."""
    environ = os.environ if environ is None else environ
    sections: dict[str, dict[str, Any]] = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        for section in SECTIONS:
            if rest.startswith(section + "_"):
                key = rest[len(section) + 1:]
                sections.setdefault(section, {})[key] = _parse_scalar(
                    raw, f"${name}", bare_strings=True)
                break
        else:
            raise ConfigError(f"environment variable {name} does not name a known "
                              f"config section (one of {', '.join(SECTIONS)})")
    return sections


def load_config(path: str | Path | None,
                environ: dict[str, str] | None = None,
                overrides: dict[str, dict[str, Any]] | None = None) -> PipelineConfig:
    """Defaults, then the config file, then the environment, then explicit
    overrides (typically command-line flags)."""
    cfg = PipelineConfig()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        cfg = config_from_sections(parse_config_text(path.read_text(), str(path)), cfg)
    env = env_overrides(environ)
    if env:
        cfg = config_from_sections(env, cfg)
    if overrides:
        cfg = config_from_sections(overrides, cfg)
    return cfg.validate()


def format_config(cfg: PipelineConfig) -> str:
    """Render a config as the same file format load_config reads."""
    out = []
    for section, keys in cfg.to_sections().items():
        out.append(f"[{section}]")
        for key, value in keys.items():
            if isinstance(value, bool):
                out.append(f"{key} = {'true' if value else 'false'}")
            elif isinstance(value, str):
                out.append(f'{key} = "{value}"')
            else:
                out.append(f"{key} = {value}")
        out.append("")
    return "\n".join(out)
