"""Command-line surface: one subcommand per pipeline stage, plus `pipeline`
to chain detect -> dedupe -> eval.

Every run writes a run-manifest JSON (config snapshot, inputs, stage timings,
sha256 of every emitted file). Config precedence: defaults < --config file <
FRAMESIFT_* environment < --set/flag overrides. Exit codes: 0 success, 2 for
usage or config errors, 1 for runtime failures (stage-tagged on stderr).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path
from typing import Any

from . import __version__
from .adapters import AdapterError, ClassifierAdapter, SegmenterAdapter
from .config import (
    AdapterSettings,
    ConfigError,
    PipelineConfig,
    _parse_scalar,
    format_config,
    load_config,
)
import numpy as np

from .datasetprep import replace_backgrounds
from .detect import (
    dedupe,
    preprocess_sequence,
    read_detections_csv,
    run_pipeline,
    write_detections_csv,
)
from .evaluation import (
    evaluate,
    format_report,
    read_gt_csv,
    write_report_csv,
)
from .ingest import (
    FrameError,
    apply_preprocess,
    load_frame_dir,
    read_image,
    to_grayscale,
    write_image,
)
from .masking import (
    combine_masks,
    crop_to_contour,
    entropy_mask,
    find_contours,
    read_mask,
    select_contours,
    write_contours_csv,
    write_mask,
)
from .selection import evaluate_candidates, write_candidates_csv
from .signals import (
    BinaryMask,
    binarize_inverse,
    compute_series,
    otsu_threshold,
    read_series_csv,
    write_series_csv,
)
from .smoothing import local_maxima, smooth, write_peaks_csv
from .svgplot import plot_series_svg
from .synthgen import default_scenario, duplicate_prone_scenario, generate, load_scenario


class _Stage:
    """Collects per-stage wall-clock timings for the run manifest."""

    def __init__(self) -> None:
        self.timings: dict[str, float] = {}

    def __call__(self, name: str):
        stage = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                stage.timings[name] = stage.timings.get(name, 0.0) + time.perf_counter() - self.t0
                return False

        return _Ctx()


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_run_manifest(path: Path, command: list[str], config: PipelineConfig | None,
                       inputs: list[Path], outputs: list[Path],
                       timings: dict[str, float]) -> None:
    manifest = {
        "tool": "framesift",
        "version": __version__,
        "command": command,
        "config": config.to_sections() if config is not None else None,
        "inputs": [str(p) for p in inputs],
        "outputs": [{"path": str(p), "sha256": _sha256(p)}
                    for p in outputs if p.is_file()],
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _parse_overrides(pairs: list[str]) -> dict[str, dict[str, Any]]:
    out: dict[str, dict[str, Any]] = {}
    for pair in pairs:
        if "=" not in pair or "." not in pair.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {pair!r}")
        target, value = pair.split("=", 1)
        section, key = target.split(".", 1)
        out.setdefault(section.strip(), {})[key.strip()] = _parse_scalar(
            value, f"--set {pair}", bare_strings=True)
    return out


def _load_cli_config(args: argparse.Namespace,
                     extra: dict[str, dict[str, Any]] | None = None) -> PipelineConfig:
    overrides = _parse_overrides(getattr(args, "set", []) or [])
    if extra:
        for section, keys in extra.items():
            overrides.setdefault(section, {}).update(keys)
    return load_config(getattr(args, "config", None), overrides=overrides)


def build_adapters(settings: AdapterSettings
                   ) -> tuple[SegmenterAdapter | None, SegmenterAdapter | None, ClassifierAdapter]:
    """Adapter objects for the product, hand, and classifier seats.

    A null product stays None (all-true product mask); a null hand stays None
    (no hand removal).
    """
    def seg(kind: str, manifest: str, command: str) -> SegmenterAdapter | None:
        if kind == "null":
            return None
        adapter = SegmenterAdapter(kind=kind, manifest_path=manifest or None,
                                   command=command or None)
        adapter.validate()
        return adapter

    product = seg(settings.product_kind, settings.product_manifest, settings.product_command)
    hand = seg(settings.hand_kind, settings.hand_manifest, settings.hand_command)
    classifier = ClassifierAdapter(kind=settings.classifier_kind,
                                   manifest_path=settings.classifier_manifest or None,
                                   command=settings.classifier_command or None,
                                   constant_class=settings.classifier_constant)
    classifier.validate()
    return product, hand, classifier


def _jobs(args: argparse.Namespace) -> int | None:
    jobs = getattr(args, "jobs", 1)
    return None if jobs == 0 else jobs


def _manifest_path(args: argparse.Namespace, primary: Path) -> Path:
    if getattr(args, "manifest", None):
        return Path(args.manifest)
    return primary.with_name(primary.name + ".manifest.json")


# ---------------------------------------------------------------------------
# Subcommand bodies. Each returns (inputs, outputs, config) for the manifest.

def cmd_signals(args, stage) -> tuple[list[Path], list[Path], PipelineConfig]:
    extra = {"signals": {"metric": args.metric}} if args.metric else None
    cfg = _load_cli_config(args, extra)
    with stage("load"):
        seq = load_frame_dir(args.frames, args.frame_rate, args.video_id)
    with stage("signals"):
        series = compute_series(seq, cfg.selection_metric, cfg.preprocess(), jobs=_jobs(args))
    out = Path(args.out)
    write_series_csv(out, series)
    outputs = [out]
    if args.dump_binarized:
        dump_dir = Path(args.dump_binarized)
        dump_dir.mkdir(parents=True, exist_ok=True)
        with stage("dump-binarized"):
            for idx, frame in seq.frames:
                gray = apply_preprocess(frame, cfg.preprocess(), grayscale=True)
                mask = binarize_inverse(gray, otsu_threshold(gray))
                path = dump_dir / f"{idx:06d}.png"
                write_mask(path, mask)
                outputs.append(path)
    if args.plot:
        plot_series_svg(args.plot, series, title=f"{seq.video_id}: {cfg.selection_metric}")
        outputs.append(Path(args.plot))
    return [Path(args.frames)], outputs, cfg


def cmd_smooth(args, stage) -> tuple[list[Path], list[Path], PipelineConfig]:
    extra: dict[str, dict[str, Any]] = {"smoothing": {}}
    if args.method:
        extra["smoothing"]["method"] = args.method
    if args.window is not None:
        extra["smoothing"]["window"] = args.window
    if args.polyorder is not None:
        extra["smoothing"]["polyorder"] = args.polyorder
    if args.keep_fraction is not None:
        extra["smoothing"]["keep_fraction"] = args.keep_fraction
    cfg = _load_cli_config(args, extra)
    series = read_series_csv(args.series)
    with stage("smooth"):
        smoothed = smooth(series, cfg.smoothing)
    out = Path(args.out) if args.out else Path(args.series).with_suffix(".smoothed.csv")
    write_series_csv(out, smoothed)
    outputs = [out]
    if args.plot:
        peaks = local_maxima(smoothed, cfg.min_prominence)
        plot_series_svg(args.plot, series, smoothed, peaks,
                        title=f"{series.video_id}: raw vs smoothed")
        outputs.append(Path(args.plot))
    return [Path(args.series)], outputs, cfg


def cmd_peaks(args, stage) -> tuple[list[Path], list[Path], PipelineConfig]:
    extra = ({"smoothing": {"min_prominence": args.min_prominence}}
             if args.min_prominence is not None else None)
    cfg = _load_cli_config(args, extra)
    series = read_series_csv(args.series)
    out = Path(args.out)
    with stage("peaks"):
        write_peaks_csv(out, series, cfg.min_prominence)
    return [Path(args.series)], [out], cfg


def cmd_select(args, stage) -> tuple[list[Path], list[Path], PipelineConfig]:
    cfg = _load_cli_config(args)
    with stage("load"):
        seq = load_frame_dir(args.frames, args.frame_rate, args.video_id)
    peaks = [int(ln.split(",")[0]) for ln in
             Path(args.peaks).read_text().strip().splitlines()[1:]]
    with stage("select"):
        prepped = preprocess_sequence(seq, cfg, jobs=_jobs(args))
        candidates = evaluate_candidates(prepped, peaks, cfg)
    out = Path(args.out)
    write_candidates_csv(out, candidates)
    return [Path(args.frames), Path(args.peaks)], [out], cfg


def cmd_mask(args, stage) -> tuple[list[Path], list[Path], PipelineConfig]:
    cfg = _load_cli_config(args)
    frame = read_image(args.image)
    inputs = [Path(args.image)]
    with stage("mask"):
        ent = entropy_mask(to_grayscale(frame), cfg.entropy)
        if args.product_mask:
            product = read_mask(args.product_mask)
            inputs.append(Path(args.product_mask))
        else:
            product = BinaryMask(np.ones((frame.height, frame.width), dtype=bool))
        if args.hand_mask:
            hand = read_mask(args.hand_mask)
            inputs.append(Path(args.hand_mask))
        else:
            hand = BinaryMask(np.zeros((frame.height, frame.width), dtype=bool))
        final = combine_masks(product, hand, ent)
        contours = find_contours(final)
        selected = select_contours(contours, cfg.contour_mode)
    out_mask = Path(args.out_mask)
    write_mask(out_mask, final)
    outputs = [out_mask]
    if args.contours:
        write_contours_csv(args.contours, contours)
        outputs.append(Path(args.contours))
    if args.crop:
        if not selected:
            raise FrameError("mask is empty: no contour to crop")
        write_image(args.crop, crop_to_contour(frame, selected[0], cfg.crop_pad))
        outputs.append(Path(args.crop))
    return inputs, outputs, cfg


def _run_detect(args, stage, cfg: PipelineConfig):
    with stage("load"):
        seq = load_frame_dir(args.frames, args.frame_rate, args.video_id)
    product, hand, classifier = build_adapters(cfg.adapters)
    with stage("detect"):
        detections = run_pipeline(seq, cfg, classifier, product, hand, jobs=_jobs(args))
    return detections


def cmd_detect(args, stage) -> tuple[list[Path], list[Path], PipelineConfig]:
    cfg = _load_cli_config(args)
    detections = _run_detect(args, stage, cfg)
    out = Path(args.out)
    sidecar = write_detections_csv(out, detections)
    return [Path(args.frames)], [out, sidecar], cfg


def cmd_dedupe(args, stage) -> tuple[list[Path], list[Path], PipelineConfig]:
    extra = ({"detect": {"dedupe_window_s": args.window_s}}
             if args.window_s is not None else None)
    cfg = _load_cli_config(args, extra)
    detections = read_detections_csv(args.detections)
    detections.sort(key=lambda d: (d.time_s, d.video_id, d.class_id))
    with stage("dedupe"):
        kept = dedupe(detections, cfg.dedupe_window_s)
    out = Path(args.out)
    sidecar = write_detections_csv(out, kept)
    return [Path(args.detections)], [out, sidecar], cfg


def cmd_eval(args, stage) -> tuple[list[Path], list[Path], PipelineConfig | None]:
    detections = read_detections_csv(args.detections)
    gt = read_gt_csv(args.gt)
    with stage("eval"):
        report = evaluate(detections, gt,
                          num_classes=args.fixed_classes)
    print(format_report(report))
    outputs = []
    if args.out:
        write_report_csv(args.out, report)
        outputs.append(Path(args.out))
    return [Path(args.detections), Path(args.gt)], outputs, None


def cmd_prep_bg(args, stage) -> tuple[list[Path], list[Path], PipelineConfig | None]:
    with stage("prep-bg"):
        manifest = replace_backgrounds(args.images, args.masks, args.out_dir,
                                       seed=args.seed)
    return [Path(args.images), Path(args.masks)], [manifest], None


def cmd_synthgen(args, stage) -> tuple[list[Path], list[Path], PipelineConfig | None]:
    if args.scenario:
        spec = load_scenario(args.scenario)
        inputs = [Path(args.scenario)]
    elif args.preset == "duplicate-prone":
        spec = duplicate_prone_scenario(seed=args.seed)
        inputs = []
    else:
        spec = default_scenario(seed=args.seed)
        inputs = []
    with stage("synthgen"):
        result = generate(spec, args.out_dir, image_format=args.format)
    return inputs, [result.gt_path, result.classifier_manifest_path,
                    result.scenario_path], None


def cmd_pipeline(args, stage) -> tuple[list[Path], list[Path], PipelineConfig]:
    cfg = _load_cli_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    detections = _run_detect(args, stage, cfg)
    raw_path = out_dir / "detections_raw.csv"
    raw_sidecar = write_detections_csv(raw_path, detections)
    outputs = [raw_path, raw_sidecar]

    if cfg.dedupe_enabled:
        ordered = sorted(detections, key=lambda d: (d.time_s, d.video_id, d.class_id))
        with stage("dedupe"):
            detections = dedupe(ordered, cfg.dedupe_window_s)
    final_path = out_dir / "detections.csv"
    final_sidecar = write_detections_csv(final_path, detections)
    outputs += [final_path, final_sidecar]

    inputs = [Path(args.frames)]
    if args.gt:
        inputs.append(Path(args.gt))
        with stage("eval"):
            report = evaluate(detections, read_gt_csv(args.gt),
                              num_classes=args.fixed_classes)
        report_path = out_dir / "report.csv"
        write_report_csv(report_path, report)
        outputs.append(report_path)
        print(format_report(report))
    return inputs, outputs, cfg


def cmd_config_dump(args, stage) -> tuple[list[Path], list[Path], PipelineConfig]:
    cfg = _load_cli_config(args)
    print(format_config(cfg), end="")
    return [], [], cfg


# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("--config", help="config file (TOML-style sections)")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")
    p.add_argument("--jobs", type=int, default=0,
                   help="worker threads for per-frame stages (default 0 = all cores)")
    p.add_argument("--manifest", help="run-manifest path (default: alongside output)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="framesift",
        description="Frame filtration, masking, detection, and evaluation for checkout videos.")
    parser.add_argument("--version", action="version", version=f"framesift {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("signals", help="per-frame signal series CSV")
    p.add_argument("--frames", required=True)
    p.add_argument("--frame-rate", type=float, required=True)
    p.add_argument("--video-id", default=None)
    p.add_argument("--metric", choices=["binarization_ratio", "colorfulness", "sharpness"])
    p.add_argument("--out", required=True)
    p.add_argument("--plot", help="optional SVG chart path")
    p.add_argument("--dump-binarized", metavar="DIR",
                   help="also write per-frame inverse-binarization masks as PNGs")
    _add_common(p)
    p.set_defaults(fn=cmd_signals, primary=lambda a: Path(a.out))

    p = sub.add_parser("smooth", help="smooth a series CSV")
    p.add_argument("--series", required=True)
    p.add_argument("--method", choices=["savgol", "fft"])
    p.add_argument("--window", type=int)
    p.add_argument("--polyorder", type=int)
    p.add_argument("--keep-fraction", type=float)
    p.add_argument("--out")
    p.add_argument("--plot", help="optional SVG chart path")
    _add_common(p)
    p.set_defaults(fn=cmd_smooth,
                   primary=lambda a: Path(a.out) if a.out else Path(a.series).with_suffix(".smoothed.csv"))

    p = sub.add_parser("peaks", help="local maxima of a series CSV")
    p.add_argument("--series", required=True)
    p.add_argument("--min-prominence", type=float)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_peaks, primary=lambda a: Path(a.out))

    p = sub.add_parser("select", help="refine peaks into gated candidate frames")
    p.add_argument("--frames", required=True)
    p.add_argument("--frame-rate", type=float, required=True)
    p.add_argument("--video-id", default=None)
    p.add_argument("--peaks", required=True, help="peaks.csv from the peaks subcommand")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_select, primary=lambda a: Path(a.out))

    p = sub.add_parser("mask", help="entropy-mask one image and dump contours")
    p.add_argument("--image", required=True)
    p.add_argument("--product-mask", help="optional product mask PNG")
    p.add_argument("--hand-mask", help="optional hand mask PNG")
    p.add_argument("--out-mask", required=True)
    p.add_argument("--contours", help="contour CSV path")
    p.add_argument("--crop", help="write the selected contour crop here")
    _add_common(p)
    p.set_defaults(fn=cmd_mask, primary=lambda a: Path(a.out_mask))

    p = sub.add_parser("detect", help="run the full per-video pipeline (no dedupe)")
    p.add_argument("--frames", required=True)
    p.add_argument("--frame-rate", type=float, required=True)
    p.add_argument("--video-id", default=None)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_detect, primary=lambda a: Path(a.out))

    p = sub.add_parser("dedupe", help="suppress near-duplicate detections")
    p.add_argument("--detections", required=True, help="full-precision detections CSV")
    p.add_argument("--window-s", type=float)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_dedupe, primary=lambda a: Path(a.out))

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("--detections", required=True, help="full-precision detections CSV")
    p.add_argument("--gt", required=True)
    p.add_argument("--fixed-classes", type=int, default=None,
                   help="average over a fixed label space (e.g. 116) instead of present classes")
    p.add_argument("--out", help="report CSV path")
    _add_common(p, config=False)
    p.set_defaults(fn=cmd_eval,
                   primary=lambda a: Path(a.out) if a.out else Path(a.detections))

    p = sub.add_parser("prep-bg", help="replace image backgrounds with gradient scenes")
    p.add_argument("--images", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p, config=False)
    p.set_defaults(fn=cmd_prep_bg, primary=lambda a: Path(a.out_dir) / "prep_manifest.csv")

    p = sub.add_parser("synthgen", help="generate a synthetic labeled scenario")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--scenario", help="scenario file to render")
    p.add_argument("--preset", choices=["default", "duplicate-prone"], default="default")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["png", "ppm"], default="png")
    _add_common(p, config=False)
    p.set_defaults(fn=cmd_synthgen, primary=lambda a: Path(a.out_dir) / "gt.csv")

    p = sub.add_parser("pipeline", help="detect, dedupe, and evaluate in one run")
    p.add_argument("--frames", required=True)
    p.add_argument("--frame-rate", type=float, required=True)
    p.add_argument("--video-id", default=None)
    p.add_argument("--gt", help="ground-truth CSV; enables the eval stage")
    p.add_argument("--fixed-classes", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_pipeline, primary=lambda a: Path(a.out_dir) / "detections.csv")

    p = sub.add_parser("config-dump", help="print the effective configuration")
    _add_common(p)
    p.set_defaults(fn=cmd_config_dump, primary=lambda a: None)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    stage = _Stage()
    try:
        inputs, outputs, cfg = args.fn(args, stage)
    except ConfigError as exc:
        print(f"framesift {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except (FrameError, AdapterError, ValueError, OSError) as exc:
        print(f"framesift {args.command}: error: {exc}", file=sys.stderr)
        return 1
    primary = args.primary(args)
    if primary is not None:
        manifest_path = _manifest_path(args, primary)
        manifest_path.parent.mkdir(parents=True, exist_ok=True)
        write_run_manifest(manifest_path, argv, cfg, inputs, outputs, stage.timings)
    return 0


if __name__ == "__main__":
    sys.exit(main())
