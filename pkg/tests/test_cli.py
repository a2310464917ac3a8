from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from framesift.cli import main
from framesift.config import PipelineConfig, load_config
from framesift.detect import read_detections_csv
from framesift.ingest import FramePixels, load_frame_dir, write_image
from framesift.masking import write_mask
from framesift.signals import BinaryMask, compute_series, write_series_csv
from framesift.synthgen import ObjectEvent, ScenarioSpec, generate

PRESETS = Path(__file__).resolve().parent.parent / "presets"


@pytest.fixture(scope="module")
def scenario_dir(tmp_path_factory):
    """A small rendered scenario shared by the CLI tests."""
    out = tmp_path_factory.mktemp("scenario")
    spec = ScenarioSpec(
        width=160, height=90, frame_rate=10.0, duration_s=8.0, blur_px=3, seed=3,
        events=(ObjectEvent(class_id=9, enter_t=2.0, exit_t=6.0, color=(200, 40, 40)),),
    )
    result = generate(spec, out)
    return {"spec": spec, "result": result, "dir": out}


def run_cli(*argv) -> int:
    return main([str(a) for a in argv])


class TestSignalsCommand:
    def test_matches_library_byte_for_byte(self, scenario_dir, tmp_path):
        frames = scenario_dir["result"].frames_dir
        out = tmp_path / "series.csv"
        code = run_cli("signals", "--frames", frames, "--frame-rate", "10",
                       "--video-id", "synth", "--metric", "colorfulness",
                       "--out", out)
        assert code == 0
        seq = load_frame_dir(frames, 10.0, "synth")
        series = compute_series(seq, "colorfulness", PipelineConfig().preprocess())
        lib_out = tmp_path / "lib.csv"
        write_series_csv(lib_out, series)
        assert out.read_bytes() == lib_out.read_bytes()

    def test_emits_run_manifest(self, scenario_dir, tmp_path):
        frames = scenario_dir["result"].frames_dir
        out = tmp_path / "series.csv"
        run_cli("signals", "--frames", frames, "--frame-rate", "10", "--out", out)
        manifest = json.loads((tmp_path / "series.csv.manifest.json").read_text())
        assert manifest["tool"] == "framesift"
        assert any(o["path"].endswith("series.csv") for o in manifest["outputs"])
        assert all(len(o["sha256"]) == 64 for o in manifest["outputs"])
        assert "signals" in manifest["timings_s"]

    def test_plot_svg(self, scenario_dir, tmp_path):
        frames = scenario_dir["result"].frames_dir
        out = tmp_path / "series.csv"
        svg = tmp_path / "series.svg"
        run_cli("signals", "--frames", frames, "--frame-rate", "10",
                "--out", out, "--plot", svg)
        assert svg.read_text().startswith("<svg")

    def test_dump_binarized_masks(self, scenario_dir, tmp_path):
        frames = scenario_dir["result"].frames_dir
        dump = tmp_path / "bin"
        code = run_cli("signals", "--frames", frames, "--frame-rate", "10",
                       "--metric", "binarization_ratio",
                       "--out", tmp_path / "series.csv", "--dump-binarized", dump)
        assert code == 0
        masks = sorted(dump.iterdir())
        assert len(masks) == len(list(frames.iterdir()))
        from framesift.masking import read_mask
        assert read_mask(masks[0]).bits.shape == (224, 224)


class TestSmoothPeaksSelect:
    def test_smooth_default_suffix_and_peaks(self, scenario_dir, tmp_path):
        frames = scenario_dir["result"].frames_dir
        series = tmp_path / "series.csv"
        run_cli("signals", "--frames", frames, "--frame-rate", "10", "--out", series)
        code = run_cli("smooth", "--series", series, "--method", "fft",
                       "--keep-fraction", "0.2")
        assert code == 0
        smoothed = tmp_path / "series.smoothed.csv"
        assert smoothed.is_file()
        peaks = tmp_path / "peaks.csv"
        assert run_cli("peaks", "--series", smoothed, "--out", peaks) == 0
        assert peaks.read_text().splitlines()[0] == "frame_index,value,prominence"

    def test_select_writes_candidates(self, scenario_dir, tmp_path):
        frames = scenario_dir["result"].frames_dir
        series = tmp_path / "series.csv"
        run_cli("signals", "--frames", frames, "--frame-rate", "10", "--out", series)
        run_cli("smooth", "--series", series, "--method", "fft", "--keep-fraction", "0.2")
        peaks = tmp_path / "peaks.csv"
        run_cli("peaks", "--series", tmp_path / "series.smoothed.csv", "--out", peaks)
        candidates = tmp_path / "candidates.csv"
        code = run_cli("select", "--frames", frames, "--frame-rate", "10",
                       "--video-id", "synth", "--peaks", peaks,
                       "--set", "selection.sharpness_threshold=0",
                       "--out", candidates)
        assert code == 0
        lines = candidates.read_text().splitlines()
        assert lines[0].startswith("frame_index,time_s,c_ratio")
        assert len(lines) > 1


class TestMaskCommand:
    def test_mask_contours_crop(self, tmp_path, rng):
        arr = np.full((40, 60, 3), 120, dtype=np.uint8)
        arr[10:30, 20:44] = rng.integers(0, 256, size=(20, 24, 3), dtype=np.uint8)
        img = tmp_path / "frame.png"
        write_image(img, FramePixels(arr))
        out_mask = tmp_path / "mask.png"
        contours = tmp_path / "contours.csv"
        crop = tmp_path / "crop.png"
        code = run_cli("mask", "--image", img, "--out-mask", out_mask,
                       "--contours", contours, "--crop", crop)
        assert code == 0
        assert out_mask.is_file() and crop.is_file()
        assert contours.read_text().splitlines()[0] == "region_id,area,x0,y0,x1,y1"

    def test_hand_mask_respected(self, tmp_path, rng):
        arr = np.full((40, 60, 3), 120, dtype=np.uint8)
        arr[10:30, 20:44] = rng.integers(0, 256, size=(20, 24, 3), dtype=np.uint8)
        img = tmp_path / "frame.png"
        write_image(img, FramePixels(arr))
        hand = tmp_path / "hand.png"
        write_mask(hand, BinaryMask(np.ones((40, 60), dtype=bool)))
        out_mask = tmp_path / "mask.png"
        code = run_cli("mask", "--image", img, "--hand-mask", hand,
                       "--out-mask", out_mask)
        assert code == 0
        from framesift.masking import read_mask
        assert read_mask(out_mask).true_count == 0


class TestDetectDedupeEvalPipeline:
    def _detect_args(self, scenario_dir, out, extra=()):
        result = scenario_dir["result"]
        return ["detect", "--frames", result.frames_dir, "--frame-rate", "10",
                "--video-id", "synth",
                "--set", "selection.sharpness_threshold=0",
                "--set", f"adapters.classifier_kind=manifest",
                "--set", f"adapters.classifier_manifest={result.classifier_manifest_path}",
                "--out", out, *extra]

    def test_detect_dedupe_eval_chain(self, scenario_dir, tmp_path, capsys):
        detections = tmp_path / "detections.csv"
        assert run_cli(*self._detect_args(scenario_dir, detections)) == 0
        full = detections.with_suffix(".full.csv")
        assert full.is_file()
        assert read_detections_csv(full)

        deduped = tmp_path / "deduped.csv"
        assert run_cli("dedupe", "--detections", full, "--window-s", "2.0",
                       "--out", deduped) == 0

        gt = scenario_dir["result"].gt_path
        assert run_cli("eval", "--detections", deduped.with_suffix(".full.csv"),
                       "--gt", gt, "--out", tmp_path / "report.csv") == 0
        out = capsys.readouterr().out
        assert "macro_f1 = 1.0000" in out

    def test_pipeline_matches_stagewise_chain(self, scenario_dir, tmp_path):
        detections = tmp_path / "detections.csv"
        run_cli(*self._detect_args(scenario_dir, detections))
        deduped = tmp_path / "deduped.csv"
        run_cli("dedupe", "--detections", detections.with_suffix(".full.csv"),
                "--window-s", "2.0", "--out", deduped)

        result = scenario_dir["result"]
        out_dir = tmp_path / "run"
        code = run_cli("pipeline", "--frames", result.frames_dir, "--frame-rate", "10",
                       "--video-id", "synth", "--gt", result.gt_path,
                       "--set", "selection.sharpness_threshold=0",
                       "--set", "adapters.classifier_kind=manifest",
                       "--set", f"adapters.classifier_manifest={result.classifier_manifest_path}",
                       "--set", "detect.dedupe_window_s=2.0",
                       "--out-dir", out_dir)
        assert code == 0
        assert (out_dir / "detections.csv").read_bytes() == deduped.read_bytes()
        assert (out_dir / "report.csv").is_file()

    def test_rerun_reproduces_output_hashes(self, scenario_dir, tmp_path):
        result = scenario_dir["result"]
        hashes = []
        for name in ("a", "b"):
            out_dir = tmp_path / name
            run_cli("pipeline", "--frames", result.frames_dir, "--frame-rate", "10",
                    "--video-id", "synth",
                    "--set", "selection.sharpness_threshold=0",
                    "--set", "adapters.classifier_kind=manifest",
                    "--set", f"adapters.classifier_manifest={result.classifier_manifest_path}",
                    "--out-dir", out_dir)
            manifest = json.loads((out_dir / "detections.csv.manifest.json").read_text())
            hashes.append(sorted(o["sha256"] for o in manifest["outputs"]))
        assert hashes[0] == hashes[1]


class TestSynthgenPrepBg:
    def test_synthgen_writes_outputs(self, tmp_path, scenario_dir):
        # render the shared small scenario via the CLI path
        out_dir = tmp_path / "scene"
        scenario = scenario_dir["result"].scenario_path
        assert run_cli("synthgen", "--out-dir", out_dir, "--scenario", scenario) == 0
        assert (out_dir / "gt.csv").is_file()
        assert (out_dir / "classifier_manifest.csv").is_file()
        assert (out_dir / "scenario.toml").is_file()

    def test_synthgen_from_scenario_file(self, tmp_path, scenario_dir):
        scenario = scenario_dir["result"].scenario_path
        out_dir = tmp_path / "again"
        assert run_cli("synthgen", "--out-dir", out_dir, "--scenario", scenario) == 0
        first = sorted(scenario_dir["result"].frames_dir.iterdir())[0]
        second = out_dir / "frames" / first.name
        assert first.read_bytes() == second.read_bytes()

    def test_prep_bg_subcommand(self, tmp_path, rng):
        images = tmp_path / "images"
        masks = tmp_path / "masks"
        images.mkdir(), masks.mkdir()
        arr = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        write_image(images / "x.png", FramePixels(arr))
        bits = np.zeros((8, 8), dtype=bool)
        bits[2:6, 2:6] = True
        write_mask(masks / "x.png", BinaryMask(bits))
        out = tmp_path / "out"
        assert run_cli("prep-bg", "--images", images, "--masks", masks,
                       "--out-dir", out, "--seed", "4") == 0
        assert (out / "x.png").is_file()
        assert (out / "prep_manifest.csv").is_file()


class TestErrorsAndMeta:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli("--version")
        assert exc.value.code == 0
        assert capsys.readouterr().out.startswith("framesift ")

    def test_unknown_flag_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("eval", "--bogus")
        assert exc.value.code == 2

    def test_bad_config_value_exits_2(self, scenario_dir, tmp_path):
        frames = scenario_dir["result"].frames_dir
        code = run_cli("signals", "--frames", frames, "--frame-rate", "10",
                       "--set", "ingest.crop_fraction=2.0",
                       "--out", tmp_path / "s.csv")
        assert code == 2

    def test_missing_frames_dir_exits_1(self, tmp_path, capsys):
        code = run_cli("signals", "--frames", tmp_path / "absent",
                       "--frame-rate", "10", "--out", tmp_path / "s.csv")
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_env_override_applies(self, scenario_dir, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("FRAMESIFT_SELECTION_SHARPNESS_THRESHOLD", "42.5")
        assert run_cli("config-dump") == 0
        assert "sharpness_threshold = 42.5" in capsys.readouterr().out

    def test_config_dump_roundtrips(self, tmp_path, capsys):
        run_cli("config-dump")
        text = capsys.readouterr().out
        path = tmp_path / "dumped.toml"
        path.write_text(text)
        assert load_config(path) == PipelineConfig()


class TestPresets:
    def test_all_presets_load(self):
        for preset in sorted(PRESETS.glob("*.toml")):
            cfg = load_config(preset)
            assert isinstance(cfg, PipelineConfig)

    def test_ablation_ladder_rows_expressible(self):
        binarized = load_config(PRESETS / "ablation_binarized.toml")
        assert binarized.selection_metric == "binarization_ratio"
        assert binarized.smoothing.method == "savgol"
        assert not binarized.segmentation_enabled and not binarized.dedupe_enabled

        color = load_config(PRESETS / "ablation_color_cbt.toml")
        assert color.selection_metric == "colorfulness"
        assert not color.segmentation_enabled and not color.dedupe_enabled

        seg = load_config(PRESETS / "ablation_color_seg_max_cbt.toml")
        assert seg.segmentation_enabled and seg.contour_mode == "max"
        assert not seg.dedupe_enabled

        best = load_config(PRESETS / "ablation_color_seg_max_dedupe_cbt.toml")
        assert best.segmentation_enabled and best.dedupe_enabled
        assert best.contour_mode == "max" and best.dedupe_window_s == 1.0
        assert best.sharpness_threshold == 111.0

        rms = load_config(PRESETS / "ablation_color_seg_rms_dedupe_cbt.toml")
        assert rms.contour_mode == "rms" and rms.dedupe_enabled

        reseg = load_config(PRESETS / "ablation_color_seg_max_dedupe_reseg_cbt.toml")
        assert reseg.re_segment and reseg.contour_mode == "max"
