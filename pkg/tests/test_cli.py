"""End-to-end command-line coverage with CliRunner.

One module-scoped dataset feeds the whole pipeline: generate, split,
pseudo-label, train a tiny grid, evaluate, predict. Error paths assert the
one-line `error: ...` contract and a nonzero exit code.
"""

import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from phaseseg.cli import main
from phaseseg.manifest import load_manifest
from phaseseg.rasters import read_label_map, write_label_map
from phaseseg.splits import load_split_plan
from phaseseg.train.reports import parse_table


def run_ok(args):
    runner = CliRunner()
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


def run_err(args):
    runner = CliRunner()
    result = runner.invoke(main, args)
    assert result.exit_code != 0
    return result


def error_line(result):
    lines = [l for l in result.output.splitlines() if l.startswith("error: ")]
    assert len(lines) == 1, result.output
    return lines[0]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Generated dataset plus split plan, shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    run_ok([
        "synthgen", "--out", str(data), "--videos", "4", "--frames", "240",
        "--classes", "2", "--phases", "4", "--resolution", "48x48", "--seed", "7",
        "--extract-stride", "30", "--label-every", "2", "--phase-accuracy", "0.8",
    ])
    run_ok([
        "split", "--manifest", str(data / "manifest.json"), "--folds", "2",
        "--val-fraction", "0.34", "--seed", "3", "--out", str(data / "plan.json"),
    ])
    return data


class TestSynthgen:
    def test_writes_dataset_and_tracks(self, workspace):
        manifest = load_manifest(workspace / "manifest.json")
        assert len(manifest.videos) == 4
        assert len(manifest.frames) == 32
        assert (workspace / "world.json").exists()
        tracks = workspace / "predicted_phases"
        assert sorted(p.stem for p in tracks.glob("*.json")) == sorted(manifest.videos)

    def test_json_output(self, tmp_path):
        result = run_ok([
            "synthgen", "--out", str(tmp_path / "d"), "--videos", "2",
            "--frames", "60", "--resolution", "32x32", "--json",
        ])
        payload = json.loads(result.output)
        assert payload["videos"] == 2
        assert payload["frames"] == 4
        assert payload["predicted_phase_tracks"] is None

    def test_frames_accepts_a_comma_list(self, tmp_path):
        run_ok([
            "synthgen", "--out", str(tmp_path / "d"), "--videos", "2",
            "--frames", "60,90", "--resolution", "32x32",
        ])
        manifest = load_manifest(tmp_path / "d" / "manifest.json")
        per_video = [len(manifest.frames_of(v)) for v in manifest.videos]
        assert per_video == [2, 3]

    def test_bad_resolution_is_one_error_line(self, tmp_path):
        result = run_err([
            "synthgen", "--out", str(tmp_path / "d"), "--resolution", "64by64",
        ])
        assert "64by64" in error_line(result)

    def test_unknown_unlabeled_video_rejected(self, tmp_path):
        result = run_err([
            "synthgen", "--out", str(tmp_path / "d"), "--videos", "2",
            "--frames", "60", "--unlabeled-videos", "nope",
        ])
        assert "nope" in error_line(result)


class TestSplit:
    def test_plan_round_trips(self, workspace):
        plan = load_split_plan(workspace / "plan.json")
        assert len(plan.folds) == 2

    def test_too_many_folds_fails_cleanly(self, workspace):
        result = run_err([
            "split", "--manifest", str(workspace / "manifest.json"),
            "--folds", "9", "--out", "/tmp/never.json",
        ])
        error_line(result)

    def test_missing_manifest(self):
        result = run_err([
            "split", "--manifest", "/no/such/manifest.json", "--out", "/tmp/x.json",
        ])
        error_line(result)


class TestCooccur:
    def test_table_lists_phases_and_tools(self, workspace):
        result = run_ok(["cooccur", "--manifest", str(workspace / "manifest.json")])
        assert "phase_0" in result.output
        assert "tool_2" in result.output

    def test_json_matrix_shape(self, workspace):
        result = run_ok([
            "cooccur", "--manifest", str(workspace / "manifest.json"), "--json",
        ])
        payload = json.loads(result.output)
        assert len(payload["matrix"]) == 4
        assert len(payload["matrix"][0]) == 2

    def test_csv_export(self, workspace, tmp_path):
        out = tmp_path / "co.csv"
        run_ok([
            "cooccur", "--manifest", str(workspace / "manifest.json"),
            "--normalize", "by_phase", "--out", str(out),
        ])
        lines = out.read_text().splitlines()
        assert lines[0] == "phase,tool_1,tool_2"
        assert len(lines) == 5


class TestDenoise:
    def test_cleans_and_reports_counts(self, tmp_path):
        mask = np.zeros((64, 64), dtype=np.uint8)
        mask[10:30, 10:30] = 1
        mask[50, 50] = 1  # speck below any area threshold
        src = tmp_path / "in.png"
        write_label_map(src, mask)
        out = tmp_path / "out.png"
        result = run_ok([
            "denoise", "--input", str(src), "--output", str(out),
            "--min-area", "4", "--radius", "1", "--json",
        ])
        payload = json.loads(result.output)
        assert payload["pixels_after"] < payload["pixels_before"]
        cleaned = read_label_map(out)
        assert cleaned[51, 51] == 0
        assert cleaned[20, 20] == 1

    def test_missing_input_is_one_error_line(self, tmp_path):
        result = run_err([
            "denoise", "--input", str(tmp_path / "nope.png"),
            "--output", str(tmp_path / "out.png"),
        ])
        error_line(result)


class TestPseudo:
    def test_oracle_backend_writes_manifest_and_ledger(self, workspace):
        result = run_ok([
            "pseudo", "--manifest", str(workspace / "manifest.json"),
            "--segmenter", "oracle", "--fidelity", "perfect", "--json",
        ])
        payload = json.loads(result.output)
        assert payload["pseudo_frames"] > 0
        assert Path(payload["ledger"]).exists()
        augmented = load_manifest(payload["manifest"])
        pseudo = augmented.labeled_frames(provenances=("pseudo",))
        assert len(pseudo) == payload["pseudo_frames"]

    def test_oracle_needs_a_world_file(self, tmp_path, workspace):
        bare = tmp_path / "bare"
        bare.mkdir()
        for name in ("manifest.json", "frames.jsonl"):
            (bare / name).write_bytes((workspace / name).read_bytes())
        result = run_err(["pseudo", "--manifest", str(bare / "manifest.json")])
        assert "world" in error_line(result)

    def test_remote_needs_a_url(self, workspace):
        result = run_err([
            "pseudo", "--manifest", str(workspace / "manifest.json"),
            "--segmenter", "remote",
        ])
        assert "--url" in error_line(result)


@pytest.fixture(scope="module")
def trained(workspace, tmp_path_factory):
    """A tiny two-variant grid over the shared dataset."""
    runs = tmp_path_factory.mktemp("runs")
    result = run_ok([
        "train", "--manifest", str(workspace / "manifest.json"),
        "--plan", str(workspace / "plan.json"), "--variants", "v0,v3",
        "--out", str(runs), "--phase-tracks", str(workspace / "predicted_phases"),
        "--max-epochs", "2", "--base-width", "4", "--num-stages", "2",
        "--batch-size", "8", "--seed", "5", "--json",
    ])
    return runs, json.loads(result.output)


class TestTrain:
    def test_reports_and_checkpoints_exist(self, trained):
        runs, payload = trained
        assert payload["cells"] == 4
        assert payload["failures"] == {}
        for variant in ("v0", "v3"):
            for fold in (0, 1):
                assert (runs / variant / f"fold{fold}" / "best.ckpt").exists()
        report = parse_table((runs / "report_table.txt").read_text())
        assert [s.variant for s in report.summaries] == ["v0", "v3"]

    def test_resume_skips_finished_cells(self, workspace, trained):
        runs, _ = trained
        result = run_ok([
            "train", "--manifest", str(workspace / "manifest.json"),
            "--plan", str(workspace / "plan.json"), "--variants", "v0,v3",
            "--out", str(runs), "--phase-tracks", str(workspace / "predicted_phases"),
            "--max-epochs", "2", "--base-width", "4", "--num-stages", "2",
            "--batch-size", "8", "--seed", "5", "--resume", "--json",
        ])
        payload = json.loads(result.output)
        assert sorted(payload["skipped"]) == [
            "v0/fold0", "v0/fold1", "v3/fold0", "v3/fold1",
        ]

    def test_unknown_variant(self, workspace, tmp_path):
        result = run_err([
            "train", "--manifest", str(workspace / "manifest.json"),
            "--plan", str(workspace / "plan.json"), "--variants", "v9",
            "--out", str(tmp_path / "r"),
        ])
        assert "v9" in error_line(result)

    def test_unknown_config_key_rejected(self, workspace, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"max_epochs": 1, "turbo": True}))
        result = run_err([
            "train", "--manifest", str(workspace / "manifest.json"),
            "--plan", str(workspace / "plan.json"), "--variants", "v0",
            "--out", str(tmp_path / "r"), "--config", str(cfg),
        ])
        assert "turbo" in error_line(result)

    def test_variant_identity_cannot_be_overridden(self, workspace, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"conditioning": "gated"}))
        result = run_err([
            "train", "--manifest", str(workspace / "manifest.json"),
            "--plan", str(workspace / "plan.json"), "--variants", "v0",
            "--out", str(tmp_path / "r"), "--config", str(cfg),
        ])
        assert "conditioning" in error_line(result)

    def test_semi_supervised_without_pseudo_manifest(self, workspace, tmp_path):
        result = run_err([
            "train", "--manifest", str(workspace / "manifest.json"),
            "--plan", str(workspace / "plan.json"), "--variants", "v1",
            "--out", str(tmp_path / "r"), "--max-epochs", "1",
        ])
        assert "pseudo" in error_line(result)

    def test_stale_lock_blocks_the_run(self, workspace, tmp_path):
        runs = tmp_path / "locked"
        runs.mkdir()
        (runs / ".lock").write_text("pid=1\n")
        result = run_err([
            "train", "--manifest", str(workspace / "manifest.json"),
            "--plan", str(workspace / "plan.json"), "--variants", "v0",
            "--out", str(runs), "--max-epochs", "1",
        ])
        assert ".lock" in error_line(result)

    def test_lock_is_released_after_a_run(self, trained):
        runs, _ = trained
        assert not (runs / ".lock").exists()

    def test_runs_env_var_supplies_default_out(self, workspace, tmp_path, monkeypatch):
        runs = tmp_path / "env_runs"
        monkeypatch.setenv("PHASESEG_RUNS", str(runs))
        run_ok([
            "train", "--manifest", str(workspace / "manifest.json"),
            "--plan", str(workspace / "plan.json"), "--variants", "v0",
            "--max-epochs", "1", "--base-width", "4", "--num-stages", "2",
            "--batch-size", "8", "--json",
        ])
        assert (runs / "report_table.txt").exists()


class TestEvalPredict:
    def test_eval_on_a_fold(self, workspace, trained):
        runs, _ = trained
        result = run_ok([
            "eval", "--checkpoint", str(runs / "v0" / "fold0" / "best.ckpt"),
            "--manifest", str(workspace / "manifest.json"),
            "--plan", str(workspace / "plan.json"), "--fold", "0", "--json",
        ])
        payload = json.loads(result.output)
        assert payload["metrics"]["num_frames"] > 0
        assert 0.0 <= payload["metrics"]["mean_dsc"] <= 1.0

    def test_eval_explicit_videos_match_fold_selection(self, workspace, trained):
        runs, _ = trained
        plan = load_split_plan(workspace / "plan.json")
        videos = ",".join(plan.folds[0].test_videos)
        by_fold = run_ok([
            "eval", "--checkpoint", str(runs / "v0" / "fold0" / "best.ckpt"),
            "--manifest", str(workspace / "manifest.json"),
            "--plan", str(workspace / "plan.json"), "--fold", "0", "--json",
        ])
        by_name = run_ok([
            "eval", "--checkpoint", str(runs / "v0" / "fold0" / "best.ckpt"),
            "--manifest", str(workspace / "manifest.json"),
            "--videos", videos, "--json",
        ])
        assert json.loads(by_fold.output) == json.loads(by_name.output)

    def test_eval_without_selection_fails(self, workspace, trained):
        runs, _ = trained
        result = run_err([
            "eval", "--checkpoint", str(runs / "v0" / "fold0" / "best.ckpt"),
            "--manifest", str(workspace / "manifest.json"),
        ])
        assert "--videos" in error_line(result)

    def test_predict_writes_one_map_per_extracted_frame(self, workspace, trained, tmp_path):
        runs, _ = trained
        manifest = load_manifest(workspace / "manifest.json")
        video = manifest.videos[0]
        out = tmp_path / "preds"
        result = run_ok([
            "predict", "--checkpoint", str(runs / "v0" / "fold0" / "best.ckpt"),
            "--manifest", str(workspace / "manifest.json"),
            "--video", video, "--out", str(out), "--json",
        ])
        payload = json.loads(result.output)
        assert len(payload["frames"]) == len(manifest.frames_of(video))
        first = read_label_map(out / payload["frames"][0])
        assert first.shape == (48, 48)

    def test_predict_unknown_video(self, workspace, trained, tmp_path):
        runs, _ = trained
        result = run_err([
            "predict", "--checkpoint", str(runs / "v0" / "fold0" / "best.ckpt"),
            "--manifest", str(workspace / "manifest.json"),
            "--video", "ghost", "--out", str(tmp_path / "p"),
        ])
        assert "ghost" in error_line(result)
