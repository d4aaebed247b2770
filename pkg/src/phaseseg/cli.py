"""Command-line interface.

Every command is a thin shell over the library: generate a synthetic
dataset, cut cross-validation splits, inspect phase/tool co-occurrence,
clean masks, run pseudo-labeling, train the variant grid, evaluate and
predict from checkpoints. Errors print one `error: ...` line on stderr and
exit nonzero; --json switches the success output to machine-readable JSON.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .cooccur import cooccurrence_matrix
from .manifest import (
    ManifestError,
    ManifestValidationError,
    load_manifest,
    load_phase_tracks,
    save_manifest,
    save_phase_tracks,
)
from .maskops import denoise_mask
from .metrics import PROTOCOL_PER_FRAME, PROTOCOL_POOLED, evaluate_label_maps
from .pseudo import (
    CachingSegmenter,
    OracleSegmenter,
    PseudoLabelParams,
    RemoteSegmenter,
    SegmenterError,
    run_pseudo_labeling,
)
from .rasters import read_label_map, write_label_map
from .splits import SplitError, generate_splits, load_split_plan, save_split_plan
from .synthworld import build_world, corrupt_phase_tracks, emit_dataset, load_world
from .taxonomy import TaxonomyError
from .train import (
    VARIANTS,
    TrainConfig,
    load_checkpoint,
    load_frame_tensors,
    phase_lookup_for,
    predict_label_maps,
    run_grid,
)

_EXPECTED_ERRORS = (
    ManifestError,
    ManifestValidationError,
    SplitError,
    TaxonomyError,
    SegmenterError,
    ValueError,
    KeyError,
    RuntimeError,
    OSError,
)

RUNS_ENV = "PHASESEG_RUNS"


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _guarded(fn):
    """Collapse expected failures into the one-line error contract."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SystemExit:
            raise
        except _EXPECTED_ERRORS as e:
            message = str(e) if not isinstance(e, KeyError) else e.args[0]
            _fail(f"{message}")

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _echo_json(payload: dict):
    click.echo(json.dumps(payload, sort_keys=True, indent=2))


def _parse_resolution(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        _fail(f"resolution must look like 64x64, got {text!r}")
    if w < 1 or h < 1:
        _fail(f"resolution must be positive, got {text!r}")
    return w, h


def _parse_frames(text: str):
    parts = [p for p in text.split(",") if p]
    values = [int(p) for p in parts]
    return values[0] if len(values) == 1 else values


@click.group()
@click.version_option(version=__version__)
def main():
    """Phase-conditioned surgical tool segmentation toolkit."""


# -- dataset generation --------------------------------------------------------


@main.command()
@click.option("--out", required=True, type=click.Path(path_type=Path), help="Dataset directory.")
@click.option("--videos", default=4, show_default=True, type=int)
@click.option("--frames", default="240", show_default=True,
              help="Native frames per video; one int or a comma list per video.")
@click.option("--classes", "n_classes", default=2, show_default=True, type=int)
@click.option("--phases", "n_phases", default=4, show_default=True, type=int)
@click.option("--resolution", default="64x64", show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--ambiguous-pair", is_flag=True,
              help="Classes 1 and 2 share one identically rendered actor.")
@click.option("--segment-frames", default=40, show_default=True, type=int)
@click.option("--noise", default=0.05, show_default=True, type=float)
@click.option("--pulse", default=0.0, show_default=True, type=float)
@click.option("--extract-stride", default=30, show_default=True, type=int)
@click.option("--label-every", default=1, show_default=True, type=int,
              help="Every k-th extracted frame gets a human label.")
@click.option("--unlabeled-videos", default="", help="Comma list of video ids with no labels.")
@click.option("--phase-accuracy", default=None, type=float,
              help="Also emit predicted phase tracks at this frame accuracy.")
@click.option("--json", "as_json", is_flag=True)
@_guarded
def synthgen(out, videos, frames, n_classes, n_phases, resolution, seed, ambiguous_pair,
             segment_frames, noise, pulse, extract_stride, label_every, unlabeled_videos,
             phase_accuracy, as_json):
    """Generate a synthetic dataset (images, labels, manifest, world.json)."""
    world = build_world(
        n_videos=videos,
        frames_per_video=_parse_frames(frames),
        n_classes=n_classes,
        n_phases=n_phases,
        resolution=_parse_resolution(resolution),
        seed=seed,
        ambiguous_pair=ambiguous_pair,
        segment_frames=segment_frames,
        noise_level=noise,
        pulse_amp=pulse,
    )
    skip = tuple(v for v in unlabeled_videos.split(",") if v)
    unknown = set(skip) - {v.video_id for v in world.videos}
    if unknown:
        _fail(f"unlabeled videos not in the world: {sorted(unknown)}")
    manifest = emit_dataset(
        world, out, extract_stride=extract_stride, label_every=label_every,
        unlabeled_videos=skip,
    )
    tracks_dir = None
    if phase_accuracy is not None:
        tracks = corrupt_phase_tracks(world, accuracy=phase_accuracy, seed=seed)
        tracks_dir = out / "predicted_phases"
        save_phase_tracks(tracks.values(), tracks_dir)
    payload = {
        "manifest": str(out / "manifest.json"),
        "world": str(out / "world.json"),
        "videos": len(world.videos),
        "frames": len(manifest.frames),
        "human_labeled": len(manifest.labeled_frames(provenances=("human",))),
        "predicted_phase_tracks": str(tracks_dir) if tracks_dir else None,
    }
    if as_json:
        _echo_json(payload)
    else:
        click.echo(
            f"wrote {payload['frames']} frames ({payload['human_labeled']} human-labeled) "
            f"from {payload['videos']} videos to {out}"
        )


# -- splits ---------------------------------------------------------------------


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(path_type=Path))
@click.option("--folds", default=5, show_default=True, type=int)
@click.option("--val-fraction", default=0.2, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--balance", default="videos", show_default=True,
              type=click.Choice(["videos", "frames"]))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--json", "as_json", is_flag=True)
@_guarded
def split(manifest_path, folds, val_fraction, seed, balance, out, as_json):
    """Cut a cross-validation split plan at video granularity."""
    manifest = load_manifest(manifest_path)
    plan = generate_splits(
        manifest, n_folds=folds, val_fraction=val_fraction, seed=seed, balance=balance
    )
    save_split_plan(plan, out)
    sizes = [len(f.test_videos) for f in plan.folds]
    if as_json:
        _echo_json({"plan": str(out), "folds": folds, "test_video_counts": sizes})
    else:
        click.echo(f"wrote {folds}-fold plan to {out} (test videos per fold: {sizes})")


# -- co-occurrence ----------------------------------------------------------------


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(path_type=Path))
@click.option("--normalize", default="none", show_default=True,
              type=click.Choice(["none", "by_phase"]))
@click.option("--out", default=None, type=click.Path(path_type=Path), help="Optional CSV file.")
@click.option("--json", "as_json", is_flag=True)
@_guarded
def cooccur(manifest_path, normalize, out, as_json):
    """Phase-by-tool co-occurrence counts over labeled frames."""
    manifest = load_manifest(manifest_path)
    matrix = cooccurrence_matrix(manifest, normalize=normalize)
    phases = [manifest.phase_taxonomy.name_of(p) for p in range(matrix.shape[0])]
    tools = [manifest.tool_taxonomy.name_of(c) for c in range(1, matrix.shape[1] + 1)]
    if out is not None:
        lines = ["phase," + ",".join(tools)]
        for name, row in zip(phases, matrix):
            lines.append(name + "," + ",".join(repr(float(v)) for v in row))
        Path(out).write_text("\n".join(lines) + "\n")
    if as_json:
        _echo_json({
            "normalize": normalize,
            "phases": phases,
            "tools": tools,
            "matrix": [[float(v) for v in row] for row in matrix],
        })
    else:
        width = max(len(p) for p in phases + ["phase"]) + 2
        click.echo("phase".ljust(width) + "  ".join(t.rjust(10) for t in tools))
        for name, row in zip(phases, matrix):
            click.echo(name.ljust(width) + "  ".join(f"{v:10.3f}" for v in row))


# -- mask cleanup -----------------------------------------------------------------


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(path_type=Path))
@click.option("--output", "output_path", required=True, type=click.Path(path_type=Path))
@click.option("--min-area", default=100, show_default=True, type=int)
@click.option("--min-fraction", default=0.10, show_default=True, type=float)
@click.option("--radius", default=1, show_default=True, type=int)
@click.option("--blur-kernel", default=25, show_default=True, type=int)
@click.option("--json", "as_json", is_flag=True)
@_guarded
def denoise(input_path, output_path, min_area, min_fraction, radius, blur_kernel, as_json):
    """Clean a binary mask PNG (morphology, small-component removal, smoothing)."""
    raw = read_label_map(input_path)
    mask = raw > 0
    cleaned = denoise_mask(
        mask, min_area=min_area, min_fraction=min_fraction, radius=radius,
        blur_kernel=blur_kernel,
    )
    scale = int(raw.max()) if raw.any() else 1
    write_label_map(output_path, cleaned.astype(np.uint8) * scale)
    payload = {
        "input": str(input_path),
        "output": str(output_path),
        "pixels_before": int(mask.sum()),
        "pixels_after": int(cleaned.sum()),
    }
    if as_json:
        _echo_json(payload)
    else:
        click.echo(
            f"{input_path} -> {output_path}: {payload['pixels_before']} -> "
            f"{payload['pixels_after']} foreground pixels"
        )


# -- pseudo-labeling ---------------------------------------------------------------


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(path_type=Path))
@click.option("--segmenter", "backend", default="oracle", show_default=True,
              type=click.Choice(["oracle", "remote"]))
@click.option("--world", "world_path", default=None, type=click.Path(path_type=Path),
              help="World file for the oracle backend; defaults to <manifest dir>/world.json.")
@click.option("--fidelity", default="perfect", show_default=True,
              type=click.Choice(["perfect", "dilated", "jittered"]))
@click.option("--dilation-radius", default=2, show_default=True, type=int)
@click.option("--url", default=None, help="Base URL of a remote segmenter service.")
@click.option("--stride", default=30, show_default=True, type=int)
@click.option("--horizon", default=90, show_default=True, type=int)
@click.option("--min-source-iou", default=0.5, show_default=True, type=float)
@click.option("--max-rounds", default=3, show_default=True, type=int)
@click.option("--seed-mode", default="points", show_default=True,
              type=click.Choice(["points", "mask"]))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--subdir", default="pseudo", show_default=True)
@click.option("--out", "out_manifest", default=None, type=click.Path(path_type=Path),
              help="Where to write the augmented manifest "
                   "(default: <manifest dir>/manifest_pseudo.json).")
@click.option("--json", "as_json", is_flag=True)
@_guarded
def pseudo(manifest_path, backend, world_path, fidelity, dilation_radius, url, stride,
           horizon, min_source_iou, max_rounds, seed_mode, seed, subdir, out_manifest,
           as_json):
    """Propagate human labels through videos via a promptable segmenter."""
    manifest = load_manifest(manifest_path)
    if backend == "oracle":
        world_path = world_path or manifest_path.parent / "world.json"
        if not Path(world_path).exists():
            _fail(f"oracle backend needs a world file; {world_path} does not exist")
        segmenter = OracleSegmenter(
            load_world(world_path), fidelity=fidelity, dilation_radius=dilation_radius,
            seed=seed,
        )
    else:
        if not url:
            _fail("remote backend needs --url")
        segmenter = RemoteSegmenter(url)
    params = PseudoLabelParams(
        stride=stride, horizon=horizon, min_source_iou=min_source_iou,
        max_rounds=max_rounds, seed_mode=seed_mode, seed=seed,
    )
    result = run_pseudo_labeling(manifest, CachingSegmenter(segmenter), params, subdir=subdir)
    out_manifest = out_manifest or manifest_path.parent / "manifest_pseudo.json"
    save_manifest(result.manifest, out_manifest)
    reasons: dict[str, int] = {}
    for excl in result.exclusions:
        reasons[excl.reason] = reasons.get(excl.reason, 0) + 1
    payload = {
        "manifest": str(out_manifest),
        "ledger": str(result.ledger_path),
        "kept_masks": len(result.records),
        "pseudo_frames": len(result.manifest.labeled_frames(provenances=("pseudo",))),
        "exclusions": reasons,
    }
    if as_json:
        _echo_json(payload)
    else:
        click.echo(
            f"kept {payload['kept_masks']} masks across {payload['pseudo_frames']} frames; "
            f"exclusions: {reasons or 'none'}; wrote {out_manifest}"
        )


# -- training ---------------------------------------------------------------------


_IDENTITY_FIELDS = {"conditioning", "phase_source", "semi_supervised"}


def _load_overrides(config_path: Path | None) -> dict:
    if config_path is None:
        return {}
    try:
        payload = json.loads(Path(config_path).read_text())
    except json.JSONDecodeError as e:
        _fail(f"config file {config_path} is not valid JSON: {e}")
    if not isinstance(payload, dict):
        _fail(f"config file {config_path} must hold a JSON object")
    known = set(TrainConfig.__dataclass_fields__)
    unknown = set(payload) - known
    if unknown:
        _fail(f"unknown config keys in {config_path}: {sorted(unknown)}")
    identity = set(payload) & _IDENTITY_FIELDS
    if identity:
        _fail(
            f"config keys {sorted(identity)} are fixed by the variant; "
            "pick variants instead of overriding them"
        )
    return payload


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(path_type=Path))
@click.option("--plan", "plan_path", required=True, type=click.Path(path_type=Path))
@click.option("--variants", default="v0", show_default=True,
              help="Comma list of variant names, or 'all'.")
@click.option("--out", "out_root", default=None, type=click.Path(path_type=Path),
              help=f"Run directory (default: ${RUNS_ENV} or <manifest dir>/runs).")
@click.option("--pseudo-manifest", default=None, type=click.Path(path_type=Path))
@click.option("--phase-tracks", default=None, type=click.Path(path_type=Path),
              help="Directory of predicted phase tracks.")
@click.option("--config", "config_path", default=None, type=click.Path(path_type=Path),
              help="JSON file of training overrides (unknown keys rejected).")
@click.option("--max-epochs", default=None, type=int)
@click.option("--batch-size", default=None, type=int)
@click.option("--base-width", default=None, type=int)
@click.option("--num-stages", default=None, type=int)
@click.option("--patience", default=None, type=int)
@click.option("--lr", default=None, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--resume", is_flag=True, help="Skip cells with matching finished reports.")
@click.option("--json", "as_json", is_flag=True)
@_guarded
def train(manifest_path, plan_path, variants, out_root, pseudo_manifest, phase_tracks,
          config_path, max_epochs, batch_size, base_width, num_stages, patience, lr,
          seed, resume, as_json):
    """Train the variant grid across a split plan."""
    manifest = load_manifest(manifest_path)
    plan = load_split_plan(plan_path)
    names = sorted(VARIANTS) if variants.strip() == "all" else [
        v for v in variants.split(",") if v
    ]
    unknown = [v for v in names if v not in VARIANTS]
    if unknown:
        _fail(f"unknown variants: {unknown}; available: {sorted(VARIANTS)}")
    overrides = _load_overrides(config_path)
    for key, value in (
        ("max_epochs", max_epochs), ("batch_size", batch_size), ("base_width", base_width),
        ("num_stages", num_stages), ("patience", patience), ("lr", lr),
    ):
        if value is not None:
            overrides[key] = value

    if out_root is None:
        out_root = Path(os.environ.get(RUNS_ENV, "") or manifest_path.parent / "runs")
    out_root = Path(out_root)
    pseudo = load_manifest(pseudo_manifest) if pseudo_manifest else None
    tracks = load_phase_tracks(phase_tracks) if phase_tracks else None

    out_root.mkdir(parents=True, exist_ok=True)
    lock = out_root / ".lock"
    if lock.exists():
        _fail(
            f"another run appears active on {out_root} (found {lock}); "
            "remove the lock file if that run is gone"
        )
    lock.write_text(f"pid={os.getpid()}\n")
    try:
        result = run_grid(
            manifest, plan, names, out_root, pseudo_manifest=pseudo,
            predicted_tracks=tracks, overrides=overrides, seed=seed, resume=resume,
        )
    finally:
        lock.unlink(missing_ok=True)

    payload = {
        "out": str(out_root),
        "cells": len(result.cells),
        "skipped": [f"{v}/fold{k}" for v, k in result.skipped],
        "failures": {f"{v}/fold{k}": msg for (v, k), msg in result.failures.items()},
        "table": str(out_root / "report_table.txt"),
        "summaries": result.report.to_json()["summaries"],
    }
    if as_json:
        _echo_json(payload)
    else:
        click.echo((out_root / "report_table.txt").read_text(), nl=False)
        for key, message in payload["failures"].items():
            click.echo(f"failed {key}: {message}", err=True)
    if result.failures:
        _fail(f"{len(result.failures)} grid cells failed")


# -- evaluation and prediction ------------------------------------------------------


def _select_videos(manifest, plan_path, fold, videos):
    if videos:
        names = [v for v in videos.split(",") if v]
        missing = [v for v in names if v not in manifest.videos]
        if missing:
            _fail(f"videos not in manifest: {missing}")
        return names
    if plan_path is None:
        _fail("pass --videos or a --plan with --fold")
    plan = load_split_plan(plan_path)
    if not 0 <= fold < len(plan.folds):
        _fail(f"fold {fold} outside plan with {len(plan.folds)} folds")
    return list(plan.folds[fold].test_videos)


@main.command(name="eval")
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path(path_type=Path))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(path_type=Path))
@click.option("--videos", default="", help="Comma list of video ids to score.")
@click.option("--plan", "plan_path", default=None, type=click.Path(path_type=Path))
@click.option("--fold", default=0, show_default=True, type=int)
@click.option("--phase-tracks", default=None, type=click.Path(path_type=Path))
@click.option("--protocol", default=PROTOCOL_PER_FRAME, show_default=True,
              type=click.Choice([PROTOCOL_PER_FRAME, PROTOCOL_POOLED]))
@click.option("--json", "as_json", is_flag=True)
@_guarded
def eval_cmd(ckpt_path, manifest_path, videos, plan_path, fold, phase_tracks, protocol,
             as_json):
    """Score a checkpoint on the human-labeled frames of chosen videos."""
    manifest = load_manifest(manifest_path)
    names = _select_videos(manifest, plan_path, fold, videos)
    model, meta = load_checkpoint(ckpt_path)
    config = meta["train_config"]
    tracks = load_phase_tracks(phase_tracks) if phase_tracks else None
    phase_fn = phase_lookup_for(manifest, config, tracks)
    frames = [
        f for f in manifest.labeled_frames(provenances=("human",)) if f.video_id in set(names)
    ]
    if not frames:
        _fail(f"no human-labeled frames in videos {names}")
    bundle = load_frame_tensors(manifest, frames, phase_fn)
    preds = predict_label_maps(model, bundle, batch_size=config.batch_size)
    gts = [np.asarray(m) for m in bundle.labels.numpy()]
    metrics = evaluate_label_maps(
        preds, gts, num_classes=manifest.tool_taxonomy.num_classes, protocol=protocol
    )
    if as_json:
        _echo_json({"videos": names, "metrics": metrics.to_json()})
    else:
        click.echo(f"videos: {', '.join(names)}  ({metrics.num_frames} frames, {protocol})")
        for score in metrics.per_class:
            name = manifest.tool_taxonomy.name_of(score.class_id)
            click.echo(
                f"  {name}: dsc={score.dsc:.4f} iou={score.iou:.4f} "
                f"support={score.support_frames}"
            )
        click.echo(f"  mean: dsc={metrics.mean_dsc:.4f} iou={metrics.mean_iou:.4f}")


@main.command()
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path(path_type=Path))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(path_type=Path))
@click.option("--video", required=True, help="Video id to predict.")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--phase-tracks", default=None, type=click.Path(path_type=Path))
@click.option("--json", "as_json", is_flag=True)
@_guarded
def predict(ckpt_path, manifest_path, video, out_dir, phase_tracks, as_json):
    """Write predicted label maps for every extracted frame of a video."""
    manifest = load_manifest(manifest_path)
    if video not in manifest.videos:
        _fail(f"video {video!r} not in manifest")
    model, meta = load_checkpoint(ckpt_path)
    config = meta["train_config"]
    tracks = load_phase_tracks(phase_tracks) if phase_tracks else None
    phase_fn = phase_lookup_for(manifest, config, tracks)
    frames = manifest.frames_of(video)

    import torch

    from .rasters import read_image

    out_dir = Path(out_dir)
    written = []
    for frame in frames:
        image = read_image(manifest.resolve(frame.image_path))
        arr = image[None, :, :] if image.ndim == 2 else image.transpose(2, 0, 1)
        x = torch.from_numpy(arr.astype(np.float32) / 255.0)[None]
        phase = torch.tensor([phase_fn(frame.video_id, frame.frame_index)])
        labels = model.predict_labels(x, phase)[0].numpy().astype(np.uint8)
        rel = f"{video}/{frame.frame_index:06d}.png"
        write_label_map(out_dir / rel, labels)
        written.append(rel)
    if as_json:
        _echo_json({"out": str(out_dir), "video": video, "frames": written})
    else:
        click.echo(f"wrote {len(written)} predicted label maps to {out_dir / video}")


if __name__ == "__main__":
    main()
