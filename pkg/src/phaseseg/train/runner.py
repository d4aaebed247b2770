"""Core fit loop plus manifest-level training entry points.

One loop serves every caller: the array-facing estimator, the supervised
manifest runner, and both stages of the semi-supervised schedule. All
randomness (weight init, batch order) derives from the config seed, so a
rerun of the same config on the same data reproduces the run bit for bit
on CPU.
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..manifest import PROVENANCE_HUMAN, PROVENANCE_PSEUDO, DatasetManifest
from ..metrics import PROTOCOL_PER_FRAME, ClassMetrics, evaluate_label_maps
from ..nn import NetworkConfig, PhaseUNet, inverse_frequency_weights, segmentation_loss
from ..rasters import read_image, read_label_map
from ..seeding import derive_seed
from ..splits import Fold
from ..taxonomy import NULL_PHASE
from .config import TrainConfig

CHECKPOINT_FORMAT = 1


@dataclass
class TensorBundle:
    """Frames ready for the loop: images (N,C,H,W) float32 in [0,1],
    labels (N,H,W) int64, phases (N,) int64 with -1 for unknown."""

    images: torch.Tensor
    labels: torch.Tensor
    phases: torch.Tensor

    def __post_init__(self):
        if len(self.images) != len(self.labels) or len(self.images) != len(self.phases):
            raise ValueError("images, labels and phases must align")

    def __len__(self) -> int:
        return len(self.images)


@dataclass
class FitResult:
    model: PhaseUNet
    history: list[dict]
    best_epoch: int
    best_val_dsc: float | None
    best_state: dict
    seconds: float = 0.0


def phase_lookup_for(
    manifest: DatasetManifest,
    config: TrainConfig,
    predicted_tracks: dict | None = None,
):
    """Maps (video_id, frame_index) to the phase id training should see."""
    if config.phase_source == "none":
        return lambda video_id, frame_index: NULL_PHASE
    if config.phase_source == "true":
        return lambda video_id, frame_index: manifest.track_for(video_id).phase_at(frame_index)
    if predicted_tracks is None:
        raise ValueError("phase_source 'predicted' needs predicted phase tracks")

    def lookup(video_id, frame_index):
        track = predicted_tracks.get(video_id)
        if track is None:
            raise KeyError(f"no predicted phase track for video {video_id}")
        return track.phase_at(frame_index)

    return lookup


def load_frame_tensors(manifest: DatasetManifest, frames, phase_fn) -> TensorBundle:
    """Read labeled frames into one in-memory bundle."""
    images, labels, phases = [], [], []
    for frame in frames:
        if not frame.has_label:
            raise ValueError(
                f"{frame.video_id}[{frame.frame_index}] has no label map to train on"
            )
        image = read_image(manifest.resolve(frame.image_path))
        if image.ndim == 2:
            image = image[None, :, :]
        else:
            image = image.transpose(2, 0, 1)
        images.append(torch.from_numpy(image.astype(np.float32) / 255.0))
        labels.append(
            torch.from_numpy(
                read_label_map(manifest.resolve(frame.label_map_path)).astype(np.int64)
            )
        )
        phases.append(phase_fn(frame.video_id, frame.frame_index))
    return TensorBundle(
        images=torch.stack(images),
        labels=torch.stack(labels),
        phases=torch.tensor(phases, dtype=torch.int64),
    )


def predict_label_maps(model: PhaseUNet, bundle: TensorBundle, batch_size: int = 16):
    """Argmax label maps for a bundle, batched; returns a list of (H,W) arrays."""
    out = []
    for start in range(0, len(bundle), batch_size):
        stop = start + batch_size
        pred = model.predict_labels(bundle.images[start:stop], bundle.phases[start:stop])
        out.extend(np.asarray(p) for p in pred.cpu().numpy())
    return out


def evaluate_bundle(
    model: PhaseUNet,
    bundle: TensorBundle,
    num_classes: int,
    protocol: str = PROTOCOL_PER_FRAME,
    batch_size: int = 16,
) -> ClassMetrics:
    preds = predict_label_maps(model, bundle, batch_size)
    gts = [np.asarray(m) for m in bundle.labels.numpy()]
    return evaluate_label_maps(preds, gts, num_classes=num_classes, protocol=protocol)


def fit_loop(
    net_config: NetworkConfig,
    config: TrainConfig,
    train: TensorBundle,
    val: TensorBundle | None,
    seed_labels: tuple = (),
    initial_state: dict | None = None,
    curve_path: Path | None = None,
    stage: str = "train",
) -> FitResult:
    """Train one model to early stopping, keeping the best validation state.

    The checkpoint criterion is mean soft-label-free DSC over the validation
    bundle; ties keep the earlier epoch. Without a validation bundle the
    final state wins and patience never triggers. A non-finite loss aborts
    the run instead of silently training on garbage.
    """
    if len(train) == 0:
        raise ValueError("cannot fit on an empty training bundle")
    start_time = time.monotonic()
    torch.manual_seed(derive_seed(config.seed, "fit", stage, *seed_labels))
    model = PhaseUNet(net_config)
    if initial_state is not None:
        model.load_state_dict(copy.deepcopy(initial_state))
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.lr, weight_decay=config.weight_decay
    )
    class_weights = None
    if config.class_weighting:
        class_weights = inverse_frequency_weights(
            [np.asarray(m) for m in train.labels.numpy()], net_config.num_classes
        )

    history: list[dict] = []
    best_state = copy.deepcopy(model.state_dict())
    best_epoch, best_val, since_best = 0, None, 0
    curve_fh = None
    if curve_path is not None:
        curve_path.parent.mkdir(parents=True, exist_ok=True)
        curve_fh = curve_path.open("a")
    try:
        for epoch in range(1, config.max_epochs + 1):
            model.train()
            order_rng = torch.Generator()
            order_rng.manual_seed(derive_seed(config.seed, "order", stage, *seed_labels, epoch))
            order = torch.randperm(len(train), generator=order_rng)
            epoch_loss, n_batches = 0.0, 0
            for start in range(0, len(train), config.batch_size):
                idx = order[start : start + config.batch_size]
                optimizer.zero_grad()
                scores = model(train.images[idx], train.phases[idx])
                loss = segmentation_loss(scores, train.labels[idx], class_weights)
                if not torch.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite loss at {stage} epoch {epoch}; aborting the run"
                    )
                loss.backward()
                optimizer.step()
                epoch_loss += float(loss.detach())
                n_batches += 1

            entry = {
                "stage": stage,
                "epoch": epoch,
                "train_loss": epoch_loss / max(n_batches, 1),
                "val_mean_dsc": None,
            }
            if val is not None and len(val) > 0:
                val_dsc = evaluate_bundle(
                    model, val, net_config.num_classes, batch_size=config.batch_size
                ).mean_dsc
                entry["val_mean_dsc"] = val_dsc
                if best_val is None or val_dsc > best_val:
                    best_val, best_epoch, since_best = val_dsc, epoch, 0
                    best_state = copy.deepcopy(model.state_dict())
                else:
                    since_best += 1
            else:
                best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
            history.append(entry)
            if curve_fh is not None:
                curve_fh.write(json.dumps(entry, sort_keys=True) + "\n")
                curve_fh.flush()
            if val is not None and since_best >= config.patience:
                break
    finally:
        if curve_fh is not None:
            curve_fh.close()

    model.load_state_dict(best_state)
    model.eval()
    return FitResult(
        model=model,
        history=history,
        best_epoch=best_epoch,
        best_val_dsc=best_val,
        best_state=best_state,
        seconds=time.monotonic() - start_time,
    )


# -- manifest-level runs -----------------------------------------------------------


@dataclass
class RunResult:
    model: PhaseUNet
    net_config: NetworkConfig
    config: TrainConfig
    history: list[dict]
    best_epoch: int
    best_val_dsc: float | None
    seconds: float
    test_metrics: ClassMetrics | None = None
    extras: dict = field(default_factory=dict)


def _infer_in_channels(manifest: DatasetManifest, frames) -> int:
    image = read_image(manifest.resolve(frames[0].image_path))
    return 1 if image.ndim == 2 else image.shape[2]


def _training_frames(manifest: DatasetManifest, videos, provenances) -> list:
    wanted = set(videos)
    return [f for f in manifest.labeled_frames(provenances) if f.video_id in wanted]


def train_on_fold(
    manifest: DatasetManifest,
    fold: Fold,
    config: TrainConfig,
    predicted_tracks: dict | None = None,
    out_dir: Path | None = None,
    seed_labels: tuple = (),
) -> RunResult:
    """Train one variant on one fold of a manifest.

    Supervised configs fit on the human-labeled frames of the training
    videos. Semi-supervised configs run the two-stage schedule: stage one
    fits on pseudo plus (by default) human frames, stage two restarts a
    fresh optimizer from the stage-one best state and fine-tunes on human
    frames only. Validation is always human-only, test never enters.
    """
    phase_fn = phase_lookup_for(manifest, config, predicted_tracks)
    human = (PROVENANCE_HUMAN,)
    val_frames = _training_frames(manifest, fold.val_videos, human)
    if not val_frames:
        raise ValueError(
            f"no human-labeled validation frames in videos {sorted(fold.val_videos)}"
        )
    train_human = _training_frames(manifest, fold.train_videos, human)
    if not train_human:
        raise ValueError(f"no human-labeled training frames in videos {sorted(fold.train_videos)}")

    net_config = NetworkConfig(
        num_classes=manifest.tool_taxonomy.num_classes,
        num_phases=max(manifest.phase_taxonomy.num_phases, 1),
        in_channels=_infer_in_channels(manifest, train_human),
        base_width=config.base_width,
        num_stages=config.num_stages,
        conditioning=config.conditioning,
        condition_bottleneck=config.condition_bottleneck,
    )
    val_bundle = load_frame_tensors(manifest, val_frames, phase_fn)
    curve_path = out_dir / "curve.jsonl" if out_dir is not None else None
    if curve_path is not None and curve_path.exists():
        curve_path.unlink()

    history: list[dict] = []
    seconds = 0.0
    if config.semi_supervised:
        provenances = (
            (PROVENANCE_HUMAN, PROVENANCE_PSEUDO)
            if config.stage1_include_human
            else (PROVENANCE_PSEUDO,)
        )
        stage1_frames = _training_frames(manifest, fold.train_videos, provenances)
        pseudo_count = sum(f.label_provenance == PROVENANCE_PSEUDO for f in stage1_frames)
        if pseudo_count == 0:
            raise ValueError(
                "semi-supervised training needs pseudo-labeled frames in the manifest"
            )
        stage1 = fit_loop(
            net_config,
            config,
            load_frame_tensors(manifest, stage1_frames, phase_fn),
            val_bundle,
            seed_labels=seed_labels,
            curve_path=curve_path,
            stage="stage1_pseudo",
        )
        history.extend(stage1.history)
        seconds += stage1.seconds
        stage2 = fit_loop(
            net_config,
            config,
            load_frame_tensors(manifest, train_human, phase_fn),
            val_bundle,
            seed_labels=seed_labels,
            initial_state=stage1.best_state,
            curve_path=curve_path,
            stage="stage2_human",
        )
        history.extend(stage2.history)
        seconds += stage2.seconds
        final = stage2
    else:
        final = fit_loop(
            net_config,
            config,
            load_frame_tensors(manifest, train_human, phase_fn),
            val_bundle,
            seed_labels=seed_labels,
            curve_path=curve_path,
            stage="supervised",
        )
        history.extend(final.history)
        seconds += final.seconds

    result = RunResult(
        model=final.model,
        net_config=net_config,
        config=config,
        history=history,
        best_epoch=final.best_epoch,
        best_val_dsc=final.best_val_dsc,
        seconds=seconds,
    )
    if fold.test_videos:
        test_frames = _training_frames(manifest, fold.test_videos, human)
        if test_frames:
            test_bundle = load_frame_tensors(manifest, test_frames, phase_fn)
            result.test_metrics = evaluate_bundle(
                final.model, test_bundle, net_config.num_classes,
                batch_size=config.batch_size,
            )
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(
            json.dumps(
                {
                    "train_config": config.to_json(),
                    "net_config": net_config.to_json(),
                    "fingerprint": config.fingerprint(),
                },
                sort_keys=True,
                indent=2,
            )
            + "\n"
        )
        save_checkpoint(out_dir / "best.ckpt", result)
    return result


# -- checkpoints -------------------------------------------------------------------


def save_checkpoint(path: Path, result: RunResult) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "state_dict": result.model.state_dict(),
            "net_config": result.net_config.to_json(),
            "train_config": result.config.to_json(),
            "train_fingerprint": result.config.fingerprint(),
            "best_epoch": result.best_epoch,
            "val_mean_dsc": result.best_val_dsc,
        },
        path,
    )


def load_checkpoint(path: Path, expect_config: TrainConfig | None = None):
    """Model plus metadata from a checkpoint; optionally insist that it was
    produced by an exact training configuration."""
    payload = torch.load(Path(path), weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise RuntimeError(f"unsupported checkpoint format {payload.get('format')!r}")
    if expect_config is not None:
        if payload.get("train_fingerprint") != expect_config.fingerprint():
            raise RuntimeError(
                "checkpoint was trained under a different configuration; refusing to load"
            )
    net_config = NetworkConfig.from_json(payload["net_config"])
    model = PhaseUNet(net_config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    meta = {
        "best_epoch": payload["best_epoch"],
        "val_mean_dsc": payload["val_mean_dsc"],
        "train_config": TrainConfig.from_json(payload["train_config"]),
    }
    return model, meta
