"""Label propagation from human anchors and pseudo-dataset assembly.

Every human-labeled frame acts as an anchor: prompts are refined against
its label map, anchors whose prompts score too poorly are dropped, and the
survivors are pushed along the video at a fixed stride in both directions.
Per-tool masks come back from the segmenter, get merged into dense label
maps, and the manifest is rewritten with the new frames marked as pseudo
labeled. Every kept mask and every exclusion lands in a JSONL ledger so a
run can be audited after the fact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..manifest import PROVENANCE_HUMAN, PROVENANCE_PSEUDO, DatasetManifest
from ..rasters import read_label_map, write_label_map
from .prompts import PromptSet, refine_prompts, sample_initial_prompts

SEED_MODES = ("points", "mask")

# Exclusion reasons the ledger can carry.
REASON_LOW_SCORE = "low_score"
REASON_EMPTY_MASK = "empty_mask"
REASON_NO_IMAGE_AT_TARGET = "no_image_at_target"
REASON_HUMAN_TARGET = "human_target"
REASON_DEDUP_FARTHER_ANCHOR = "dedup_farther_anchor"


def propagation_offsets(
    anchor_index: int, video_length: int, stride: int = 30, horizon: int = 90
) -> list[int]:
    """Absolute target frame indices reachable from an anchor.

    Both directions, multiples of stride up to the horizon, clipped to the
    video; the anchor itself is never a target.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if horizon < stride:
        raise ValueError(f"horizon {horizon} is below stride {stride}")
    if not 0 <= anchor_index < video_length:
        raise ValueError(
            f"anchor {anchor_index} outside video of length {video_length}"
        )
    targets = set()
    for k in range(1, horizon // stride + 1):
        for t in (anchor_index - k * stride, anchor_index + k * stride):
            if 0 <= t < video_length:
                targets.add(t)
    return sorted(targets)


@dataclass(frozen=True)
class PseudoLabelRecord:
    """One propagated tool mask that survived assembly gates."""

    video_id: str
    source_frame_index: int
    target_frame_index: int
    class_id: int
    prompt_score: float
    mask_path: str

    @property
    def direction(self) -> str:
        return "forward" if self.target_frame_index > self.source_frame_index else "backward"

    def to_json(self) -> dict:
        return {
            "video_id": self.video_id,
            "source_frame_index": self.source_frame_index,
            "target_frame_index": self.target_frame_index,
            "class_id": self.class_id,
            "prompt_score": self.prompt_score,
            "direction": self.direction,
            "mask_path": self.mask_path,
        }


@dataclass(frozen=True)
class Exclusion:
    """Why a candidate mask (or a whole anchor class) was not used."""

    video_id: str
    source_frame_index: int
    class_id: int
    reason: str
    target_frame_index: int | None = None
    detail: str = ""

    def to_json(self) -> dict:
        return {
            "video_id": self.video_id,
            "source_frame_index": self.source_frame_index,
            "target_frame_index": self.target_frame_index,
            "class_id": self.class_id,
            "reason": self.reason,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class PseudoLabelParams:
    stride: int = 30
    horizon: int = 90
    min_source_iou: float = 0.5
    max_rounds: int = 3
    target_iou: float = 0.95
    seed_mode: str = "points"
    seed: int = 0

    def __post_init__(self):
        if self.seed_mode not in SEED_MODES:
            raise ValueError(f"seed_mode must be one of {SEED_MODES}, got {self.seed_mode!r}")
        if not 0.0 <= self.min_source_iou <= 1.0:
            raise ValueError(f"min_source_iou must be in [0, 1], got {self.min_source_iou}")
        if self.max_rounds < 0:
            raise ValueError(f"max_rounds must be >= 0, got {self.max_rounds}")

    def to_json(self) -> dict:
        return {
            "stride": self.stride,
            "horizon": self.horizon,
            "min_source_iou": self.min_source_iou,
            "max_rounds": self.max_rounds,
            "target_iou": self.target_iou,
            "seed_mode": self.seed_mode,
            "seed": self.seed,
        }


@dataclass
class PseudoLabelResult:
    manifest: DatasetManifest
    records: list[PseudoLabelRecord]
    exclusions: list[Exclusion]
    ledger_path: Path
    prompt_sets: list[PromptSet] = field(default_factory=list)


def merge_tool_masks(masks: dict[int, np.ndarray], shape: tuple[int, int]) -> np.ndarray:
    """Dense label map from per-class masks; on overlap the smaller mask
    wins, since a big blob swallowing a thin tool loses less than the
    reverse. Painting goes largest first, ascending class id on equal area,
    so later (smaller) paint overwrites."""
    out = np.zeros(shape, dtype=np.uint8)
    order = sorted(
        masks.items(), key=lambda kv: (-int(np.count_nonzero(kv[1])), kv[0])
    )
    for class_id, mask in order:
        out[mask] = class_id
    return out


def propagate_anchor(
    manifest: DatasetManifest,
    segmenter,
    anchor,
    params: PseudoLabelParams,
    mask_dir: Path,
):
    """Refine prompts on one human frame and push each surviving class to
    its propagation targets. Returns per-tool candidate masks, the raw
    records, exclusions, and the refined prompt sets."""
    label_map = read_label_map(manifest.resolve(anchor.label_map_path))
    track = manifest.track_for(anchor.video_id)
    targets = propagation_offsets(
        anchor.frame_index, track.num_frames, params.stride, params.horizon
    )
    classes = sorted(int(c) for c in np.unique(label_map) if c > 0)
    masks: dict[tuple[int, int], np.ndarray] = {}  # (target, class) -> mask
    records: list[PseudoLabelRecord] = []
    exclusions: list[Exclusion] = []
    prompt_sets: list[PromptSet] = []
    if not targets or not classes:
        return masks, records, exclusions, prompt_sets

    for class_id in classes:
        gt = label_map == class_id
        initial = sample_initial_prompts(
            gt, anchor.video_id, anchor.frame_index, class_id, seed=params.seed
        )
        best = refine_prompts(
            segmenter,
            gt,
            initial,
            max_rounds=params.max_rounds,
            target_iou=params.target_iou,
            seed=params.seed,
        )
        prompt_sets.append(best)
        if best.score < params.min_source_iou:
            exclusions.append(
                Exclusion(
                    video_id=anchor.video_id,
                    source_frame_index=anchor.frame_index,
                    class_id=class_id,
                    reason=REASON_LOW_SCORE,
                    detail=f"prompt overlap {best.score:.4f} < {params.min_source_iou}",
                )
            )
            continue
        seed_mask = gt if params.seed_mode == "mask" else None
        points = best.points if params.seed_mode == "points" else ()
        propagated = segmenter.propagate(
            anchor.video_id, anchor.frame_index, points, targets, seed_mask=seed_mask
        )
        for t in targets:
            mask = propagated[t]
            if not mask.any():
                exclusions.append(
                    Exclusion(
                        video_id=anchor.video_id,
                        source_frame_index=anchor.frame_index,
                        target_frame_index=t,
                        class_id=class_id,
                        reason=REASON_EMPTY_MASK,
                    )
                )
                continue
            rel = (
                f"{anchor.video_id}/{anchor.frame_index:06d}_to_{t:06d}_c{class_id}.png"
            )
            write_label_map(mask_dir / rel, mask.astype(np.uint8))
            masks[(t, class_id)] = mask
            records.append(
                PseudoLabelRecord(
                    video_id=anchor.video_id,
                    source_frame_index=anchor.frame_index,
                    target_frame_index=t,
                    class_id=class_id,
                    prompt_score=best.score,
                    mask_path=str(Path("masks") / rel),
                )
            )
    return masks, records, exclusions, prompt_sets


def assemble_pseudo_dataset(
    manifest: DatasetManifest,
    candidates: dict[tuple[str, int], dict[int, dict[int, np.ndarray]]],
    records: list[PseudoLabelRecord],
    label_dir: Path,
    subdir: str,
):
    """Resolve competing anchors and write merged pseudo label maps.

    candidates maps (video, target) -> anchor -> class -> mask. Human
    frames are untouchable, targets without an extracted image are dropped,
    and when several anchors cover one target the nearest wins (ties to the
    earlier anchor). Returns updated frame records plus kept/excluded
    record lists.
    """
    frames_by_key = {(f.video_id, f.frame_index): f for f in manifest.frames}
    new_frames = dict(frames_by_key)
    kept: list[PseudoLabelRecord] = []
    exclusions: list[Exclusion] = []
    winners: dict[tuple[str, int], int] = {}

    for (video_id, target), by_anchor in sorted(candidates.items()):
        frame = frames_by_key.get((video_id, target))
        reason = None
        if frame is None:
            reason = REASON_NO_IMAGE_AT_TARGET
        elif frame.label_provenance == PROVENANCE_HUMAN:
            reason = REASON_HUMAN_TARGET
        if reason is not None:
            for anchor_index, by_class in sorted(by_anchor.items()):
                for class_id in sorted(by_class):
                    exclusions.append(
                        Exclusion(
                            video_id=video_id,
                            source_frame_index=anchor_index,
                            target_frame_index=target,
                            class_id=class_id,
                            reason=reason,
                        )
                    )
            continue
        winner = min(by_anchor, key=lambda a: (abs(target - a), a))
        winners[(video_id, target)] = winner
        for anchor_index, by_class in sorted(by_anchor.items()):
            if anchor_index == winner:
                continue
            for class_id in sorted(by_class):
                exclusions.append(
                    Exclusion(
                        video_id=video_id,
                        source_frame_index=anchor_index,
                        target_frame_index=target,
                        class_id=class_id,
                        reason=REASON_DEDUP_FARTHER_ANCHOR,
                        detail=f"anchor {winner} is nearer",
                    )
                )
        merged = merge_tool_masks(by_anchor[winner], (frame.height, frame.width))
        rel = f"{video_id}/{target:06d}.png"
        write_label_map(label_dir / rel, merged)
        new_frames[(video_id, target)] = replace(
            frame,
            label_map_path=str(Path(subdir) / "labels" / rel),
            label_provenance=PROVENANCE_PSEUDO,
        )

    kept = [
        r
        for r in records
        if winners.get((r.video_id, r.target_frame_index)) == r.source_frame_index
    ]
    ordered = [new_frames[k] for k in sorted(new_frames)]
    return ordered, kept, exclusions


def run_pseudo_labeling(
    manifest: DatasetManifest,
    segmenter,
    params: PseudoLabelParams = PseudoLabelParams(),
    subdir: str = "pseudo",
) -> PseudoLabelResult:
    """Full sweep: anchors -> prompts -> propagation -> assembly -> ledger.

    Writes per-tool masks, merged label maps and ledger.jsonl under
    manifest.root/subdir and returns the augmented manifest (pseudo frames
    replace provenance-free ones; human frames are never overwritten).
    """
    root = manifest.resolve(subdir)
    mask_dir = root / "masks"
    label_dir = root / "labels"
    anchors = manifest.labeled_frames(provenances=(PROVENANCE_HUMAN,))

    candidates: dict[tuple[str, int], dict[int, dict[int, np.ndarray]]] = {}
    records: list[PseudoLabelRecord] = []
    exclusions: list[Exclusion] = []
    prompt_sets: list[PromptSet] = []
    for anchor in anchors:
        masks, recs, excl, prompts = propagate_anchor(
            manifest, segmenter, anchor, params, mask_dir
        )
        records.extend(recs)
        exclusions.extend(excl)
        prompt_sets.extend(prompts)
        for (target, class_id), mask in masks.items():
            by_anchor = candidates.setdefault((anchor.video_id, target), {})
            by_anchor.setdefault(anchor.frame_index, {})[class_id] = mask

    frames, kept, assembly_exclusions = assemble_pseudo_dataset(
        manifest, candidates, records, label_dir, subdir
    )
    exclusions.extend(assembly_exclusions)

    ledger_path = root / "ledger.jsonl"
    ledger_path.parent.mkdir(parents=True, exist_ok=True)
    with ledger_path.open("w") as fh:
        fh.write(json.dumps({"params": params.to_json()}, sort_keys=True) + "\n")
        for record in kept:
            fh.write(json.dumps({"kept": True, **record.to_json()}, sort_keys=True) + "\n")
        for excl in exclusions:
            fh.write(json.dumps({"kept": False, **excl.to_json()}, sort_keys=True) + "\n")

    return PseudoLabelResult(
        manifest=manifest.with_frames(frames),
        records=kept,
        exclusions=exclusions,
        ledger_path=ledger_path,
        prompt_sets=prompt_sets,
    )
