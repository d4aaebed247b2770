"""Point prompts for promptable segmenters and their refinement loop."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..maskops import partition_regions
from ..metrics import iou
from ..seeding import derive_seed
from ..validation import check_binary_mask


@dataclass(frozen=True, order=True)
class PointPrompt:
    """One click: pixel coordinates plus a positive (1) or negative (0) tag."""

    x: int
    y: int
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"prompt label must be 0 or 1, got {self.label}")

    def to_json(self) -> dict:
        return {"x": self.x, "y": self.y, "label": self.label}

    @classmethod
    def from_json(cls, obj: dict) -> "PointPrompt":
        return cls(x=int(obj["x"]), y=int(obj["y"]), label=int(obj["label"]))


@dataclass(frozen=True)
class PromptSet:
    """Prompts for one tool class on one frame, with the achieved overlap
    score once evaluated (0.0 until then)."""

    video_id: str
    frame_index: int
    class_id: int
    points: tuple[PointPrompt, ...]
    score: float = 0.0

    def positives(self) -> tuple[PointPrompt, ...]:
        return tuple(p for p in self.points if p.label == 1)

    def negatives(self) -> tuple[PointPrompt, ...]:
        return tuple(p for p in self.points if p.label == 0)

    def to_json(self) -> dict:
        return {
            "video_id": self.video_id,
            "frame_index": self.frame_index,
            "class_id": self.class_id,
            "points": [p.to_json() for p in self.points],
            "score": self.score,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PromptSet":
        return cls(
            video_id=obj["video_id"],
            frame_index=int(obj["frame_index"]),
            class_id=int(obj["class_id"]),
            points=tuple(PointPrompt.from_json(p) for p in obj["points"]),
            score=float(obj.get("score", 0.0)),
        )


def _draw_points(rng: np.random.Generator, region: np.ndarray, n: int, label: int):
    """Up to n distinct pixels of a region, as prompts."""
    ys, xs = np.nonzero(region)
    if len(ys) == 0 or n <= 0:
        return []
    take = min(n, len(ys))
    picks = rng.choice(len(ys), size=take, replace=False)
    return [PointPrompt(x=int(xs[i]), y=int(ys[i]), label=label) for i in picks]


def sample_initial_prompts(
    gt_mask: np.ndarray,
    video_id: str,
    frame_index: int,
    class_id: int,
    seed: int = 0,
    n_positive: int = 2,
    n_negative: int = 2,
) -> PromptSet:
    """Seed prompts from ground truth: points inside the tool and points in
    the background. The tool must have at least one pixel; a frame with no
    background simply yields no negatives."""
    gt = check_binary_mask(gt_mask, "gt_mask")
    if not gt.any():
        raise ValueError(
            f"{video_id}[{frame_index}] class {class_id}: cannot prompt an empty mask"
        )
    rng = np.random.default_rng(
        derive_seed(seed, "prompts", video_id, frame_index, class_id)
    )
    points = _draw_points(rng, gt, n_positive, 1) + _draw_points(rng, ~gt, n_negative, 0)
    return PromptSet(
        video_id=video_id,
        frame_index=frame_index,
        class_id=class_id,
        points=tuple(points),
    )


def refine_prompts(
    segmenter,
    gt_mask: np.ndarray,
    initial: PromptSet,
    max_rounds: int = 3,
    target_iou: float = 0.95,
    points_per_region: int = 2,
    seed: int = 0,
) -> PromptSet:
    """Iteratively improve prompts against ground truth, keeping the best.

    Each round scores the current best prompt set, partitions its prediction
    against the truth, and proposes a fresh set with points drawn from each
    nonempty region: hits and misses become positives, false alarms and true
    background become negatives. A proposal only replaces the incumbent when
    it scores strictly higher, so the returned score never decreases across
    rounds; the loop stops early once target_iou is reached.
    """
    gt = check_binary_mask(gt_mask, "gt_mask")
    pred = segmenter.segment_frame(initial.video_id, initial.frame_index, initial.points)
    best = replace(initial, score=iou(pred, gt))
    for round_no in range(1, max_rounds + 1):
        if best.score >= target_iou:
            break
        pred = segmenter.segment_frame(best.video_id, best.frame_index, best.points)
        parts = partition_regions(pred, gt)
        rng = np.random.default_rng(
            derive_seed(
                seed, "refine", best.video_id, best.frame_index, best.class_id, round_no
            )
        )
        points = (
            _draw_points(rng, parts.tp, points_per_region, 1)
            + _draw_points(rng, parts.fn, points_per_region, 1)
            + _draw_points(rng, parts.fp, points_per_region, 0)
            + _draw_points(rng, parts.tn, points_per_region, 0)
        )
        if not any(p.label == 1 for p in points):
            continue
        candidate = replace(best, points=tuple(points), score=0.0)
        cand_pred = segmenter.segment_frame(
            candidate.video_id, candidate.frame_index, candidate.points
        )
        cand_score = iou(cand_pred, gt)
        if cand_score > best.score:
            best = replace(candidate, score=cand_score)
    return best
