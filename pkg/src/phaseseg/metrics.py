"""Overlap metrics for masks and label maps.

Conventions, applied everywhere in the framework:

* iou = |pred ∩ gt| / |pred ∪ gt|; dsc = 2|pred ∩ gt| / (|pred| + |gt|);
  an empty-vs-empty pair scores 1.0 for both.
* Per-class values aggregate over the frames where the class appears in
  ground truth or prediction (its support frames); classes with zero support
  are reported as absent and excluded from means.
* Means run over tool classes only, never background.

Every report records which aggregation protocol produced it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .validation import check_binary_mask, check_label_map, check_same_shape

PROTOCOL_PER_FRAME = "per_frame"
PROTOCOL_POOLED = "pooled"
PROTOCOLS = (PROTOCOL_PER_FRAME, PROTOCOL_POOLED)


def iou(pred, gt) -> float:
    """Intersection over union of two binary masks; 1.0 when both empty."""
    p = check_binary_mask(pred, "pred")
    g = check_binary_mask(gt, "gt")
    check_same_shape(p, g, ("pred", "gt"))
    inter = int(np.logical_and(p, g).sum())
    union = int(np.logical_or(p, g).sum())
    if union == 0:
        return 1.0
    return inter / union


def dsc(pred, gt) -> float:
    """Dice similarity of two binary masks; 1.0 when both empty."""
    p = check_binary_mask(pred, "pred")
    g = check_binary_mask(gt, "gt")
    check_same_shape(p, g, ("pred", "gt"))
    inter = int(np.logical_and(p, g).sum())
    total = int(p.sum()) + int(g.sum())
    if total == 0:
        return 1.0
    return 2.0 * inter / total


@dataclass(frozen=True)
class ClassScore:
    class_id: int
    iou: float
    dsc: float
    support_frames: int


@dataclass(frozen=True)
class ClassMetrics:
    """Per-class and mean overlap scores for a frame collection."""

    per_class: tuple[ClassScore, ...]
    mean_iou: float
    mean_dsc: float
    aggregation_protocol: str
    num_frames: int = 0
    extras: dict = field(default_factory=dict, compare=False)

    def score_for(self, class_id: int) -> ClassScore | None:
        for s in self.per_class:
            if s.class_id == class_id:
                return s
        return None

    def to_json(self) -> dict:
        return {
            "aggregation_protocol": self.aggregation_protocol,
            "num_frames": self.num_frames,
            "mean_iou": self.mean_iou,
            "mean_dsc": self.mean_dsc,
            "per_class": [
                {
                    "class_id": s.class_id,
                    "iou": s.iou,
                    "dsc": s.dsc,
                    "support_frames": s.support_frames,
                }
                for s in self.per_class
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClassMetrics":
        return cls(
            per_class=tuple(
                ClassScore(
                    class_id=int(s["class_id"]),
                    iou=float(s["iou"]),
                    dsc=float(s["dsc"]),
                    support_frames=int(s["support_frames"]),
                )
                for s in obj["per_class"]
            ),
            mean_iou=float(obj["mean_iou"]),
            mean_dsc=float(obj["mean_dsc"]),
            aggregation_protocol=obj["aggregation_protocol"],
            num_frames=int(obj.get("num_frames", 0)),
        )


def evaluate_label_maps(
    preds,
    gts,
    num_classes: int,
    protocol: str = PROTOCOL_PER_FRAME,
) -> ClassMetrics:
    """Score predicted label maps against references, class by class.

    preds and gts are equal-length sequences of integer class-id maps with
    ids in [0, num_classes]. Under "per_frame" a class's score is the mean of
    its per-frame iou/dsc over its support frames; under "pooled" the pixel
    counts are pooled over all frames first. Classes appearing in neither
    prediction nor reference on any frame are excluded from the means.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown aggregation protocol {protocol!r}")
    preds = list(preds)
    gts = list(gts)
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions vs {len(gts)} references")
    if not preds:
        raise ValueError("cannot evaluate zero frames")
    pairs = []
    for i, (p, g) in enumerate(zip(preds, gts)):
        p = check_label_map(p, num_classes, f"pred[{i}]")
        g = check_label_map(g, num_classes, f"gt[{i}]")
        check_same_shape(p, g, (f"pred[{i}]", f"gt[{i}]"))
        pairs.append((p, g))

    scores = []
    for c in range(1, num_classes + 1):
        frame_ious, frame_dscs = [], []
        pooled_inter = pooled_p = pooled_g = 0
        support = 0
        for p, g in pairs:
            pm = p == c
            gm = g == c
            np_p, np_g = int(pm.sum()), int(gm.sum())
            if np_p == 0 and np_g == 0:
                continue
            support += 1
            inter = int(np.logical_and(pm, gm).sum())
            if protocol == PROTOCOL_PER_FRAME:
                frame_ious.append(inter / (np_p + np_g - inter))
                frame_dscs.append(2.0 * inter / (np_p + np_g))
            else:
                pooled_inter += inter
                pooled_p += np_p
                pooled_g += np_g
        if support == 0:
            continue
        if protocol == PROTOCOL_PER_FRAME:
            c_iou = float(np.mean(frame_ious))
            c_dsc = float(np.mean(frame_dscs))
        else:
            c_iou = pooled_inter / (pooled_p + pooled_g - pooled_inter)
            c_dsc = 2.0 * pooled_inter / (pooled_p + pooled_g)
        scores.append(ClassScore(class_id=c, iou=c_iou, dsc=c_dsc, support_frames=support))

    if scores:
        mean_iou = float(np.mean([s.iou for s in scores]))
        mean_dsc = float(np.mean([s.dsc for s in scores]))
    else:
        # no tool appears anywhere: vacuously perfect (all-background match)
        mean_iou = 1.0
        mean_dsc = 1.0
    return ClassMetrics(
        per_class=tuple(scores),
        mean_iou=mean_iou,
        mean_dsc=mean_dsc,
        aggregation_protocol=protocol,
        num_frames=len(pairs),
    )
