"""Training loss: cross-entropy plus soft-Dice over tool classes."""

from __future__ import annotations

import torch
import torch.nn.functional as F


def segmentation_loss(
    scores: torch.Tensor,
    target: torch.Tensor,
    class_weights: torch.Tensor | None = None,
    dice_smooth: float = 1e-6,
) -> torch.Tensor:
    """Pixel cross-entropy + (1 - mean soft-Dice over tool classes).

    scores are raw logits (B, C+1, H, W); target holds class ids (B, H, W)
    in [0, C] with 0 = background. The Dice term uses softmax probabilities
    pooled over the batch per class; classes absent from both prediction
    mass and target contribute a perfect Dice through the smoothing term and
    hence no loss. Optional class_weights (length C+1) weight the
    cross-entropy only, with torch's weighted-mean reduction.
    """
    if scores.ndim != 4:
        raise ValueError(f"scores must be (B, C+1, H, W), got {tuple(scores.shape)}")
    if target.shape != (scores.shape[0],) + scores.shape[2:]:
        raise ValueError(
            f"target shape {tuple(target.shape)} does not match scores {tuple(scores.shape)}"
        )
    num_total = scores.shape[1]
    if num_total < 2:
        raise ValueError("scores need at least background + one tool channel")
    if not torch.is_floating_point(scores):
        raise ValueError("scores must be floating point")
    target = target.long()
    if target.numel() and (int(target.min()) < 0 or int(target.max()) >= num_total):
        raise ValueError(
            f"target ids must lie in [0, {num_total - 1}], got "
            f"[{int(target.min())}, {int(target.max())}]"
        )
    if class_weights is not None:
        class_weights = class_weights.to(dtype=scores.dtype, device=scores.device)
        if class_weights.shape != (num_total,):
            raise ValueError(f"class_weights must have shape ({num_total},)")

    ce = F.cross_entropy(scores, target, weight=class_weights)

    probs = F.softmax(scores, dim=1)
    dice_terms = []
    for c in range(1, num_total):
        p_c = probs[:, c]
        g_c = (target == c).to(scores.dtype)
        inter = (p_c * g_c).sum()
        denom = p_c.sum() + g_c.sum()
        dice_terms.append((2.0 * inter + dice_smooth) / (denom + dice_smooth))
    dice = torch.stack(dice_terms).mean()
    return ce + (1.0 - dice)


def inverse_frequency_weights(label_maps, num_classes: int) -> torch.Tensor:
    """Cross-entropy weights inversely proportional to pixel frequency.

    label_maps is an iterable of integer (H, W) arrays with ids in
    [0, num_classes]. Weights are normalized to mean 1; a class that never
    occurs gets the largest observed weight so it is not silently ignored.
    """
    counts = torch.zeros(num_classes + 1, dtype=torch.float64)
    for lab in label_maps:
        t = torch.as_tensor(lab).long().ravel()
        counts += torch.bincount(t, minlength=num_classes + 1)[: num_classes + 1].double()
    if counts.sum() == 0:
        raise ValueError("no pixels supplied")
    present = counts > 0
    weights = torch.zeros_like(counts)
    weights[present] = 1.0 / counts[present]
    if bool((~present).any()):
        weights[~present] = weights[present].max() if bool(present.any()) else 1.0
    weights *= (num_classes + 1) / weights.sum()
    return weights.float()
