"""World-backed promptable segmenter with controllable fidelity.

The oracle answers prompts using a synthetic world's exact geometry, then
degrades the answer to one of three grades:

  perfect   the true mask, bit for bit
  dilated   the true mask grown by a square of the given radius, a
            systematic over-segmentation
  jittered  boundary pixels flipped at a fixed rate, keyed by frame and
            class so identical queries stay identical

Negative clicks matter: around each one the oracle erases spurious
foreground (predicted pixels the true object does not own), so prompt
refinement has a real lever to pull on the degraded grades while the
perfect grade stays exact. Propagation follows the clicked object's actual
motion and carries the clicks along with it.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import ndimage

from ..seeding import derive_seed
from ..synthworld import SyntheticWorld
from .prompts import PointPrompt

FIDELITIES = ("perfect", "dilated", "jittered")


class OracleSegmenter:
    concurrency_safe = True

    def __init__(
        self,
        world: SyntheticWorld,
        fidelity: str = "perfect",
        dilation_radius: int = 2,
        jitter_rate: float = 0.08,
        erase_radius: int = 3,
        seed: int = 0,
    ):
        if fidelity not in FIDELITIES:
            raise ValueError(f"fidelity must be one of {FIDELITIES}, got {fidelity!r}")
        if dilation_radius < 0 or erase_radius < 0:
            raise ValueError("radii must be non-negative")
        if not 0.0 <= jitter_rate <= 1.0:
            raise ValueError(f"jitter_rate must be in [0, 1], got {jitter_rate}")
        self.world = world
        self.fidelity = fidelity
        self.dilation_radius = dilation_radius
        self.jitter_rate = jitter_rate
        self.erase_radius = erase_radius
        self.seed = seed

    # -- internals ------------------------------------------------------------

    def _positives(self, points: Sequence[PointPrompt]):
        return [p for p in points if p.label == 1]

    def _target_class(self, video_id: str, t: int, points: Sequence[PointPrompt]) -> int | None:
        """Class the positive clicks most plausibly mean; ties break low."""
        positives = self._positives(points)
        if not positives:
            return None
        votes: dict[int, int] = {}
        for class_id in range(1, self.world.num_classes + 1):
            gt = self.world.gt_mask(video_id, t, class_id)
            n = sum(1 for p in positives if gt[p.y, p.x])
            if n:
                votes[class_id] = n
        if not votes:
            return None
        best = max(votes.values())
        return min(c for c, n in votes.items() if n == best)

    def _degrade(self, mask: np.ndarray, video_id: str, t: int, class_id: int) -> np.ndarray:
        if self.fidelity == "perfect" or not mask.any():
            return mask.copy()
        if self.fidelity == "dilated":
            if self.dilation_radius == 0:
                return mask.copy()
            footprint = np.ones((2 * self.dilation_radius + 1,) * 2, dtype=bool)
            return ndimage.binary_dilation(mask, structure=footprint, border_value=0)
        inner = mask & ~ndimage.binary_erosion(mask, border_value=0)
        outer = ndimage.binary_dilation(mask, border_value=0) & ~mask
        band = inner | outer
        rng = np.random.default_rng(
            derive_seed(self.seed, "jitter", video_id, t, class_id)
        )
        flips = band & (rng.random(mask.shape) < self.jitter_rate)
        return mask ^ flips

    def _apply_negatives(
        self, mask: np.ndarray, truth: np.ndarray, points: Sequence[PointPrompt]
    ) -> np.ndarray:
        """Erase predicted-but-untrue pixels near each negative click."""
        negatives = [p for p in points if p.label == 0]
        if not negatives or self.erase_radius == 0:
            return mask
        h, w = mask.shape
        yy, xx = np.ogrid[:h, :w]
        out = mask.copy()
        r2 = self.erase_radius**2
        for p in negatives:
            near = (xx - p.x) ** 2 + (yy - p.y) ** 2 <= r2
            out &= ~(near & ~truth)
        return out

    def _object_mask(self, video_id: str, anchor: int, class_id: int, t: int) -> np.ndarray:
        """Union mask at frame t of the actors that carry class_id at the
        anchor frame: propagation follows objects, not labels, so an
        identity flip between anchor and target is invisible to it."""
        video = self.world.video(video_id)
        w, h = self.world.resolution
        anchor_phase = video.phase_at(anchor)
        out = np.zeros((h, w), dtype=bool)
        for actor in video.actors:
            if actor.resolved_class(anchor_phase) == class_id:
                out |= actor.mask_at(t, w, h)
        return out

    # -- segmenter surface ------------------------------------------------------

    def segment_frame(self, video_id, frame_index, points):
        video = self.world.video(video_id)
        if not 0 <= frame_index < video.num_frames:
            raise ValueError(f"frame {frame_index} outside {video_id}")
        w, h = self.world.resolution
        class_id = self._target_class(video_id, frame_index, points)
        if class_id is None:
            return np.zeros((h, w), dtype=bool)
        truth = self.world.gt_mask(video_id, frame_index, class_id)
        mask = self._degrade(truth, video_id, frame_index, class_id)
        return self._apply_negatives(mask, truth, points)

    def propagate(self, video_id, frame_index, points, target_indices, seed_mask=None):
        video = self.world.video(video_id)
        if not 0 <= frame_index < video.num_frames:
            raise ValueError(f"frame {frame_index} outside {video_id}")
        for t in target_indices:
            if not 0 <= t < video.num_frames:
                raise ValueError(f"target {t} outside {video_id}")
        w, h = self.world.resolution

        if seed_mask is not None:
            class_id = self._class_from_mask(video_id, frame_index, seed_mask)
        else:
            class_id = self._target_class(video_id, frame_index, points)
        if class_id is None:
            return {int(t): np.zeros((h, w), dtype=bool) for t in target_indices}

        anchor_phase = video.phase_at(frame_index)
        tracked = [
            a for a in video.actors if a.resolved_class(anchor_phase) == class_id
        ]
        out = {}
        for t in target_indices:
            truth = self._object_mask(video_id, frame_index, class_id, t)
            mask = self._degrade(truth, video_id, t, class_id)
            if points and tracked:
                ax0, ay0 = tracked[0].position(frame_index, w)
                ax1, ay1 = tracked[0].position(t, w)
                dx, dy = ax1 - ax0, ay1 - ay0
                moved = [
                    PointPrompt(
                        x=int(np.clip(round(p.x + dx), 0, w - 1)),
                        y=int(np.clip(round(p.y + dy), 0, h - 1)),
                        label=p.label,
                    )
                    for p in points
                ]
                mask = self._apply_negatives(mask, truth, moved)
            out[int(t)] = mask
        return out

    def _class_from_mask(self, video_id: str, t: int, seed_mask: np.ndarray) -> int | None:
        """Class whose true mask the seed overlaps most; ties break low."""
        best_class, best_overlap = None, 0
        for class_id in range(1, self.world.num_classes + 1):
            overlap = int(np.count_nonzero(self.world.gt_mask(video_id, t, class_id) & seed_mask))
            if overlap > best_overlap:
                best_class, best_overlap = class_id, overlap
        return best_class
