"""Video-level cross-validation split plans.

Two balancing modes:

* ``balance="videos"`` (default): the test sets are a near-equal partition of
  all videos (sizes differ by at most one); across folds they are pairwise
  disjoint and jointly cover every video.
* ``balance="frames"``: test sets equalize human-labeled frame counts
  instead. Videos without a single human-labeled frame cannot be evaluated,
  so they are test-ineligible and always train; the test sets then cover
  every *eligible* video exactly once. Video counts per fold fall out of the
  frame distribution and may differ by more than one.

Either way every fold partitions the full video list into disjoint
train/val/test, and the same seed always reproduces the same plan.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .manifest import PROVENANCE_HUMAN, DatasetManifest
from .seeding import derive_seed


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class Fold:
    test_videos: tuple[str, ...]
    val_videos: tuple[str, ...]
    train_videos: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "test_videos", tuple(self.test_videos))
        object.__setattr__(self, "val_videos", tuple(self.val_videos))
        object.__setattr__(self, "train_videos", tuple(self.train_videos))


@dataclass(frozen=True)
class SplitPlan:
    folds: tuple[Fold, ...]
    seed: int
    val_fraction: float
    balance: str = "videos"

    def __post_init__(self):
        object.__setattr__(self, "folds", tuple(self.folds))

    @property
    def n_folds(self) -> int:
        return len(self.folds)

    def validate(self, videos) -> None:
        """Check split invariants against a video universe."""
        universe = set(videos)
        seen_test: set[str] = set()
        for k, fold in enumerate(self.folds):
            test, val, train = set(fold.test_videos), set(fold.val_videos), set(fold.train_videos)
            if test & val or test & train or val & train:
                raise SplitError(f"fold {k}: train/val/test overlap")
            if test | val | train != universe:
                missing = universe - (test | val | train)
                extra = (test | val | train) - universe
                raise SplitError(f"fold {k}: does not partition videos (missing {sorted(missing)}, extra {sorted(extra)})")
            if seen_test & test:
                raise SplitError(f"fold {k}: test videos reused across folds: {sorted(seen_test & test)}")
            seen_test |= test
        if self.balance == "videos" and seen_test != universe:
            raise SplitError(f"test sets do not cover all videos: missing {sorted(universe - seen_test)}")

    def to_json(self) -> dict:
        return {
            "n_folds": self.n_folds,
            "seed": self.seed,
            "val_fraction": self.val_fraction,
            "balance": self.balance,
            "folds": [
                {
                    "fold": k,
                    "test_videos": list(f.test_videos),
                    "val_videos": list(f.val_videos),
                    "train_videos": list(f.train_videos),
                }
                for k, f in enumerate(self.folds)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SplitPlan":
        folds = tuple(
            Fold(
                test_videos=tuple(f["test_videos"]),
                val_videos=tuple(f["val_videos"]),
                train_videos=tuple(f["train_videos"]),
            )
            for f in sorted(obj["folds"], key=lambda f: f["fold"])
        )
        return cls(
            folds=folds,
            seed=int(obj["seed"]),
            val_fraction=float(obj["val_fraction"]),
            balance=obj.get("balance", "videos"),
        )


def save_split_plan(plan: SplitPlan, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(plan.to_json(), sort_keys=True, indent=2) + "\n")


def load_split_plan(path) -> SplitPlan:
    return SplitPlan.from_json(json.loads(Path(path).read_text()))


def _chunk_near_equal(items: list[str], n: int) -> list[list[str]]:
    # first len % n chunks get the extra item
    q, r = divmod(len(items), n)
    chunks, pos = [], 0
    for k in range(n):
        size = q + (1 if k < r else 0)
        chunks.append(items[pos : pos + size])
        pos += size
    return chunks


def _chunk_by_frame_budget(items: list[str], counts: dict[str, int], n: int) -> list[list[str]]:
    # cumulative fill against equal frame budgets; every item lands in exactly
    # one chunk, chunk video counts follow the frame distribution
    total = sum(counts[v] for v in items)
    chunks: list[list[str]] = [[] for _ in range(n)]
    k, cum = 0, 0
    for i, v in enumerate(items):
        remaining_chunks = n - k
        if len(items) - i <= remaining_chunks - (1 if chunks[k] else 0) and chunks[k]:
            # never leave a later chunk empty
            k = min(k + 1, n - 1)
        chunks[k].append(v)
        cum += counts[v]
        if cum >= total * (k + 1) / n and k < n - 1:
            k += 1
    return chunks


def generate_splits(
    manifest: DatasetManifest,
    n_folds: int,
    val_fraction: float = 0.2,
    seed: int = 0,
    balance: str = "videos",
) -> SplitPlan:
    """Build a deterministic n-fold split plan at video granularity.

    Within every fold the videos are partitioned into disjoint
    train/val/test; val takes ceil(val_fraction * |non-test|) videos.
    """
    if balance not in ("videos", "frames"):
        raise SplitError(f"unknown balance mode {balance!r}")
    if not 0 < val_fraction < 1:
        raise SplitError(f"val_fraction must be in (0, 1), got {val_fraction}")
    videos = list(manifest.videos)
    if n_folds < 2 or n_folds > len(videos):
        raise SplitError(f"n_folds must be in [2, {len(videos)}], got {n_folds}")

    rng = np.random.default_rng(derive_seed(seed, "split", balance))
    order = list(np.array(videos, dtype=object)[rng.permutation(len(videos))])

    if balance == "videos":
        test_sets = _chunk_near_equal(order, n_folds)
    else:
        human_counts = {v: 0 for v in videos}
        for f in manifest.frames:
            if f.label_provenance == PROVENANCE_HUMAN:
                human_counts[f.video_id] += 1
        eligible = [v for v in order if human_counts[v] > 0]
        if len(eligible) < n_folds:
            raise SplitError(
                f"balance='frames' needs at least {n_folds} videos with human labels, "
                f"got {len(eligible)}"
            )
        test_sets = _chunk_by_frame_budget(eligible, human_counts, n_folds)

    folds = []
    for k, test in enumerate(test_sets):
        rest = [v for v in order if v not in set(test)]
        n_val = math.ceil(len(rest) * val_fraction)
        if balance == "frames":
            # val must be evaluable too; draw it from labeled videos only
            candidates = [v for v in rest if v in set(v2 for chunk in test_sets for v2 in chunk)]
            n_val = min(n_val, len(candidates))
        else:
            candidates = rest
        if n_val < 1 or n_val >= len(rest):
            raise SplitError(f"fold {k}: cannot carve a validation set from {len(rest)} videos")
        val_rng = np.random.default_rng(derive_seed(seed, "split-val", balance, k))
        val_pick = val_rng.choice(len(candidates), size=n_val, replace=False)
        val = [candidates[i] for i in sorted(val_pick)]
        train = [v for v in rest if v not in set(val)]
        folds.append(
            Fold(test_videos=tuple(sorted(test)), val_videos=tuple(sorted(val)), train_videos=tuple(sorted(train)))
        )
    plan = SplitPlan(folds=tuple(folds), seed=seed, val_fraction=val_fraction, balance=balance)
    plan.validate(videos)
    return plan
