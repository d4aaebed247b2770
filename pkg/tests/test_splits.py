import math

import pytest

from conftest import mem_manifest
from phaseseg.splits import SplitError, generate_splits, load_split_plan, save_split_plan


def test_five_videos_five_folds():
    m = mem_manifest(n_videos=5, n_frames=2)
    plan = generate_splits(m, n_folds=5, val_fraction=0.2, seed=7)
    for fold in plan.folds:
        assert len(fold.test_videos) == 1
        assert len(fold.val_videos) == 1
        assert len(fold.train_videos) == 3


def test_plan_is_deterministic_and_seed_sensitive():
    m = mem_manifest(n_videos=12, n_frames=2)
    a = generate_splits(m, n_folds=3, seed=11)
    b = generate_splits(m, n_folds=3, seed=11)
    c = generate_splits(m, n_folds=3, seed=12)
    assert a == b
    assert a != c


def test_video_mode_partition_invariants():
    m = mem_manifest(n_videos=53, n_frames=2)
    plan = generate_splits(m, n_folds=5, seed=3)
    sizes = sorted(len(f.test_videos) for f in plan.folds)
    assert sizes == [10, 10, 11, 11, 11]
    plan.validate(m.videos)  # partition per fold, disjoint + covering tests
    for fold in plan.folds:
        rest = 53 - len(fold.test_videos)
        assert len(fold.val_videos) == math.ceil(rest * 0.2)


def test_roundtrip_json(tmp_path):
    m = mem_manifest(n_videos=9, n_frames=2)
    plan = generate_splits(m, n_folds=3, seed=5)
    save_split_plan(plan, tmp_path / "splits.json")
    assert load_split_plan(tmp_path / "splits.json") == plan


def test_parameter_errors():
    m = mem_manifest(n_videos=4, n_frames=2)
    with pytest.raises(SplitError):
        generate_splits(m, n_folds=1)
    with pytest.raises(SplitError):
        generate_splits(m, n_folds=5)
    with pytest.raises(SplitError):
        generate_splits(m, n_folds=2, val_fraction=0.0)
    with pytest.raises(SplitError):
        generate_splits(m, n_folds=2, balance="pixels")


def test_frame_mode_excludes_unlabeled_videos_from_test_and_val():
    # videos 0..9 labeled, 10..14 without any human frame
    m = mem_manifest(n_videos=15, n_frames=4, labeled=lambda v, i: v < 10)
    plan = generate_splits(m, n_folds=3, seed=2, balance="frames")
    unlabeled = {f"vid{v:03d}" for v in range(10, 15)}
    tested = set()
    for fold in plan.folds:
        assert not (set(fold.test_videos) & unlabeled)
        assert not (set(fold.val_videos) & unlabeled)
        assert unlabeled <= set(fold.train_videos)
        tested |= set(fold.test_videos)
        # every fold still partitions the full video list
        all_vids = set(fold.test_videos) | set(fold.val_videos) | set(fold.train_videos)
        assert all_vids == set(m.videos)
    # eligible (labeled) videos are covered exactly once across test sets
    assert tested == {f"vid{v:03d}" for v in range(10)}


def test_frame_mode_balances_frame_counts():
    # one heavy video per batch of light ones; frame budgets should spread
    m = mem_manifest(n_videos=12, n_frames=6, labeled=lambda v, i: (i % (1 + v % 3)) == 0)
    plan = generate_splits(m, n_folds=3, seed=4, balance="frames")
    human = {v: 0 for v in m.videos}
    for f in m.frames:
        if f.label_provenance == "human":
            human[f.video_id] += 1
    budgets = [sum(human[v] for v in fold.test_videos) for fold in plan.folds]
    assert max(budgets) - min(budgets) <= max(human.values())
