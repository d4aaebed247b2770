import numpy as np
import pytest

from phaseseg.manifest import load_manifest
from phaseseg.rasters import read_label_map
from phaseseg.synthworld import (
    Actor,
    SyntheticWorld,
    VideoSpec,
    build_world,
    corrupt_phase_tracks,
    emit_dataset,
    load_world,
    save_world,
    swap_ambiguous_classes,
)
from phaseseg.taxonomy import NULL_PHASE


def test_render_is_deterministic_per_seed():
    a = build_world(n_videos=2, frames_per_video=50, seed=11)
    b = build_world(n_videos=2, frames_per_video=50, seed=11)
    c = build_world(n_videos=2, frames_per_video=50, seed=12)
    for t in (0, 17, 49):
        assert np.array_equal(a.render_image("video001", t), b.render_image("video001", t))
    assert any(
        not np.array_equal(a.render_image("video000", t), c.render_image("video000", t))
        for t in range(0, 50, 10)
    )


def test_world_json_round_trip(tmp_path):
    world = build_world(n_videos=3, frames_per_video=80, n_classes=3, seed=5, ambiguous_pair=True)
    save_world(world, tmp_path / "world.json")
    loaded = load_world(tmp_path / "world.json")
    assert loaded.to_json() == world.to_json()
    assert np.array_equal(
        loaded.render_image("video002", 42), world.render_image("video002", 42)
    )
    assert np.array_equal(loaded.label_map("video001", 7), world.label_map("video001", 7))


def test_label_map_matches_per_class_masks():
    world = build_world(n_videos=1, frames_per_video=60, n_classes=3, seed=2)
    for t in (0, 30, 59):
        label_map = world.label_map("video000", t)
        rebuilt = np.zeros_like(label_map)
        for c in (1, 2, 3):
            mask = world.gt_mask("video000", t, c)
            assert not (rebuilt[mask] > 0).any(), "class masks must not overlap"
            rebuilt[mask] = c
        assert np.array_equal(rebuilt, label_map)


def test_actors_stay_inside_the_frame():
    world = build_world(n_videos=2, frames_per_video=200, n_classes=2, seed=9, pulse_amp=0.25)
    for video in world.videos:
        for t in range(0, 200, 13):
            lm = world.label_map(video.video_id, t)
            assert lm.any()
            assert not lm[0, :].any() and not lm[-1, :].any()
            assert not lm[:, 0].any() and not lm[:, -1].any()


def test_phase_segments_cover_video_and_cycle():
    world = build_world(n_videos=1, frames_per_video=150, n_phases=3, seed=4)
    video = world.videos[0]
    assert video.segments[0][0] == 0
    assert video.segments[-1][1] == video.num_frames
    for (s0, e0, p0), (s1, e1, p1) in zip(video.segments, video.segments[1:]):
        assert e0 == s1
        assert p1 == (p0 + 1) % 3
    assert all(video.phase_at(t) != NULL_PHASE for t in range(150))


def test_pulse_varies_mask_area():
    world = build_world(n_videos=1, frames_per_video=120, n_classes=1, seed=6, pulse_amp=0.3)
    areas = {
        int(np.count_nonzero(world.gt_mask("video000", t, 1))) for t in range(0, 120, 10)
    }
    assert len(areas) > 1


class TestAmbiguousPair:
    def test_pair_shares_one_actor(self):
        world = build_world(n_videos=1, frames_per_video=40, n_classes=3, seed=1, ambiguous_pair=True)
        assert world.ambiguous_pair == (1, 2)
        assert len(world.videos[0].actors) == 2
        shared = world.videos[0].actors[0]
        phases = dict(shared.class_by_phase)
        assert set(phases.values()) == {1, 2}

    def test_swapping_identities_changes_no_pixel(self):
        world = build_world(
            n_videos=2, frames_per_video=60, n_classes=3, n_phases=6, seed=8, ambiguous_pair=True
        )
        swapped = swap_ambiguous_classes(world)
        label_changed = False
        for video in world.videos:
            for t in range(0, 60, 7):
                assert np.array_equal(
                    world.render_image(video.video_id, t),
                    swapped.render_image(video.video_id, t),
                )
                if not np.array_equal(
                    world.label_map(video.video_id, t), swapped.label_map(video.video_id, t)
                ):
                    label_changed = True
        assert label_changed

    def test_swap_requires_a_pair(self):
        with pytest.raises(ValueError, match="ambiguous pair"):
            swap_ambiguous_classes(build_world(n_videos=1, frames_per_video=10, seed=0))


class TestEmitDataset:
    def test_manifest_loads_and_files_validate(self, tmp_path):
        world = build_world(n_videos=2, frames_per_video=90, n_classes=2, seed=3)
        emitted = emit_dataset(world, tmp_path, extract_stride=30, label_every=1)
        loaded = load_manifest(tmp_path / "manifest.json", check_files=True)
        assert len(loaded.frames) == len(emitted.frames) == 6
        assert all(f.label_provenance == "human" for f in loaded.frames)

    def test_label_every_and_unlabeled_videos(self, tmp_path):
        world = build_world(n_videos=2, frames_per_video=120, seed=3)
        manifest = emit_dataset(
            world, tmp_path, extract_stride=30, label_every=2, unlabeled_videos=("video001",)
        )
        v0 = [f for f in manifest.frames_of("video000")]
        assert [f.has_label for f in v0] == [True, False, True, False]
        assert not any(f.has_label for f in manifest.frames_of("video001"))

    def test_emitted_labels_match_world(self, tmp_path):
        world = build_world(n_videos=1, frames_per_video=60, n_classes=2, seed=14)
        manifest = emit_dataset(world, tmp_path, extract_stride=30)
        for frame in manifest.frames:
            stored = read_label_map(manifest.resolve(frame.label_map_path))
            assert np.array_equal(stored, world.label_map(frame.video_id, frame.frame_index))
            assert frame.phase_id == world.phase_at(frame.video_id, frame.frame_index)

    def test_per_video_frame_counts(self, tmp_path):
        world = build_world(n_videos=3, frames_per_video=(30, 60, 90), seed=0)
        manifest = emit_dataset(world, tmp_path, extract_stride=30)
        assert [len(manifest.frames_of(v)) for v in manifest.videos] == [1, 2, 3]

    def test_rejects_bad_strides(self, tmp_path):
        world = build_world(n_videos=1, frames_per_video=10, seed=0)
        with pytest.raises(ValueError):
            emit_dataset(world, tmp_path, extract_stride=0)
        with pytest.raises(ValueError):
            emit_dataset(world, tmp_path, label_every=0)


class TestCorruptPhaseTracks:
    def test_exact_accuracy_fraction(self):
        world = build_world(n_videos=2, frames_per_video=200, n_phases=6, seed=21)
        for accuracy in (1.0, 0.5, 0.25):
            tracks = corrupt_phase_tracks(world, accuracy=accuracy, seed=3)
            for video in world.videos:
                track = tracks[video.video_id]
                hits = sum(
                    track.phase_at(t) == video.phase_at(t) for t in range(video.num_frames)
                )
                assert hits == round(accuracy * video.num_frames)

    def test_corrupted_phases_are_valid_and_different(self):
        world = build_world(n_videos=1, frames_per_video=100, n_phases=4, seed=2)
        track = corrupt_phase_tracks(world, accuracy=0.0, seed=0)["video000"]
        for t in range(100):
            assert 0 <= track.phase_at(t) < 4
            assert track.phase_at(t) != world.phase_at("video000", t)

    def test_determinism_and_validation(self):
        world = build_world(n_videos=1, frames_per_video=50, seed=1)
        a = corrupt_phase_tracks(world, accuracy=0.6, seed=9)["video000"]
        b = corrupt_phase_tracks(world, accuracy=0.6, seed=9)["video000"]
        assert a == b
        with pytest.raises(ValueError):
            corrupt_phase_tracks(world, accuracy=1.5)

    def test_null_gaps_stay_null(self):
        actor = Actor(
            shape="disk", size=4.0, intensity=0.8, x0=20.0, y0=20.0, vx=0.5, vy=0.2,
            lane=(10.0, 30.0), class_id=1,
        )
        video = VideoSpec(
            video_id="v", num_frames=40, segments=((0, 10, 0), (20, 40, 1)), actors=(actor,)
        )
        world = SyntheticWorld(
            resolution=(48, 48), num_classes=1, num_phases=2, seed=0, videos=(video,)
        )
        track = corrupt_phase_tracks(world, accuracy=0.5, seed=4)["v"]
        assert all(track.phase_at(t) == NULL_PHASE for t in range(10, 20))
