"""Parametric synthetic surgery-like worlds.

A world describes a handful of videos, each with a phase timeline and a set
of moving geometric actors (disks, squares, bars) gliding on disjoint
horizontal lanes. Everything an actor does at frame t (position, size,
rendered intensity) is a pure function of the world description and the
frame index, so ground truth for *any* frame is reconstructible without
rendering to disk first. The same description drives the oracle prompt
segmenter used to exercise the pseudo-label engine.

With an ambiguous pair, two tool classes share one actor whose class id is
dictated purely by the phase at the frame: the rendering is pixel-identical
between the two identities, so nothing in the image distinguishes them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .manifest import (
    PROVENANCE_HUMAN,
    PROVENANCE_NONE,
    DatasetManifest,
    FrameRecord,
    PhaseTrack,
    save_manifest,
)
from .rasters import write_image, write_label_map
from .seeding import derive_seed
from .taxonomy import NULL_PHASE, PhaseTaxonomy, ToolTaxonomy

SHAPES = ("disk", "square", "bar")


def _bounce(p0: float, v: float, t: int, lo: float, hi: float) -> float:
    """Position of a point bouncing between lo and hi at constant speed."""
    span = hi - lo
    if span <= 0:
        return lo
    x = (p0 - lo + v * t) % (2.0 * span)
    return lo + (span - abs(x - span))


@dataclass(frozen=True)
class Actor:
    """One moving shape; class identity may depend on the current phase."""

    shape: str
    size: float
    intensity: float
    x0: float
    y0: float
    vx: float
    vy: float
    lane: tuple[float, float]  # (y_lo, y_hi) band the center stays inside
    class_id: int
    class_by_phase: tuple[tuple[int, int], ...] = ()
    pulse_amp: float = 0.0
    pulse_period: float = 60.0
    pulse_offset: float = 0.0

    def resolved_class(self, phase_id: int) -> int:
        for p, c in self.class_by_phase:
            if p == phase_id:
                return c
        return self.class_id

    def extent_x(self) -> float:
        """Horizontal half-extent of the rendered shape at full pulse."""
        base = 2.0 * self.size if self.shape == "bar" else self.size
        return base * (1.0 + abs(self.pulse_amp))

    def position(self, t: int, width: int) -> tuple[float, float]:
        margin = self.extent_x() + 2.0
        x = _bounce(self.x0, self.vx, t, margin, width - margin)
        y = _bounce(self.y0, self.vy, t, self.lane[0], self.lane[1])
        return x, y

    def size_at(self, t: int) -> float:
        if self.pulse_amp == 0.0:
            return self.size
        wobble = math.sin(2.0 * math.pi * t / self.pulse_period + self.pulse_offset)
        return self.size * (1.0 + self.pulse_amp * wobble)

    def mask_at(self, t: int, width: int, height: int) -> np.ndarray:
        cx, cy = self.position(t, width)
        r = self.size_at(t)
        yy, xx = np.ogrid[:height, :width]
        if self.shape == "disk":
            return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        if self.shape == "square":
            return (np.abs(xx - cx) <= r) & (np.abs(yy - cy) <= r)
        if self.shape == "bar":
            return (np.abs(xx - cx) <= 2.0 * r) & (np.abs(yy - cy) <= max(1.0, 0.6 * r))
        raise ValueError(f"unknown shape {self.shape!r}")

    def to_json(self) -> dict:
        return {
            "shape": self.shape,
            "size": self.size,
            "intensity": self.intensity,
            "x0": self.x0,
            "y0": self.y0,
            "vx": self.vx,
            "vy": self.vy,
            "lane": list(self.lane),
            "class_id": self.class_id,
            "class_by_phase": [list(pc) for pc in self.class_by_phase],
            "pulse_amp": self.pulse_amp,
            "pulse_period": self.pulse_period,
            "pulse_offset": self.pulse_offset,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Actor":
        return cls(
            shape=obj["shape"],
            size=float(obj["size"]),
            intensity=float(obj["intensity"]),
            x0=float(obj["x0"]),
            y0=float(obj["y0"]),
            vx=float(obj["vx"]),
            vy=float(obj["vy"]),
            lane=tuple(obj["lane"]),
            class_id=int(obj["class_id"]),
            class_by_phase=tuple(tuple(pc) for pc in obj["class_by_phase"]),
            pulse_amp=float(obj.get("pulse_amp", 0.0)),
            pulse_period=float(obj.get("pulse_period", 60.0)),
            pulse_offset=float(obj.get("pulse_offset", 0.0)),
        )


@dataclass(frozen=True)
class VideoSpec:
    video_id: str
    num_frames: int
    segments: tuple[tuple[int, int, int], ...]
    actors: tuple[Actor, ...]

    def phase_at(self, t: int) -> int:
        for start, end, phase in self.segments:
            if start <= t < end:
                return phase
        return NULL_PHASE

    def to_json(self) -> dict:
        return {
            "video_id": self.video_id,
            "num_frames": self.num_frames,
            "segments": [list(s) for s in self.segments],
            "actors": [a.to_json() for a in self.actors],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VideoSpec":
        return cls(
            video_id=obj["video_id"],
            num_frames=int(obj["num_frames"]),
            segments=tuple(tuple(s) for s in obj["segments"]),
            actors=tuple(Actor.from_json(a) for a in obj["actors"]),
        )


@dataclass(frozen=True)
class SyntheticWorld:
    resolution: tuple[int, int]  # (width, height)
    num_classes: int
    num_phases: int
    seed: int
    videos: tuple[VideoSpec, ...]
    background: float = 0.15
    noise_level: float = 0.05
    intensity_jitter: float = 0.0
    ambiguous_pair: tuple[int, int] | None = None
    tool_names: tuple[str, ...] = field(default=())
    phase_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.tool_names:
            object.__setattr__(
                self, "tool_names", tuple(f"tool_{c}" for c in range(1, self.num_classes + 1))
            )
        if not self.phase_names:
            object.__setattr__(
                self, "phase_names", tuple(f"phase_{p}" for p in range(self.num_phases))
            )

    # -- lookups ------------------------------------------------------------

    def video(self, video_id: str) -> VideoSpec:
        for v in self.videos:
            if v.video_id == video_id:
                return v
        raise KeyError(f"no video {video_id} in world")

    def phase_at(self, video_id: str, t: int) -> int:
        return self.video(video_id).phase_at(t)

    # -- ground truth ---------------------------------------------------------

    def gt_mask(self, video_id: str, t: int, class_id: int) -> np.ndarray:
        """Exact binary mask of one tool class at a frame."""
        video = self.video(video_id)
        w, h = self.resolution
        phase = video.phase_at(t)
        out = np.zeros((h, w), dtype=bool)
        for actor in video.actors:
            if actor.resolved_class(phase) == class_id:
                out |= actor.mask_at(t, w, h)
        return out

    def label_map(self, video_id: str, t: int) -> np.ndarray:
        """Dense class-id map at a frame (actors occupy disjoint lanes)."""
        video = self.video(video_id)
        w, h = self.resolution
        phase = video.phase_at(t)
        out = np.zeros((h, w), dtype=np.uint8)
        for actor in video.actors:
            out[actor.mask_at(t, w, h)] = actor.resolved_class(phase)
        return out

    def actor_for_class(self, video_id: str, t: int, class_id: int) -> Actor | None:
        video = self.video(video_id)
        phase = video.phase_at(t)
        for actor in video.actors:
            if actor.resolved_class(phase) == class_id:
                return actor
        return None

    def render_image(self, video_id: str, t: int) -> np.ndarray:
        """Noisy grayscale frame, uint8. Depends on geometry and phase-agnostic
        appearance only: swapping an ambiguous pair's identities cannot change
        a single pixel."""
        video = self.video(video_id)
        w, h = self.resolution
        rng = np.random.default_rng(derive_seed(self.seed, "render", video_id, t))
        img = rng.normal(self.background, self.noise_level, size=(h, w))
        for idx, actor in enumerate(video.actors):
            level = actor.intensity
            if self.intensity_jitter > 0:
                jrng = np.random.default_rng(derive_seed(self.seed, "glint", video_id, t, idx))
                level = level + jrng.normal(0.0, self.intensity_jitter)
            img[actor.mask_at(t, w, h)] = level
        return (np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)

    # -- taxonomies ---------------------------------------------------------

    def tool_taxonomy(self) -> ToolTaxonomy:
        return ToolTaxonomy(names=self.tool_names)

    def phase_taxonomy(self) -> PhaseTaxonomy:
        return PhaseTaxonomy(names=self.phase_names)

    def phase_track(self, video_id: str) -> PhaseTrack:
        v = self.video(video_id)
        return PhaseTrack(video_id=v.video_id, num_frames=v.num_frames, segments=v.segments)

    # -- serialization --------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "resolution": list(self.resolution),
            "num_classes": self.num_classes,
            "num_phases": self.num_phases,
            "seed": self.seed,
            "background": self.background,
            "noise_level": self.noise_level,
            "intensity_jitter": self.intensity_jitter,
            "ambiguous_pair": list(self.ambiguous_pair) if self.ambiguous_pair else None,
            "tool_names": list(self.tool_names),
            "phase_names": list(self.phase_names),
            "videos": [v.to_json() for v in self.videos],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SyntheticWorld":
        pair = obj.get("ambiguous_pair")
        return cls(
            resolution=tuple(obj["resolution"]),
            num_classes=int(obj["num_classes"]),
            num_phases=int(obj["num_phases"]),
            seed=int(obj["seed"]),
            background=float(obj.get("background", 0.15)),
            noise_level=float(obj.get("noise_level", 0.05)),
            intensity_jitter=float(obj.get("intensity_jitter", 0.0)),
            ambiguous_pair=tuple(pair) if pair else None,
            tool_names=tuple(obj.get("tool_names", ())),
            phase_names=tuple(obj.get("phase_names", ())),
            videos=tuple(VideoSpec.from_json(v) for v in obj["videos"]),
        )


def save_world(world: SyntheticWorld, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(world.to_json(), sort_keys=True, indent=2) + "\n")


def load_world(path) -> SyntheticWorld:
    return SyntheticWorld.from_json(json.loads(Path(path).read_text()))


def swap_ambiguous_classes(world: SyntheticWorld) -> SyntheticWorld:
    """Exchange the two identities of the ambiguous pair everywhere."""
    if world.ambiguous_pair is None:
        raise ValueError("world has no ambiguous pair")
    a, b = world.ambiguous_pair
    swap = {a: b, b: a}
    videos = []
    for v in world.videos:
        actors = tuple(
            replace(
                actor,
                class_id=swap.get(actor.class_id, actor.class_id),
                class_by_phase=tuple((p, swap.get(c, c)) for p, c in actor.class_by_phase),
            )
            for actor in v.actors
        )
        videos.append(replace(v, actors=actors))
    return replace(world, videos=tuple(videos))


# -- world construction ---------------------------------------------------------


def build_world(
    n_videos: int = 4,
    frames_per_video=240,
    n_classes: int = 2,
    n_phases: int = 4,
    resolution: tuple[int, int] = (64, 64),
    seed: int = 0,
    ambiguous_pair: bool = False,
    segment_frames: int = 40,
    noise_level: float = 0.05,
    intensity_jitter: float = 0.0,
    pulse_amp: float = 0.0,
) -> SyntheticWorld:
    """Randomized but fully deterministic world under one seed.

    Each video cycles through the phases in order with segment lengths
    jittered around segment_frames. One actor per tool class rides its own
    horizontal lane; with ambiguous_pair=True classes 1 and 2 share a single
    actor whose identity is the current phase group (first half of the
    phases -> class 1, second half -> class 2), rendered identically.
    """
    if ambiguous_pair and (n_classes < 2 or n_phases < 2):
        raise ValueError("an ambiguous pair needs >= 2 classes and >= 2 phases")
    w, h = resolution
    if isinstance(frames_per_video, int):
        frame_counts = [frames_per_video] * n_videos
    else:
        frame_counts = list(frames_per_video)
        if len(frame_counts) != n_videos:
            raise ValueError(f"need {n_videos} frame counts, got {len(frame_counts)}")

    n_actors = n_classes - 1 if ambiguous_pair else n_classes
    lane_h = h / max(n_actors, 1)
    videos = []
    for vi in range(n_videos):
        vid = f"video{vi:03d}"
        num_frames = frame_counts[vi]
        rng = np.random.default_rng(derive_seed(seed, "video", vi))

        segments = []
        pos, phase = 0, 0
        while pos < num_frames:
            length = int(rng.integers(max(segment_frames // 2, 4), segment_frames * 3 // 2 + 1))
            end = min(pos + length, num_frames)
            segments.append((pos, end, phase))
            phase = (phase + 1) % n_phases
            pos = end

        actors = []
        for ai in range(n_actors):
            lane_lo = ai * lane_h
            lane_hi = (ai + 1) * lane_h
            size = float(rng.uniform(0.16, 0.24) * lane_h)
            margin = size * (1.0 + abs(pulse_amp)) + 2.0
            lane = (lane_lo + margin, max(lane_lo + margin, lane_hi - margin))
            if ambiguous_pair and ai == 0:
                class_id = 1
                half = max(1, n_phases // 2)
                class_by_phase = tuple(
                    (p, 1 if p < half else 2) for p in range(n_phases)
                )
                shape = "disk"
                intensity = 0.85
            else:
                class_id = ai + 2 if ambiguous_pair else ai + 1
                class_by_phase = ()
                shape = SHAPES[class_id % len(SHAPES)]
                intensity = 0.55 + 0.12 * ((class_id - 1) % 3)
            actors.append(
                Actor(
                    shape=shape,
                    size=size,
                    intensity=intensity,
                    x0=float(rng.uniform(margin, w - margin)),
                    y0=float(rng.uniform(lane[0], lane[1])) if lane[1] > lane[0] else lane[0],
                    vx=float(rng.uniform(0.3, 1.2) * rng.choice((-1, 1))),
                    vy=float(rng.uniform(0.1, 0.5) * rng.choice((-1, 1))),
                    lane=lane,
                    class_id=class_id,
                    class_by_phase=class_by_phase,
                    pulse_amp=pulse_amp,
                    pulse_period=float(rng.uniform(40.0, 90.0)),
                    pulse_offset=float(rng.uniform(0.0, 2.0 * math.pi)),
                )
            )
        videos.append(
            VideoSpec(video_id=vid, num_frames=num_frames, segments=tuple(segments), actors=tuple(actors))
        )
    return SyntheticWorld(
        resolution=resolution,
        num_classes=n_classes,
        num_phases=n_phases,
        seed=seed,
        noise_level=noise_level,
        intensity_jitter=intensity_jitter,
        ambiguous_pair=(1, 2) if ambiguous_pair else None,
        videos=tuple(videos),
    )


# -- dataset emission ----------------------------------------------------------


def emit_dataset(
    world: SyntheticWorld,
    out_dir,
    extract_stride: int = 30,
    label_every: int = 1,
    unlabeled_videos: tuple[str, ...] = (),
    manifest_name: str = "manifest.json",
) -> DatasetManifest:
    """Render a world to disk as a manifest-backed dataset.

    Frames are extracted every extract_stride native frames. Every
    label_every-th extracted frame of a video gets a human label map; videos
    listed in unlabeled_videos get none at all. The world description is
    saved alongside as world.json so oracle segmenters can be rebuilt.
    """
    if extract_stride < 1 or label_every < 1:
        raise ValueError("extract_stride and label_every must be >= 1")
    out = Path(out_dir)
    frames = []
    for video in world.videos:
        track = world.phase_track(video.video_id)
        extracted = list(range(0, video.num_frames, extract_stride))
        for pos, t in enumerate(extracted):
            image_rel = f"images/{video.video_id}/{t:06d}.png"
            write_image(out / image_rel, world.render_image(video.video_id, t))
            labeled = (pos % label_every == 0) and video.video_id not in unlabeled_videos
            label_rel = None
            if labeled:
                label_rel = f"labels/{video.video_id}/{t:06d}.png"
                write_label_map(out / label_rel, world.label_map(video.video_id, t))
            frames.append(
                FrameRecord(
                    video_id=video.video_id,
                    frame_index=t,
                    image_path=image_rel,
                    width=world.resolution[0],
                    height=world.resolution[1],
                    phase_id=track.phase_at(t),
                    label_map_path=label_rel,
                    label_provenance=PROVENANCE_HUMAN if labeled else PROVENANCE_NONE,
                )
            )
    manifest = DatasetManifest(
        tool_taxonomy=world.tool_taxonomy(),
        phase_taxonomy=world.phase_taxonomy(),
        native_resolution=world.resolution,
        working_resolution=world.resolution,
        phase_tracks=tuple(world.phase_track(v.video_id) for v in world.videos),
        frames=tuple(frames),
        root=out,
    )
    save_manifest(manifest, out / manifest_name)
    save_world(world, out / "world.json")
    return manifest


# -- predicted-phase corruption ---------------------------------------------------


def corrupt_phase_tracks(
    world: SyntheticWorld, accuracy: float, seed: int = 0
) -> dict[str, PhaseTrack]:
    """Phase tracks wrong on an exact (1 - accuracy) fraction of frames.

    Corrupted frames get a uniformly drawn *different* phase, mimicking a
    frame classifier of the stated accuracy; runs of equal predictions are
    compressed back into segments. Frames in annotation gaps stay null.
    """
    if not 0.0 <= accuracy <= 1.0:
        raise ValueError(f"accuracy must be in [0, 1], got {accuracy}")
    if world.num_phases < 2 and accuracy < 1.0:
        raise ValueError("cannot corrupt a single-phase world")
    tracks = {}
    for video in world.videos:
        rng = np.random.default_rng(derive_seed(seed, "phasenoise", video.video_id))
        per_frame = np.array(
            [video.phase_at(t) for t in range(video.num_frames)], dtype=np.int64
        )
        coverable = np.nonzero(per_frame != NULL_PHASE)[0]
        n_corrupt = int(round(len(coverable) * (1.0 - accuracy)))
        victims = rng.choice(len(coverable), size=n_corrupt, replace=False) if n_corrupt else []
        for j in victims:
            t = coverable[j]
            true = per_frame[t]
            wrong = int(rng.integers(0, world.num_phases - 1))
            per_frame[t] = wrong if wrong < true else wrong + 1
        segments = []
        start = 0
        for t in range(1, video.num_frames + 1):
            if t == video.num_frames or per_frame[t] != per_frame[start]:
                if per_frame[start] != NULL_PHASE:
                    segments.append((start, t, int(per_frame[start])))
                start = t
        tracks[video.video_id] = PhaseTrack(
            video_id=video.video_id, num_frames=video.num_frames, segments=tuple(segments)
        )
    return tracks
