"""Dataset manifest: frame records, phase tracks, serialization, validation.

A dataset on disk is a directory holding ``manifest.json`` (taxonomies,
resolutions, phase tracks) plus ``frames.jsonl`` with one frame record per
line. All paths inside the manifest are relative to the manifest's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .rasters import image_size
from .taxonomy import NULL_PHASE, PhaseTaxonomy, ToolTaxonomy

FORMAT_VERSION = 1

PROVENANCE_HUMAN = "human"
PROVENANCE_PSEUDO = "pseudo"
PROVENANCE_NONE = "none"
PROVENANCES = (PROVENANCE_HUMAN, PROVENANCE_PSEUDO, PROVENANCE_NONE)


class ManifestError(ValueError):
    """Raised when a manifest file cannot be parsed at all."""


class ManifestValidationError(ValueError):
    """Raised on the first violated manifest invariant; message names it."""


@dataclass(frozen=True)
class FrameRecord:
    """One extracted video frame and its (optional) dense annotation."""

    video_id: str
    frame_index: int
    image_path: str
    width: int
    height: int
    phase_id: int
    label_map_path: str | None = None
    label_provenance: str = PROVENANCE_NONE

    @property
    def key(self) -> tuple[str, int]:
        return (self.video_id, self.frame_index)

    @property
    def has_label(self) -> bool:
        return self.label_provenance != PROVENANCE_NONE

    def to_json(self) -> dict:
        return {
            "video_id": self.video_id,
            "frame_index": self.frame_index,
            "image_path": self.image_path,
            "width": self.width,
            "height": self.height,
            "phase_id": self.phase_id,
            "label_map_path": self.label_map_path,
            "label_provenance": self.label_provenance,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FrameRecord":
        return cls(
            video_id=obj["video_id"],
            frame_index=int(obj["frame_index"]),
            image_path=obj["image_path"],
            width=int(obj["width"]),
            height=int(obj["height"]),
            phase_id=int(obj["phase_id"]),
            label_map_path=obj.get("label_map_path"),
            label_provenance=obj.get("label_provenance", PROVENANCE_NONE),
        )


@dataclass(frozen=True)
class PhaseTrack:
    """Per-video phase timeline as half-open [start, end) segments.

    Segments are sorted, non-overlapping and lie inside [0, num_frames).
    Frames not covered by any segment map to NULL_PHASE, so deliberate
    annotation gaps are representable.
    """

    video_id: str
    num_frames: int
    segments: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        if self.num_frames <= 0:
            raise ManifestValidationError(
                f"track {self.video_id}: num_frames must be positive, got {self.num_frames}"
            )
        segs = tuple(tuple(int(v) for v in s) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        prev_end = 0
        for start, end, phase in segs:
            if start >= end:
                raise ManifestValidationError(
                    f"track {self.video_id}: empty segment [{start}, {end})"
                )
            if start < prev_end:
                raise ManifestValidationError(
                    f"track {self.video_id}: segments overlap or are unsorted at [{start}, {end})"
                )
            if end > self.num_frames:
                raise ManifestValidationError(
                    f"track {self.video_id}: segment [{start}, {end}) exceeds "
                    f"num_frames {self.num_frames}"
                )
            if phase < 0:
                raise ManifestValidationError(
                    f"track {self.video_id}: segment phase id {phase} is negative"
                )
            prev_end = end

    def phase_at(self, frame_index: int) -> int:
        """Phase id at a frame; NULL_PHASE in gaps; error out of range."""
        if not 0 <= frame_index < self.num_frames:
            raise ManifestValidationError(
                f"track {self.video_id}: frame_index {frame_index} outside "
                f"[0, {self.num_frames})"
            )
        for start, end, phase in self.segments:
            if start <= frame_index < end:
                return phase
            if frame_index < start:
                break
        return NULL_PHASE

    def to_json(self) -> dict:
        return {
            "video_id": self.video_id,
            "num_frames": self.num_frames,
            "segments": [list(s) for s in self.segments],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PhaseTrack":
        return cls(
            video_id=obj["video_id"],
            num_frames=int(obj["num_frames"]),
            segments=tuple(tuple(s) for s in obj["segments"]),
        )


def phase_of_frame(track: PhaseTrack, frame_index: int) -> int:
    """Phase id governing a frame under a track (NULL_PHASE in gaps)."""
    return track.phase_at(frame_index)


@dataclass(frozen=True)
class DatasetManifest:
    """Immutable description of a dataset: taxonomies, tracks, frames."""

    tool_taxonomy: ToolTaxonomy
    phase_taxonomy: PhaseTaxonomy
    native_resolution: tuple[int, int]
    working_resolution: tuple[int, int]
    phase_tracks: tuple[PhaseTrack, ...]
    frames: tuple[FrameRecord, ...]
    root: Path | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "native_resolution", tuple(self.native_resolution))
        object.__setattr__(self, "working_resolution", tuple(self.working_resolution))
        object.__setattr__(self, "phase_tracks", tuple(self.phase_tracks))
        frames = tuple(sorted(self.frames, key=lambda f: f.key))
        object.__setattr__(self, "frames", frames)
        self._validate_structure()

    # -- validation -------------------------------------------------------

    def _validate_structure(self) -> None:
        for res, kind in ((self.native_resolution, "native"), (self.working_resolution, "working")):
            if len(res) != 2 or res[0] <= 0 or res[1] <= 0:
                raise ManifestValidationError(f"{kind}_resolution must be positive (w, h), got {res}")
        tracks = {}
        for track in self.phase_tracks:
            if track.video_id in tracks:
                raise ManifestValidationError(f"duplicate phase track for video {track.video_id}")
            for _, _, phase in track.segments:
                if not 0 <= phase < self.phase_taxonomy.num_phases:
                    raise ManifestValidationError(
                        f"track {track.video_id}: phase id {phase} not in taxonomy"
                    )
            tracks[track.video_id] = track
        seen = set()
        for f in self.frames:
            if f.key in seen:
                raise ManifestValidationError(
                    f"duplicate frame record ({f.video_id}, {f.frame_index})"
                )
            seen.add(f.key)
            track = tracks.get(f.video_id)
            if track is None:
                raise ManifestValidationError(
                    f"frame ({f.video_id}, {f.frame_index}): video has no phase track"
                )
            expected = track.phase_at(f.frame_index)
            if f.phase_id != expected:
                raise ManifestValidationError(
                    f"frame ({f.video_id}, {f.frame_index}): phase_id {f.phase_id} "
                    f"does not match track phase {expected}"
                )
            if f.label_provenance not in PROVENANCES:
                raise ManifestValidationError(
                    f"frame ({f.video_id}, {f.frame_index}): unknown provenance "
                    f"{f.label_provenance!r}"
                )
            if (f.label_map_path is None) != (f.label_provenance == PROVENANCE_NONE):
                raise ManifestValidationError(
                    f"frame ({f.video_id}, {f.frame_index}): label_map_path and "
                    f"provenance {f.label_provenance!r} disagree"
                )
            if f.width <= 0 or f.height <= 0:
                raise ManifestValidationError(
                    f"frame ({f.video_id}, {f.frame_index}): non-positive size "
                    f"{f.width}x{f.height}"
                )

    def validate_files(self, root: Path | None = None) -> None:
        """Check that every referenced file exists with matching geometry."""
        base = Path(root) if root is not None else self.root
        if base is None:
            raise ManifestValidationError("no root directory known; pass root=")
        for f in self.frames:
            img = base / f.image_path
            if not img.is_file():
                raise ManifestValidationError(
                    f"frame ({f.video_id}, {f.frame_index}): missing image {f.image_path}"
                )
            w, h = image_size(img)
            if (w, h) != (f.width, f.height):
                raise ManifestValidationError(
                    f"frame ({f.video_id}, {f.frame_index}): image is {w}x{h}, "
                    f"record says {f.width}x{f.height}"
                )
            if f.label_map_path is not None:
                lab = base / f.label_map_path
                if not lab.is_file():
                    raise ManifestValidationError(
                        f"frame ({f.video_id}, {f.frame_index}): missing label map "
                        f"{f.label_map_path}"
                    )
                lw, lh = image_size(lab)
                if (lw, lh) != (f.width, f.height):
                    raise ManifestValidationError(
                        f"frame ({f.video_id}, {f.frame_index}): label map is "
                        f"{lw}x{lh}, frame is {f.width}x{f.height}"
                    )

    # -- accessors --------------------------------------------------------

    @property
    def videos(self) -> tuple[str, ...]:
        return tuple(t.video_id for t in self.phase_tracks)

    def track_for(self, video_id: str) -> PhaseTrack:
        for t in self.phase_tracks:
            if t.video_id == video_id:
                return t
        raise KeyError(f"no phase track for video {video_id}")

    def frames_of(self, video_id: str) -> tuple[FrameRecord, ...]:
        return tuple(f for f in self.frames if f.video_id == video_id)

    def labeled_frames(self, provenances=(PROVENANCE_HUMAN, PROVENANCE_PSEUDO)) -> tuple[FrameRecord, ...]:
        return tuple(f for f in self.frames if f.label_provenance in provenances)

    def frame_at(self, video_id: str, frame_index: int) -> FrameRecord | None:
        for f in self.frames:
            if f.video_id == video_id and f.frame_index == frame_index:
                return f
        return None

    def resolve(self, rel_path: str) -> Path:
        if self.root is None:
            raise ManifestValidationError("manifest has no root directory; pass paths explicitly")
        return self.root / rel_path

    def with_frames(self, frames) -> "DatasetManifest":
        return replace(self, frames=tuple(frames))


def _canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def save_manifest(manifest: DatasetManifest, path) -> None:
    """Write manifest.json and frames.jsonl next to each other.

    Serialization is canonical (sorted keys, frames ordered by video and
    index), so saving a loaded manifest reproduces the bytes.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # Several manifests can share a directory; each gets its own frame file.
    frames_name = "frames.jsonl" if path.stem == "manifest" else f"{path.stem}.frames.jsonl"
    head = {
        "format_version": FORMAT_VERSION,
        "native_resolution": list(manifest.native_resolution),
        "working_resolution": list(manifest.working_resolution),
        "tool_taxonomy": manifest.tool_taxonomy.to_json(),
        "phase_taxonomy": manifest.phase_taxonomy.to_json(),
        "phase_tracks": [t.to_json() for t in sorted(manifest.phase_tracks, key=lambda t: t.video_id)],
        "frames_file": frames_name,
    }
    path.write_text(_canonical_dumps(head))
    lines = [json.dumps(f.to_json(), sort_keys=True) for f in manifest.frames]
    (path.parent / frames_name).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_manifest(path, check_files: bool = False) -> DatasetManifest:
    """Load and validate a manifest; raises ManifestError on unparseable
    input and ManifestValidationError naming the first violated invariant."""
    path = Path(path)
    try:
        head = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from e
    if not isinstance(head, dict):
        raise ManifestError(f"manifest {path} must hold a JSON object")
    version = head.get("format_version")
    if version != FORMAT_VERSION:
        raise ManifestError(f"unsupported manifest format_version {version!r}")
    frames_file = path.parent / head.get("frames_file", "frames.jsonl")
    frames = []
    try:
        text = frames_file.read_text()
    except OSError as e:
        raise ManifestError(f"cannot read frame records {frames_file}: {e}") from e
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            frames.append(FrameRecord.from_json(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"{frames_file}:{lineno}: bad frame record: {e}") from e
    try:
        manifest = DatasetManifest(
            tool_taxonomy=ToolTaxonomy.from_json(head["tool_taxonomy"]),
            phase_taxonomy=PhaseTaxonomy.from_json(head["phase_taxonomy"]),
            native_resolution=tuple(head["native_resolution"]),
            working_resolution=tuple(head["working_resolution"]),
            phase_tracks=tuple(PhaseTrack.from_json(t) for t in head["phase_tracks"]),
            frames=tuple(frames),
            root=path.parent,
        )
    except KeyError as e:
        raise ManifestError(f"manifest {path} missing field {e}") from e
    if check_files:
        manifest.validate_files()
    return manifest

def save_phase_tracks(tracks, directory) -> None:
    """Write one <video_id>.json per track (the predicted-phase exchange
    format: a trainer can point at such a directory instead of the
    manifest's own tracks)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for track in tracks:
        path = directory / f"{track.video_id}.json"
        path.write_text(json.dumps(track.to_json(), sort_keys=True, indent=2) + "\n")


def load_phase_tracks(directory) -> dict[str, PhaseTrack]:
    """Load every <video_id>.json track in a directory, keyed by video id."""
    directory = Path(directory)
    tracks = {}
    for path in sorted(directory.glob("*.json")):
        try:
            track = PhaseTrack.from_json(json.loads(path.read_text()))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"cannot read phase track {path}: {e}") from e
        if track.video_id != path.stem:
            raise ManifestError(
                f"phase track file {path.name} holds video_id {track.video_id!r}"
            )
        tracks[track.video_id] = track
    return tracks
