import numpy as np
import pytest
import torch

from phaseseg.manifest import (
    PROVENANCE_HUMAN,
    PROVENANCE_NONE,
    DatasetManifest,
    FrameRecord,
    PhaseTrack,
    save_manifest,
)
from phaseseg.rasters import write_image, write_label_map
from phaseseg.taxonomy import PhaseTaxonomy, ToolTaxonomy


def mem_manifest(n_videos=2, n_frames=4, n_classes=2, n_phases=2, size=(8, 8),
                 labeled=lambda v, i: True, frame_stride=1):
    """In-memory manifest without files, for structure-level tests."""
    w, h = size
    tracks, frames = [], []
    for v in range(n_videos):
        vid = f"vid{v:03d}"
        num = n_frames * frame_stride
        half = (num + 1) // 2
        segments = [(0, half, v % n_phases)]
        if half < num:
            segments.append((half, num, (v + 1) % n_phases))
        track = PhaseTrack(video_id=vid, num_frames=num, segments=tuple(segments))
        tracks.append(track)
        for k in range(n_frames):
            idx = k * frame_stride
            lab = labeled(v, idx)
            frames.append(
                FrameRecord(
                    video_id=vid,
                    frame_index=idx,
                    image_path=f"images/{vid}/{idx:06d}.png",
                    width=w,
                    height=h,
                    phase_id=track.phase_at(idx),
                    label_map_path=f"labels/{vid}/{idx:06d}.png" if lab else None,
                    label_provenance=PROVENANCE_HUMAN if lab else PROVENANCE_NONE,
                )
            )
    return DatasetManifest(
        tool_taxonomy=ToolTaxonomy(names=tuple(f"tool_{c}" for c in range(1, n_classes + 1))),
        phase_taxonomy=PhaseTaxonomy(names=tuple(f"phase_{p}" for p in range(n_phases))),
        native_resolution=(w, h),
        working_resolution=(w, h),
        phase_tracks=tuple(tracks),
        frames=tuple(frames),
    )


def write_dataset(root, manifest, label_maker=None, rng=None):
    """Materialize images and label maps for a manifest under root."""
    rng = rng or np.random.default_rng(0)
    for f in manifest.frames:
        img = rng.integers(0, 255, size=(f.height, f.width), dtype=np.uint8)
        write_image(root / f.image_path, img)
        if f.label_map_path is not None:
            if label_maker is not None:
                lab = label_maker(f)
            else:
                lab = np.zeros((f.height, f.width), dtype=np.uint8)
                lab[1:3, 1:3] = 1
            write_label_map(root / f.label_map_path, lab)
    save_manifest(manifest, root / "manifest.json")


@pytest.fixture
def tiny_dataset(tmp_path):
    m = mem_manifest()
    write_dataset(tmp_path, m)
    return tmp_path / "manifest.json"


def finite_difference_grad(fn, x: torch.Tensor, eps: float = 1e-4) -> torch.Tensor:
    """Central finite differences of a scalar function w.r.t. one tensor.

    Independent gradient oracle: perturbs every entry by +-eps in place and
    differences the outputs. Use float64 tensors.
    """
    x = x.detach().clone()
    grad = torch.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        f_plus = float(fn(x).detach())
        flat[i] = orig - eps
        f_minus = float(fn(x).detach())
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def gradient_mismatch(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    """Max elementwise error, relative above 1 and absolute below."""
    diff = (analytic - numeric).abs()
    denom = torch.maximum(
        torch.ones_like(diff), torch.maximum(analytic.abs(), numeric.abs())
    )
    return float((diff / denom).max())
