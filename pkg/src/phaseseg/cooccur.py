"""Phase/tool co-occurrence statistics over a labeled manifest."""

from __future__ import annotations

import numpy as np

from .manifest import DatasetManifest
from .rasters import read_label_map
from .taxonomy import NULL_PHASE


def cooccurrence_matrix(
    manifest: DatasetManifest,
    normalize: str = "none",
) -> np.ndarray:
    """Count labeled frames of each phase containing each tool class.

    Returns a (num_phases, num_classes) matrix; entry (p, c-1) counts frames
    of phase p where class c covers at least one pixel. Frames without a
    label (provenance "none") and frames in the null phase contribute
    nothing. normalize="by_phase" divides each row by its sum (empty rows
    stay zero).
    """
    if normalize not in ("none", "by_phase"):
        raise ValueError(f"unknown normalize mode {normalize!r}")
    P = manifest.phase_taxonomy.num_phases
    C = manifest.tool_taxonomy.num_classes
    counts = np.zeros((P, C), dtype=np.float64)
    for frame in manifest.labeled_frames():
        if frame.phase_id == NULL_PHASE:
            continue
        label = read_label_map(manifest.resolve(frame.label_map_path))
        present = np.unique(label)
        for c in present:
            if 1 <= c <= C:
                counts[frame.phase_id, c - 1] += 1.0
    if normalize == "by_phase":
        sums = counts.sum(axis=1, keepdims=True)
        np.divide(counts, sums, out=counts, where=sums > 0)
    return counts
