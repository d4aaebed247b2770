"""Input validation helpers shared across the public API surface."""

from __future__ import annotations

import numpy as np


def check_binary_mask(mask, name: str = "mask") -> np.ndarray:
    """Coerce to a 2-D boolean array; reject anything that is not 0/1-valued."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.dtype == bool:
        return arr
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must be binary (0/1 or bool)")
    return arr.astype(bool)


def check_same_shape(a: np.ndarray, b: np.ndarray, names=("first", "second")) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{names[0]} shape {a.shape} != {names[1]} shape {b.shape}")


def check_label_map(arr, num_classes: int, name: str = "label map") -> np.ndarray:
    """Coerce to 2-D integer class-id map with values in [0, num_classes]."""
    out = np.asarray(arr)
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {out.shape}")
    if not np.issubdtype(out.dtype, np.integer):
        raise ValueError(f"{name} must have an integer dtype, got {out.dtype}")
    if out.size and (out.min() < 0 or out.max() > num_classes):
        raise ValueError(
            f"{name} has ids outside [0, {num_classes}]: "
            f"min {int(out.min())}, max {int(out.max())}"
        )
    return out


def check_images(X, in_channels: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce images to float32 (N, C, H, W) in [0, 1].

    Accepts (N, H, W), (N, H, W, C) or (N, C, H, W) with C in {1, 3};
    uint8 inputs are rescaled by 1/255.
    """
    arr = np.asarray(X)
    if arr.ndim == 3:
        arr = arr[:, None, :, :]
    elif arr.ndim == 4:
        if arr.shape[-1] in (1, 3) and arr.shape[1] not in (1, 3):
            arr = np.moveaxis(arr, -1, 1)
    else:
        raise ValueError(f"{name} must be (N,H,W) or (N,H,W,C)/(N,C,H,W), got {arr.shape}")
    if arr.shape[1] not in (1, 3):
        raise ValueError(f"{name} channel count must be 1 or 3, got {arr.shape[1]}")
    if in_channels is not None and arr.shape[1] != in_channels:
        raise ValueError(f"{name} has {arr.shape[1]} channels, expected {in_channels}")
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / 255.0
    arr = arr.astype(np.float32, copy=False)
    if arr.size and not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_phase_ids(phases, n: int, num_phases: int, name: str = "phases") -> np.ndarray:
    """Coerce per-frame phase ids to int64 (N,); -1 is the null sentinel."""
    arr = np.asarray(phases, dtype=np.int64)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
    bad = (arr != -1) & ((arr < 0) | (arr >= num_phases))
    if bad.any():
        raise ValueError(f"{name} contains ids outside [0, {num_phases}) and != -1")
    return arr
