"""Raster I/O and resolution handling for frames and label maps."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def read_image(path) -> np.ndarray:
    """Load a frame as uint8, (H, W) for grayscale or (H, W, 3) for RGB."""
    with Image.open(path) as im:
        if im.mode in ("L", "I;16"):
            return np.asarray(im.convert("L"), dtype=np.uint8)
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def write_image(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise ValueError(f"images are stored as uint8, got {arr.dtype}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path)


def read_label_map(path) -> np.ndarray:
    """Load a label map: single-channel 8-bit PNG, pixel value = class id."""
    with Image.open(path) as im:
        if im.mode != "L":
            raise ValueError(f"label map {path} must be single-channel 8-bit, got mode {im.mode}")
        return np.asarray(im, dtype=np.uint8)


def write_label_map(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"label maps must be integer, got {arr.dtype}")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ValueError("label map ids must fit in 8 bits")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path)


def image_size(path) -> tuple[int, int]:
    """Return (width, height) from the file header without decoding pixels."""
    with Image.open(path) as im:
        return im.size


def downscale_image(arr: np.ndarray, factor: int) -> np.ndarray:
    """Area-averaged downscale by an integer factor.

    Dimensions not divisible by the factor lose their trailing remainder
    (floor semantics). factor=1 returns an unchanged copy.
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    arr = np.asarray(arr)
    if factor == 1:
        return arr.copy()
    h, w = arr.shape[:2]
    h2, w2 = h // factor, w // factor
    if h2 == 0 or w2 == 0:
        raise ValueError(f"factor {factor} exceeds image size {h}x{w}")
    trimmed = arr[: h2 * factor, : w2 * factor]
    if arr.ndim == 2:
        blocks = trimmed.reshape(h2, factor, w2, factor)
        out = blocks.astype(np.float64).mean(axis=(1, 3))
    else:
        blocks = trimmed.reshape(h2, factor, w2, factor, arr.shape[2])
        out = blocks.astype(np.float64).mean(axis=(1, 3))
    if np.issubdtype(arr.dtype, np.integer):
        return np.rint(out).astype(arr.dtype)
    return out.astype(arr.dtype)


def downscale_label_map(arr: np.ndarray, factor: int) -> np.ndarray:
    """Nearest-neighbour downscale for class-id maps (no id mixing).

    Samples the center pixel of each factor x factor block; floor semantics
    for non-divisible dimensions, same as downscale_image.
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError(f"label maps are 2-D, got shape {arr.shape}")
    if factor == 1:
        return arr.copy()
    h, w = arr.shape
    h2, w2 = h // factor, w // factor
    if h2 == 0 or w2 == 0:
        raise ValueError(f"factor {factor} exceeds map size {h}x{w}")
    off = factor // 2
    return arr[off : off + h2 * factor : factor, off : off + w2 * factor : factor].copy()
