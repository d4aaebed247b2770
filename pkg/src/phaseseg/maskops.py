"""Binary mask algebra: morphology, components, region partition, denoising.

Morphology uses square structuring elements of side 2*radius+1 and treats
everything outside the grid as background for both erosion and dilation
(plain set-definition semantics; an object touching the border erodes there).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .validation import check_binary_mask, check_same_shape

_CONNECTIVITY_STRUCTS = {
    4: np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool),
    8: np.ones((3, 3), dtype=bool),
}


def _square(radius: int) -> np.ndarray:
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    return np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)


def morph(mask, op: str, radius: int = 1) -> np.ndarray:
    """Morphological opening or closing with a square element.

    radius=0 is the identity. Opening removes sub-element specks; closing
    fills sub-element holes. Both are idempotent.
    """
    m = check_binary_mask(mask)
    if op not in ("open", "close"):
        raise ValueError(f"op must be 'open' or 'close', got {op!r}")
    if radius == 0:
        return m.copy()
    se = _square(radius)
    if op == "open":
        eroded = ndimage.binary_erosion(m, structure=se, border_value=0)
        return ndimage.binary_dilation(eroded, structure=se, border_value=0)
    dilated = ndimage.binary_dilation(m, structure=se, border_value=0)
    return ndimage.binary_erosion(dilated, structure=se, border_value=0)


@dataclass(frozen=True)
class Component:
    mask: np.ndarray
    area: int


def connected_components(mask, connectivity: int = 8) -> list[Component]:
    """Connected components in scan order; disjoint and exhaustive."""
    m = check_binary_mask(mask)
    if connectivity not in _CONNECTIVITY_STRUCTS:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    labels, n = ndimage.label(m, structure=_CONNECTIVITY_STRUCTS[connectivity])
    out = []
    for k in range(1, n + 1):
        comp = labels == k
        out.append(Component(mask=comp, area=int(comp.sum())))
    return out


def filter_components(mask, min_area: int, min_fraction: float, connectivity: int = 8) -> np.ndarray:
    """Drop components with area < min_area or < min_fraction of the mask's
    total foreground. Thresholds are evaluated against the input mask, which
    is stable: dropping only shrinks the fractional threshold."""
    m = check_binary_mask(mask)
    total = int(m.sum())
    if total == 0:
        return m.copy()
    out = np.zeros_like(m)
    for comp in connected_components(m, connectivity):
        if comp.area >= min_area and comp.area >= min_fraction * total:
            out |= comp.mask
    return out


@dataclass(frozen=True)
class RegionPartition:
    """Pixel-level agreement partition of a (prediction, reference) pair."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    def counts(self) -> dict[str, int]:
        return {k: int(getattr(self, k).sum()) for k in ("tp", "fp", "fn", "tn")}


def partition_regions(pred, gt) -> RegionPartition:
    """Split the grid into true/false positives/negatives; the four regions
    are disjoint and cover every pixel."""
    p = check_binary_mask(pred, "pred")
    g = check_binary_mask(gt, "gt")
    check_same_shape(p, g, ("pred", "gt"))
    return RegionPartition(tp=p & g, fp=p & ~g, fn=~p & g, tn=~p & ~g)


def gaussian_blur(mask, kernel: int) -> np.ndarray:
    """Gaussian smoothing of a binary mask with an odd kernel x kernel
    footprint; sigma = kernel / 6. Returns float64 in [0, 1]."""
    m = check_binary_mask(mask)
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"blur kernel must be odd and positive, got {kernel}")
    if kernel == 1:
        return m.astype(np.float64)
    sigma = kernel / 6.0
    radius = (kernel - 1) // 2
    return ndimage.gaussian_filter(
        m.astype(np.float64), sigma=sigma, truncate=radius / sigma, mode="constant", cval=0.0
    )


def denoise_mask(
    mask,
    min_area: int = 100,
    min_fraction: float = 0.10,
    radius: int = 1,
    blur_kernel: int = 25,
    blur_threshold: float = 0.5,
    connectivity: int = 8,
) -> np.ndarray:
    """Clean a raw binary annotation mask.

    Pipeline: open(radius) -> close(radius) -> drop components below
    min_area pixels or below min_fraction of the current foreground ->
    Gaussian blur (kernel x kernel, sigma = kernel/6) -> re-binarize at
    blur_threshold -> drop sub-threshold stragglers the blur may have
    created. Empty input stays empty; the output never contains a component
    below either threshold.
    """
    m = check_binary_mask(mask)
    if not 0 <= blur_threshold < 1:
        raise ValueError(f"blur_threshold must be in [0, 1), got {blur_threshold}")
    if blur_kernel < 1 or blur_kernel % 2 == 0:
        raise ValueError(f"blur kernel must be odd and positive, got {blur_kernel}")
    m = morph(m, "open", radius)
    m = morph(m, "close", radius)
    m = filter_components(m, min_area, min_fraction, connectivity)
    if not m.any():
        return m
    m = gaussian_blur(m, blur_kernel) > blur_threshold
    m = filter_components(m, min_area, min_fraction, connectivity)
    return m
