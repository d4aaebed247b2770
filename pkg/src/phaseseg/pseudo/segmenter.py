"""Promptable-segmenter surface: protocol, wire codec, cache, HTTP client.

A promptable segmenter answers two questions about frames it can see by
video id and frame index: "what object do these clicks mean?" (a binary
mask) and "where is that object at these other frames?" (masks keyed by
absolute frame index). Implementations range from the in-process oracle
used in tests to a remote service speaking JSON with run-length masks.
"""

from __future__ import annotations

from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from ..validation import check_binary_mask
from .prompts import PointPrompt


class SegmenterError(RuntimeError):
    """A segmenter backend failed or answered with a malformed payload."""


@runtime_checkable
class PromptableSegmenter(Protocol):
    """Minimal contract pseudo-labeling relies on."""

    concurrency_safe: bool

    def segment_frame(
        self, video_id: str, frame_index: int, points: Sequence[PointPrompt]
    ) -> np.ndarray: ...

    def propagate(
        self,
        video_id: str,
        frame_index: int,
        points: Sequence[PointPrompt],
        target_indices: Sequence[int],
        seed_mask: np.ndarray | None = None,
    ) -> dict[int, np.ndarray]: ...


# -- run-length coding ---------------------------------------------------------
# Row-major alternating run lengths, first run counting zeros, so a mask
# starting with a set pixel encodes as [0, n, ...]. Compact, JSON-friendly,
# and unambiguous for empty and full masks alike.


def rle_encode(mask: np.ndarray) -> dict:
    mask = check_binary_mask(mask, "mask")
    flat = mask.reshape(-1)
    if flat.size == 0:
        raise ValueError("cannot encode an empty array")
    changes = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts = [0] + counts
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": counts}


def rle_decode(obj: dict) -> np.ndarray:
    try:
        h, w = (int(v) for v in obj["size"])
        counts = [int(c) for c in obj["counts"]]
    except (KeyError, TypeError, ValueError) as e:
        raise SegmenterError(f"malformed run-length mask: {e}") from e
    if h <= 0 or w <= 0:
        raise SegmenterError(f"malformed run-length mask: bad size ({h}, {w})")
    if any(c < 0 for c in counts):
        raise SegmenterError("malformed run-length mask: negative run")
    if sum(counts) != h * w:
        raise SegmenterError(
            f"malformed run-length mask: runs cover {sum(counts)} of {h * w} pixels"
        )
    flat = np.zeros(h * w, dtype=bool)
    pos, value = 0, False
    for count in counts:
        if value:
            flat[pos : pos + count] = True
        pos += count
        value = not value
    return flat.reshape(h, w)


# -- caching wrapper --------------------------------------------------------------


def _points_key(points: Sequence[PointPrompt]) -> tuple:
    return tuple((p.x, p.y, p.label) for p in points)


class CachingSegmenter:
    """Memoizes an inner segmenter on (frame, prompts) identity.

    Prompt refinement re-queries the incumbent prompt set every round and
    the propagation sweep revisits anchors, so identical requests are
    common. Masks are copied on the way in and out; cache hits can never
    alias a caller's array.
    """

    def __init__(self, inner: PromptableSegmenter):
        self.inner = inner
        self.concurrency_safe = getattr(inner, "concurrency_safe", False)
        self._cache: dict[tuple, object] = {}
        self.hits = 0
        self.misses = 0

    def _lookup(self, key, compute):
        if key in self._cache:
            self.hits += 1
        else:
            self.misses += 1
            self._cache[key] = compute()
        return self._cache[key]

    def segment_frame(self, video_id, frame_index, points):
        key = ("segment", video_id, frame_index, _points_key(points))
        mask = self._lookup(
            key, lambda: self.inner.segment_frame(video_id, frame_index, points).copy()
        )
        return mask.copy()

    def propagate(self, video_id, frame_index, points, target_indices, seed_mask=None):
        mask_sig = None
        if seed_mask is not None:
            seed_mask = check_binary_mask(seed_mask, "seed_mask")
            mask_sig = (seed_mask.shape, seed_mask.tobytes())
        key = (
            "propagate",
            video_id,
            frame_index,
            _points_key(points),
            tuple(int(t) for t in target_indices),
            mask_sig,
        )
        out = self._lookup(
            key,
            lambda: {
                int(t): m.copy()
                for t, m in self.inner.propagate(
                    video_id, frame_index, points, target_indices, seed_mask=seed_mask
                ).items()
            },
        )
        return {t: m.copy() for t, m in out.items()}


# -- remote client -----------------------------------------------------------------


class RemoteSegmenter:
    """JSON-over-HTTP client for a promptable segmentation service.

    Wire format: POST {base_url}/segment with {video_id, frame_index,
    points: [{x, y, label}]} returns {mask: <run-length>}; POST
    {base_url}/propagate additionally carries offsets (relative to the
    anchor) and an optional run-length seed_mask, returning {masks:
    [{offset, mask}]}. Any transport or payload problem surfaces as
    SegmenterError.
    """

    concurrency_safe = False

    def __init__(self, base_url: str, timeout: float = 30.0, session=None):
        import requests

        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = session if session is not None else requests.Session()

    def _post(self, endpoint: str, payload: dict) -> dict:
        import requests

        url = f"{self.base_url}/{endpoint}"
        try:
            response = self._session.post(url, json=payload, timeout=self.timeout)
            response.raise_for_status()
            body = response.json()
        except (requests.RequestException, ValueError) as e:
            raise SegmenterError(f"{endpoint} request to {url} failed: {e}") from e
        if not isinstance(body, dict):
            raise SegmenterError(f"{endpoint} response is not a JSON object")
        return body

    def segment_frame(self, video_id, frame_index, points):
        body = self._post(
            "segment",
            {
                "video_id": video_id,
                "frame_index": int(frame_index),
                "points": [p.to_json() for p in points],
            },
        )
        if "mask" not in body:
            raise SegmenterError("segment response lacks a mask")
        return rle_decode(body["mask"])

    def propagate(self, video_id, frame_index, points, target_indices, seed_mask=None):
        offsets = [int(t) - int(frame_index) for t in target_indices]
        payload = {
            "video_id": video_id,
            "frame_index": int(frame_index),
            "points": [p.to_json() for p in points],
            "offsets": offsets,
            "seed_mask": rle_encode(seed_mask) if seed_mask is not None else None,
        }
        body = self._post("propagate", payload)
        entries = body.get("masks")
        if not isinstance(entries, list):
            raise SegmenterError("propagate response lacks a mask list")
        out = {}
        for entry in entries:
            try:
                offset = int(entry["offset"])
                mask = rle_decode(entry["mask"])
            except (KeyError, TypeError) as e:
                raise SegmenterError(f"malformed propagate entry: {e}") from e
            out[int(frame_index) + offset] = mask
        missing = set(offsets) - {t - int(frame_index) for t in out}
        if missing:
            raise SegmenterError(f"propagate response missing offsets {sorted(missing)}")
        return out
