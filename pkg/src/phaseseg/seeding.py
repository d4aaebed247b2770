"""Deterministic seed derivation.

Every random decision in the framework flows from one root seed. Component
seeds are derived as sha256(root || labels), so adding a component or
reordering work never perturbs the streams of the others.
"""

from __future__ import annotations

import hashlib


def derive_seed(root_seed: int, *labels) -> int:
    """Stable 63-bit seed for a named component under a root seed."""
    h = hashlib.sha256()
    h.update(str(int(root_seed)).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "big") >> 1
