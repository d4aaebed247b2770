"""Phase-conditioned feature modulation for decoder levels.

Three pieces, applied to a decoder feature map f of shape (B, K, H, W) under
per-sample phase ids:

* phase affine: f' = scale_p * f + shift_p, channel-wise per phase;
* blend field: alpha = sigmoid((mix(f) + bias_p) / 2), a per-pixel scalar in
  (0, 1) from a 1x1 projection of f plus a per-phase bias;
* gated fuse: f'' = f + alpha * (f' - f), the convex combination of the
  modulated and original features (written this way so f' == f gives
  bitwise f'' == f).

At initialization scale rows are 1, shift and bias rows are 0 and the 1x1
projection is zero, so a conditioned network starts exactly equal to its
unconditioned twin. Phase id -1 (the null sentinel) selects the last
embedding row.
"""

from __future__ import annotations

import torch
from torch import nn


def phase_affine(f: torch.Tensor, scale: torch.Tensor, shift: torch.Tensor) -> torch.Tensor:
    """Channel-wise affine with per-sample (B, K) scale and shift rows."""
    if f.ndim != 4:
        raise ValueError(f"expected (B, K, H, W) features, got {tuple(f.shape)}")
    if scale.shape != f.shape[:2] or shift.shape != f.shape[:2]:
        raise ValueError(
            f"scale/shift must be (B, K) = {tuple(f.shape[:2])}, "
            f"got {tuple(scale.shape)} and {tuple(shift.shape)}"
        )
    return scale[:, :, None, None] * f + shift[:, :, None, None]


def blend_field(f: torch.Tensor, mix: nn.Conv2d, bias: torch.Tensor) -> torch.Tensor:
    """Per-pixel blend coefficients in (0, 1), shape (B, 1, H, W).

    bias is the per-sample (B, 1) phase row added to the 1x1 projection of f
    before halving and squashing.
    """
    if bias.shape != (f.shape[0], 1):
        raise ValueError(f"bias must be (B, 1), got {tuple(bias.shape)}")
    raw = (mix(f) + bias[:, :, None, None]) / 2.0
    return torch.sigmoid(raw)


def gated_fuse(f: torch.Tensor, f_mod: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
    """Convex per-pixel blend of original and modulated features."""
    if f.shape != f_mod.shape:
        raise ValueError(f"feature shapes differ: {tuple(f.shape)} vs {tuple(f_mod.shape)}")
    return f + alpha * (f_mod - f)


class PhaseConditioner(nn.Module):
    """Conditioning for one decoder level.

    mode "basic" applies the phase affine only; mode "gated" additionally
    computes the blend field and fuses. Tables hold num_phases + 1 rows; the
    extra row serves the null phase.
    """

    def __init__(self, channels: int, num_phases: int, mode: str):
        super().__init__()
        if mode not in ("basic", "gated"):
            raise ValueError(f"conditioning mode must be 'basic' or 'gated', got {mode!r}")
        if num_phases < 1:
            raise ValueError(f"num_phases must be >= 1, got {num_phases}")
        self.mode = mode
        self.num_phases = num_phases
        rows = num_phases + 1
        self.scale = nn.Embedding(rows, channels)
        self.shift = nn.Embedding(rows, channels)
        nn.init.ones_(self.scale.weight)
        nn.init.zeros_(self.shift.weight)
        if mode == "gated":
            self.blend_bias = nn.Embedding(rows, 1)
            nn.init.zeros_(self.blend_bias.weight)
            self.mix = nn.Conv2d(channels, 1, kernel_size=1)
            nn.init.zeros_(self.mix.weight)
            nn.init.zeros_(self.mix.bias)

    def phase_rows(self, phase_ids: torch.Tensor) -> torch.Tensor:
        if phase_ids.ndim != 1:
            raise ValueError(f"phase_ids must be 1-D, got shape {tuple(phase_ids.shape)}")
        bad = (phase_ids < -1) | (phase_ids >= self.num_phases)
        if bool(bad.any()):
            raise ValueError(
                f"phase ids must be in [0, {self.num_phases}) or -1, "
                f"got {phase_ids[bad].tolist()}"
            )
        return torch.where(phase_ids >= 0, phase_ids, torch.full_like(phase_ids, self.num_phases))

    def forward(self, f: torch.Tensor, phase_ids: torch.Tensor) -> torch.Tensor:
        if phase_ids.shape[0] != f.shape[0]:
            raise ValueError(f"{f.shape[0]} samples but {phase_ids.shape[0]} phase ids")
        rows = self.phase_rows(phase_ids)
        f_mod = phase_affine(f, self.scale(rows).to(f.dtype), self.shift(rows).to(f.dtype))
        if self.mode == "basic":
            return f_mod
        alpha = blend_field(f, self.mix, self.blend_bias(rows).to(f.dtype))
        return gated_fuse(f, f_mod, alpha)

    def alpha_for(self, f: torch.Tensor, phase_ids: torch.Tensor) -> torch.Tensor:
        """Expose the blend field (gated mode only), for inspection/tests."""
        if self.mode != "gated":
            raise ValueError("blend field exists only in gated mode")
        rows = self.phase_rows(phase_ids)
        return blend_field(f, self.mix, self.blend_bias(rows).to(f.dtype))
