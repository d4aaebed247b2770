"""Encoder-decoder segmentation network with per-level phase conditioning.

Plain U-Net layout: num_stages encoder stages of two 3x3 conv + BN + ReLU
blocks with 2x2 max pooling, a bottleneck, and a mirrored decoder with
transposed-conv upsampling and skip concatenation. After the conv block of
every decoder level (before the next upsampling) an optional phase
conditioner modulates the features. A final 1x1 projection yields
num_classes + 1 score channels (background + tools).

Inputs of arbitrary size are reflect-padded up to a multiple of
2**num_stages and the scores are cropped back.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .conditioning import PhaseConditioner

CONDITIONING_MODES = ("none", "basic", "gated")


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture hyperparameters; num_classes counts tool classes only."""

    num_classes: int
    num_phases: int = 1
    in_channels: int = 1
    base_width: int = 32
    num_stages: int = 4
    conditioning: str = "none"
    condition_bottleneck: bool = False

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.num_phases < 1:
            raise ValueError(f"num_phases must be >= 1, got {self.num_phases}")
        if self.in_channels not in (1, 3):
            raise ValueError(f"in_channels must be 1 or 3, got {self.in_channels}")
        if self.base_width < 1:
            raise ValueError(f"base_width must be >= 1, got {self.base_width}")
        if not 1 <= self.num_stages <= 6:
            raise ValueError(f"num_stages must be in [1, 6], got {self.num_stages}")
        if self.conditioning not in CONDITIONING_MODES:
            raise ValueError(
                f"conditioning must be one of {CONDITIONING_MODES}, got {self.conditioning!r}"
            )
        if self.condition_bottleneck and self.conditioning == "none":
            raise ValueError("condition_bottleneck requires a conditioning mode")

    def fingerprint(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "NetworkConfig":
        return cls(**obj)


class ConvBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.net(x)


class PhaseUNet(nn.Module):
    def __init__(self, config: NetworkConfig, debug_checks: bool = False):
        super().__init__()
        self.config = config
        self.debug_checks = debug_checks
        widths = [config.base_width * (2**s) for s in range(config.num_stages)]
        bottleneck_width = config.base_width * (2**config.num_stages)

        self.encoders = nn.ModuleList()
        in_ch = config.in_channels
        for w in widths:
            self.encoders.append(ConvBlock(in_ch, w))
            in_ch = w
        self.pool = nn.MaxPool2d(2)
        self.bottleneck = ConvBlock(in_ch, bottleneck_width)

        self.upsamplers = nn.ModuleList()
        self.decoders = nn.ModuleList()
        prev = bottleneck_width
        for w in reversed(widths):
            self.upsamplers.append(nn.ConvTranspose2d(prev, w, kernel_size=2, stride=2))
            self.decoders.append(ConvBlock(2 * w, w))
            prev = w
        self.head = nn.Conv2d(widths[0], config.num_classes + 1, kernel_size=1)

        # conditioning parameters live apart from the backbone so the two can
        # be checkpointed and compared independently
        self.conditioners = nn.ModuleDict()
        if config.conditioning != "none":
            for level, w in enumerate(reversed(widths)):
                self.conditioners[f"level{level}"] = PhaseConditioner(
                    w, config.num_phases, config.conditioning
                )
            if config.condition_bottleneck:
                self.conditioners["bottleneck"] = PhaseConditioner(
                    bottleneck_width, config.num_phases, config.conditioning
                )

    # -- weights ----------------------------------------------------------

    def backbone_state_dict(self) -> dict:
        return {k: v for k, v in self.state_dict().items() if not k.startswith("conditioners.")}

    def load_backbone(self, state: dict) -> None:
        missing = [
            k for k in self.state_dict() if not k.startswith("conditioners.") and k not in state
        ]
        if missing:
            raise ValueError(f"backbone state missing keys: {missing[:3]}...")
        self.load_state_dict(state, strict=False)

    # -- forward ----------------------------------------------------------

    def _check(self, t: torch.Tensor, where: str) -> None:
        if self.debug_checks and not torch.isfinite(t).all():
            raise FloatingPointError(f"non-finite features after {where}")

    def forward(self, x: torch.Tensor, phase_ids: torch.Tensor | None = None) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ValueError(
                f"expected (B, {self.config.in_channels}, H, W) input, got {tuple(x.shape)}"
            )
        if phase_ids is None:
            phase_ids = torch.full((x.shape[0],), -1, dtype=torch.long, device=x.device)
        phase_ids = phase_ids.to(device=x.device, dtype=torch.long)

        multiple = 2**self.config.num_stages
        h, w = x.shape[2], x.shape[3]
        pad_h = (multiple - h % multiple) % multiple
        pad_w = (multiple - w % multiple) % multiple
        if pad_h >= h or pad_w >= w:
            raise ValueError(
                f"input {h}x{w} too small to pad to a multiple of {multiple} by reflection"
            )
        if pad_h or pad_w:
            x = F.pad(x, (0, pad_w, 0, pad_h), mode="reflect")

        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        self._check(x, "bottleneck")
        if "bottleneck" in self.conditioners:
            x = self.conditioners["bottleneck"](x, phase_ids)

        for level, (up, dec) in enumerate(zip(self.upsamplers, self.decoders)):
            x = up(x)
            skip = skips[-(level + 1)]
            x = dec(torch.cat([skip, x], dim=1))
            self._check(x, f"decoder level {level}")
            key = f"level{level}"
            if key in self.conditioners:
                x = self.conditioners[key](x, phase_ids)

        scores = self.head(x)
        if pad_h or pad_w:
            scores = scores[:, :, :h, :w]
        self._check(scores, "head")
        return scores

    @torch.no_grad()
    def predict_labels(self, x: torch.Tensor, phase_ids: torch.Tensor | None = None) -> torch.Tensor:
        """Argmax class-id maps, (B, H, W) int64."""
        was_training = self.training
        self.eval()
        try:
            return self.forward(x, phase_ids).argmax(dim=1)
        finally:
            if was_training:
                self.train()
