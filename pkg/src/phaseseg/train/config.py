"""Training configuration and the standard variant grid."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

from ..nn import CONDITIONING_MODES

PHASE_SOURCES = ("none", "true", "predicted")


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a training run besides the data split."""

    conditioning: str = "none"
    phase_source: str = "none"
    semi_supervised: bool = False
    condition_bottleneck: bool = False
    base_width: int = 32
    num_stages: int = 4
    lr: float = 1e-4
    weight_decay: float = 1e-2
    batch_size: int = 16
    max_epochs: int = 100
    patience: int = 10
    class_weighting: bool = False
    stage1_include_human: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.conditioning not in CONDITIONING_MODES:
            raise ValueError(
                f"conditioning must be one of {CONDITIONING_MODES}, got {self.conditioning!r}"
            )
        if self.phase_source not in PHASE_SOURCES:
            raise ValueError(
                f"phase_source must be one of {PHASE_SOURCES}, got {self.phase_source!r}"
            )
        if self.conditioning == "none" and self.phase_source != "none":
            raise ValueError("a phase source needs a conditioning mode to feed")
        if self.conditioning != "none" and self.phase_source == "none":
            raise ValueError(f"conditioning {self.conditioning!r} needs a phase source")
        for name in ("base_width", "num_stages", "batch_size", "max_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ValueError("lr must be positive and weight_decay non-negative")

    def to_json(self) -> dict:
        return {
            "conditioning": self.conditioning,
            "phase_source": self.phase_source,
            "semi_supervised": self.semi_supervised,
            "condition_bottleneck": self.condition_bottleneck,
            "base_width": self.base_width,
            "num_stages": self.num_stages,
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "class_weighting": self.class_weighting,
            "stage1_include_human": self.stage1_include_human,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**obj)

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_json(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()


# The standard ablation grid: no conditioning vs channel-wise affine vs
# gated blending, phases taken from a frame classifier vs the annotated
# timeline, each optionally wrapped in the two-stage pseudo-label schedule.
VARIANTS: dict[str, TrainConfig] = {
    "v0": TrainConfig(conditioning="none", phase_source="none", semi_supervised=False),
    "v1": TrainConfig(conditioning="none", phase_source="none", semi_supervised=True),
    "v2": TrainConfig(conditioning="basic", phase_source="predicted", semi_supervised=False),
    "v3": TrainConfig(conditioning="gated", phase_source="predicted", semi_supervised=False),
    "v4": TrainConfig(conditioning="gated", phase_source="predicted", semi_supervised=True),
    "v5": TrainConfig(conditioning="basic", phase_source="true", semi_supervised=False),
    "v6": TrainConfig(conditioning="gated", phase_source="true", semi_supervised=False),
    "v7": TrainConfig(conditioning="gated", phase_source="true", semi_supervised=True),
}


def variant_config(name: str, **overrides) -> TrainConfig:
    """One of the standard variants, with optional field overrides."""
    if name not in VARIANTS:
        raise KeyError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")
    return replace(VARIANTS[name], **overrides)
