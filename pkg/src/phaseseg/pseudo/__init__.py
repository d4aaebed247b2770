"""Semi-supervised pseudo-labeling over a promptable segmenter."""

from .oracle import FIDELITIES, OracleSegmenter
from .prompts import PointPrompt, PromptSet, refine_prompts, sample_initial_prompts
from .propagate import (
    Exclusion,
    PseudoLabelParams,
    PseudoLabelRecord,
    PseudoLabelResult,
    merge_tool_masks,
    propagation_offsets,
    run_pseudo_labeling,
)
from .segmenter import (
    CachingSegmenter,
    PromptableSegmenter,
    RemoteSegmenter,
    SegmenterError,
    rle_decode,
    rle_encode,
)

__all__ = [
    "CachingSegmenter",
    "Exclusion",
    "FIDELITIES",
    "OracleSegmenter",
    "PointPrompt",
    "PromptSet",
    "PromptableSegmenter",
    "PseudoLabelParams",
    "PseudoLabelRecord",
    "PseudoLabelResult",
    "RemoteSegmenter",
    "SegmenterError",
    "merge_tool_masks",
    "propagation_offsets",
    "refine_prompts",
    "rle_decode",
    "rle_encode",
    "run_pseudo_labeling",
    "sample_initial_prompts",
]
