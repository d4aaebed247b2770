"""Phase-conditioned surgical tool segmentation framework."""

__version__ = "0.1.0"

from .taxonomy import NULL_PHASE, PhaseTaxonomy, ToolTaxonomy  # noqa: F401
from .manifest import (  # noqa: F401
    DatasetManifest,
    FrameRecord,
    PhaseTrack,
    load_manifest,
    save_manifest,
)
from .metrics import dsc, evaluate_label_maps, iou  # noqa: F401
