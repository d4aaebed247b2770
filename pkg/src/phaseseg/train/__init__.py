"""Training: configs, the fit loop, cross-validation, and reports."""

from .config import PHASE_SOURCES, VARIANTS, TrainConfig, variant_config
from .crossval import GridResult, cell_dir, cell_seed, run_grid
from .reports import (
    CellReport,
    EvalReport,
    VariantSummary,
    load_cell_report,
    parse_table,
    render_table,
    save_cell_report,
    summarize_cells,
)
from .runner import (
    FitResult,
    RunResult,
    TensorBundle,
    evaluate_bundle,
    fit_loop,
    load_checkpoint,
    load_frame_tensors,
    phase_lookup_for,
    predict_label_maps,
    save_checkpoint,
    train_on_fold,
)

__all__ = [
    "CellReport",
    "EvalReport",
    "FitResult",
    "GridResult",
    "PHASE_SOURCES",
    "RunResult",
    "TensorBundle",
    "TrainConfig",
    "VARIANTS",
    "VariantSummary",
    "cell_dir",
    "cell_seed",
    "evaluate_bundle",
    "fit_loop",
    "load_cell_report",
    "load_checkpoint",
    "load_frame_tensors",
    "parse_table",
    "phase_lookup_for",
    "predict_label_maps",
    "render_table",
    "run_grid",
    "save_cell_report",
    "save_checkpoint",
    "summarize_cells",
    "train_on_fold",
    "variant_config",
]
