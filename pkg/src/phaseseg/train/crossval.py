"""Variant-by-fold grid execution with resumability.

Every (variant, fold) cell trains independently under a seed derived from
(root seed, variant name, fold index), so cell outcomes do not depend on
execution order and a crashed grid can be resumed cell by cell. A finished
cell leaves report.json next to its checkpoint; on resume, cells whose
report carries the expected config fingerprint are loaded instead of
retrained, while a fingerprint mismatch forces a retrain rather than
silently mixing configurations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..manifest import DatasetManifest
from ..seeding import derive_seed
from ..splits import SplitPlan
from .config import VARIANTS, TrainConfig, variant_config
from .reports import (
    CellReport,
    EvalReport,
    load_cell_report,
    render_table,
    save_cell_report,
    summarize_cells,
)
from .runner import train_on_fold


@dataclass
class GridResult:
    report: EvalReport
    cells: list[CellReport]
    failures: dict[tuple[str, int], str] = field(default_factory=dict)
    skipped: list[tuple[str, int]] = field(default_factory=list)


def cell_dir(out_root: Path, variant: str, fold: int) -> Path:
    return Path(out_root) / variant / f"fold{fold}"


def cell_seed(root_seed: int, variant: str, fold: int) -> int:
    return derive_seed(root_seed, "cell", variant, fold)


def run_grid(
    manifest: DatasetManifest,
    plan: SplitPlan,
    variants,
    out_root,
    pseudo_manifest: DatasetManifest | None = None,
    predicted_tracks: dict | None = None,
    overrides: dict | None = None,
    seed: int = 0,
    resume: bool = False,
    on_cell=None,
    raise_on_failure: bool = False,
) -> GridResult:
    """Train every requested variant on every fold of the plan.

    Supervised variants read the base manifest; semi-supervised ones need
    pseudo_manifest (the pseudo-augmented copy). A cell failure is recorded
    and the grid moves on unless raise_on_failure is set. on_cell, when
    given, is called as on_cell(variant, fold, cell_report) after each cell.
    """
    out_root = Path(out_root)
    overrides = overrides or {}
    configs: dict[str, TrainConfig] = {}
    for name in variants:
        config = variant_config(name, **overrides) if name in VARIANTS else None
        if config is None:
            raise KeyError(f"unknown variant {name!r}")
        configs[name] = config

    cells: list[CellReport] = []
    failures: dict[tuple[str, int], str] = {}
    skipped: list[tuple[str, int]] = []
    for name in variants:
        base_config = configs[name]
        if base_config.semi_supervised and pseudo_manifest is None:
            raise ValueError(
                f"variant {name} is semi-supervised; a pseudo-labeled manifest is required"
            )
        if base_config.phase_source == "predicted" and predicted_tracks is None:
            raise ValueError(
                f"variant {name} reads predicted phases; predicted tracks are required"
            )
        source = pseudo_manifest if base_config.semi_supervised else manifest
        for fold_index, fold in enumerate(plan.folds):
            config = replace(base_config, seed=cell_seed(seed, name, fold_index))
            directory = cell_dir(out_root, name, fold_index)
            report_path = directory / "report.json"
            if resume and report_path.exists():
                try:
                    prior = load_cell_report(report_path)
                except (OSError, ValueError, KeyError, json.JSONDecodeError):
                    prior = None
                if prior is not None and prior.fingerprint == config.fingerprint():
                    cells.append(prior)
                    skipped.append((name, fold_index))
                    if on_cell is not None:
                        on_cell(name, fold_index, prior)
                    continue
            try:
                result = train_on_fold(
                    source,
                    fold,
                    config,
                    predicted_tracks=predicted_tracks,
                    out_dir=directory,
                    seed_labels=(name, fold_index),
                )
            except Exception as e:  # noqa: BLE001 - cell isolation is the point
                if raise_on_failure:
                    raise
                failures[(name, fold_index)] = f"{type(e).__name__}: {e}"
                continue
            cell = CellReport(
                variant=name,
                fold=fold_index,
                fingerprint=config.fingerprint(),
                best_epoch=result.best_epoch,
                val_mean_dsc=result.best_val_dsc,
                seconds=result.seconds,
                test=result.test_metrics,
            )
            save_cell_report(cell, report_path)
            cells.append(cell)
            if on_cell is not None:
                on_cell(name, fold_index, cell)

    report = summarize_cells(cells, configs)
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "report_table.txt").write_text(render_table(report))
    (out_root / "report.json").write_text(
        json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n"
    )
    return GridResult(report=report, cells=cells, failures=failures, skipped=skipped)
