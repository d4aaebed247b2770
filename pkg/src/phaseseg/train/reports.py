"""Cross-validation result aggregation and a round-trippable text table."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from ..metrics import ClassMetrics
from .config import TrainConfig


def _mean(xs) -> float:
    return sum(xs) / len(xs)


def _population_std(xs) -> float:
    # population formula: divide by n, not n - 1
    m = _mean(xs)
    return math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))


@dataclass(frozen=True)
class CellReport:
    """Outcome of one (variant, fold) training cell."""

    variant: str
    fold: int
    fingerprint: str
    best_epoch: int
    val_mean_dsc: float | None
    seconds: float
    test: ClassMetrics | None

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "fold": self.fold,
            "fingerprint": self.fingerprint,
            "best_epoch": self.best_epoch,
            "val_mean_dsc": self.val_mean_dsc,
            "seconds": self.seconds,
            "test": self.test.to_json() if self.test is not None else None,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CellReport":
        return cls(
            variant=obj["variant"],
            fold=int(obj["fold"]),
            fingerprint=obj["fingerprint"],
            best_epoch=int(obj["best_epoch"]),
            val_mean_dsc=obj["val_mean_dsc"],
            seconds=float(obj["seconds"]),
            test=ClassMetrics.from_json(obj["test"]) if obj.get("test") else None,
        )


def save_cell_report(report: CellReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n")


def load_cell_report(path) -> CellReport:
    return CellReport.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class VariantSummary:
    """One variant across folds; spread is the population standard
    deviation over fold means."""

    variant: str
    conditioning: str
    phase_source: str
    semi_supervised: bool
    fold_dsc: tuple[float, ...]
    fold_iou: tuple[float, ...]

    @property
    def n_folds(self) -> int:
        return len(self.fold_dsc)

    @property
    def mean_dsc(self) -> float:
        return _mean(self.fold_dsc)

    @property
    def std_dsc(self) -> float:
        return _population_std(self.fold_dsc)

    @property
    def mean_iou(self) -> float:
        return _mean(self.fold_iou)

    @property
    def std_iou(self) -> float:
        return _population_std(self.fold_iou)


@dataclass(frozen=True)
class EvalReport:
    summaries: tuple[VariantSummary, ...]

    def summary_for(self, variant: str) -> VariantSummary:
        for s in self.summaries:
            if s.variant == variant:
                return s
        raise KeyError(f"no summary for variant {variant!r}")

    def to_json(self) -> dict:
        return {
            "summaries": [
                {
                    "variant": s.variant,
                    "conditioning": s.conditioning,
                    "phase_source": s.phase_source,
                    "semi_supervised": s.semi_supervised,
                    "fold_dsc": list(s.fold_dsc),
                    "fold_iou": list(s.fold_iou),
                }
                for s in self.summaries
            ]
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EvalReport":
        return cls(
            summaries=tuple(
                VariantSummary(
                    variant=s["variant"],
                    conditioning=s["conditioning"],
                    phase_source=s["phase_source"],
                    semi_supervised=bool(s["semi_supervised"]),
                    fold_dsc=tuple(float(x) for x in s["fold_dsc"]),
                    fold_iou=tuple(float(x) for x in s["fold_iou"]),
                )
                for s in obj["summaries"]
            )
        )


_COLUMNS = (
    "variant",
    "conditioning",
    "phase_source",
    "semi_supervised",
    "mean_dsc",
    "std_dsc",
    "mean_iou",
    "std_iou",
    "fold_dsc",
    "fold_iou",
)


def render_table(report: EvalReport) -> str:
    """Pipe-separated text table. Floats are written with repr so parsing
    the table back recovers every value exactly."""
    lines = [" | ".join(_COLUMNS)]
    for s in report.summaries:
        lines.append(
            " | ".join(
                [
                    s.variant,
                    s.conditioning,
                    s.phase_source,
                    str(s.semi_supervised),
                    repr(s.mean_dsc),
                    repr(s.std_dsc),
                    repr(s.mean_iou),
                    repr(s.std_iou),
                    ",".join(repr(x) for x in s.fold_dsc),
                    ",".join(repr(x) for x in s.fold_iou),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def parse_table(text: str) -> EvalReport:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines or [c.strip() for c in lines[0].split("|")] != list(_COLUMNS):
        raise ValueError("not a recognizable result table")
    summaries = []
    for line in lines[1:]:
        cells = [c.strip() for c in line.split("|")]
        if len(cells) != len(_COLUMNS):
            raise ValueError(f"row has {len(cells)} cells, expected {len(_COLUMNS)}")
        summaries.append(
            VariantSummary(
                variant=cells[0],
                conditioning=cells[1],
                phase_source=cells[2],
                semi_supervised=cells[3] == "True",
                fold_dsc=tuple(float(x) for x in cells[8].split(",") if x),
                fold_iou=tuple(float(x) for x in cells[9].split(",") if x),
            )
        )
    return EvalReport(summaries=tuple(summaries))


def summarize_cells(cells: list[CellReport], configs: dict[str, TrainConfig]) -> EvalReport:
    """Aggregate per-cell test metrics into per-variant rows, ordered by
    variant name; cells without test metrics are skipped."""
    by_variant: dict[str, list[CellReport]] = {}
    for cell in cells:
        if cell.test is not None:
            by_variant.setdefault(cell.variant, []).append(cell)
    summaries = []
    for variant in sorted(by_variant):
        group = sorted(by_variant[variant], key=lambda c: c.fold)
        config = configs[variant]
        summaries.append(
            VariantSummary(
                variant=variant,
                conditioning=config.conditioning,
                phase_source=config.phase_source,
                semi_supervised=config.semi_supervised,
                fold_dsc=tuple(c.test.mean_dsc for c in group),
                fold_iou=tuple(c.test.mean_iou for c in group),
            )
        )
    return EvalReport(summaries=tuple(summaries))
