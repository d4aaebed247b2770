"""Tool and phase taxonomies shared by every dataset artifact."""

from __future__ import annotations

from dataclasses import dataclass

# Sentinel phase id for frames outside any annotated phase segment.
# Conditioning tables keep a dedicated row for it.
NULL_PHASE = -1

BACKGROUND = 0


class TaxonomyError(ValueError):
    """Raised when a taxonomy violates its structural contract."""


def _check_contiguous(ids, first, kind):
    if list(ids) != list(range(first, first + len(ids))):
        raise TaxonomyError(f"{kind} ids must be contiguous starting at {first}, got {list(ids)}")


@dataclass(frozen=True)
class ToolTaxonomy:
    """Ordered tool classes; id 0 is reserved for background.

    Tool class ids run 1..C. Names must be unique and non-empty.
    """

    names: tuple[str, ...]

    def __post_init__(self):
        if not self.names:
            raise TaxonomyError("tool taxonomy needs at least one class")
        if len(set(self.names)) != len(self.names):
            raise TaxonomyError("tool class names must be unique")
        if any(not n for n in self.names):
            raise TaxonomyError("tool class names must be non-empty")
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def num_classes(self) -> int:
        return len(self.names)

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.names) + 1))

    def name_of(self, class_id: int) -> str:
        if not 1 <= class_id <= len(self.names):
            raise TaxonomyError(f"tool class id {class_id} out of range 1..{len(self.names)}")
        return self.names[class_id - 1]

    def to_json(self) -> dict:
        return {"classes": [{"id": i, "name": n} for i, n in zip(self.ids, self.names)]}

    @classmethod
    def from_json(cls, obj: dict) -> "ToolTaxonomy":
        classes = obj.get("classes", [])
        _check_contiguous([c["id"] for c in classes], 1, "tool class")
        return cls(names=tuple(c["name"] for c in classes))


@dataclass(frozen=True)
class PhaseTaxonomy:
    """Ordered workflow phases with ids 0..P-1 plus the NULL_PHASE sentinel."""

    names: tuple[str, ...]

    def __post_init__(self):
        if not self.names:
            raise TaxonomyError("phase taxonomy needs at least one phase")
        if len(set(self.names)) != len(self.names):
            raise TaxonomyError("phase names must be unique")
        if any(not n for n in self.names):
            raise TaxonomyError("phase names must be non-empty")
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def num_phases(self) -> int:
        return len(self.names)

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(range(len(self.names)))

    def is_valid_phase(self, phase_id: int) -> bool:
        return phase_id == NULL_PHASE or 0 <= phase_id < len(self.names)

    def name_of(self, phase_id: int) -> str:
        if phase_id == NULL_PHASE:
            return "<null>"
        if not 0 <= phase_id < len(self.names):
            raise TaxonomyError(f"phase id {phase_id} out of range 0..{len(self.names) - 1}")
        return self.names[phase_id]

    def to_json(self) -> dict:
        return {
            "phases": [{"id": i, "name": n} for i, n in zip(self.ids, self.names)],
            "null_phase_id": NULL_PHASE,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PhaseTaxonomy":
        phases = obj.get("phases", [])
        _check_contiguous([p["id"] for p in phases], 0, "phase")
        if obj.get("null_phase_id", NULL_PHASE) != NULL_PHASE:
            raise TaxonomyError("null_phase_id must be -1")
        return cls(names=tuple(p["name"] for p in phases))
