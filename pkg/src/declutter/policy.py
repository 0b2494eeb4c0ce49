"""Clutter classification overrides and removal-suggestion rules.

The model's sign-of-q categories can be flipped per element by the user;
those decisions live in an override ledger that always wins. For elements
that end up classified as clutter we offer removal suggestions: inpainting
is always available, and when the element is small and sits near the frame
edge the conventional photographic tricks (zoom in, reposition the camera,
change orientation) are offered as non-destructive alternatives.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .imaging import ElementMask, MaskSet, mask_touches_boundary
from .scoring import CLUTTER, NORMAL, SceneAssessment

ZOOM_IN = "zoom-in"
REPOSITION_CAMERA = "reposition-camera"
CHANGE_ORIENTATION = "change-orientation"
INPAINT = "inpaint"

_VALID_CATEGORIES = (CLUTTER, NORMAL)


@dataclass(frozen=True)
class Suggestion:
    """One removal option with a short human-readable rationale."""

    kind: str
    rationale: str


@dataclass(frozen=True)
class SuggestionPolicy:
    """Thresholds gating the conventional-trick suggestions.

    area_threshold: fraction of image area below which an element counts as
        small enough to crop away without recomposing the shot.
    boundary_margin: fraction of min(H, W); elements intersecting a band of
        this width along the frame edge count as near the boundary.
    """

    area_threshold: float = 0.05
    boundary_margin: float = 0.10

    def __post_init__(self):
        if not 0.0 < self.area_threshold < 1.0:
            raise ValueError(f"area_threshold must be in (0, 1), got {self.area_threshold}")
        if not 0.0 < self.boundary_margin < 1.0:
            raise ValueError(f"boundary_margin must be in (0, 1), got {self.boundary_margin}")


DEFAULT_POLICY = SuggestionPolicy()


class OverrideLedger:
    """Per-element forced categories; the latest write for an index wins."""

    def __init__(self):
        self._entries: dict = {}

    def set(self, index: int, category: str, timestamp: float | None = None) -> None:
        if category not in _VALID_CATEGORIES:
            raise ValueError(f"category must be one of {_VALID_CATEGORIES}, got {category!r}")
        if not isinstance(index, (int, np.integer)) or index < 1:
            raise ValueError(f"element index must be a positive integer, got {index!r}")
        self._entries[int(index)] = {
            "category": category,
            "timestamp": time.time() if timestamp is None else float(timestamp),
        }

    def get(self, index: int):
        entry = self._entries.get(int(index))
        return None if entry is None else entry["category"]

    def indices(self):
        return sorted(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __bool__(self) -> bool:
        return bool(self._entries)

    def as_dict(self) -> dict:
        return {str(i): dict(e) for i, e in self._entries.items()}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, payload: str) -> "OverrideLedger":
        ledger = cls()
        for key, entry in json.loads(payload).items():
            ledger.set(int(key), entry["category"], timestamp=entry["timestamp"])
        return ledger


@dataclass(frozen=True)
class ClutterSelection:
    """Indices of elements slated for removal plus their combined mask."""

    indices: tuple
    union_mask: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


def effective_categories(assessment: SceneAssessment, ledger: OverrideLedger) -> list:
    """Model categories with ledger overrides applied on top."""
    k = len(assessment.categories)
    categories = list(assessment.categories)
    for index in ledger.indices():
        if not 1 <= index <= k:
            raise ValueError(f"override index {index} outside 1..{k}")
        categories[index - 1] = ledger.get(index)
    return categories


def suggest(
    element: ElementMask, category: str, policy: SuggestionPolicy = DEFAULT_POLICY
) -> list:
    """Removal options for one element given its effective category.

    Normal elements get no suggestions. Clutter always gets inpainting;
    the conventional tricks are added only when the element is both near
    the frame boundary and smaller than the policy's area threshold, so
    cropping it out would not significantly change the composition.
    """
    if category not in _VALID_CATEGORIES:
        raise ValueError(f"category must be one of {_VALID_CATEGORIES}, got {category!r}")
    if category == NORMAL:
        return []
    h, w = element.mask.shape
    margin = policy.boundary_margin * min(h, w)
    small = element.area_fraction() < policy.area_threshold
    near_edge = mask_touches_boundary(element.mask, margin)
    suggestions = []
    if small and near_edge:
        suggestions.extend(
            [
                Suggestion(ZOOM_IN, "small element near the frame edge; zooming in excludes it"),
                Suggestion(
                    REPOSITION_CAMERA,
                    "a small shift of the camera moves this out of frame",
                ),
                Suggestion(
                    CHANGE_ORIENTATION,
                    "rotating the framing can drop this edge element from the shot",
                ),
            ]
        )
    suggestions.append(Suggestion(INPAINT, "remove it and fill the region from surroundings"))
    return suggestions


def select_clutter(
    assessment: SceneAssessment, ledger: OverrideLedger, masks: MaskSet
) -> ClutterSelection:
    """Collect the elements whose effective category is clutter.

    The union mask is the elementwise OR of the selected masks, which is
    exactly the region handed to the inpainting stage.
    """
    categories = effective_categories(assessment, ledger)
    if len(categories) != len(masks):
        raise ValueError(
            f"assessment covers {len(categories)} elements but mask set has {len(masks)}"
        )
    indices = tuple(m.index for m, cat in zip(masks.masks, categories) if cat == CLUTTER)
    union = masks.union_mask(indices)
    return ClutterSelection(indices=indices, union_mask=union)
