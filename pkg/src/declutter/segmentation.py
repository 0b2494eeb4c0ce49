"""Instance-mask providers.

Segmentation itself is a pluggable dependency: an external model is reached
over HTTP, and a deterministic synthetic segmenter covers tests, demos, and
desk-scale experiments. Both return a validated :class:`MaskSet`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import requests
from scipy import ndimage

from .errors import BackendUnavailableError, ProtocolError
from .imaging import ElementMask, MaskSet, image_to_png_bytes, validate_image
from .rle import decode_rle

# 80 everyday-object categories (ids 1..80) plus two extensions for clutter
# that does not manifest as objects: thin line-like structures (wires, power
# lines, plumbing) and irregular stains/dirt.
COCO_CATEGORY_NAMES = [
    "person", "bicycle", "car", "motorcycle", "airplane", "bus", "train",
    "truck", "boat", "traffic light", "fire hydrant", "stop sign",
    "parking meter", "bench", "bird", "cat", "dog", "horse", "sheep", "cow",
    "elephant", "bear", "zebra", "giraffe", "backpack", "umbrella", "handbag",
    "tie", "suitcase", "frisbee", "skis", "snowboard", "sports ball", "kite",
    "baseball bat", "baseball glove", "skateboard", "surfboard",
    "tennis racket", "bottle", "wine glass", "cup", "fork", "knife", "spoon",
    "bowl", "banana", "apple", "sandwich", "orange", "broccoli", "carrot",
    "hot dog", "pizza", "donut", "cake", "chair", "couch", "potted plant",
    "bed", "dining table", "toilet", "tv", "laptop", "mouse", "remote",
    "keyboard", "cell phone", "microwave", "oven", "toaster", "sink",
    "refrigerator", "book", "clock", "vase", "scissors", "teddy bear",
    "hair drier", "toothbrush",
]

LINE_CLUTTER_ID = 81
IRREGULAR_STAIN_ID = 82
TAXONOMY_VERSION = 1


@dataclass(frozen=True)
class LabelTaxonomy:
    """Ordered (id, name) category list; ids are unique."""

    categories: tuple = ()

    @classmethod
    def default(cls) -> "LabelTaxonomy":
        cats = [(i + 1, name) for i, name in enumerate(COCO_CATEGORY_NAMES)]
        cats.append((LINE_CLUTTER_ID, "line-shaped-clutter"))
        cats.append((IRREGULAR_STAIN_ID, "irregular-stain"))
        return cls(categories=tuple(cats))

    def name_of(self, label_id: int) -> str:
        for cid, name in self.categories:
            if cid == label_id:
                return name
        return f"category-{label_id}"

    def ids(self) -> set:
        return {cid for cid, _ in self.categories}


DEFAULT_TAXONOMY = LabelTaxonomy.default()


def validate_mask_set(
    masks: MaskSet,
    image: np.ndarray,
    min_area_fraction: float = 1e-4,
    max_elements: int = 32,
) -> MaskSet:
    """Drop tiny masks, cap the element count, and re-index 1..k.

    Masks whose area fraction falls below `min_area_fraction` are removed.
    If more than `max_elements` remain, the largest ones are kept (original
    order preserved among the kept). Any dimension mismatch raises ValueError.
    """
    validate_image(image)
    h, w = image.shape[:2]
    if (masks.height, masks.width) != (h, w):
        raise ValueError(
            f"mask set dims {(masks.height, masks.width)} do not match image dims {(h, w)}"
        )
    kept = []
    for m in masks.masks:
        if m.mask.shape != (h, w):
            raise ValueError(f"mask {m.index} has shape {m.mask.shape}, expected {(h, w)}")
        if m.area_fraction() >= min_area_fraction:
            kept.append(m)
    if len(kept) > max_elements:
        order = sorted(range(len(kept)), key=lambda i: -kept[i].area_fraction())
        keep_pos = sorted(order[:max_elements])
        kept = [kept[i] for i in keep_pos]
    relabeled = [
        ElementMask(index=i, label=m.label, mask=m.mask) for i, m in enumerate(kept, start=1)
    ]
    return MaskSet(masks=relabeled, height=h, width=w).validate()


@dataclass(frozen=True)
class PlantedShape:
    """Axis-aligned shape planted by the synthetic segmenter.

    Bounds are half-open pixel ranges [row0, row1) x [col0, col1).
    """

    row0: int
    col0: int
    row1: int
    col1: int
    label: int = IRREGULAR_STAIN_ID
    kind: str = "rect"  # "rect" or "ellipse"

    def rasterize(self, height: int, width: int) -> np.ndarray:
        mask = np.zeros((height, width), dtype=np.uint8)
        r0, r1 = max(self.row0, 0), min(self.row1, height)
        c0, c1 = max(self.col0, 0), min(self.col1, width)
        if r1 <= r0 or c1 <= c0:
            return mask
        if self.kind == "rect":
            mask[r0:r1, c0:c1] = 1
        elif self.kind == "ellipse":
            cy, cx = (self.row0 + self.row1 - 1) / 2.0, (self.col0 + self.col1 - 1) / 2.0
            ry = max((self.row1 - self.row0) / 2.0, 0.5)
            rx = max((self.col1 - self.col0) / 2.0, 0.5)
            yy, xx = np.mgrid[0:height, 0:width]
            mask[((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0] = 1
        else:
            raise ValueError(f"unknown planted shape kind: {self.kind}")
        return mask


def resolve_overlaps(raw_masks: list[np.ndarray]) -> list[np.ndarray]:
    """Assign contested pixels to the mask with the smaller total area.

    Ties break toward the earlier mask. Returned masks are pairwise disjoint.
    """
    areas = [int(m.sum()) for m in raw_masks]
    order = sorted(range(len(raw_masks)), key=lambda i: (areas[i], i))
    claimed = np.zeros(raw_masks[0].shape, dtype=bool) if raw_masks else None
    resolved: list[np.ndarray] = [None] * len(raw_masks)  # type: ignore[list-item]
    for i in order:
        own = raw_masks[i].astype(bool) & ~claimed
        claimed |= own
        resolved[i] = own.astype(np.uint8)
    return resolved


class SyntheticSegmenter:
    """Deterministic mask provider for tests and demos.

    Three modes:
      * explicit ``shapes`` — returns exactly the planted shapes;
      * ``num_shapes`` + ``seed`` — plants that many random rectangles;
      * ``detect_regions=True`` — finds connected regions that deviate from
        the image's dominant color (useful on arbitrary images with no
        external model available).
    Overlapping shapes are resolved smaller-wins before validation.
    """

    kind = "synthetic"

    def __init__(
        self,
        shapes: list[PlantedShape] | None = None,
        num_shapes: int = 0,
        seed: int = 0,
        detect_regions: bool = False,
        detect_tolerance: float = 0.12,
        default_label: int = IRREGULAR_STAIN_ID,
        min_area_fraction: float = 1e-4,
        max_elements: int = 32,
    ):
        self.shapes = list(shapes) if shapes is not None else None
        self.num_shapes = num_shapes
        self.seed = seed
        self.detect_regions = detect_regions
        self.detect_tolerance = detect_tolerance
        self.default_label = default_label
        self.min_area_fraction = min_area_fraction
        self.max_elements = max_elements

    def _random_shapes(self, height: int, width: int) -> list[PlantedShape]:
        rng = np.random.default_rng(self.seed)
        shapes = []
        for _ in range(self.num_shapes):
            sh = rng.integers(max(height // 8, 2), max(height // 3, 3))
            sw = rng.integers(max(width // 8, 2), max(width // 3, 3))
            r0 = int(rng.integers(0, max(height - sh, 1)))
            c0 = int(rng.integers(0, max(width - sw, 1)))
            label = int(rng.choice([3, 15, 44, LINE_CLUTTER_ID, IRREGULAR_STAIN_ID]))
            shapes.append(PlantedShape(r0, c0, r0 + int(sh), c0 + int(sw), label=label))
        return shapes

    def _detect(self, image: np.ndarray) -> list[tuple[int, np.ndarray]]:
        # dominant color from a coarse quantization, then connected deviants
        quantized = np.rint(image * 16).astype(np.int32)
        flat = quantized.reshape(-1, 3)
        colors, counts = np.unique(flat, axis=0, return_counts=True)
        dominant = colors[counts.argmax()] / 16.0
        deviation = np.abs(image - dominant[None, None, :]).max(axis=2)
        labeled, n = ndimage.label(deviation > self.detect_tolerance)
        out = []
        for comp in range(1, n + 1):
            mask = (labeled == comp).astype(np.uint8)
            out.append((self.default_label, mask))
        return out

    def segment(self, image: np.ndarray) -> MaskSet:
        validate_image(image)
        h, w = image.shape[:2]
        if self.detect_regions:
            labeled_masks = self._detect(image)
        else:
            shapes = self.shapes if self.shapes is not None else self._random_shapes(h, w)
            labeled_masks = [(s.label, s.rasterize(h, w)) for s in shapes]
        if labeled_masks:
            resolved = resolve_overlaps([m for _, m in labeled_masks])
            labeled_masks = [(lbl, m) for (lbl, _), m in zip(labeled_masks, resolved)]
        nonempty = [(lbl, m) for lbl, m in labeled_masks if m.any()]
        elements = [
            ElementMask(index=i, label=lbl, mask=m)
            for i, (lbl, m) in enumerate(nonempty, start=1)
        ]
        raw = MaskSet(masks=elements, height=h, width=w)
        return validate_mask_set(
            raw, image, min_area_fraction=self.min_area_fraction, max_elements=self.max_elements
        )


class ExternalSegmenter:
    """Client for an HTTP instance-segmentation backend.

    Contract: POST the image as PNG bytes to `url`; the response is a JSON
    list of ``{"label_id": int, "rle_mask": str, "score": float}`` entries.
    """

    kind = "external-model"

    def __init__(
        self,
        url: str,
        timeout: float = 30.0,
        min_area_fraction: float = 1e-4,
        max_elements: int = 32,
        session: requests.Session | None = None,
    ):
        self.url = url
        self.timeout = timeout
        self.min_area_fraction = min_area_fraction
        self.max_elements = max_elements
        self._session = session or requests.Session()

    def segment(self, image: np.ndarray) -> MaskSet:
        validate_image(image)
        h, w = image.shape[:2]
        payload = image_to_png_bytes(image)
        try:
            resp = self._session.post(
                self.url,
                data=payload,
                headers={"Content-Type": "image/png"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise BackendUnavailableError(f"segmentation backend unreachable: {exc}") from exc
        if resp.status_code >= 500:
            raise BackendUnavailableError(
                f"segmentation backend returned HTTP {resp.status_code}"
            )
        if resp.status_code != 200:
            raise ProtocolError(f"segmentation backend returned HTTP {resp.status_code}")
        try:
            entries = resp.json()
        except (json.JSONDecodeError, ValueError) as exc:
            raise ProtocolError(f"segmentation backend sent invalid JSON: {exc}") from exc
        if not isinstance(entries, list):
            raise ProtocolError("segmentation backend response must be a JSON list")
        elements = []
        for i, entry in enumerate(entries, start=1):
            try:
                label = int(entry["label_id"])
                mask = decode_rle(entry["rle_mask"], h, w)
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"malformed backend entry {i}: {exc}") from exc
            elements.append(ElementMask(index=i, label=label, mask=mask))
        raw = MaskSet(masks=elements, height=h, width=w)
        return validate_mask_set(
            raw, image, min_area_fraction=self.min_area_fraction, max_elements=self.max_elements
        )
