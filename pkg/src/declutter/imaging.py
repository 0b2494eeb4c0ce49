"""Pixel- and mask-level primitives shared by the whole pipeline.

Images are float64 arrays of shape (H, W, 3) with values in [0, 1]; masks are
uint8 arrays of shape (H, W) with values in {0, 1}. All operations are pure
functions and never mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage


def validate_image(image: np.ndarray) -> np.ndarray:
    """Check the (H, W, 3) / [0, 1] contract and return the array unchanged."""
    if not isinstance(image, np.ndarray):
        raise ValueError(f"image must be a numpy array, got {type(image).__name__}")
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"image must have shape (H, W, 3), got {image.shape}")
    if image.shape[0] < 1 or image.shape[1] < 1:
        raise ValueError(f"image must be at least 1x1, got {image.shape}")
    if image.size and (image.min() < 0.0 or image.max() > 1.0):
        raise ValueError("image values must lie in [0, 1]")
    return image


def validate_binary_mask(mask: np.ndarray, image: np.ndarray | None = None) -> np.ndarray:
    """Check that `mask` is a binary (H, W) grid, optionally matching `image` dims."""
    if not isinstance(mask, np.ndarray):
        raise ValueError(f"mask must be a numpy array, got {type(mask).__name__}")
    if mask.ndim != 2:
        raise ValueError(f"mask must have shape (H, W), got {mask.shape}")
    values = np.unique(mask)
    if not np.isin(values, (0, 1)).all():
        raise ValueError("mask values must be 0 or 1")
    if image is not None and mask.shape != image.shape[:2]:
        raise ValueError(
            f"mask shape {mask.shape} does not match image shape {image.shape[:2]}"
        )
    return mask


@dataclass(frozen=True)
class GaussianKernel:
    """Normalized 2D Gaussian convolution kernel on an odd integer grid."""

    size: int
    variance: float
    weights: np.ndarray = field(repr=False)


def build_gaussian_kernel(size: int = 13, variance: float = 1.0) -> GaussianKernel:
    """Sample exp(-(dx^2+dy^2) / (2*variance)) on a size x size grid and normalize.

    The kernel is centered on the middle cell, sums to 1, and is exactly
    symmetric under horizontal, vertical, and diagonal reflection.
    """
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {size}")
    if variance <= 0:
        raise ValueError(f"kernel variance must be positive, got {variance}")
    half = size // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    dx, dy = np.meshgrid(coords, coords)
    weights = np.exp(-(dx**2 + dy**2) / (2.0 * variance))
    weights /= weights.sum()
    weights.setflags(write=False)
    return GaussianKernel(size=size, variance=float(variance), weights=weights)


def blur_element(image: np.ndarray, mask: np.ndarray, kernel: GaussianKernel) -> np.ndarray:
    """Build the counterfactual sub-image that blurs one element away.

    Pixels where mask == 1 are replaced by the Gaussian convolution of the
    original image at that location (symmetric reflection at the borders);
    pixels where mask == 0 are bit-identical to the input. The convolution
    reads original neighbor values only (single pass).
    """
    validate_image(image)
    validate_binary_mask(mask, image)
    blurred = np.empty_like(image)
    for c in range(3):
        blurred[..., c] = ndimage.convolve(image[..., c], kernel.weights, mode="reflect")
    np.clip(blurred, 0.0, 1.0, out=blurred)
    return np.where(mask[..., None] == 1, blurred, image)


def apply_mask_complement(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero out the masked region: image * (1 - mask), broadcast over channels."""
    validate_image(image)
    validate_binary_mask(mask, image)
    return image * (1.0 - mask[..., None])


def composite(original: np.ndarray, generated: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Take `generated` inside the mask and `original` (bit-exact) outside it."""
    validate_image(original)
    validate_image(generated)
    if original.shape != generated.shape:
        raise ValueError(
            f"original shape {original.shape} does not match generated shape {generated.shape}"
        )
    validate_binary_mask(mask, original)
    return np.where(mask[..., None] == 1, generated, original)


def mask_area_fraction(mask: np.ndarray) -> float:
    """Fraction of cells set to 1."""
    validate_binary_mask(mask)
    return float(np.count_nonzero(mask)) / mask.size


def mask_touches_boundary(mask: np.ndarray, margin: float) -> bool:
    """True iff any 1-cell lies within `margin` pixels of an image edge.

    A cell's distance to the top edge is its row index, so rows 0..floor(margin)
    qualify (margin may be fractional, e.g. a fraction of min(H, W) in pixels).
    """
    validate_binary_mask(mask)
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    h, w = mask.shape
    band = min(int(margin) + 1, h)  # rows at distance <= margin from the edge
    if mask[:band].any() or mask[h - band :].any():
        return True
    band = min(int(margin) + 1, w)
    return bool(mask[:, :band].any() or mask[:, w - band :].any())


@dataclass
class ElementMask:
    """One detected element: a 1-based index, a taxonomy label id, and its mask."""

    index: int
    label: int
    mask: np.ndarray = field(repr=False)

    def validate(self, image_shape: tuple[int, int] | None = None) -> "ElementMask":
        if self.index < 1:
            raise ValueError(f"element index must be >= 1, got {self.index}")
        validate_binary_mask(self.mask)
        if image_shape is not None and self.mask.shape != tuple(image_shape):
            raise ValueError(
                f"mask shape {self.mask.shape} does not match image dims {tuple(image_shape)}"
            )
        return self

    def area_fraction(self) -> float:
        return mask_area_fraction(self.mask)

    def bounding_box(self) -> tuple[int, int, int, int]:
        """(row0, col0, row1, col1) inclusive bounds of the 1-region; zeros if empty."""
        rows = np.flatnonzero(self.mask.any(axis=1))
        cols = np.flatnonzero(self.mask.any(axis=0))
        if rows.size == 0:
            return (0, 0, 0, 0)
        return (int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1]))


@dataclass
class MaskSet:
    """Ordered instance masks for one image, indexed 1..k with no gaps."""

    masks: list[ElementMask]
    height: int
    width: int

    def __len__(self) -> int:
        return len(self.masks)

    def __iter__(self):
        return iter(self.masks)

    def validate(self) -> "MaskSet":
        for i, m in enumerate(self.masks, start=1):
            m.validate((self.height, self.width))
            if m.index != i:
                raise ValueError(
                    f"mask indices must be 1..k with no gaps, got {m.index} at position {i}"
                )
        return self

    def union_mask(self, indices=None) -> np.ndarray:
        """Elementwise OR of the selected masks (all of them by default)."""
        union = np.zeros((self.height, self.width), dtype=np.uint8)
        wanted = None if indices is None else set(indices)
        for m in self.masks:
            if wanted is None or m.index in wanted:
                np.logical_or(union, m.mask, out=union.view(bool))
        return union


def load_image(path) -> np.ndarray:
    """Read an 8-bit PNG/JPEG as an (H, W, 3) float array via v / 255."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return arr / 255.0

def save_image(image: np.ndarray, path) -> None:
    """Write an image as 8-bit PNG/JPEG, quantized by round(255 * v)."""
    validate_image(image)
    data = np.rint(image * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)


def image_to_png_bytes(image: np.ndarray) -> bytes:
    import io

    buf = io.BytesIO()
    data = np.rint(np.asarray(image) * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_image(data: bytes) -> np.ndarray:
    import io

    with Image.open(io.BytesIO(data)) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def load_mask(path) -> np.ndarray:
    """Read a single-channel 0/255 PNG as a binary mask."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return (arr >= 128).astype(np.uint8)


def save_mask(mask: np.ndarray, path) -> None:
    """Write a binary mask as a single-channel 0/255 PNG."""
    validate_binary_mask(mask)
    Image.fromarray((mask * 255).astype(np.uint8), mode="L").save(path)


def save_gray(values: np.ndarray, path) -> None:
    """Write an (H, W) array in [0, 1] as a single-channel PNG, round(255 * v)."""
    data = np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)
