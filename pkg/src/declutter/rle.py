"""COCO-style uncompressed run-length encoding for binary masks.

Wire convention (shared with the web client, matched bit-for-bit by its
decoder): flatten the mask in column-major order, then emit the run lengths
of alternating values as space-separated integers, starting with the number
of leading zeros (which may be 0). The counts always sum to H * W.
"""

from __future__ import annotations

import numpy as np


def encode_rle(mask: np.ndarray) -> str:
    """Encode a binary (H, W) mask as a run-length string."""
    if mask.ndim != 2:
        raise ValueError(f"mask must have shape (H, W), got {mask.shape}")
    flat = np.asarray(mask, dtype=np.uint8).flatten(order="F")
    if flat.size == 0:
        return ""
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    runs = np.diff(np.concatenate(([0], boundaries, [flat.size])))
    counts = runs.tolist()
    if flat[0] == 1:  # encoding starts with a zero-run by convention
        counts = [0] + counts
    return " ".join(str(c) for c in counts)


def decode_rle(rle: str, height: int, width: int) -> np.ndarray:
    """Decode a run-length string back into a binary (H, W) mask."""
    if height < 1 or width < 1:
        raise ValueError(f"mask dims must be positive, got {height}x{width}")
    text = rle.strip()
    counts = [int(tok) for tok in text.split()] if text else []
    total = sum(counts)
    if total != height * width:
        raise ValueError(
            f"run lengths sum to {total}, expected {height * width} for {height}x{width}"
        )
    flat = np.zeros(height * width, dtype=np.uint8)
    pos = 0
    value = 0
    for count in counts:
        if count < 0:
            raise ValueError("run lengths must be nonnegative")
        if value:
            flat[pos : pos + count] = 1
        pos += count
        value ^= 1
    return flat.reshape((height, width), order="F")
