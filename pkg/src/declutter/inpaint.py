"""Iterative confidence-gated inpainting.

The generator consumes the corrupted photo (clutter region zeroed out) and
produces both an inpainted image y and a per-pixel artifact-probability
map b. Rather than trusting an entire fill at once, the removal loop keeps
only the pixels the generator is confident about (low b), re-corrupts the
rest, and tries again, forcing full acceptance at the iteration cap so the
loop always terminates with the hole closed.

Losses: the generator trains on reconstruction + adversarial terms, the
discriminator on a real/fake margin (optionally hinge-clamped), and the
confidence branch on masked (1 - b) * |y - p|, which pushes b up exactly
where the generated pixels are far from ground truth.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import CheckpointError
from .imaging import (
    apply_mask_complement,
    composite,
    save_gray,
    save_image,
    validate_binary_mask,
    validate_image,
)

INPAINT_CHECKPOINT_FORMAT = "declutter-inpaint-checkpoint"
INPAINT_CHECKPOINT_VERSION = 1

DEFAULT_ENCODER = (48, 48, 96, 96, 192, 192)
DEFAULT_DECODER = (192, 192, 96, 96, 48, 24, 3)


class Generator(nn.Module):
    """Two-branch fill network: inpainted image plus confidence map.

    Encoder convs downsample (stride 2) at every odd layer index; the
    decoder mirrors with nearest-neighbor upsampling before each odd conv.
    The image branch ends in a sigmoid so outputs stay in [0, 1]; a small
    separate head on the penultimate decoder features emits the artifact
    probability b through the same squashing. Keeping the confidence head
    off the image path means the adversarial/reconstruction loss never
    touches its parameters.
    """

    def __init__(
        self,
        encoder_channels=DEFAULT_ENCODER,
        decoder_channels=DEFAULT_DECODER,
        confidence_hidden: int = 16,
        native_resolution: int = 256,
        seed: int = 0,
    ):
        super().__init__()
        encoder_channels = tuple(encoder_channels)
        decoder_channels = tuple(decoder_channels)
        if decoder_channels[-1] != 3:
            raise ValueError("decoder must end in a 3-channel layer")
        n_down = len(encoder_channels) // 2
        if len(decoder_channels) < 2 * n_down + 1:
            raise ValueError("decoder too shallow to undo the encoder's downsampling")
        self.encoder_channels = encoder_channels
        self.decoder_channels = decoder_channels
        self.confidence_hidden = confidence_hidden
        self.native_resolution = native_resolution
        self.seed = seed
        self.n_down = n_down
        self.pad_multiple = 2**n_down

        with torch.random.fork_rng():
            torch.manual_seed(seed)
            enc = []
            in_ch = 3
            for i, out_ch in enumerate(encoder_channels):
                stride = 2 if i % 2 == 1 else 1
                enc.append(nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=stride, padding=1))
                in_ch = out_ch
            self.encoder = nn.ModuleList(enc)

            dec = []
            self.upsample_before = set()
            ups_left = n_down
            for i, out_ch in enumerate(decoder_channels):
                if ups_left > 0 and i % 2 == 1:
                    self.upsample_before.add(i)
                    ups_left -= 1
                dec.append(nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=1, padding=1))
                in_ch = out_ch
            self.decoder = nn.ModuleList(dec)

            penultimate = decoder_channels[-2]
            self.confidence_branch = nn.Sequential(
                nn.Conv2d(penultimate, confidence_hidden, kernel_size=3, padding=1),
                nn.ReLU(inplace=True),
                nn.Conv2d(confidence_hidden, 1, kernel_size=3, padding=1),
            )

    @property
    def config(self) -> dict:
        return {
            "encoder_channels": list(self.encoder_channels),
            "decoder_channels": list(self.decoder_channels),
            "confidence_hidden": self.confidence_hidden,
            "native_resolution": self.native_resolution,
            "seed": self.seed,
        }

    def image_parameters(self):
        """Parameters on the y path (encoder + decoder trunk)."""
        params = []
        for m in list(self.encoder) + list(self.decoder):
            params.extend(m.parameters())
        return params

    def confidence_parameters(self):
        return list(self.confidence_branch.parameters())

    def forward(self, corrupted: torch.Tensor):
        """(B, 3, H, W) corrupted batch -> (y, b) with b shaped (B, 1, H, W)."""
        _, _, h, w = corrupted.shape
        mult = self.pad_multiple
        pad_h = (mult - h % mult) % mult
        pad_w = (mult - w % mult) % mult
        x = corrupted
        if pad_h or pad_w:
            x = F.pad(x, (0, pad_w, 0, pad_h), mode="replicate")

        for conv in self.encoder:
            x = F.relu(conv(x))
        for i, conv in enumerate(self.decoder):
            if i in self.upsample_before:
                x = F.interpolate(x, scale_factor=2, mode="nearest")
            if i == len(self.decoder) - 1:
                trunk = x
                x = torch.sigmoid(conv(x))
            else:
                x = F.relu(conv(x))
        y = x[:, :, :h, :w]
        b = torch.sigmoid(self.confidence_branch(trunk))[:, :, :h, :w]
        return y, b


class Discriminator(nn.Module):
    """Patch-style convolutional critic collapsed to one score per image."""

    def __init__(self, channels=(48, 96, 192), seed: int = 0):
        super().__init__()
        self.channels = tuple(channels)
        self.seed = seed
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            layers = []
            in_ch = 3
            for out_ch in self.channels:
                layers.append(nn.Conv2d(in_ch, out_ch, kernel_size=4, stride=2, padding=1))
                layers.append(nn.LeakyReLU(0.2, inplace=True))
                in_ch = out_ch
            layers.append(nn.Conv2d(in_ch, 1, kernel_size=3, padding=1))
            self.net = nn.Sequential(*layers)

    @property
    def config(self) -> dict:
        return {"channels": list(self.channels), "seed": self.seed}

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Returns one scalar score per batch item (mean over patches)."""
        return self.net(x).mean(dim=(1, 2, 3))


def _mask_to_channel(mask: torch.Tensor) -> torch.Tensor:
    if mask.dim() == 3:  # (B, H, W) -> (B, 1, H, W)
        return mask.unsqueeze(1)
    return mask


def composite_batch(original: torch.Tensor, generated: torch.Tensor, mask: torch.Tensor):
    """Generated pixels inside the mask, original pixels outside."""
    m = _mask_to_channel(mask).to(original.dtype)
    return m * generated + (1.0 - m) * original


def loss_generator(
    original: torch.Tensor,
    generated: torch.Tensor,
    mask: torch.Tensor,
    discriminator: Discriminator,
):
    """Reconstruction + adversarial term: mean|y - p| + (1 - D(composite))."""
    rec = (generated - original).abs().mean()
    adv = (1.0 - discriminator(composite_batch(original, generated, mask))).mean()
    return rec + adv


def loss_discriminator(
    original: torch.Tensor,
    generated: torch.Tensor,
    mask: torch.Tensor,
    discriminator: Discriminator,
    hinge: bool = False,
):
    """Real/fake margin: (1 - D(p)) + (1 + D(composite)), batch-averaged.

    With hinge=True both terms clamp at zero before averaging, the usual
    stabilization; hinge=False reproduces the plain margin exactly.
    """
    fake = composite_batch(original, generated, mask).detach()
    real_term = 1.0 - discriminator(original)
    fake_term = 1.0 + discriminator(fake)
    if hinge:
        real_term = real_term.clamp(min=0.0)
        fake_term = fake_term.clamp(min=0.0)
    return real_term.mean() + fake_term.mean()


def loss_confidence(
    original: torch.Tensor, generated: torch.Tensor, b: torch.Tensor, mask: torch.Tensor
):
    """mean of m_c * (1 - b) * |y - p| over every tensor element.

    Minimizing this drives b toward 1 exactly where the generated pixels
    miss the ground truth inside the hole, and leaves b unconstrained
    elsewhere. Always >= 0; zero when the masked error vanishes.
    """
    m = _mask_to_channel(mask).to(original.dtype)
    bb = _mask_to_channel(b)
    return (m * (1.0 - bb) * (generated - original).abs()).mean()


def _to_batch(image: np.ndarray, dtype: torch.dtype) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))).to(dtype).unsqueeze(0)


def generate(corrupted: np.ndarray, mask: np.ndarray, generator: Generator):
    """One deterministic fill pass on a full image.

    Returns (y, b) as numpy arrays: y is (H, W, 3) in [0, 1], b is (H, W)
    in [0, 1]. The mask is validated against the image but the network sees
    only the corrupted pixels; zeroed holes are its entire signal.
    """
    validate_image(corrupted)
    validate_binary_mask(mask, corrupted)
    if min(corrupted.shape[:2]) < generator.pad_multiple:
        raise ValueError(
            f"image sides must be >= {generator.pad_multiple}, got {corrupted.shape[:2]}"
        )
    dtype = next(generator.parameters()).dtype
    with torch.no_grad():
        y_t, b_t = generator(_to_batch(corrupted, dtype))
    y = y_t[0].numpy().transpose(1, 2, 0).astype(np.float64)
    b = b_t[0, 0].numpy().astype(np.float64)
    return np.clip(y, 0.0, 1.0), np.clip(b, 0.0, 1.0)


def _feather_window(tile_h: int, tile_w: int) -> np.ndarray:
    """Separable triangular weights, strictly positive, peaked at the center."""
    wy = 1.0 - np.abs(np.linspace(-1.0, 1.0, tile_h + 2)[1:-1])
    wx = 1.0 - np.abs(np.linspace(-1.0, 1.0, tile_w + 2)[1:-1])
    return np.outer(wy, wx)


def tiled_generate(
    corrupted: np.ndarray,
    mask: np.ndarray,
    generator: Generator,
    tile: int | None = None,
    overlap: int | None = None,
):
    """Fill a large image by blending overlapping native-resolution tiles.

    Each window runs through the generator independently; outputs are
    averaged under a feathered (triangular) weight so seams cross-fade
    instead of snapping. Falls back to a single pass when the image already
    fits in one tile.
    """
    validate_image(corrupted)
    validate_binary_mask(mask, corrupted)
    h, w = corrupted.shape[:2]
    tile = generator.native_resolution if tile is None else tile
    overlap = tile // 4 if overlap is None else overlap
    if h <= tile and w <= tile:
        return generate(corrupted, mask, generator)
    if not 0 < overlap < tile:
        raise ValueError(f"overlap must be in (0, tile), got {overlap}")

    stride = tile - overlap
    ys = list(range(0, max(h - tile, 0) + 1, stride))
    xs = list(range(0, max(w - tile, 0) + 1, stride))
    if ys[-1] + tile < h:
        ys.append(h - tile)
    if xs[-1] + tile < w:
        xs.append(w - tile)

    acc_y = np.zeros((h, w, 3), dtype=np.float64)
    acc_b = np.zeros((h, w), dtype=np.float64)
    acc_w = np.zeros((h, w), dtype=np.float64)
    for y0 in ys:
        for x0 in xs:
            th = min(tile, h - y0)
            tw = min(tile, w - x0)
            sub = corrupted[y0 : y0 + th, x0 : x0 + tw]
            sub_mask = mask[y0 : y0 + th, x0 : x0 + tw]
            ty, tb = generate(sub, sub_mask, generator)
            win = _feather_window(th, tw)
            acc_y[y0 : y0 + th, x0 : x0 + tw] += ty * win[..., None]
            acc_b[y0 : y0 + th, x0 : x0 + tw] += tb * win
            acc_w[y0 : y0 + th, x0 : x0 + tw] += win
    y_out = acc_y / acc_w[..., None]
    b_out = acc_b / acc_w
    return np.clip(y_out, 0.0, 1.0), np.clip(b_out, 0.0, 1.0)


@dataclass(frozen=True)
class IterationRecord:
    """Pixels accepted at one round plus the confidence map that chose them."""

    accepted_mask: np.ndarray
    confidence_map: np.ndarray


@dataclass
class InpaintResult:
    """Outcome of the progressive fill loop."""

    final_image: np.ndarray
    iterations_used: int
    per_iteration: list
    residual_mask_final: np.ndarray


def iterative_inpaint(
    image: np.ndarray,
    clutter_mask: np.ndarray,
    generator: Generator | None = None,
    max_iterations: int = 5,
    accept_threshold: float = 0.5,
    min_accept_fraction: float = 0.10,
    generate_fn=None,
) -> InpaintResult:
    """Progressively fill the clutter region, keeping only confident pixels.

    Each round regenerates the still-missing region from the current
    composite, accepts pixels whose artifact probability is at most
    `accept_threshold` — topped up to at least the lowest-b
    `min_accept_fraction` of the remaining hole so every round makes
    strict progress — and carries the rest forward. The final round
    accepts everything left, so the hole is always closed within
    `max_iterations` generate calls.

    `generate_fn(corrupted, missing_mask) -> (y, b)` substitutes for the
    generator when provided (stub models, custom tiling).
    """
    validate_image(image)
    validate_binary_mask(clutter_mask, image)
    if max_iterations < 1:
        raise ValueError(f"max_iterations must be >= 1, got {max_iterations}")
    if not 0.0 < accept_threshold < 1.0:
        raise ValueError(f"accept_threshold must be in (0, 1), got {accept_threshold}")
    if not 0.0 < min_accept_fraction <= 1.0:
        raise ValueError(f"min_accept_fraction must be in (0, 1], got {min_accept_fraction}")
    if generate_fn is None:
        if generator is None:
            raise ValueError("either a generator or a generate_fn is required")

        def generate_fn(corrupted, missing):
            return tiled_generate(corrupted, missing, generator)

    current = image.astype(np.float64, copy=True)
    missing = clutter_mask.astype(np.uint8, copy=True)
    records: list = []
    if not missing.any():
        return InpaintResult(
            final_image=current,
            iterations_used=0,
            per_iteration=records,
            residual_mask_final=missing,
        )

    iterations = 0
    for step in range(1, max_iterations + 1):
        corrupted = apply_mask_complement(current, missing)
        y, b = generate_fn(corrupted, missing)
        iterations = step
        if step == max_iterations:
            accepted = missing.copy()
        else:
            accepted = ((b <= accept_threshold) & (missing == 1)).astype(np.uint8)
            n_missing = int(missing.sum())
            min_accept = int(np.ceil(min_accept_fraction * n_missing))
            if int(accepted.sum()) < min_accept:
                flat_missing = np.flatnonzero(missing.ravel())
                order = flat_missing[np.argsort(b.ravel()[flat_missing], kind="stable")]
                accepted = np.zeros_like(missing).ravel()
                accepted[order[:min_accept]] = 1
                accepted = accepted.reshape(missing.shape)
        current = composite(current, y, accepted)
        records.append(
            IterationRecord(accepted_mask=accepted.copy(), confidence_map=b.astype(np.float64))
        )
        missing = (missing & (1 - accepted)).astype(np.uint8)
        if not missing.any():
            break

    return InpaintResult(
        final_image=current,
        iterations_used=iterations,
        per_iteration=records,
        residual_mask_final=missing,
    )


def export_result(result: InpaintResult, image_path, confidence_path=None) -> None:
    """Write the final image (and optionally the last confidence map) as PNG."""
    save_image(result.final_image, image_path)
    if confidence_path is not None:
        if not result.per_iteration:
            raise ValueError("no iterations recorded; no confidence map to export")
        save_gray(result.per_iteration[-1].confidence_map, confidence_path)


def save_inpaint_checkpoint(
    generator: Generator,
    discriminator: Discriminator | None,
    path,
    metadata: dict | None = None,
) -> None:
    payload = {
        "format": INPAINT_CHECKPOINT_FORMAT,
        "version": INPAINT_CHECKPOINT_VERSION,
        "generator_config": generator.config,
        "generator_state": generator.state_dict(),
        "discriminator_config": None if discriminator is None else discriminator.config,
        "discriminator_state": None if discriminator is None else discriminator.state_dict(),
        "native_resolution": generator.native_resolution,
        "metadata": metadata or {},
    }
    torch.save(payload, path)


def load_inpaint_checkpoint(path):
    """Returns (generator, discriminator-or-None, metadata)."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except (OSError, RuntimeError, pickle.UnpicklingError, EOFError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != INPAINT_CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not an inpainting checkpoint")
    if payload.get("version") != INPAINT_CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {payload.get('version')} != supported {INPAINT_CHECKPOINT_VERSION}"
        )
    gcfg = payload["generator_config"]
    generator = Generator(
        encoder_channels=tuple(gcfg["encoder_channels"]),
        decoder_channels=tuple(gcfg["decoder_channels"]),
        confidence_hidden=gcfg["confidence_hidden"],
        native_resolution=gcfg["native_resolution"],
        seed=gcfg["seed"],
    )
    generator.load_state_dict(payload["generator_state"])
    generator.eval()
    discriminator = None
    if payload["discriminator_config"] is not None:
        dcfg = payload["discriminator_config"]
        discriminator = Discriminator(channels=tuple(dcfg["channels"]), seed=dcfg["seed"])
        discriminator.load_state_dict(payload["discriminator_state"])
        discriminator.eval()
    return generator, discriminator, payload.get("metadata", {})
