"""Training harness for the contribution model and the inpainting pair.

Covers manifest ingestion with collected (non-fatal) per-record errors,
exact-norm gradient clipping, patience-based early stopping, random stroke
corruption masks, and the two optimization loops. Both loops are
deterministic given a seed in single-threaded mode: identical configs
produce bit-identical loss histories.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, replace

import cv2
import numpy as np
import torch
from PIL import Image

from .imaging import MaskSet, load_image, validate_image
from .inpaint import (
    Discriminator,
    Generator,
    composite_batch,
    loss_confidence,
    loss_discriminator,
    save_inpaint_checkpoint,
)
from .scoring import (
    ScoreModel,
    overall_from_features,
    precompute_scene_features,
    predict_overall,
    save_score_checkpoint,
    total_loss,
)


@dataclass
class TrainingConfig:
    """Hyperparameters for both training loops (defaults used throughout:
    unit aesthetic-loss weight, 100 epochs, score batches of 32 at lr 4e-4,
    patience 15, clip norm 5, 256 px inputs, inpaint batches of 64 at
    lr 1e-4)."""

    lambda_aes: float = 1.0
    epochs: int = 100
    batch_size_score: int = 32
    lr_score: float = 4e-4
    early_stop_patience: int = 15
    grad_clip_norm: float = 5.0
    input_resolution: int = 256
    lr_inpaint: float = 1e-4
    batch_size_inpaint: int = 64
    seed: int = 0
    hinge: bool = True
    monitor: str = "train"  # "train" or "val"
    val_fraction: float = 0.10
    deterministic: bool = True

    def __post_init__(self):
        positive = {
            "lambda_aes": self.lambda_aes,
            "epochs": self.epochs,
            "batch_size_score": self.batch_size_score,
            "lr_score": self.lr_score,
            "early_stop_patience": self.early_stop_patience,
            "grad_clip_norm": self.grad_clip_norm,
            "input_resolution": self.input_resolution,
            "lr_inpaint": self.lr_inpaint,
            "batch_size_inpaint": self.batch_size_inpaint,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if self.monitor not in ("train", "val"):
            raise ValueError(f"monitor must be 'train' or 'val', got {self.monitor!r}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")


@dataclass(frozen=True)
class ScoreDatasetRecord:
    """One manifest row: image path plus its two labels in [0, 1]."""

    image_path: str
    y_aes: float
    y_content: float


def _normalize_column(values: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1], but only when values fall outside it."""
    lo, hi = float(values.min()), float(values.max())
    if 0.0 <= lo and hi <= 1.0:
        return values
    if hi == lo:
        return np.full_like(values, 0.5)
    return (values - lo) / (hi - lo)


def ingest_score_dataset(manifest_path):
    """Read a `image_path,y_aes,y_content` CSV into verified records.

    Also accepts the multi-rater layout where the label columns are
    `y_aes_1..y_aes_n` / `y_content_1..y_content_n`; rater scores are
    averaged at load. Unreadable images and malformed rows do not abort
    the run — they are returned as a second list of error dicts, each
    carrying the 1-based line number. Labels are min-max normalized to
    [0, 1] when any value falls outside.
    """
    records: list = []
    errors: list = []
    base_dir = os.path.dirname(os.path.abspath(manifest_path))
    with open(manifest_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{manifest_path} is empty (no header)")
        header = [h.strip() for h in header]
        if header[0] != "image_path":
            raise ValueError(f"first manifest column must be image_path, got {header[0]!r}")
        aes_cols = [i for i, h in enumerate(header) if h == "y_aes" or h.startswith("y_aes_")]
        content_cols = [
            i for i, h in enumerate(header) if h == "y_content" or h.startswith("y_content_")
        ]
        if not aes_cols or not content_cols:
            raise ValueError(f"manifest header lacks y_aes/y_content columns: {header}")

        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                errors.append(
                    {
                        "line": line_no,
                        "kind": "parse-error",
                        "message": f"expected {len(header)} columns, got {len(row)}",
                    }
                )
                continue
            path = row[0].strip()
            try:
                y_aes = float(np.mean([float(row[i]) for i in aes_cols]))
                y_content = float(np.mean([float(row[i]) for i in content_cols]))
            except ValueError as exc:
                errors.append({"line": line_no, "kind": "parse-error", "message": str(exc)})
                continue
            if not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            try:
                with Image.open(path) as img:
                    img.verify()
            except Exception as exc:
                errors.append({"line": line_no, "kind": "io-error", "message": f"{path}: {exc}"})
                continue
            rows.append((path, y_aes, y_content))

    if rows:
        aes = _normalize_column(np.array([r[1] for r in rows], dtype=np.float64))
        content = _normalize_column(np.array([r[2] for r in rows], dtype=np.float64))
        records = [
            ScoreDatasetRecord(image_path=r[0], y_aes=float(a), y_content=float(c))
            for r, a, c in zip(rows, aes, content)
        ]
    return records, errors


def clip_gradients(gradient, max_norm: float) -> np.ndarray:
    """Rescale a gradient vector onto the max_norm ball, exactly.

    Returns g unchanged when its Euclidean norm is within the bound,
    otherwise g * (max_norm / ||g||).
    """
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    g = np.asarray(gradient, dtype=np.float64)
    norm = float(np.linalg.norm(g.ravel()))
    if norm <= max_norm:
        return g.copy()
    return g * (max_norm / norm)


def _clip_param_gradients(params, max_norm: float) -> float:
    """In-place exact-scaling clip over a parameter list; returns the pre-clip norm."""
    grads = [p.grad for p in params if p.grad is not None]
    if not grads:
        return 0.0
    total = torch.sqrt(sum((g.detach() ** 2).sum() for g in grads))
    norm = float(total)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g.detach().mul_(scale)
    return norm


def early_stop_check(loss_history, patience: int) -> bool:
    """True when the running best has not improved in `patience` epochs."""
    if patience < 1:
        raise ValueError(f"patience must be >= 1, got {patience}")
    history = list(loss_history)
    if not history:
        return False
    first_best = int(np.argmin(history))
    return (len(history) - 1 - first_best) >= patience


@dataclass(frozen=True)
class StrokeMaskSpec:
    """Controls for random free-form corruption masks.

    Stroke widths are fractions of min(H, W), converted to pixels at draw
    time; the total masked area never exceeds max_total_fraction (a stroke
    that would cross the cap is dropped and drawing stops).
    """

    num_strokes: tuple = (1, 5)
    width_fraction: tuple = (0.02, 0.08)
    max_total_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.num_strokes
        if lo < 0 or hi < lo:
            raise ValueError(f"invalid num_strokes range {self.num_strokes}")
        wlo, whi = self.width_fraction
        if not 0 < wlo <= whi < 1:
            raise ValueError(f"invalid width_fraction range {self.width_fraction}")
        if not 0 < self.max_total_fraction < 1:
            raise ValueError(
                f"max_total_fraction must be in (0, 1), got {self.max_total_fraction}"
            )


def random_stroke_mask(height: int, width: int, spec: StrokeMaskSpec) -> np.ndarray:
    """Rasterize a few random piecewise-linear strokes into a binary mask.

    Deterministic for a given spec (the seed drives everything); area
    fraction is capped by construction.
    """
    rng = np.random.default_rng(spec.seed)
    mask = np.zeros((height, width), dtype=np.uint8)
    lo, hi = spec.num_strokes
    n_strokes = int(rng.integers(lo, hi + 1)) if hi > 0 else 0
    min_side = min(height, width)
    total_px = height * width
    for _ in range(n_strokes):
        n_segments = int(rng.integers(1, 5))
        xs = rng.integers(0, width, size=n_segments + 1)
        ys = rng.integers(0, height, size=n_segments + 1)
        pts = np.stack([xs, ys], axis=1).astype(np.int32).reshape(-1, 1, 2)
        thickness = max(1, int(round(rng.uniform(*spec.width_fraction) * min_side)))
        candidate = mask.copy()
        cv2.polylines(candidate, [pts], isClosed=False, color=1, thickness=thickness)
        if candidate.sum() / total_px > spec.max_total_fraction:
            break
        mask = candidate
    return mask


def _log_jsonl(path, payload: dict) -> None:
    if path is None:
        return
    with open(path, "a") as fh:
        fh.write(json.dumps(payload) + "\n")


def _as_samples(dataset, masks_provider):
    """Normalize heterogeneous dataset items into (image, masks, ya, yc)."""
    samples = []
    for item in dataset:
        if isinstance(item, ScoreDatasetRecord):
            image = load_image(item.image_path)
            masks, ya, yc = None, item.y_aes, item.y_content
        elif len(item) == 4:
            image, masks, ya, yc = item
        elif len(item) == 3:
            image, ya, yc = item
            masks = None
        else:
            raise ValueError(f"unrecognized dataset item: {item!r}")
        validate_image(image)
        if masks is None:
            if masks_provider is None:
                raise ValueError("dataset items without masks require a masks_provider")
            masks = masks_provider(image)
        if not isinstance(masks, MaskSet):
            raise ValueError(f"expected a MaskSet per sample, got {type(masks)}")
        if len(masks) == 0:
            continue  # nothing to attribute; skip the sample
        samples.append((image, masks, float(ya), float(yc)))
    return samples


def train_score_model(
    dataset,
    masks_provider,
    config: TrainingConfig,
    model: ScoreModel | None = None,
    checkpoint_dir=None,
    log_path=None,
):
    """Fit the score estimator and mixing network on labeled scenes.

    Dataset items may be manifest records, (image, y_aes, y_content)
    triples resolved through `masks_provider`, or (image, masks, y_aes,
    y_content) tuples with precomputed segmentation. Optimization is
    adaptive-moment with exact-norm clipping and patience-based early
    stopping; per-epoch checkpoints land in `checkpoint_dir` along with a
    running `best.ckpt`. Returns (model, history dict).
    """
    if model is None:
        from .scoring import TinyBackbone

        model = ScoreModel(
            TinyBackbone(seed=config.seed), input_resolution=config.input_resolution
        )
    samples = _as_samples(dataset, masks_provider)
    if not samples:
        raise ValueError("training dataset is empty (or no sample has any elements)")

    if config.deterministic:
        torch.set_num_threads(1)
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    n = len(samples)
    indices = np.arange(n)
    if config.monitor == "val" and n >= 2:
        shuffled = rng.permutation(n)
        n_val = max(1, int(round(config.val_fraction * n)))
        val_idx = shuffled[:n_val]
        train_idx = shuffled[n_val:]
        if len(train_idx) == 0:
            train_idx, val_idx = indices, np.array([], dtype=int)
    else:
        train_idx, val_idx = indices, np.array([], dtype=int)

    frozen = not any(p.requires_grad for p in model.backbone.parameters())
    cache = {}
    if frozen:
        for i, (image, masks, _, _) in enumerate(samples):
            cache[i] = precompute_scene_features(image, masks, model)

    def predict(i):
        if frozen:
            return overall_from_features(cache[i], model)
        image, masks, _, _ = samples[i]
        return predict_overall(image, masks, model)

    optimizer = torch.optim.Adam(model.trainable_parameters(), lr=config.lr_score)
    history = {"train": [], "monitored": [], "val": [], "best_epoch": None}
    best = math.inf
    global_step = 0
    if checkpoint_dir is not None:
        os.makedirs(os.path.join(checkpoint_dir, "score"), exist_ok=True)

    for epoch in range(1, config.epochs + 1):
        model.train()
        order = rng.permutation(train_idx)
        epoch_loss = 0.0
        epoch_aes = 0.0
        epoch_content = 0.0
        for start in range(0, len(order), config.batch_size_score):
            batch = order[start : start + config.batch_size_score]
            preds_a, preds_c, ys_a, ys_c = [], [], [], []
            for i in batch:
                sa, sc = predict(int(i))
                preds_a.append(sa)
                preds_c.append(sc)
                ys_a.append(samples[int(i)][2])
                ys_c.append(samples[int(i)][3])
            pa = torch.stack(preds_a)
            pc = torch.stack(preds_c)
            loss = total_loss(pa, pc, ys_a, ys_c, lambda_aes=config.lambda_aes)
            optimizer.zero_grad()
            loss.backward()
            _clip_param_gradients(model.trainable_parameters(), config.grad_clip_norm)
            optimizer.step()
            global_step += 1
            with torch.no_grad():
                la = float(((torch.as_tensor(ys_a, dtype=pa.dtype) - pa) ** 2).mean())
                lc = float(((torch.as_tensor(ys_c, dtype=pc.dtype) - pc) ** 2).mean())
            epoch_loss += float(loss.detach()) * len(batch)
            epoch_aes += la * len(batch)
            epoch_content += lc * len(batch)
        epoch_loss /= len(order)
        epoch_aes /= len(order)
        epoch_content /= len(order)
        history["train"].append(epoch_loss)

        if len(val_idx):
            model.eval()
            with torch.no_grad():
                va, vc, ya, yc = [], [], [], []
                for i in val_idx:
                    sa, sc = predict(int(i))
                    va.append(sa)
                    vc.append(sc)
                    ya.append(samples[int(i)][2])
                    yc.append(samples[int(i)][3])
                val_loss = float(
                    total_loss(
                        torch.stack(va), torch.stack(vc), ya, yc, lambda_aes=config.lambda_aes
                    )
                )
            history["val"].append(val_loss)
        monitored = (
            history["val"][-1] if (config.monitor == "val" and len(val_idx)) else epoch_loss
        )
        history["monitored"].append(monitored)

        _log_jsonl(
            log_path,
            {
                "step": global_step,
                "epoch": epoch,
                "loss": epoch_loss,
                "loss_aes": epoch_aes,
                "loss_content": epoch_content,
                "monitored": monitored,
            },
        )
        if checkpoint_dir is not None:
            save_score_checkpoint(
                model, os.path.join(checkpoint_dir, "score", f"{epoch}.ckpt")
            )
        if monitored < best:
            best = monitored
            history["best_epoch"] = epoch
            if checkpoint_dir is not None:
                save_score_checkpoint(model, os.path.join(checkpoint_dir, "score", "best.ckpt"))
        if early_stop_check(history["monitored"], config.early_stop_patience):
            break

    model.eval()
    return model, history


def _load_corpus(corpus):
    images = []
    for item in corpus:
        img = load_image(item) if isinstance(item, (str, os.PathLike)) else item
        validate_image(img)
        images.append(img.astype(np.float64))
    if not images:
        raise ValueError("inpainting corpus is empty")
    shape = images[0].shape
    if any(img.shape != shape for img in images):
        raise ValueError("inpainting corpus images must share one shape; resize beforehand")
    return images


def train_inpaint_model(
    corpus,
    object_masks,
    stroke_spec: StrokeMaskSpec,
    config: TrainingConfig,
    generator: Generator | None = None,
    discriminator: Discriminator | None = None,
    steps: int | None = None,
    checkpoint_dir=None,
    log_path=None,
):
    """Alternating generator/discriminator training on corrupted images.

    Corruption alternates deterministically between object-shaped masks
    (even steps, cycling through `object_masks`) and random strokes (odd
    steps), a 50/50 schedule. Each step updates the discriminator on the
    real/fake margin, then the generator on reconstruction + adversarial +
    confidence terms. `steps` caps the total number of updates (otherwise
    epochs over the corpus apply). Returns (generator, discriminator,
    history) where history is a list of per-step loss component dicts.
    """
    images = _load_corpus(corpus)
    h, w = images[0].shape[:2]
    if generator is None:
        generator = Generator(seed=config.seed)
    if discriminator is None:
        discriminator = Discriminator(seed=config.seed)
    use_objects = bool(object_masks)
    if use_objects:
        object_masks = [np.asarray(m, dtype=np.uint8) for m in object_masks]
        for m in object_masks:
            if m.shape != (h, w):
                raise ValueError("object masks must match corpus image shape")

    if config.deterministic:
        torch.set_num_threads(1)
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    dtype = next(generator.parameters()).dtype

    batch_size = min(config.batch_size_inpaint, len(images))
    steps_per_epoch = max(1, math.ceil(len(images) / batch_size))
    total_steps = steps if steps is not None else config.epochs * steps_per_epoch

    opt_g = torch.optim.Adam(generator.parameters(), lr=config.lr_inpaint)
    opt_d = torch.optim.Adam(discriminator.parameters(), lr=config.lr_inpaint)

    if checkpoint_dir is not None:
        os.makedirs(os.path.join(checkpoint_dir, "inpaint"), exist_ok=True)

    history: list = []
    best = math.inf
    for step in range(total_steps):
        batch_idx = rng.integers(0, len(images), size=batch_size)
        use_stroke = (step % 2 == 1) or not use_objects
        batch_imgs, batch_masks = [], []
        for j, i in enumerate(batch_idx):
            if use_stroke:
                mask = random_stroke_mask(
                    h, w, replace(stroke_spec, seed=stroke_spec.seed + 1000003 * step + j)
                )
            else:
                mask = object_masks[(step * batch_size + j) % len(object_masks)]
            batch_imgs.append(images[int(i)])
            batch_masks.append(mask)
        p = torch.from_numpy(np.stack(batch_imgs).transpose(0, 3, 1, 2)).to(dtype)
        m = torch.from_numpy(np.stack(batch_masks).astype(np.float64)).to(dtype).unsqueeze(1)
        p_c = p * (1.0 - m)

        y, b = generator(p_c)

        opt_d.zero_grad()
        d_loss = loss_discriminator(p, y, m, discriminator, hinge=config.hinge)
        d_loss.backward()
        _clip_param_gradients(list(discriminator.parameters()), config.grad_clip_norm)
        opt_d.step()

        opt_g.zero_grad()
        rec = (y - p).abs().mean()
        adv = (1.0 - discriminator(composite_batch(p, y, m))).mean()
        l_b = loss_confidence(p, y, b, m)
        g_total = rec + adv + l_b
        g_total.backward()
        _clip_param_gradients(list(generator.parameters()), config.grad_clip_norm)
        opt_g.step()

        row = {
            "step": step,
            "epoch": step // steps_per_epoch + 1,
            "loss_g": float((rec + adv).detach()),
            "reconstruction": float(rec.detach()),
            "adversarial": float(adv.detach()),
            "loss_d": float(d_loss.detach()),
            "loss_b": float(l_b.detach()),
            "mask_source": "stroke" if use_stroke else "object",
        }
        history.append(row)
        _log_jsonl(log_path, row)

        end_of_epoch = (step + 1) % steps_per_epoch == 0 or step + 1 == total_steps
        if checkpoint_dir is not None and end_of_epoch:
            epoch = step // steps_per_epoch + 1
            save_inpaint_checkpoint(
                generator,
                discriminator,
                os.path.join(checkpoint_dir, "inpaint", f"{epoch}.ckpt"),
                metadata={"step": step, "epoch": epoch},
            )
            recent = [r["loss_g"] + r["loss_b"] for r in history[-steps_per_epoch:]]
            epoch_loss = float(np.mean(recent))
            if epoch_loss < best:
                best = epoch_loss
                save_inpaint_checkpoint(
                    generator,
                    discriminator,
                    os.path.join(checkpoint_dir, "inpaint", "best.ckpt"),
                    metadata={"step": step, "epoch": epoch, "loss": epoch_loss},
                )

    generator.eval()
    discriminator.eval()
    return generator, discriminator, history
