"""Planted-ground-truth scene generators.

These scenes exist so the contribution estimator can be checked against an
oracle nobody fit: each image contains "nice" elements (regular colored
stripes that raise the aesthetic label by a fixed bonus) and "ugly" ones
(high-frequency noise patches that lower it by a fixed margin). The
planting record states the sign every element's learned contribution q
should take, so sign-recovery accuracy is measurable without human labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import ElementMask, MaskSet

NICE = 1
UGLY = -1

BASE_AES = 0.55
NICE_BONUS = 0.10
UGLY_MARGIN = 0.25
BASE_CONTENT = 0.40
CONTENT_PER_ELEMENT = 0.08
ELEMENTS_PER_SCENE = 4


@dataclass
class PlantedScene:
    """One synthetic photo plus everything the oracle knows about it."""

    image: np.ndarray
    masks: MaskSet
    planted_signs: tuple  # +1 nice, -1 ugly, aligned with mask indices
    y_aes: float
    y_content: float


BACKGROUND_GRAY = 0.5


def _smooth_background(rng: np.random.Generator, size: int) -> np.ndarray:
    """Near-uniform gray with a faint random gradient.

    Backgrounds carry almost no scene identity on purpose: if each scene
    had a memorable backdrop, a scene-level shortcut (predict the label
    from the backdrop, ignore the elements) would fit the training
    objective without ever learning per-element contributions.
    """
    tilt = rng.uniform(-0.03, 0.03, size=3)
    t = np.linspace(-1.0, 1.0, size)[:, None, None]
    img = np.broadcast_to(BACKGROUND_GRAY + t * tilt[None, None, :], (size, size, 3))
    return np.clip(img, 0.0, 1.0).copy()


def _paint_nice(rng: np.random.Generator, patch: np.ndarray) -> None:
    """Fine saturated stripes whose spatial mean is the background gray.

    Elements must be high-frequency textures centered on the background
    color so the counterfactual blur genuinely erases them: a flat patch
    is blur-invariant away from its edges, and any texture with a mean
    offset would survive as a visible blob, handing the model a
    "blurred elements are still there" shortcut.
    """
    amp = rng.uniform(0.20, 0.45, size=3)
    h, w = patch.shape[:2]
    period = int(rng.integers(2, 4))
    axis = int(rng.integers(0, 2))
    idx = np.arange(h)[:, None] if axis == 0 else np.arange(w)[None, :]
    sel = np.broadcast_to(((idx // period) % 2).astype(bool), (h, w))
    hi = BACKGROUND_GRAY + amp
    lo = BACKGROUND_GRAY - amp
    patch[:] = np.where(sel[..., None], hi[None, None, :], lo[None, None, :])


def _paint_ugly(rng: np.random.Generator, patch: np.ndarray) -> None:
    """Chaotic per-pixel speckle, also zero-mean around the background."""
    amp = rng.uniform(0.30, 0.50, size=3)
    sel = rng.random(patch.shape[:2]) < 0.5
    hi = BACKGROUND_GRAY + amp
    lo = BACKGROUND_GRAY - amp
    patch[:] = np.where(sel[..., None], hi[None, None, :], lo[None, None, :])


def make_planted_scene(
    seed: int,
    size: int = 64,
    max_ugly: int = ELEMENTS_PER_SCENE - 1,
) -> PlantedScene:
    """Compose one scene with its oracle labels.

    Every scene carries exactly ``ELEMENTS_PER_SCENE`` elements, at least
    one of each type. Contribution is
    a relative quantity: in a scene whose elements are all equally good or
    equally bad, every q ties at zero (a single-element scene ties by the
    aggregation identity), so planted signs are only strict — and hence
    recoverable — when both types share the frame. Elements are jittered
    rectangles confined to separate quadrants, so masks never overlap.

    The aesthetic label is the *mean* of per-element values,
    y_aes = base + (bonus * n_nice - margin * n_ugly) / k, rather than
    their sum; with the element count fixed per scene, each ugly element
    still lowers y_aes by a fixed margin of (bonus + margin) / k relative
    to the same frame with a nice element in its place. The mean form makes the labels self-consistent under the
    weighted-sum aggregation the model trains against: the label of any
    scene equals the unweighted mean of the labels of its k leave-one-out
    counterfactuals, so the head that scores each blurred sub-image as
    "the scene without that element" is an exact zero-loss optimum, and
    its q signs match the planted types. Sum-form labels break that
    identity — the aggregate of true counterfactual scores is biased by
    the scene-mean margin, which the head cannot correct from a
    sub-image alone, and the training objective then prefers
    sign-scrambling solutions. Content stays count-based (amount of
    stuff, regardless of beauty): its uniform per-element margin is
    absorbed by a constant shift, so it adds nothing to q.
    """
    rng = np.random.default_rng(seed)
    image = _smooth_background(rng, size)

    n_ugly = int(rng.integers(1, max_ugly + 1))
    n_nice = ELEMENTS_PER_SCENE - n_ugly
    signs = [NICE] * n_nice + [UGLY] * n_ugly
    rng.shuffle(signs)

    half = size // 2
    quadrants = [(0, 0), (0, half), (half, 0), (half, half)]
    order = rng.permutation(4)
    masks = []
    for i, sign in enumerate(signs):
        qr, qc = quadrants[order[i]]
        side_h = int(rng.integers(half // 2, half - 4))
        side_w = int(rng.integers(half // 2, half - 4))
        r0 = qr + int(rng.integers(2, half - side_h - 1))
        c0 = qc + int(rng.integers(2, half - side_w - 1))
        patch = image[r0 : r0 + side_h, c0 : c0 + side_w]
        if sign == NICE:
            _paint_nice(rng, patch)
        else:
            _paint_ugly(rng, patch)
        mask = np.zeros((size, size), dtype=np.uint8)
        mask[r0 : r0 + side_h, c0 : c0 + side_w] = 1
        masks.append(ElementMask(index=i + 1, label=0, mask=mask))

    mask_set = MaskSet(masks=masks, height=size, width=size).validate()
    k = len(signs)
    y_aes = BASE_AES + (NICE_BONUS * n_nice - UGLY_MARGIN * n_ugly) / k
    y_content = BASE_CONTENT + CONTENT_PER_ELEMENT * k
    return PlantedScene(
        image=image,
        masks=mask_set,
        planted_signs=tuple(signs),
        y_aes=float(np.clip(y_aes, 0.0, 1.0)),
        y_content=float(np.clip(y_content, 0.0, 1.0)),
    )


def make_planted_dataset(n_scenes: int, seed: int = 0, size: int = 64) -> list:
    """Scenes with disjoint per-scene seeds derived from one master seed."""
    return [make_planted_scene(seed * 1_000_003 + i, size=size) for i in range(n_scenes)]


def dihedral_variants(image: np.ndarray, masks: MaskSet):
    """Yield the 8 symmetry variants (flips x rotations) of a scene.

    Masks are transformed alongside the image, so element identity and
    labels are untouched. Used to augment the planted training set: ~40x
    more distinct sub-images than score-head parameters per batch leaves
    the head no room to satisfy the per-scene aggregation constraints by
    memorising individual frames, so it must fall back on what the
    blurred sub-images actually show.
    """
    for flip in (False, True):
        for rot in range(4):

            def transform(array: np.ndarray) -> np.ndarray:
                out = np.flip(array, axis=1) if flip else array
                return np.ascontiguousarray(np.rot90(out, rot))

            variant_masks = [
                ElementMask(index=m.index, label=m.label, mask=transform(m.mask))
                for m in masks.masks
            ]
            yield transform(image), MaskSet(
                masks=variant_masks, height=masks.height, width=masks.width
            )


def recovery_training_set(scenes) -> list:
    """Augmented (image, masks, y_aes, y_content) tuples for score training."""
    return [
        (img, ms, scene.y_aes, scene.y_content)
        for scene in scenes
        for img, ms in dihedral_variants(scene.image, scene.masks)
    ]


def recovery_experiment(
    n_scenes: int = 200,
    holdout: int = 50,
    seed: int = 5,
    size: int = 64,
    kernel_variance: float = 4.0,
    epochs: int = 100,
    batch_size: int = 32,
    lr: float = 1e-3,
    model_seed: int = 0,
    backbone_channels: tuple = (8, 16),
) -> dict:
    """Train a small score model on planted scenes and measure sign recovery.

    Returns a dict with the trained model, the held-out sign-recovery
    accuracy, and the training history. The counterfactual blur uses a
    heavier variance than the full-resolution default because at 64x64 a
    unit-variance kernel leaves ~29% of a fine stripe's contrast behind,
    whereas variance 4 suppresses it below 1% — close enough to true
    removal for the leave-one-out label identity to hold.
    """
    from .scoring import ScoreModel, TinyBackbone
    from .training import TrainingConfig, train_score_model

    scenes = make_planted_dataset(n_scenes, seed=seed, size=size)
    train_scenes, test_scenes = scenes[:-holdout], scenes[-holdout:]
    dataset = recovery_training_set(train_scenes)
    model = ScoreModel(
        TinyBackbone(channels=backbone_channels, seed=model_seed),
        input_resolution=size,
        kernel_variance=kernel_variance,
    )
    config = TrainingConfig(
        epochs=epochs, seed=model_seed, batch_size_score=batch_size, lr_score=lr
    )
    model, history = train_score_model(dataset, None, config, model=model)
    accuracy = sign_recovery_accuracy(model, test_scenes)
    return {
        "model": model,
        "accuracy": accuracy,
        "history": history,
        "train_scenes": train_scenes,
        "test_scenes": test_scenes,
    }


def sign_recovery_accuracy(model, scenes) -> float:
    """Fraction of elements whose learned q-sign matches the planting.

    A nonnegative q counts as recovering a planted nice element; a strictly
    negative q recovers a planted ugly one (the same strict inequality that
    defines clutter).
    """
    from .scoring import analyze_scene

    total = 0
    hits = 0
    for scene in scenes:
        assessment = analyze_scene(scene.image, scene.masks, model)
        for q, sign in zip(assessment.contributions, scene.planted_signs):
            predicted = NICE if q >= 0 else UGLY
            hits += int(predicted == sign)
            total += 1
    return hits / max(total, 1)


def make_inpaint_corpus(n: int = 10, size: int = 32, seed: int = 0) -> list:
    """Small smooth images (gradients + one soft disc) for fill training."""
    images = []
    for i in range(n):
        rng = np.random.default_rng(seed * 7919 + i)
        img = _smooth_background(rng, size)
        cy, cx = rng.integers(size // 4, 3 * size // 4, size=2)
        radius = int(rng.integers(size // 8, size // 4))
        color = rng.uniform(0.2, 0.9, size=3)
        yy, xx = np.mgrid[0:size, 0:size]
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        soft = np.clip(1.0 - d2 / max(radius**2, 1), 0.0, 1.0)[..., None]
        img = np.clip(img * (1 - soft) + color[None, None, :] * soft, 0.0, 1.0)
        images.append(img)
    return images
