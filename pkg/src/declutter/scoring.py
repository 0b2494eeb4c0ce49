"""Counterfactual contribution estimation.

For each detected element the photo is re-scored with that element blurred
away; an input-conditioned mixing network combines the per-element scores
into overall aesthetic and content predictions, and the gap between the
overall score and an element's counterfactual score (scaled by its mixing
weight) is that element's signed contribution q. Elements with negative q
are classified as clutter.

The pipeline is end-to-end differentiable: gradients of the regression loss
reach both the score estimator and the mixing network.
"""

from __future__ import annotations

import hashlib
import pickle
from dataclasses import dataclass

import cv2
import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import CheckpointError, EmptySceneError
from .imaging import MaskSet, blur_element, build_gaussian_kernel, validate_image
from .segmentation import TAXONOMY_VERSION

SCORE_CHECKPOINT_FORMAT = "declutter-score-checkpoint"
SCORE_CHECKPOINT_VERSION = 1

CLUTTER = "clutter"
NORMAL = "normal"


@dataclass(frozen=True)
class ElementScores:
    """Counterfactual (aesthetic, content) score pair for one element."""

    aes: float
    content: float


@dataclass(frozen=True)
class MixingWeights:
    """Softmax-normalized per-element weights for the two score heads."""

    beta: np.ndarray
    gamma: np.ndarray

    def validate(self) -> "MixingWeights":
        for name, vec in (("beta", self.beta), ("gamma", self.gamma)):
            if vec.ndim != 1:
                raise ValueError(f"{name} must be a vector, got shape {vec.shape}")
            if not (vec > 0).all():
                raise ValueError(f"{name} entries must be positive")
            if abs(float(vec.sum()) - 1.0) > 1e-6:
                raise ValueError(f"{name} must sum to 1, got {vec.sum()}")
        if len(self.beta) != len(self.gamma):
            raise ValueError("beta and gamma must have equal length")
        return self


@dataclass
class SceneAssessment:
    """Full per-element diagnosis of one photograph."""

    element_scores: list
    weights: MixingWeights
    overall_aes: float
    overall_content: float
    contributions: np.ndarray
    categories: list


class TinyBackbone(nn.Module):
    """Small pinned convolutional feature extractor.

    Three stride-2 conv layers initialized from a fixed seed, so tests and
    desk-scale experiments run without any pretrained download. Frozen by
    construction; an identical seed always yields bit-identical weights.
    """

    def __init__(self, channels=(8, 16, 32), seed: int = 0):
        super().__init__()
        self.channels = tuple(channels)
        self.seed = seed
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            layers = []
            in_ch = 3
            for out_ch in self.channels:
                layers.append(nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=2, padding=1))
                layers.append(nn.ReLU(inplace=True))
                in_ch = out_ch
            self.features = nn.Sequential(*layers[:-1])  # no ReLU after last conv
        self.out_channels = self.channels[-1]
        for p in self.parameters():
            p.requires_grad_(False)

    @property
    def identifier(self) -> str:
        chans = "-".join(str(c) for c in self.channels)
        return f"tiny/{chans}/seed={self.seed}"

    @property
    def config(self) -> dict:
        return {"kind": "tiny", "channels": list(self.channels), "seed": self.seed}

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.features(x)


class ResNetBackbone(nn.Module):
    """101-layer residual network truncated before its classifier head."""

    def __init__(self, pretrained: bool = False):
        super().__init__()
        from torchvision import models

        weights = models.ResNet101_Weights.DEFAULT if pretrained else None
        net = models.resnet101(weights=weights)
        self.features = nn.Sequential(*list(net.children())[:-2])
        self.out_channels = 2048
        self.pretrained = pretrained
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    @property
    def identifier(self) -> str:
        return "resnet101/pretrained" if self.pretrained else "resnet101/random"

    @property
    def config(self) -> dict:
        return {"kind": "resnet101", "pretrained": self.pretrained}

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.features(x)


def build_backbone(config: dict) -> nn.Module:
    kind = config.get("kind")
    if kind == "tiny":
        return TinyBackbone(channels=tuple(config["channels"]), seed=config["seed"])
    if kind == "resnet101":
        return ResNetBackbone(pretrained=config.get("pretrained", False))
    raise ValueError(f"unknown backbone kind: {kind}")


class ScoreHead(nn.Module):
    """Maps a feature map to an (aesthetic, content) score pair.

    Two conv layers, a flatten, then one two-layer fully-connected head per
    score. Outputs are linear (unbounded); labels are normalized at ingestion.
    """

    def __init__(self, feature_shape, conv_channels=(32, 16), fc_hidden: int = 64):
        super().__init__()
        c, hf, wf = feature_shape
        c1, c2 = conv_channels
        self.conv1 = nn.Conv2d(c, c1, kernel_size=3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(c1, c2, kernel_size=3, stride=2, padding=1)
        flat = c2 * _conv_out(hf) * _conv_out(wf)
        self.aes_head = nn.Sequential(nn.Linear(flat, fc_hidden), nn.ReLU(), nn.Linear(fc_hidden, 1))
        self.content_head = nn.Sequential(
            nn.Linear(flat, fc_hidden), nn.ReLU(), nn.Linear(fc_hidden, 1)
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        x = F.relu(self.conv1(z))
        x = F.relu(self.conv2(x))
        x = x.flatten(start_dim=1)
        return torch.cat([self.aes_head(x), self.content_head(x)], dim=1)  # (k, 2)


def _conv_out(n: int) -> int:
    # two stride-2 convs with padding 1, kernel 3
    first = (n + 1) // 2
    return (first + 1) // 2


class MixingNet(nn.Module):
    """Produces one (beta, gamma) logit pair per element.

    Each element is described by the original image's pooled global features
    concatenated with the features pooled over that element's mask region; a
    two-layer fully-connected network (ReLU, hidden width 128) maps this to
    two logits. Softmax across the k elements happens in the caller, once
    per head, so any k is supported.
    """

    def __init__(self, feature_channels: int, hidden: int = 128):
        super().__init__()
        self.body = nn.Sequential(
            nn.Linear(2 * feature_channels, hidden),
            nn.ReLU(),
            nn.Linear(hidden, 2),
        )

    def forward(self, global_pool: torch.Tensor, region_pools: torch.Tensor) -> torch.Tensor:
        k = region_pools.shape[0]
        g = global_pool.expand(k, -1)
        return self.body(torch.cat([g, region_pools], dim=1))  # (k, 2) logits


class ScoreModel(nn.Module):
    """Bundle of frozen backbone, score estimator, and mixing network."""

    def __init__(
        self,
        backbone: nn.Module,
        input_resolution: int = 256,
        kernel_size: int = 13,
        kernel_variance: float = 1.0,
        score_conv_channels=(32, 16),
        score_fc_hidden: int = 64,
        mix_hidden: int = 128,
        seed: int = 0,
        freeze_backbone: bool = True,
    ):
        super().__init__()
        self.backbone = backbone
        self.input_resolution = input_resolution
        self.kernel = build_gaussian_kernel(kernel_size, kernel_variance)
        self.seed = seed
        self.feature_shape = self._probe_feature_shape()
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.score_head = ScoreHead(
                self.feature_shape, conv_channels=score_conv_channels, fc_hidden=score_fc_hidden
            )
            self.mixing_net = MixingNet(self.feature_shape[0], hidden=mix_hidden)
        for p in self.backbone.parameters():
            p.requires_grad_(freeze_backbone is False)
        self._config = {
            "input_resolution": input_resolution,
            "kernel_size": kernel_size,
            "kernel_variance": kernel_variance,
            "score_conv_channels": list(score_conv_channels),
            "score_fc_hidden": score_fc_hidden,
            "mix_hidden": mix_hidden,
            "seed": seed,
        }

    def _probe_feature_shape(self):
        r = self.input_resolution
        with torch.no_grad():
            dtype = next(self.backbone.parameters()).dtype
            z = self.backbone(torch.zeros(1, 3, r, r, dtype=dtype))
        return (z.shape[1], z.shape[2], z.shape[3])

    @property
    def dtype(self) -> torch.dtype:
        return next(self.score_head.parameters()).dtype

    def score_parameters(self):
        return list(self.score_head.parameters())

    def mixing_parameters(self):
        return list(self.mixing_net.parameters())

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]


def _resize(image: np.ndarray, resolution: int) -> np.ndarray:
    if image.shape[0] == resolution and image.shape[1] == resolution:
        return image
    interp = cv2.INTER_AREA if image.shape[0] > resolution else cv2.INTER_LINEAR
    resized = cv2.resize(image, (resolution, resolution), interpolation=interp)
    return np.clip(resized, 0.0, 1.0)


def _to_tensor(image: np.ndarray, dtype: torch.dtype) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))).to(dtype)


def extract_features(image: np.ndarray, model: ScoreModel) -> torch.Tensor:
    """Run the frozen backbone on one already-resized image.

    Returns the (C, Hf, Wf) feature map. The input must match the model's
    configured input resolution.
    """
    validate_image(image)
    r = model.input_resolution
    if image.shape[0] != r or image.shape[1] != r:
        raise ValueError(
            f"expected input resolution {r}x{r}, got {image.shape[0]}x{image.shape[1]}"
        )
    with torch.no_grad():
        z = model.backbone(_to_tensor(image, model.dtype).unsqueeze(0))
    return z[0]


def score_element(features: torch.Tensor, model: ScoreModel) -> ElementScores:
    """Score one feature map with the estimator heads."""
    expected = model.feature_shape
    if tuple(features.shape) != tuple(expected):
        raise ValueError(f"feature shape {tuple(features.shape)} != expected {tuple(expected)}")
    with torch.no_grad():
        out = model.score_head(features.unsqueeze(0).to(model.dtype))[0]
    return ElementScores(aes=float(out[0]), content=float(out[1]))


def weights_from_logits(beta_logits, gamma_logits=None) -> MixingWeights:
    """Softmax each logit vector across the k elements (test-injectable path)."""
    beta_t = torch.as_tensor(beta_logits, dtype=torch.float64)
    gamma_t = beta_t if gamma_logits is None else torch.as_tensor(gamma_logits, dtype=torch.float64)
    beta = torch.softmax(beta_t, dim=0).numpy()
    gamma = torch.softmax(gamma_t, dim=0).numpy()
    return MixingWeights(beta=beta, gamma=gamma).validate()


def _pool_features(z: torch.Tensor, masks: MaskSet, dtype: torch.dtype):
    """Global average pool plus per-element mask-weighted pools of z (1,C,Hf,Wf)."""
    _, c, hf, wf = z.shape
    global_pool = z.mean(dim=(2, 3))  # (1, C)
    mask_stack = np.stack([m.mask for m in masks.masks]).astype(np.float64)
    masks_t = torch.from_numpy(mask_stack).to(dtype).unsqueeze(1)  # (k,1,H,W)
    coarse = F.adaptive_avg_pool2d(masks_t, (hf, wf))  # fractional coverage per cell
    weight_sums = coarse.sum(dim=(2, 3))  # (k, 1)
    weighted = (z * coarse).sum(dim=(2, 3))  # (k, C)
    empty = weight_sums <= 0
    safe = torch.where(empty, torch.ones_like(weight_sums), weight_sums)
    region_pools = weighted / safe
    if empty.any():
        region_pools = torch.where(empty, global_pool.expand_as(region_pools), region_pools)
    return global_pool, region_pools


def _forward_scene(image: np.ndarray, masks: MaskSet, model: ScoreModel):
    """Differentiable forward pass; returns per-element scores, logits, and pools."""
    validate_image(image)
    if len(masks) == 0:
        raise EmptySceneError("scene has no elements (k=0)")
    if (masks.height, masks.width) != image.shape[:2]:
        raise ValueError("mask set dims do not match image dims")
    dtype = model.dtype
    r = model.input_resolution

    sub_batch = []
    for m in masks.masks:
        sub = blur_element(image, m.mask, model.kernel)
        sub_batch.append(_to_tensor(_resize(sub, r), dtype))
    subs = torch.stack(sub_batch)  # (k, 3, R, R)
    z_subs = model.backbone(subs)
    scores = model.score_head(z_subs)  # (k, 2)

    z_full = model.backbone(_to_tensor(_resize(image, r), dtype).unsqueeze(0))
    global_pool, region_pools = _pool_features(z_full, masks, dtype)
    logits = model.mixing_net(global_pool, region_pools)  # (k, 2)
    beta = torch.softmax(logits[:, 0], dim=0)
    gamma = torch.softmax(logits[:, 1], dim=0)
    s_aes = (beta * scores[:, 0]).sum()
    s_content = (gamma * scores[:, 1]).sum()
    return scores, beta, gamma, s_aes, s_content


def predict_overall(image: np.ndarray, masks: MaskSet, model: ScoreModel):
    """Differentiable overall (s_aes, s_content) prediction for training."""
    _, _, _, s_aes, s_content = _forward_scene(image, masks, model)
    return s_aes, s_content


@dataclass
class SceneFeatures:
    """Frozen-backbone activations for one scene, reusable across epochs."""

    z_subs: torch.Tensor
    global_pool: torch.Tensor
    region_pools: torch.Tensor


def precompute_scene_features(
    image: np.ndarray, masks: MaskSet, model: ScoreModel
) -> SceneFeatures:
    """Run the backbone passes once and cache the results.

    Valid only while the backbone stays frozen: the cached activations are
    constants, so later head/mixing passes see the exact same values (and
    gradients) as a full forward, at a fraction of the cost.
    """
    if any(p.requires_grad for p in model.backbone.parameters()):
        raise ValueError("feature caching requires a frozen backbone")
    validate_image(image)
    if len(masks) == 0:
        raise EmptySceneError("scene has no elements (k=0)")
    dtype = model.dtype
    r = model.input_resolution
    with torch.no_grad():
        subs = torch.stack(
            [
                _to_tensor(_resize(blur_element(image, m.mask, model.kernel), r), dtype)
                for m in masks.masks
            ]
        )
        z_subs = model.backbone(subs)
        z_full = model.backbone(_to_tensor(_resize(image, r), dtype).unsqueeze(0))
        global_pool, region_pools = _pool_features(z_full, masks, dtype)
    return SceneFeatures(
        z_subs=z_subs, global_pool=global_pool, region_pools=region_pools
    )


def overall_from_features(feats: SceneFeatures, model: ScoreModel):
    """Differentiable heads-only pass over cached backbone features."""
    scores = model.score_head(feats.z_subs)
    logits = model.mixing_net(feats.global_pool, feats.region_pools)
    beta = torch.softmax(logits[:, 0], dim=0)
    gamma = torch.softmax(logits[:, 1], dim=0)
    return (beta * scores[:, 0]).sum(), (gamma * scores[:, 1]).sum()


def mixing_weights(image: np.ndarray, masks: MaskSet, model: ScoreModel) -> MixingWeights:
    """Input-conditioned softmax weights for combining element scores."""
    if len(masks) == 0:
        raise EmptySceneError("scene has no elements (k=0)")
    dtype = model.dtype
    with torch.no_grad():
        z_full = model.backbone(
            _to_tensor(_resize(image, model.input_resolution), dtype).unsqueeze(0)
        )
        global_pool, region_pools = _pool_features(z_full, masks, dtype)
        logits = model.mixing_net(global_pool, region_pools)
    return weights_from_logits(logits[:, 0].numpy(), logits[:, 1].numpy())


def aggregate_scores(element_scores, weights: MixingWeights):
    """Combine per-element scores into overall scores: s = sum_i w_i * s_i."""
    if len(element_scores) != len(weights.beta):
        raise ValueError(
            f"{len(element_scores)} element scores vs {len(weights.beta)} weights"
        )
    aes = np.array([s.aes for s in element_scores], dtype=np.float64)
    content = np.array([s.content for s in element_scores], dtype=np.float64)
    s_aes = float(np.dot(weights.beta, aes))
    s_content = float(np.dot(weights.gamma, content))
    return s_aes, s_content


def contributions(
    element_scores, weights: MixingWeights, overall_aes: float, overall_content: float
) -> np.ndarray:
    """Signed contribution of each element to the overall quality.

    q_i = beta_i * (s_aes - aes_i) + gamma_i * (s_content - content_i).
    """
    if len(element_scores) != len(weights.beta):
        raise ValueError(
            f"{len(element_scores)} element scores vs {len(weights.beta)} weights"
        )
    aes = np.array([s.aes for s in element_scores], dtype=np.float64)
    content = np.array([s.content for s in element_scores], dtype=np.float64)
    return weights.beta * (overall_aes - aes) + weights.gamma * (overall_content - content)


def categorize(q: np.ndarray) -> list:
    """Negative contribution means clutter; zero is not negative."""
    return [CLUTTER if qi < 0 else NORMAL for qi in q]


def analyze_scene(
    image: np.ndarray,
    masks: MaskSet,
    model: ScoreModel,
    score_override=None,
    weights_override: MixingWeights | None = None,
) -> SceneAssessment:
    """Score every element counterfactually and classify clutter.

    `score_override` / `weights_override` bypass the networks (used by tests
    to inject hand-set values through the same assembly path).
    """
    if len(masks) == 0:
        raise EmptySceneError("scene has no elements (k=0)")
    if score_override is not None and weights_override is not None:
        element_scores = list(score_override)
        weights = weights_override.validate()
    else:
        with torch.no_grad():
            scores_t, beta_t, gamma_t, _, _ = _forward_scene(image, masks, model)
        element_scores = [
            ElementScores(aes=float(s[0]), content=float(s[1])) for s in scores_t
        ]
        weights = MixingWeights(
            beta=beta_t.numpy().astype(np.float64), gamma=gamma_t.numpy().astype(np.float64)
        ).validate()
        if score_override is not None:
            element_scores = list(score_override)
        if weights_override is not None:
            weights = weights_override.validate()
    s_aes, s_content = aggregate_scores(element_scores, weights)
    q = contributions(element_scores, weights, s_aes, s_content)
    return SceneAssessment(
        element_scores=element_scores,
        weights=weights,
        overall_aes=s_aes,
        overall_content=s_content,
        contributions=q,
        categories=categorize(q),
    )


def total_loss(pred_aes, pred_content, y_aes, y_content, lambda_aes: float = 1.0):
    """lambda_aes * MSE(aesthetic) + MSE(content) over an aligned batch."""
    if lambda_aes < 0:
        raise ValueError(f"lambda_aes must be >= 0, got {lambda_aes}")
    pa = torch.as_tensor(pred_aes) if not torch.is_tensor(pred_aes) else pred_aes
    pc = torch.as_tensor(pred_content) if not torch.is_tensor(pred_content) else pred_content
    ya = torch.as_tensor(y_aes, dtype=pa.dtype)
    yc = torch.as_tensor(y_content, dtype=pc.dtype)
    if pa.shape != ya.shape or pc.shape != yc.shape:
        raise ValueError("predictions and labels must be aligned")
    return lambda_aes * ((ya - pa) ** 2).mean() + ((yc - pc) ** 2).mean()


def _state_hash(module: nn.Module) -> str:
    digest = hashlib.sha256()
    for key, tensor in sorted(module.state_dict().items()):
        digest.update(key.encode())
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()[:16]


def save_score_checkpoint(model: ScoreModel, path) -> None:
    payload = {
        "format": SCORE_CHECKPOINT_FORMAT,
        "version": SCORE_CHECKPOINT_VERSION,
        "taxonomy_version": TAXONOMY_VERSION,
        "backbone_config": model.backbone.config,
        "backbone_hash": _state_hash(model.backbone),
        "backbone_state": model.backbone.state_dict(),
        "score_head_state": model.score_head.state_dict(),
        "mixing_net_state": model.mixing_net.state_dict(),
        "model_config": model._config,
    }
    torch.save(payload, path)


def load_score_checkpoint(path) -> ScoreModel:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except (OSError, RuntimeError, pickle.UnpicklingError, EOFError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != SCORE_CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a score-model checkpoint")
    if payload.get("version") != SCORE_CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {payload.get('version')} != supported {SCORE_CHECKPOINT_VERSION}"
        )
    if payload.get("taxonomy_version") != TAXONOMY_VERSION:
        raise CheckpointError(
            f"checkpoint taxonomy version {payload.get('taxonomy_version')} != {TAXONOMY_VERSION}"
        )
    backbone = build_backbone(payload["backbone_config"])
    backbone.load_state_dict(payload["backbone_state"])
    cfg = payload["model_config"]
    model = ScoreModel(
        backbone,
        input_resolution=cfg["input_resolution"],
        kernel_size=cfg["kernel_size"],
        kernel_variance=cfg["kernel_variance"],
        score_conv_channels=tuple(cfg["score_conv_channels"]),
        score_fc_hidden=cfg["score_fc_hidden"],
        mix_hidden=cfg["mix_hidden"],
        seed=cfg["seed"],
    )
    model.score_head.load_state_dict(payload["score_head_state"])
    model.mixing_net.load_state_dict(payload["mixing_net_state"])
    model.eval()
    return model
