"""L1 + adversarial + perceptual loss for patch batches.

``total`` is the generator objective: lambda_l1 * l1 + lambda_adv *
adversarial_g + lambda_perc * perceptual.  The discriminator objective
``adversarial_d`` is reported alongside but never folded into ``total``.

The perceptual feature extractor is pluggable: a fixed random-weight conv
stack (hermetic, seeded) or weights loaded from a file.  Zero-weight terms
are skipped entirely, so their extractors/discriminators may be omitted.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import torch
from torch import nn

from .errors import ConfigError, DimensionMismatchError, EmptyInputError


@dataclass(frozen=True)
class LossWeights:
    """Loss term weights (lambda_l1, lambda_adv, lambda_perc)."""

    l1: float = 1.0
    adversarial: float = 0.05
    perceptual: float = 0.01

    def __post_init__(self):
        for name in ("l1", "adversarial", "perceptual"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")

    def to_json_dict(self) -> dict:
        return {"l1": self.l1, "adversarial": self.adversarial, "perceptual": self.perceptual}

    @classmethod
    def from_json_dict(cls, data: dict) -> "LossWeights":
        return cls(**data)


@dataclass
class LossBreakdown:
    """Loss terms; tensors during training, floats after ``detached()``."""

    l1: object
    adversarial_g: object
    adversarial_d: object
    perceptual: object
    total: object

    def detached(self) -> "LossBreakdown":
        def value(field: str) -> float:
            item = getattr(self, field)
            return float(item.detach()) if torch.is_tensor(item) else float(item)

        return LossBreakdown(*(value(f) for f in self.__dataclass_fields__))

    def to_json_dict(self) -> dict:
        out = self.detached()
        return {
            "l1": out.l1,
            "adversarial_g": out.adversarial_g,
            "adversarial_d": out.adversarial_d,
            "perceptual": out.perceptual,
            "total": out.total,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "LossBreakdown":
        return cls(**data)


class RandomFeatureExtractor(nn.Module):
    """Frozen random conv stack; taps after each activation.

    Deterministic per seed, which makes perceptual tests hermetic without
    shipping pretrained weights.  Minimum input size is 8x8 (two 2x pools).
    """

    min_input = 8

    def __init__(self, seed: int = 0):
        super().__init__()
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.stages = nn.ModuleList(
                [
                    nn.Sequential(nn.ReflectionPad2d(1), nn.Conv2d(3, 16, 3), nn.ReLU()),
                    nn.Sequential(
                        nn.AvgPool2d(2), nn.ReflectionPad2d(1), nn.Conv2d(16, 32, 3), nn.ReLU()
                    ),
                    nn.Sequential(
                        nn.AvgPool2d(2), nn.ReflectionPad2d(1), nn.Conv2d(32, 64, 3), nn.ReLU()
                    ),
                ]
            )
        self.requires_grad_(False)
        self.eval()

    def forward(self, x) -> list[torch.Tensor]:
        if min(x.shape[2], x.shape[3]) < self.min_input:
            raise DimensionMismatchError(
                f"input {tuple(x.shape[2:])} below extractor minimum {self.min_input}"
            )
        features = []
        h = x
        for stage in self.stages:
            h = stage(h)
            features.append(h)
        return features


_VGG_MEAN = (0.485, 0.456, 0.406)
_VGG_STD = (0.229, 0.224, 0.225)


class VggFeatureExtractor(nn.Module):
    """VGG16 slices (relu1_2, relu2_2, relu3_3) loaded from a weights file.

    Accepts a torchvision ``vgg16`` state dict (full model or features-only).
    """

    min_input = 8

    def __init__(self, weights_path: str | Path):
        super().__init__()
        weights_path = Path(weights_path)
        if not weights_path.exists():
            raise ConfigError(f"perceptual weights file not found: {weights_path}")
        from torchvision.models import vgg16

        model = vgg16(weights=None)
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        if any(key.startswith("features.") for key in state):
            model.load_state_dict(state)
        else:
            model.features.load_state_dict(state)
        features = model.features
        self.stages = nn.ModuleList(
            [features[:4], features[4:9], features[9:16]]
        )
        self.register_buffer("mean", torch.tensor(_VGG_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(_VGG_STD).view(1, 3, 1, 1))
        self.requires_grad_(False)
        self.eval()

    def forward(self, x) -> list[torch.Tensor]:
        if min(x.shape[2], x.shape[3]) < self.min_input:
            raise DimensionMismatchError(
                f"input {tuple(x.shape[2:])} below extractor minimum {self.min_input}"
            )
        h = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        features = []
        for stage in self.stages:
            h = stage(h)
            features.append(h)
        return features


def load_feature_extractor(weights_path: str | Path | None = None, seed: int = 0) -> nn.Module:
    """Returns the pluggable extractor: file-backed when a path is given."""
    if weights_path is None:
        return RandomFeatureExtractor(seed)
    return VggFeatureExtractor(weights_path)


def perceptual_features(image: torch.Tensor, extractor: nn.Module) -> list[torch.Tensor]:
    """Feature maps of one (C, H, W) image or an (N, C, H, W) batch."""
    batched = image if image.ndim == 4 else image[None]
    return extractor(batched)


def _as_mask_tensor(loss_masks, like: torch.Tensor) -> torch.Tensor:
    mask = torch.as_tensor(loss_masks)
    if mask.ndim == 3:
        mask = mask[:, None]
    return mask.to(device=like.device)


def compute_loss(
    predicted: torch.Tensor,
    target: torch.Tensor,
    loss_masks,
    weights: LossWeights,
    feature_extractor: nn.Module | None = None,
    discriminator: nn.Module | None = None,
    inputs: torch.Tensor | None = None,
) -> LossBreakdown:
    """Computes the weighted loss terms for an (N, 3, H, W) batch.

    l1 is the mean absolute error over masked pixels.  The perceptual term
    is the mean squared feature distance over patches with at least one true
    mask bit (whole-patch granularity).  Adversarial terms score the
    discriminator on (input, predicted) vs (input, target) pairs with the
    least-squares objective; ``adversarial_d`` detaches ``predicted`` so it
    can back-propagate into the discriminator alone.
    """
    if predicted.shape != target.shape:
        raise DimensionMismatchError(f"predicted {tuple(predicted.shape)} != target {tuple(target.shape)}")
    mask = _as_mask_tensor(loss_masks, predicted)
    if mask.shape[0] != predicted.shape[0] or mask.shape[2:] != predicted.shape[2:]:
        raise DimensionMismatchError(f"loss_masks {tuple(mask.shape)} do not match batch")
    if not bool(mask.any()):
        raise EmptyInputError("all loss masks are false across the batch")

    zero = predicted.new_zeros(())
    weight = mask.to(predicted.dtype)
    masked_count = weight.sum() * predicted.shape[1]
    l1 = (weight * (predicted - target).abs()).sum() / masked_count

    perceptual = zero
    if weights.perceptual > 0:
        if feature_extractor is None:
            raise ConfigError("perceptual weight set but no feature extractor given")
        included = mask.flatten(1).any(dim=1)
        feats_p = feature_extractor(predicted[included])
        feats_t = feature_extractor(target[included])
        layer_terms = [((fp - ft) ** 2).mean() for fp, ft in zip(feats_p, feats_t)]
        perceptual = torch.stack(layer_terms).mean()

    adversarial_g = zero
    adversarial_d = zero
    if weights.adversarial > 0:
        if discriminator is None or inputs is None:
            raise ConfigError("adversarial weight set but discriminator/inputs missing")
        fake_pair = torch.cat([inputs, predicted], dim=1)
        real_pair = torch.cat([inputs, target], dim=1)
        score_fake = discriminator(fake_pair)
        adversarial_g = ((score_fake - 1.0) ** 2).mean()
        score_real = discriminator(real_pair)
        score_fake_d = discriminator(torch.cat([inputs, predicted.detach()], dim=1))
        adversarial_d = 0.5 * (((score_real - 1.0) ** 2).mean() + (score_fake_d**2).mean())

    total = weights.l1 * l1 + weights.adversarial * adversarial_g + weights.perceptual * perceptual
    return LossBreakdown(
        l1=l1,
        adversarial_g=adversarial_g,
        adversarial_d=adversarial_d,
        perceptual=perceptual,
        total=total,
    )


def mean_breakdown(items: list[LossBreakdown]) -> LossBreakdown:
    """Arithmetic mean of detached breakdowns."""
    if not items:
        raise EmptyInputError("no loss breakdowns to average")
    detached = [item.detached() for item in items]
    first = detached[0]
    fields = list(first.__dataclass_fields__)
    means = {f: sum(getattr(d, f) for d in detached) / len(detached) for f in fields}
    return replace(first, **means)
