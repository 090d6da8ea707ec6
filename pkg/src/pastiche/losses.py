"""Perceptual losses: a frozen feature extractor, Gram matrices, and the
style/content/total loss definitions.

Style similarity is measured between Gram matrices of tapped feature maps
(normalized so differently sized images are comparable); content similarity
is the normalized squared distance between feature maps.  The extractor is
never trained here — by default its kernels are seeded gaussians, and real
classifier weights can be loaded through the checkpoint container instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ArchitectureMismatchError, ConfigError, ShapeError, UnknownStyleError


@dataclass(frozen=True)
class ExtractorConfig:
    widths: tuple[int, ...] = (16, 32, 64, 128)
    strides: tuple[int, ...] = (1, 2, 2, 2)
    kernel: int = 3
    style_taps: tuple[str, ...] = ("stage1", "stage2", "stage3", "stage4")
    content_taps: tuple[str, ...] = ("stage3",)
    seed: int = 0

    def __post_init__(self):
        if len(self.widths) != len(self.strides) or not self.widths:
            raise ConfigError("widths and strides must be equally sized and non-empty")
        stages = {f"stage{i + 1}" for i in range(len(self.widths))}
        unknown = (set(self.style_taps) | set(self.content_taps)) - stages
        if unknown:
            raise ConfigError(f"taps {sorted(unknown)} not in {sorted(stages)}")

    def to_dict(self) -> dict:
        return {
            "widths": list(self.widths),
            "strides": list(self.strides),
            "kernel": self.kernel,
            "style_taps": list(self.style_taps),
            "content_taps": list(self.content_taps),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExtractorConfig":
        try:
            return cls(
                widths=tuple(raw["widths"]),
                strides=tuple(raw["strides"]),
                kernel=raw["kernel"],
                style_taps=tuple(raw["style_taps"]),
                content_taps=tuple(raw["content_taps"]),
                seed=raw["seed"],
            )
        except KeyError as exc:
            raise ConfigError(f"extractor config missing key {exc}") from None


class FeatureExtractor:
    """Fixed convolution+relu stack with named taps ("stage1", "stage2", ...).

    Kernels never require gradients; gradients still flow through them to
    whatever image is being optimized.
    """

    def __init__(self, config: ExtractorConfig, kernels: list[Tensor]):
        expected = [(w, 3 if i == 0 else config.widths[i - 1]) for i, w in enumerate(config.widths)]
        if [(k.shape[0], k.shape[1]) for k in kernels] != expected:
            raise ArchitectureMismatchError("extractor kernels do not match config widths")
        self.config = config
        self.kernels = kernels
        for k in self.kernels:
            k.requires_grad = False
        self.frozen = True

    @classmethod
    def from_seed(cls, config: ExtractorConfig = ExtractorConfig()) -> "FeatureExtractor":
        rng = np.random.default_rng(config.seed)
        kernels = []
        in_c = 3
        for width in config.widths:
            fan_in = in_c * config.kernel * config.kernel
            scale = np.sqrt(2.0 / fan_in)
            kernels.append(
                Tensor(scale * rng.standard_normal((width, in_c, config.kernel, config.kernel)))
            )
            in_c = width
        return cls(config, kernels)

    @property
    def stage_names(self) -> list[str]:
        return [f"stage{i + 1}" for i in range(len(self.config.widths))]

    def extract(self, image: Tensor) -> dict[str, Tensor]:
        """Feature map per tapped stage for a (n, 3, h, w) image batch."""
        if image.ndim != 4 or image.shape[1] != 3:
            raise ShapeError(f"extractor wants (n, 3, h, w), got {image.shape}")
        taps = set(self.config.style_taps) | set(self.config.content_taps)
        out: dict[str, Tensor] = {}
        h = image
        for name, kernel, stride in zip(self.stage_names, self.kernels, self.config.strides):
            h = ad.relu(ad.conv2d(h, kernel, stride=stride))
            if name in taps:
                out[name] = h
        return out


def gram(features: Tensor) -> Tensor:
    """Channel inner-product matrix G = Phi Phi^T / (H*W) of one sample."""
    if features.ndim == 4:
        if features.shape[0] != 1:
            raise ShapeError(f"gram expects a single sample, got batch {features.shape[0]}")
        features = ad.reshape(features, features.shape[1:])
    if features.ndim != 3:
        raise ShapeError(f"gram expects (c, h, w) features, got {features.shape}")
    c, h, w = features.shape
    phi = ad.reshape(features, (c, h * w))
    return ad.matmul(phi, ad.transpose(phi)) * (1.0 / (h * w))


def gram_distance(gram_p, gram_s, channels: int) -> Tensor:
    """Style term for one layer: squared Frobenius distance scaled by 1/C^2."""
    gram_p = gram_p if isinstance(gram_p, Tensor) else Tensor(gram_p)
    gram_s = gram_s if isinstance(gram_s, Tensor) else Tensor(gram_s)
    if gram_p.shape != gram_s.shape:
        raise ShapeError(f"gram shapes differ: {gram_p.shape} vs {gram_s.shape}")
    diff = gram_p - gram_s
    return ad.tensor_sum(ad.square(diff)) * (1.0 / (channels * channels))


def feature_distance(feat_p: Tensor, feat_c: Tensor) -> Tensor:
    """Content term for one layer: squared distance per unit (1/(C*H*W))."""
    if feat_p.shape != feat_c.shape:
        raise ShapeError(f"feature shapes differ: {feat_p.shape} vs {feat_c.shape}")
    diff = feat_p - feat_c
    return ad.tensor_sum(ad.square(diff)) * (1.0 / diff.size)


def gram_targets(fx: FeatureExtractor, style_image: Tensor) -> dict[str, np.ndarray]:
    """Per-tap Gram matrices of a style image, detached for caching."""
    feats = fx.extract(style_image)
    return {tap: gram(feats[tap]).data.copy() for tap in fx.config.style_taps}


def _style_side(fx: FeatureExtractor, style) -> Mapping[str, np.ndarray]:
    if isinstance(style, Tensor):
        return gram_targets(fx, style)
    missing = set(fx.config.style_taps) - set(style)
    if missing:
        raise ArchitectureMismatchError(
            f"cached style Grams missing taps {sorted(missing)} for this extractor"
        )
    return style


def style_loss(fx: FeatureExtractor, pastiche: Tensor, style) -> tuple[Tensor, dict[str, Tensor]]:
    """Gram-matching loss; ``style`` is a style image or cached Gram targets."""
    targets = _style_side(fx, style)
    feats = fx.extract(pastiche)
    terms: dict[str, Tensor] = {}
    total = None
    for tap in fx.config.style_taps:
        channels = feats[tap].shape[1]
        term = gram_distance(gram(feats[tap]), targets[tap], channels)
        terms[tap] = term
        total = term if total is None else total + term
    return total, terms


def content_loss(
    fx: FeatureExtractor, pastiche: Tensor, content: Tensor
) -> tuple[Tensor, dict[str, Tensor]]:
    if pastiche.shape[2:] != content.shape[2:]:
        raise ShapeError(
            f"content loss needs matching spatial dims, got {pastiche.shape} vs {content.shape}"
        )
    feats_p = fx.extract(pastiche)
    feats_c = fx.extract(content)
    terms: dict[str, Tensor] = {}
    total = None
    for tap in fx.config.content_taps:
        term = feature_distance(feats_p[tap], feats_c[tap])
        terms[tap] = term
        total = term if total is None else total + term
    return total, terms


@dataclass(frozen=True)
class LossWeights:
    lambda_s: Mapping[str, float] = field(default_factory=dict)
    lambda_c: float = 1.0

    def __post_init__(self):
        if self.lambda_c < 0 or not np.isfinite(self.lambda_c):
            raise ConfigError(f"lambda_c must be non-negative, got {self.lambda_c}")
        for name, w in self.lambda_s.items():
            if w < 0 or not np.isfinite(w):
                raise ConfigError(f"lambda_s[{name!r}] must be non-negative, got {w}")

    def style_weight(self, name: str) -> float:
        try:
            return float(self.lambda_s[name])
        except KeyError:
            raise UnknownStyleError(f"no style weight configured for {name!r}") from None


@dataclass(frozen=True)
class LossReport:
    style_terms: dict[str, float]
    content_terms: dict[str, float]
    style_loss: float
    content_loss: float
    total: float
    style_id: object  # style name or blend-weight mapping

    def as_dict(self) -> dict:
        return {
            "style_terms": dict(self.style_terms),
            "content_terms": dict(self.content_terms),
            "style_loss": self.style_loss,
            "content_loss": self.content_loss,
            "total": self.total,
            "style_id": self.style_id,
        }


def total_loss(
    fx: FeatureExtractor,
    weights: LossWeights,
    pastiche: Tensor,
    content: Tensor,
    style,
    style_name: str,
) -> tuple[Tensor, LossReport]:
    """Weighted objective lambda_s*L_s + lambda_c*L_c plus its breakdown.

    Returns the differentiable scalar (for optimizers running under a tape)
    and a plain-float report (for logs, CLIs and HTTP responses).
    """
    lam_s = weights.style_weight(style_name)
    s_total, s_terms = style_loss(fx, pastiche, style)
    c_total, c_terms = content_loss(fx, pastiche, content)
    total = s_total * lam_s + c_total * weights.lambda_c
    report = LossReport(
        style_terms={k: float(v.data) for k, v in s_terms.items()},
        content_terms={k: float(v.data) for k, v in c_terms.items()},
        style_loss=float(s_total.data),
        content_loss=float(c_total.data),
        total=float(total.data),
        style_id=style_name,
    )
    return total, report
