"""The feed-forward transfer network: shared kernels, per-style normalization.

Architecture: a 9x9 stem, two stride-2 downsampling stages, a stack of
residual blocks, two nearest-neighbor-upsample+conv stages, and a 9x9 sigmoid
output head.  Every convolution is bias-free and followed by conditional
instance normalization, so the only style-specific parameters are the
normalization's gamma/beta rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .styles import StyleBank, StyleVector, add_style_row, cin_forward

KERNEL_SIGMA = 0.01


@dataclass(frozen=True)
class NetworkConfig:
    base_width: int = 32
    residual_blocks: int = 5
    edge_kernel: int = 9
    inner_kernel: int = 3
    image_size: int = 256
    width_multiplier: float = 1.0

    def __post_init__(self):
        if self.width < 1:
            raise ConfigError(f"derived width {self.width} must be >= 1")
        if self.residual_blocks < 1:
            raise ConfigError("residual_blocks must be >= 1")
        if self.edge_kernel % 2 == 0 or self.inner_kernel % 2 == 0:
            raise ConfigError("kernel sizes must be odd")
        if self.image_size % 4 != 0:
            raise ConfigError("image_size must be a multiple of 4")

    @property
    def width(self) -> int:
        return int(round(self.base_width * self.width_multiplier))

    def to_dict(self) -> dict:
        return {
            "base_width": self.base_width,
            "residual_blocks": self.residual_blocks,
            "edge_kernel": self.edge_kernel,
            "inner_kernel": self.inner_kernel,
            "image_size": self.image_size,
            "width_multiplier": self.width_multiplier,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "NetworkConfig":
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(f"bad network config: {exc}") from None


class LayerSpec(NamedTuple):
    name: str
    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    upsample: int
    activation: str  # relu | linear | sigmoid


def layer_plan(config: NetworkConfig) -> list[LayerSpec]:
    w = config.width
    ek, ik = config.edge_kernel, config.inner_kernel
    plan = [
        LayerSpec("conv_in", 3, w, ek, 1, 1, "relu"),
        LayerSpec("down1", w, 2 * w, ik, 2, 1, "relu"),
        LayerSpec("down2", 2 * w, 4 * w, ik, 2, 1, "relu"),
    ]
    for b in range(config.residual_blocks):
        plan.append(LayerSpec(f"res{b}a", 4 * w, 4 * w, ik, 1, 1, "relu"))
        plan.append(LayerSpec(f"res{b}b", 4 * w, 4 * w, ik, 1, 1, "linear"))
    plan += [
        LayerSpec("up1", 4 * w, 2 * w, ik, 1, 2, "relu"),
        LayerSpec("up2", 2 * w, w, ik, 1, 2, "relu"),
        LayerSpec("conv_out", w, 3, ek, 1, 1, "sigmoid"),
    ]
    return plan


def channel_sequence(config: NetworkConfig) -> tuple[int, ...]:
    """Output channels per normalization site, in network order."""
    return tuple(spec.out_channels for spec in layer_plan(config))


@dataclass
class ModelWeights:
    config: NetworkConfig
    kernels: dict[str, Tensor]
    bank: StyleBank

    @property
    def style_names(self) -> list[str]:
        return self.bank.style_names

    def kernel_tensors(self) -> list[Tensor]:
        return list(self.kernels.values())

    def copy(self) -> "ModelWeights":
        return ModelWeights(
            config=self.config,
            kernels={name: t.copy() for name, t in self.kernels.items()},
            bank=self.bank.copy(),
        )


def build_network(config: NetworkConfig, styles, seed: int) -> ModelWeights:
    """Fresh model: kernels ~ N(0, 0.01^2), one bank row per style, all seeded."""
    if isinstance(styles, int):
        styles = [f"style_{i}" for i in range(styles)]
    names = list(styles)
    rng = np.random.default_rng(seed)
    kernels: dict[str, Tensor] = {}
    for spec in layer_plan(config):
        shape = (spec.out_channels, spec.in_channels, spec.kernel, spec.kernel)
        kernels[spec.name] = Tensor(
            KERNEL_SIGMA * rng.standard_normal(shape), requires_grad=True
        )
    bank = StyleBank(channel_sequence(config))
    for name in names:
        add_style_row(bank, name, seed=int(rng.integers(2**31)))
    return ModelWeights(config=config, kernels=kernels, bank=bank)


class ParamCounts(NamedTuple):
    shared: int
    style_params: int
    fraction: float
    per_style: int
    n_styles: int
    total: int


def count_parameters(model: ModelWeights) -> ParamCounts:
    """Shared-kernel count, total bank count, and the per-style fraction."""
    shared = sum(t.size for t in model.kernels.values())
    per_style = 2 * sum(model.bank.channels)
    style_params = model.bank.parameter_count()
    fraction = per_style / (shared + per_style)
    return ParamCounts(
        shared=shared,
        style_params=style_params,
        fraction=fraction,
        per_style=per_style,
        n_styles=model.bank.n_styles,
        total=shared + style_params,
    )


def _site_affine(model: ModelWeights, styles, n: int, site: int) -> tuple:
    """Gamma/beta for one site: (c,) shared rows or (n, c) per-sample stacks."""
    if isinstance(styles, StyleVector):
        return Tensor(styles.gamma[site]), Tensor(styles.beta[site])
    if styles and isinstance(styles[0], str):
        g_rows, b_rows = model.bank.site_rows(site, styles)
        return ad.stack(g_rows, axis=0), ad.stack(b_rows, axis=0)
    return (
        Tensor(np.stack([v.gamma[site] for v in styles])),
        Tensor(np.stack([v.beta[site] for v in styles])),
    )


def _check_styles(model: ModelWeights, styles, n: int):
    if isinstance(styles, StyleVector):
        vectors: Iterable[StyleVector] = [styles]
    elif all(isinstance(s, str) for s in styles):
        for name in styles:
            model.bank.index(name)
        if len(styles) != n:
            raise ShapeError(f"{len(styles)} styles for a batch of {n}")
        return
    else:
        vectors = styles
        if len(styles) != n:
            raise ShapeError(f"{len(styles)} style vectors for a batch of {n}")
    for v in vectors:
        if v.channels != model.bank.channels:
            raise ShapeError(
                f"style vector channels {v.channels} do not match model {model.bank.channels}"
            )


def forward(model: ModelWeights, content: Tensor, styles) -> Tensor:
    """Stylize a batch.

    ``styles`` is one StyleVector shared by the whole batch, a per-sample
    sequence of StyleVectors, or a per-sample sequence of style names (rows
    are then read live from the bank, which is what training differentiates
    through).  Output matches the input spatial shape, 3 channels, in (0,1).
    """
    if content.ndim != 4 or content.shape[1] != 3:
        raise ShapeError(f"content must be (n, 3, h, w), got {content.shape}")
    n, _, h, w = content.shape
    if h % 4 != 0 or w % 4 != 0:
        raise ShapeError(f"spatial dims must be multiples of 4, got {h}x{w}")
    _check_styles(model, styles, n)

    out = content
    skip = None
    for site, spec in enumerate(layer_plan(model.config)):
        if spec.upsample > 1:
            out = ad.upsample_nn(out, spec.upsample)
        if spec.name.endswith("a") and spec.name.startswith("res"):
            skip = out
        out = ad.conv2d(out, model.kernels[spec.name], stride=spec.stride)
        gamma, beta = _site_affine(model, styles, n, site)
        out = cin_forward(out, gamma, beta)
        if spec.activation == "relu":
            out = ad.relu(out)
        elif spec.activation == "sigmoid":
            out = ad.sigmoid(out)
        if spec.name.endswith("b") and spec.name.startswith("res"):
            out = ad.add(skip, out)
    return out
