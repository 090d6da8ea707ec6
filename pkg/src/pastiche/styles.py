"""Conditional instance normalization and the per-style parameter bank.

A trained network owns one :class:`StyleBank`: for every normalization site
it holds an N-row gamma matrix and an N-row beta matrix, one row per style.
Rows are stored as individual tensors so that fine-tuning a single style can
hand exactly that style's rows to the optimizer while every other parameter
object stays untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConvexityError, DuplicateStyleError, ShapeError, UnknownStyleError

EPS = 1e-5
ROW_JITTER = 0.01
WEIGHT_SUM_TOL = 1e-6


@dataclass(frozen=True)
class StyleVector:
    """One style's (or one blend's) gamma/beta rows, one pair per site.

    An immutable snapshot: safe to cache, hand across threads, or keep as a
    reference while the originating bank continues training.
    """

    channels: tuple[int, ...]
    gamma: tuple[np.ndarray, ...]
    beta: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not (len(self.channels) == len(self.gamma) == len(self.beta)):
            raise ShapeError("per-site row count mismatch in style vector")
        for c, g, b in zip(self.channels, self.gamma, self.beta):
            if g.shape != (c,) or b.shape != (c,):
                raise ShapeError(f"style row shapes {g.shape}/{b.shape} do not match {c} channels")


class StyleBank:
    """Named gamma/beta rows for every normalization site.

    ``channels`` fixes the layer structure (output channels per site); rows
    are addressed by style name and site index.
    """

    def __init__(self, channels: Sequence[int]):
        channels = tuple(int(c) for c in channels)
        if not channels or any(c < 1 for c in channels):
            raise ShapeError(f"invalid channel list {channels}")
        self.channels = channels
        self.style_names: list[str] = []
        # rows[style_index][site_index] -> Tensor of shape (C_site,)
        self._gamma: list[list[Tensor]] = []
        self._beta: list[list[Tensor]] = []

    @property
    def n_styles(self) -> int:
        return len(self.style_names)

    def parameter_count(self) -> int:
        return 2 * self.n_styles * sum(self.channels)

    def index(self, name: str) -> int:
        try:
            return self.style_names.index(name)
        except ValueError:
            raise UnknownStyleError(f"unknown style {name!r}") from None

    def rows(self, name: str) -> tuple[list[Tensor], list[Tensor]]:
        """Live (trainable) gamma/beta row tensors for one style."""
        i = self.index(name)
        return self._gamma[i], self._beta[i]

    def row_tensors(self) -> list[Tensor]:
        """All row tensors in (style, site, gamma-then-beta) order."""
        out: list[Tensor] = []
        for g_rows, b_rows in zip(self._gamma, self._beta):
            for g, b in zip(g_rows, b_rows):
                out.extend((g, b))
        return out

    def site_rows(self, site: int, names: Sequence[str]) -> tuple[list[Tensor], list[Tensor]]:
        """Per-style row tensors at one site, in the order requested."""
        indices = [self.index(n) for n in names]
        return [self._gamma[i][site] for i in indices], [self._beta[i][site] for i in indices]

    def copy(self) -> "StyleBank":
        clone = StyleBank(self.channels)
        clone.style_names = list(self.style_names)
        clone._gamma = [[t.copy() for t in rows] for rows in self._gamma]
        clone._beta = [[t.copy() for t in rows] for rows in self._beta]
        return clone


def add_style_row(bank: StyleBank, name: str, seed: int) -> StyleBank:
    """Grow the bank by one named style; existing rows are untouched.

    The new gamma row starts at 1 plus small gaussian jitter and beta near 0,
    so a fresh style initially passes activations through almost unchanged.
    """
    if name in bank.style_names:
        raise DuplicateStyleError(f"style {name!r} already present")
    rng = np.random.default_rng(seed)
    gamma_rows, beta_rows = [], []
    for c in bank.channels:
        gamma_rows.append(
            Tensor(1.0 + ROW_JITTER * rng.standard_normal(c), requires_grad=True)
        )
        beta_rows.append(Tensor(ROW_JITTER * rng.standard_normal(c), requires_grad=True))
    bank.style_names.append(name)
    bank._gamma.append(gamma_rows)
    bank._beta.append(beta_rows)
    return bank


def select_style(bank: StyleBank, name: str) -> StyleVector:
    """Exact copy of one style's rows."""
    gamma_rows, beta_rows = bank.rows(name)
    return StyleVector(
        channels=bank.channels,
        gamma=tuple(t.data.copy() for t in gamma_rows),
        beta=tuple(t.data.copy() for t in beta_rows),
    )


def validate_blend_weights(bank: StyleBank, weights: Mapping[str, float]) -> dict[str, float]:
    """Check convexity against the bank; returns weights scaled to sum 1."""
    if not weights:
        raise ConvexityError("blend weights are empty")
    for name in weights:
        bank.index(name)
    values = {name: float(w) for name, w in weights.items()}
    for name, w in values.items():
        if w < 0 or not np.isfinite(w):
            raise ConvexityError(f"weight for {name!r} is {w}; weights must be non-negative")
    total = sum(values.values())
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise ConvexityError(f"blend weights sum to {total:.8f}, expected 1")
    return {name: w / total for name, w in values.items()}


def blend_styles(bank: StyleBank, weights: Mapping[str, float]) -> StyleVector:
    """Convex combination of style rows: gamma = sum_s w_s gamma_s, same for beta."""
    weights = validate_blend_weights(bank, weights)
    gamma = [np.zeros(c, dtype=ad.default_dtype()) for c in bank.channels]
    beta = [np.zeros(c, dtype=ad.default_dtype()) for c in bank.channels]
    for name, w in weights.items():
        g_rows, b_rows = bank.rows(name)
        for site in range(len(bank.channels)):
            gamma[site] += w * g_rows[site].data
            beta[site] += w * b_rows[site].data
    return StyleVector(channels=bank.channels, gamma=tuple(gamma), beta=tuple(beta))


def cin_forward(x: Tensor, gamma, beta, eps: float = EPS) -> Tensor:
    """Instance-normalize then apply a style's affine transform.

    Each (sample, channel) plane is centered and scaled by its own spatial
    statistics — z = gamma * (x - mu) / sqrt(var + eps) + beta — so batch
    composition never leaks between samples.  ``gamma``/``beta`` are either
    rows of shape (c,) shared across the batch or per-sample (n, c) stacks.
    """
    if x.ndim != 4:
        raise ShapeError(f"cin_forward expects (n, c, h, w), got shape {x.shape}")
    n, c = x.shape[0], x.shape[1]
    gamma = gamma if isinstance(gamma, Tensor) else Tensor(gamma)
    beta = beta if isinstance(beta, Tensor) else Tensor(beta)
    if gamma.shape != beta.shape:
        raise ShapeError(f"gamma shape {gamma.shape} differs from beta shape {beta.shape}")
    if gamma.shape == (c,):
        affine_shape = (1, c, 1, 1)
    elif gamma.shape == (n, c):
        affine_shape = (n, c, 1, 1)
    else:
        raise ShapeError(f"affine rows of shape {gamma.shape} do not fit {c} channels")
    mu = ad.mean(x, axis=(2, 3), keepdims=True)
    centered = x - mu
    # Second centering pass removes the rounding residue of the first mean,
    # so constant channels normalize to exactly beta instead of beta + noise.
    centered = centered - ad.mean(centered, axis=(2, 3), keepdims=True)
    var = ad.mean(ad.square(centered), axis=(2, 3), keepdims=True)
    normalized = centered / ad.sqrt(var + eps)
    return ad.reshape(gamma, affine_shape) * normalized + ad.reshape(beta, affine_shape)
