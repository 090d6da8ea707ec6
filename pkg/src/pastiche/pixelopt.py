"""Direct optimization of image pixels against style and content losses.

This is the slow, per-image baseline: instead of running a feed-forward
network, gradient-descend on the pixels themselves until the feature
statistics match. Useful as a reference point and for sanity-checking the
loss surface.
"""

from __future__ import annotations

import numpy as np

from .autodiff import GradientTape, Tensor
from .errors import ConfigError, NonFiniteLossError
from .losses import FeatureExtractor, LossReport, LossWeights, total_loss
from .training import Adam, AdamParams

_STYLE_KEY = "style"


def optimize_pixels(
    fx: FeatureExtractor,
    content: Tensor,
    style: Tensor,
    steps: int = 200,
    lambda_s: float = 1.0,
    lambda_c: float = 1.0,
    init: str = "content",
    seed: int = 0,
    adam: AdamParams = AdamParams(alpha=0.01),
) -> tuple[Tensor, list[LossReport]]:
    """Gradient-descend on pixels; returns the image and a per-step loss trace.

    ``init`` selects the starting point: ``"content"`` clones the content
    image, ``"random"`` draws uniform noise from ``seed``. Pixels are clamped
    to [0, 1] after every update.
    """
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    if init == "content":
        start = content.data.copy()
    elif init == "random":
        rng = np.random.default_rng(seed)
        start = rng.uniform(size=content.data.shape).astype(content.data.dtype)
    else:
        raise ConfigError(f"unknown init {init!r} (expected 'content' or 'random')")

    weights = LossWeights({_STYLE_KEY: lambda_s}, lambda_c)
    pixels = Tensor(start, requires_grad=True)
    optimizer = Adam([pixels], adam)
    trace: list[LossReport] = []
    for step in range(steps):
        with GradientTape() as tape:
            loss, report = total_loss(fx, weights, pixels, content, style, _STYLE_KEY)
        if not np.isfinite(report.total):
            raise NonFiniteLossError(
                step=step, diagnostics={"trace": [r.as_dict() for r in trace]}
            )
        trace.append(report)
        tape.backward(loss)
        optimizer.step(tape)
        np.clip(pixels.data, 0.0, 1.0, out=pixels.data)
    return Tensor(pixels.data.copy()), trace
