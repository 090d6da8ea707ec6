"""Adam training for the multi-style network, plus single-style fine-tuning.

One run owns its model: batches of content crops are sampled from a corpus
directory, each sample is assigned a style uniformly at random, and the
weighted perceptual loss is backpropagated through the transfer network.
Fine-tune mode trains exactly one style's gamma/beta rows against a frozen
network.  Loss curves are evaluated on a batch set fixed at step 0 so points
are comparable across the run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .autodiff import GradientTape, Tensor
from .errors import ConfigError, NonFiniteLossError, UnknownStyleError
from .imageio import load_image, resize_smaller_side
from .losses import FeatureExtractor, feature_distance, gram, gram_distance, gram_targets
from .network import ModelWeights, forward

IMAGE_SUFFIXES = (".png", ".ppm")


@dataclass(frozen=True)
class AdamParams:
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class AdamState(NamedTuple):
    m: np.ndarray
    v: np.ndarray
    t: int


def fresh_state(param: np.ndarray) -> AdamState:
    return AdamState(np.zeros_like(param), np.zeros_like(param), 0)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState, hyper: AdamParams):
    """One bias-corrected Adam update; returns (new_param, new_state)."""
    if param.shape != grad.shape:
        raise ConfigError(f"gradient shape {grad.shape} does not match param {param.shape}")
    t = state.t + 1
    m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * grad
    v = hyper.beta2 * state.v + (1.0 - hyper.beta2) * (grad * grad)
    m_hat = m / (1.0 - hyper.beta1**t)
    v_hat = v / (1.0 - hyper.beta2**t)
    new_param = param - hyper.alpha * m_hat / (np.sqrt(v_hat) + hyper.eps)
    return new_param, AdamState(m, v, t)


class Adam:
    """Stateful wrapper updating a fixed set of tensors from tape gradients."""

    def __init__(self, tensors: Sequence[Tensor], hyper: AdamParams = AdamParams()):
        self.tensors = list(tensors)
        self.hyper = hyper
        self.states = [fresh_state(t.data) for t in self.tensors]

    def step(self, tape: GradientTape) -> None:
        for i, tensor in enumerate(self.tensors):
            new_param, new_state = adam_step(
                tensor.data, tape.grad(tensor), self.states[i], self.hyper
            )
            tensor.data = new_param
            self.states[i] = new_state


@dataclass(frozen=True)
class TrainConfig:
    steps: int
    corpus: str
    styles: Mapping[str, str]  # style name -> style image path
    batch_size: int = 16
    image_size: int = 256
    seed: int = 0
    log_every: int = 50
    adam: AdamParams = field(default_factory=AdamParams)
    lambda_c: float = 1.0
    lambda_s: float | Mapping[str, float] = 1.0
    mode: str = "full"  # "full" | "finetune"
    finetune_name: str | None = None
    eval_batches: int = 32

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.mode not in ("full", "finetune"):
            raise ConfigError(f"mode must be 'full' or 'finetune', got {self.mode!r}")
        if self.mode == "finetune" and not self.finetune_name:
            raise ConfigError("finetune mode needs finetune_name")
        if self.image_size % 4 != 0:
            raise ConfigError("image_size must be a multiple of 4")
        if self.eval_batches < 1:
            raise ConfigError("eval_batches must be >= 1")

    def style_weight(self, name: str) -> float:
        if isinstance(self.lambda_s, Mapping):
            if name not in self.lambda_s:
                raise UnknownStyleError(f"no lambda_s entry for style {name!r}")
            return float(self.lambda_s[name])
        return float(self.lambda_s)


@dataclass(frozen=True)
class CurvePoint:
    step: int
    content_loss: float
    style_loss: float
    total: float
    wall_ms: float


class LearningCurve:
    HEADER = "step,content_loss,style_loss,total,wall_ms"

    def __init__(self, points: Sequence[CurvePoint] = ()):
        self.points = list(points)

    def append(self, point: CurvePoint) -> None:
        if self.points and point.step <= self.points[-1].step:
            raise ConfigError("curve steps must be strictly increasing")
        self.points.append(point)

    @property
    def initial(self) -> CurvePoint:
        return self.points[0]

    @property
    def final(self) -> CurvePoint:
        return self.points[-1]

    def at_step(self, step: int) -> CurvePoint:
        for p in self.points:
            if p.step == step:
                return p
        raise KeyError(f"no curve point at step {step}")

    def to_csv(self) -> str:
        lines = [self.HEADER]
        for p in self.points:
            lines.append(
                f"{p.step},{p.content_loss:.8g},{p.style_loss:.8g},{p.total:.8g},{p.wall_ms:.3f}"
            )
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "LearningCurve":
        lines = [ln for ln in text.strip().splitlines() if ln]
        if not lines or lines[0] != cls.HEADER:
            raise ConfigError("bad curve file header")
        points = []
        for ln in lines[1:]:
            step, c, s, t, w = ln.split(",")
            points.append(CurvePoint(int(step), float(c), float(s), float(t), float(w)))
        return cls(points)


def load_corpus(corpus_dir, image_size: int) -> list[Tensor]:
    """Decode every corpus image and resize its smaller side to image_size."""
    root = Path(corpus_dir)
    paths = sorted(p for p in root.glob("*") if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise ConfigError(f"no corpus images (*.png, *.ppm) under {root}")
    return [resize_smaller_side(load_image(p), image_size) for p in paths]


class _Sampler:
    """Deterministic epoch-shuffled content sampling with random crops."""

    def __init__(self, images: list[Tensor], size: int, rng: np.random.Generator):
        self.images = images
        self.size = size
        self.rng = rng
        self._order: list[int] = []

    def _next_index(self) -> int:
        if not self._order:
            self._order = list(self.rng.permutation(len(self.images)))
        return self._order.pop()

    def crop(self, index: int, top: int, left: int) -> np.ndarray:
        return self.images[index].data[:, :, top : top + self.size, left : left + self.size]

    def draw(self, count: int) -> list[tuple[int, int, int]]:
        picks = []
        for _ in range(count):
            idx = self._next_index()
            _, _, h, w = self.images[idx].shape
            top = int(self.rng.integers(0, h - self.size + 1))
            left = int(self.rng.integers(0, w - self.size + 1))
            picks.append((idx, top, left))
        return picks

    def batch(self, picks: Sequence[tuple[int, int, int]]) -> Tensor:
        return Tensor(np.concatenate([self.crop(*p) for p in picks], axis=0))


def _batch_loss(model, fx, config, content: Tensor, names: list[str], targets):
    """Mean weighted loss over one batch; returns (tensor, floats...)."""
    pastiche = forward(model, content, names)
    feats_p = fx.extract(pastiche)
    feats_c = fx.extract(content)
    total = None
    style_sum = 0.0
    content_sum = 0.0
    per_sample = []
    for i, name in enumerate(names):
        s_term = None
        for tap in fx.config.style_taps:
            channels = feats_p[tap].shape[1]
            term = gram_distance(gram(feats_p[tap][i]), targets[name][tap], channels)
            s_term = term if s_term is None else s_term + term
        c_term = None
        for tap in fx.config.content_taps:
            term = feature_distance(feats_p[tap][i : i + 1], feats_c[tap][i : i + 1])
            c_term = term if c_term is None else c_term + term
        weighted = s_term * config.style_weight(name) + c_term * config.lambda_c
        total = weighted if total is None else total + weighted
        style_sum += float(s_term.data)
        content_sum += float(c_term.data)
        per_sample.append((name, float(s_term.data), float(c_term.data)))
    n = len(names)
    return total * (1.0 / n), style_sum / n, content_sum / n, per_sample


def _evaluate(model, fx, config, sampler, eval_set, targets) -> tuple[float, float, float]:
    """Fresh forward pass over the fixed evaluation batches."""
    style_total = content_total = weighted_total = 0.0
    count = 0
    for picks, names in eval_set:
        content = sampler.batch(picks)
        loss, style_mean, content_mean, per_sample = _batch_loss(
            model, fx, config, content, names, targets
        )
        weighted_total += float(loss.data) * len(names)
        style_total += style_mean * len(names)
        content_total += content_mean * len(names)
        count += len(names)
    return content_total / count, style_total / count, weighted_total / count


def _run(model: ModelWeights, fx: FeatureExtractor, config: TrainConfig, trainable, style_pool):
    for name in style_pool:
        if name not in config.styles:
            raise ConfigError(f"style {name!r} has no style image in the config")
    targets = {
        name: gram_targets(fx, load_image(path))
        for name, path in config.styles.items()
        if name in style_pool
    }

    seeds = np.random.SeedSequence(config.seed).spawn(3)
    data_rng = np.random.default_rng(seeds[0])
    style_rng = np.random.default_rng(seeds[1])
    eval_rng = np.random.default_rng(seeds[2])

    images = load_corpus(config.corpus, config.image_size)
    sampler = _Sampler(images, config.image_size, data_rng)
    eval_sampler = _Sampler(images, config.image_size, eval_rng)

    # The evaluation set is drawn once and reused verbatim at every log point.
    eval_set = []
    for _ in range(config.eval_batches):
        picks = eval_sampler.draw(config.batch_size)
        names = [style_pool[i] for i in eval_rng.integers(0, len(style_pool), config.batch_size)]
        eval_set.append((picks, names))

    optimizer = Adam(trainable, config.adam)
    curve = LearningCurve()
    started = time.perf_counter()

    def log(step: int) -> None:
        content_mean, style_mean, weighted = _evaluate(
            model, fx, config, eval_sampler, eval_set, targets
        )
        wall_ms = (time.perf_counter() - started) * 1000.0
        curve.append(CurvePoint(step, content_mean, style_mean, weighted, wall_ms))

    log(0)
    for step in range(1, config.steps + 1):
        picks = sampler.draw(config.batch_size)
        names = [style_pool[i] for i in style_rng.integers(0, len(style_pool), config.batch_size)]
        content = sampler.batch(picks)
        with GradientTape() as tape:
            loss, style_mean, content_mean, per_sample = _batch_loss(
                model, fx, config, content, names, targets
            )
        if not np.isfinite(float(loss.data)):
            raise NonFiniteLossError(
                f"non-finite loss at step {step}",
                step=step,
                diagnostics={
                    "per_sample": [
                        {"style": n, "style_loss": s, "content_loss": c}
                        for n, s, c in per_sample
                    ]
                },
            )
        tape.backward(loss)
        optimizer.step(tape)
        if step % config.log_every == 0 or step == config.steps:
            log(step)
    return model, curve


def train(model: ModelWeights, fx: FeatureExtractor, config: TrainConfig):
    """Train every parameter (or delegate to fine-tuning when configured)."""
    if config.mode == "finetune":
        return finetune_style(model, fx, config)
    for name in model.bank.style_names:
        if name not in config.styles:
            raise ConfigError(f"model style {name!r} missing from config styles")
    trainable = model.kernel_tensors() + model.bank.row_tensors()
    return _run(model, fx, config, trainable, list(model.bank.style_names))


def finetune_style(model: ModelWeights, fx: FeatureExtractor, config: TrainConfig):
    """Train only one style's gamma/beta rows; everything else stays frozen."""
    if config.mode != "finetune" or not config.finetune_name:
        raise ConfigError("finetune_style needs mode='finetune' and finetune_name")
    name = config.finetune_name
    gamma_rows, beta_rows = model.bank.rows(name)  # raises UnknownStyleError
    trainable = list(gamma_rows) + list(beta_rows)
    return _run(model, fx, config, trainable, [name])
