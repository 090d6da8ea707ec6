import numpy as np
import pytest

from pastiche.autodiff import Tensor
from pastiche.imageio import save_image


def smooth_blobs(rng, h=32, w=32, octaves=3):
    """Soft multi-scale color blobs; stands in for photographic content."""
    img = np.zeros((3, h, w))
    for o in range(octaves):
        cell = 2 ** (o + 1)
        base = rng.uniform(size=(3, max(h // cell, 1), max(w // cell, 1)))
        img += np.kron(base, np.ones((cell, cell)))[:, :h, :w] / (o + 1)
    img -= img.min()
    img /= img.max() + 1e-9
    return img.astype(np.float32)


def checker_texture(rng, h=32, w=32, period=4):
    """High-frequency checkerboard with color jitter; a 'busy' style."""
    yy, xx = np.mgrid[0:h, 0:w]
    checker = ((yy // period + xx // period) % 2).astype(np.float32)
    img = np.stack([checker, 1 - checker, checker * 0.5])
    img = 0.8 * img + 0.2 * rng.uniform(size=(3, h, w))
    return np.clip(img, 0, 1).astype(np.float32)


def band_texture(rng, h=32, w=32, period=16):
    """Smooth horizontal color bands; a 'calm' low-frequency style."""
    yy = np.arange(h)[None, :, None] * (2 * np.pi / period)
    img = np.concatenate(
        [0.5 + 0.5 * np.sin(yy + phase) for phase in (0.0, 2.1, 4.2)], axis=0
    )
    img = np.broadcast_to(img, (3, h, w)).copy()
    img = 0.9 * img + 0.1 * rng.uniform(size=(3, h, w))
    return np.clip(img, 0, 1).astype(np.float32)


def stripe_texture(rng, h=32, w=32, period=8):
    """Diagonal stripes, used as the late-added third style."""
    yy, xx = np.mgrid[0:h, 0:w]
    stripes = (((yy + xx) // period) % 2).astype(np.float32)
    img = np.stack([stripes * 0.9, stripes * 0.3, 1 - stripes])
    img = 0.85 * img + 0.15 * rng.uniform(size=(3, h, w))
    return np.clip(img, 0, 1).astype(np.float32)


@pytest.fixture(scope="session")
def toy_assets(tmp_path_factory):
    """Synthetic 32x32 corpus (8 content images) plus three style images."""
    root = tmp_path_factory.mktemp("toy-assets")
    corpus = root / "corpus"
    corpus.mkdir()
    rng = np.random.default_rng(2024)
    content_paths = []
    for i in range(8):
        path = corpus / f"content_{i}.png"
        save_image(Tensor(smooth_blobs(rng)[None]), path)
        content_paths.append(path)
    styles = {}
    makers = (
        ("A", checker_texture),
        ("B", band_texture),
        ("C", stripe_texture),
        ("D", lambda r: band_texture(r, period=10)),
    )
    for name, maker in makers:
        path = root / f"style_{name}.png"
        save_image(Tensor(maker(rng)[None]), path)
        styles[name] = path
    return {
        "root": root,
        "corpus": corpus,
        "content": content_paths,
        "styles": styles,
    }


# --- trained-model fixtures -------------------------------------------------
# Training runs are the expensive part of the suite, so they are shared.
# Two tiers at the same toy scale (32x32 images, width 0.25, batch 2):
#   * trained_base / trained_twin: identical 300-step runs, used by the
#     descent and run-to-run determinism checks.
#   * converged_base: a long 3000-step run.  Adding a style by fine-tuning
#     its rows only pays off when the shared trunk is already well trained,
#     so the fine-tune and interpolation fixtures all branch from this one.

TRAIN_STEPS = 300
BASE_STEPS = 3000


def _toy_net():
    from pastiche.network import NetworkConfig

    return NetworkConfig(width_multiplier=0.25, image_size=32)


def _toy_train():
    from pastiche.training import AdamParams

    return dict(
        batch_size=2,
        image_size=32,
        seed=123,
        log_every=100,
        adam=AdamParams(alpha=0.004),
    )


def _timed_train(model, fx, config):
    import time

    from pastiche.training import train

    start = time.perf_counter()
    model, curve = train(model, fx, config)
    return {"model": model, "curve": curve, "wall_seconds": time.perf_counter() - start}


@pytest.fixture(scope="session")
def extractor():
    from pastiche.losses import FeatureExtractor

    return FeatureExtractor.from_seed()


def _two_style_run(toy_assets, extractor, steps):
    from pastiche.network import build_network
    from pastiche.training import TrainConfig

    model = build_network(_toy_net(), ["A", "B"], seed=77)
    config = TrainConfig(
        steps=steps,
        corpus=str(toy_assets["corpus"]),
        styles={k: str(toy_assets["styles"][k]) for k in ("A", "B")},
        **_toy_train(),
    )
    return _timed_train(model, extractor, config)


@pytest.fixture(scope="session")
def trained_base(toy_assets, extractor):
    """300-step two-style training run (styles A and B)."""
    return _two_style_run(toy_assets, extractor, TRAIN_STEPS)


@pytest.fixture(scope="session")
def trained_twin(toy_assets, extractor):
    """Bit-for-bit repeat of trained_base, for determinism checks."""
    return _two_style_run(toy_assets, extractor, TRAIN_STEPS)


@pytest.fixture(scope="session")
def converged_base(toy_assets, extractor):
    """3000-step two-style run; the branch point for fine-tune fixtures."""
    return _two_style_run(toy_assets, extractor, BASE_STEPS)


@pytest.fixture(scope="session")
def finetuned(converged_base, toy_assets, extractor):
    """Style D fine-tuned (rows only) on a copy of the converged base."""
    from pastiche.styles import add_style_row
    from pastiche.training import TrainConfig, finetune_style

    model = converged_base["model"].copy()
    add_style_row(model.bank, "D", seed=900)
    initial_rows = [
        row.data.copy() for rows in model.bank.rows("D") for row in rows
    ]
    config = TrainConfig(
        steps=TRAIN_STEPS,
        corpus=str(toy_assets["corpus"]),
        styles={"D": str(toy_assets["styles"]["D"])},
        mode="finetune",
        finetune_name="D",
        **_toy_train(),
    )
    import time

    start = time.perf_counter()
    model, curve = finetune_style(model, extractor, config)
    return {
        "model": model,
        "curve": curve,
        "wall_seconds": time.perf_counter() - start,
        "initial_new_rows": initial_rows,
    }


@pytest.fixture(scope="session")
def scratch_single(toy_assets, extractor):
    """From-scratch single-style run on style D (fine-tune comparison arm)."""
    from pastiche.network import build_network
    from pastiche.training import TrainConfig

    model = build_network(_toy_net(), ["D"], seed=77)
    config = TrainConfig(
        steps=TRAIN_STEPS,
        corpus=str(toy_assets["corpus"]),
        styles={"D": str(toy_assets["styles"]["D"])},
        **_toy_train(),
    )
    return _timed_train(model, extractor, config)
