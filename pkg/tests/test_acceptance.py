"""Package-level acceptance checks.

Every test here states a contract users of the package rely on: exact
parameter accounting at full width, normalization statistics, gradient
fidelity against finite differences, batch equivalence, style isolation
under fine-tuning, blending semantics, training descent and determinism,
interpolation sweeps, the loss definitions themselves, and persistence
round-trips.  The expensive trained-model fixtures live in conftest.py and
are shared session-wide; everything else is built inline at toy scale.
"""

import time

import numpy as np
import pytest
from conftest import TRAIN_STEPS
from oracle import check_gradient_coords, check_gradients

from pastiche import autodiff as ad
from pastiche.autodiff import Tensor
from pastiche.checkpoint import (
    CheckpointBundle,
    export_style,
    import_style,
    load_checkpoint,
    save_checkpoint,
)
from pastiche.cli import main
from pastiche.errors import ConvexityError
from pastiche.imageio import encode_png, load_image
from pastiche.losses import (
    ExtractorConfig,
    FeatureExtractor,
    LossWeights,
    content_loss,
    feature_distance,
    gram,
    gram_distance,
    gram_targets,
    style_loss,
    total_loss,
)
from pastiche.network import NetworkConfig, build_network, count_parameters, forward
from pastiche.styles import blend_styles, cin_forward, select_style

TOY_NET = NetworkConfig(width_multiplier=0.25, image_size=32)


def _named_arrays(model):
    """Every parameter array in the model, with a stable name."""
    out = [(f"net.{name}", t.data) for name, t in model.kernels.items()]
    for style in model.bank.style_names:
        gamma_rows, beta_rows = model.bank.rows(style)
        for site, (g, b) in enumerate(zip(gamma_rows, beta_rows)):
            out.append((f"style.{style}.{site}.gamma", g.data))
            out.append((f"style.{style}.{site}.beta", b.data))
    return out


def _total_at(curve, step):
    for point in curve.points:
        if point.step == step:
            return point.total
    raise AssertionError(f"curve has no point at step {step}")


def _payload_bytes(path):
    header = path.read_bytes().split(b"\ndata\n", 1)[0].decode().split("\n")
    for line in header:
        if line.startswith("payload "):
            return int(line.split()[1])
    raise AssertionError("no payload line in manifest")


class TestParameterAccounting:
    def test_full_width_counts(self):
        start = time.perf_counter()
        model = build_network(NetworkConfig(), ["A", "B"], seed=0)
        counts = count_parameters(model)
        elapsed = time.perf_counter() - start
        assert counts.per_style == 3206
        assert counts.shared == 1674432
        assert 0.0019 <= counts.fraction <= 0.0020
        assert elapsed < 1.0


class TestNormalizationStatistics:
    def test_unit_affine_statistics(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(4, 7, 11, 13)))
        ones, zeros = Tensor(np.ones(7)), Tensor(np.zeros(7))
        out = cin_forward(x, ones, zeros).data
        mean = out.mean(axis=(2, 3))
        std = out.std(axis=(2, 3))
        assert np.abs(mean).max() <= 1e-5
        assert np.abs(std - 1.0).max() <= 1e-3

    def test_constant_channels_return_shift(self):
        gamma = Tensor(np.array([1.5, -2.0, 0.25]))
        beta = Tensor(np.array([0.1, 0.2, -0.3]))
        for const in (0.5, 0.37, 1.0):
            x = Tensor(np.full((2, 3, 9, 11), const))
            out = cin_forward(x, gamma, beta).data
            expected = np.broadcast_to(beta.data[None, :, None, None], out.shape)
            np.testing.assert_allclose(out, expected, rtol=0, atol=1e-6)


class TestGradientFidelity:
    """Central finite differences in float64, relative error <= 1e-3."""

    def test_primitives_and_composite_match_finite_differences(self):
        start = time.perf_counter()
        self._check_primitives()
        self._check_composite_objective()
        assert time.perf_counter() - start < 60.0

    def _check_primitives(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(2, 3))
        y = rng.normal(size=(2, 3)) + 2.5
        pos = np.abs(x) + 0.5
        off_kink = x + 0.2 * np.sign(x)
        img = rng.normal(size=(1, 3, 6, 6)) * 0.5
        kernel = rng.normal(size=(4, 3, 3, 3)) * 0.3
        row = rng.normal(size=3) * 0.2 + 1.0
        feat = rng.uniform(size=(3, 4, 4))
        target = rng.normal(size=(3, 3))
        target = target @ target.T
        fmap = rng.normal(size=(1, 2, 3, 3))

        def quad(t):
            return ad.tensor_sum(ad.square(t))

        cases = [
            ("add", lambda ts: quad(ts[0] + ts[1]), [x, y]),
            ("sub", lambda ts: quad(ts[0] - ts[1]), [x, y]),
            ("mul", lambda ts: quad(ts[0] * ts[1]), [x, y]),
            ("div", lambda ts: quad(ts[0] / ts[1]), [x, y]),
            ("neg", lambda ts: quad(-ts[0]), [x]),
            ("power", lambda ts: ad.tensor_sum(ts[0] ** 3.0), [y]),
            ("square", lambda ts: ad.tensor_sum(ad.square(ts[0])), [x]),
            ("sqrt", lambda ts: ad.tensor_sum(ad.sqrt(ts[0])), [pos]),
            ("relu", lambda ts: quad(ad.relu(ts[0])), [off_kink]),
            ("sigmoid", lambda ts: quad(ad.sigmoid(ts[0])), [x]),
            ("sum_axis", lambda ts: quad(ad.tensor_sum(ts[0], axis=0, keepdims=True)), [x]),
            ("mean", lambda ts: quad(ad.mean(ts[0], axis=1)), [x]),
            ("reshape", lambda ts: quad(ad.reshape(ts[0], (3, 2))), [x]),
            ("transpose", lambda ts: quad(ad.transpose(ts[0])), [x]),
            ("matmul", lambda ts: quad(ad.matmul(ts[0], ad.transpose(ts[1]))), [x, y]),
            ("getitem", lambda ts: quad(ts[0][0:1, 1:]), [x]),
            ("stack", lambda ts: quad(ad.stack([ts[0], ts[1]], axis=1)), [x, y]),
            ("mirror_pad", lambda ts: quad(ad.mirror_pad(ts[0], 2)), [img]),
            ("conv_s1", lambda ts: quad(ad.conv2d(ts[0], ts[1], stride=1)), [img, kernel]),
            ("conv_s2", lambda ts: quad(ad.conv2d(ts[0], ts[1], stride=2)), [img, kernel]),
            ("upsample", lambda ts: quad(ad.upsample_nn(ts[0], 2)), [img]),
            ("cin", lambda ts: quad(cin_forward(ts[0], ts[1], ts[2])), [img, row, row * 0.5]),
            ("gram", lambda ts: quad(gram(ts[0])), [feat]),
            ("gram_distance", lambda ts: gram_distance(gram(ts[0]), target, 3), [feat]),
            ("feature_distance", lambda ts: feature_distance(ts[0], ts[1]), [fmap, fmap * 0.7]),
        ]
        for name, build, arrays in cases:
            try:
                check_gradients(build, arrays, rtol=1e-3, atol=1e-8)
            except AssertionError as exc:
                raise AssertionError(f"primitive {name!r}: {exc}") from None

    def _check_composite_objective(self):
        """Whole objective: content -> network -> extractor -> weighted loss."""
        with ad.precision("float64"):
            rng = np.random.default_rng(13)
            net = NetworkConfig(width_multiplier=0.25, image_size=16)
            model = build_network(net, ["A", "B"], seed=3)
            fx = FeatureExtractor.from_seed(
                ExtractorConfig(
                    widths=(8, 16),
                    strides=(1, 2),
                    style_taps=("stage1", "stage2"),
                    content_taps=("stage2",),
                )
            )
            content = Tensor(rng.uniform(size=(1, 3, 16, 16)), requires_grad=True)
            targets = gram_targets(fx, Tensor(rng.uniform(size=(1, 3, 16, 16))))
            weights = LossWeights({"A": 1.5}, lambda_c=0.7)

            def objective():
                pastiche = forward(model, content, ["A"])
                loss, _ = total_loss(fx, weights, pastiche, content, targets, "A")
                return loss

            gamma_rows, beta_rows = model.bank.rows("A")
            probes = [
                model.kernels["conv_in"],
                model.kernels["res2a"],
                model.kernels["conv_out"],
                gamma_rows[0],
                beta_rows[15],
                content,
            ]
            for tensor in probes:
                k = min(6, tensor.data.size)
                coords = rng.choice(tensor.data.size, size=k, replace=False)
                check_gradient_coords(objective, tensor, coords, rtol=1e-3, atol=1e-8)


class TestBatchEquivalence:
    def test_batch_matches_single_passes(self):
        rng = np.random.default_rng(11)
        model = build_network(TOY_NET, ["A", "B", "C"], seed=21)
        content = Tensor(rng.uniform(size=(3, 3, 32, 32)))
        names = ["B", "A", "C"]
        batch = forward(model, content, names)
        for i, name in enumerate(names):
            single = forward(model, Tensor(content.data[i : i + 1].copy()), [name])
            np.testing.assert_allclose(batch.data[i], single.data[0], rtol=0, atol=1e-6)


class TestFineTuneIsolation:
    def test_shared_and_other_styles_bit_identical(self, converged_base, finetuned):
        base, tuned = converged_base["model"], finetuned["model"]
        for name, kernel in base.kernels.items():
            assert kernel.data.tobytes() == tuned.kernels[name].data.tobytes(), name
        for style in ("A", "B"):
            before = base.bank.rows(style)
            after = tuned.bank.rows(style)
            for rows_b, rows_a in zip(before, after):
                for rb, ra in zip(rows_b, rows_a):
                    assert rb.data.tobytes() == ra.data.tobytes()

    def test_exactly_one_row_set_changed(self, finetuned):
        tuned = finetuned["model"]
        new_rows = [t.data for rows in tuned.bank.rows("D") for t in rows]
        assert sum(a.size for a in new_rows) == 2 * sum(tuned.bank.channels)
        changed = sum(
            int(np.sum(before != after))
            for before, after in zip(finetuned["initial_new_rows"], new_rows)
        )
        assert changed == 2 * sum(tuned.bank.channels)

    def test_existing_pastiches_byte_identical(self, converged_base, finetuned, toy_assets):
        content = load_image(toy_assets["content"][0])
        for style in ("A", "B"):
            before = encode_png(forward(converged_base["model"], content, [style]))
            after = encode_png(forward(finetuned["model"], content, [style]))
            assert before == after


@pytest.fixture(scope="module")
def blend_model():
    return build_network(TOY_NET, ["A", "B"], seed=5)


class TestBlendSemantics:
    def test_single_style_blend_is_bit_exact(self, blend_model):
        rng = np.random.default_rng(17)
        content = Tensor(rng.uniform(size=(1, 3, 32, 32)))
        pure = forward(blend_model, content, select_style(blend_model.bank, "A"))
        blended = forward(blend_model, content, blend_styles(blend_model.bank, {"A": 1.0}))
        assert blended.data.tobytes() == pure.data.tobytes()

    def test_midpoint_blend_averages_parameters(self, blend_model):
        bank = blend_model.bank
        mid = blend_styles(bank, {"A": 0.5, "B": 0.5})
        va = select_style(bank, "A")
        vb = select_style(bank, "B")
        for site in range(len(mid.channels)):
            np.testing.assert_allclose(
                mid.gamma[site], (va.gamma[site] + vb.gamma[site]) / 2, rtol=0, atol=1e-7
            )
            np.testing.assert_allclose(
                mid.beta[site], (va.beta[site] + vb.beta[site]) / 2, rtol=0, atol=1e-7
            )

    def test_non_convex_weights_rejected(self, blend_model):
        with pytest.raises(ConvexityError):
            blend_styles(blend_model.bank, {"A": 1.5, "B": -0.5})
        with pytest.raises(ConvexityError):
            blend_styles(blend_model.bank, {"A": 0.7, "B": 0.4})


class TestTrainingRun:
    def test_loss_halves_over_run(self, trained_base):
        curve = trained_base["curve"]
        assert curve.points[0].step == 0
        assert curve.points[-1].step == TRAIN_STEPS
        assert curve.points[-1].total < 0.5 * curve.points[0].total

    def test_fixed_seed_runs_bit_identical(self, trained_base, trained_twin):
        first = _named_arrays(trained_base["model"])
        second = _named_arrays(trained_twin["model"])
        assert [n for n, _ in first] == [n for n, _ in second]
        for (name, a), (_, b) in zip(first, second):
            assert a.tobytes() == b.tobytes(), name
        totals_a = [(p.step, p.content_loss, p.style_loss, p.total) for p in trained_base["curve"].points]
        totals_b = [(p.step, p.content_loss, p.style_loss, p.total) for p in trained_twin["curve"].points]
        assert totals_a == totals_b

    def test_runtime_within_budget(self, trained_base, trained_twin):
        assert trained_base["wall_seconds"] < 600.0
        assert trained_twin["wall_seconds"] < 600.0


class TestFineTuneSpeed:
    """Adding a style to a converged base descends at least as fast as
    training a fresh single-style network, at matched step counts."""

    @pytest.mark.parametrize("k", (100, 300))
    def test_finetune_not_behind_scratch(self, finetuned, scratch_single, k):
        ft = _total_at(finetuned["curve"], k)
        scratch = _total_at(scratch_single["curve"], k)
        assert ft <= scratch, f"K={k}: finetune {ft:.5f} vs scratch {scratch:.5f}"


class TestInterpolationSweep:
    def test_sweep_endpoint_orderings(self, converged_base, toy_assets, extractor, tmp_path):
        grams = {
            name: gram_targets(extractor, load_image(toy_assets["styles"][name]))
            for name in ("A", "B")
        }
        ckpt = tmp_path / "base.ckpt"
        save_checkpoint(CheckpointBundle(model=converged_base["model"], grams=grams), ckpt)
        out_dir = tmp_path / "sweep"
        code = main(
            [
                "sweep",
                "--ckpt", str(ckpt),
                "--style-a", "A",
                "--style-b", "B",
                "--in", str(toy_assets["content"][0]),
                "--steps", "9",
                "--out", str(out_dir),
            ]
        )
        assert code == 0
        lines = (out_dir / "sweep.csv").read_text().strip().splitlines()
        assert lines[0] == "alpha,style_loss_a,style_loss_b"
        rows = [tuple(float(v) for v in ln.split(",")) for ln in lines[1:]]
        assert len(rows) == 9
        assert rows[0][0] == 0.0 and rows[-1][0] == 1.0
        loss_a = [r[1] for r in rows]
        loss_b = [r[2] for r in rows]
        # Endpoints: each style's loss is lower at its own end of the sweep.
        assert loss_a[-1] < loss_a[0]
        assert loss_b[0] < loss_b[-1]
        # Monotonicity along the whole path is reported, not required.
        mono_a = all(b <= a for a, b in zip(loss_a, loss_a[1:]))
        mono_b = all(b >= a for a, b in zip(loss_b, loss_b[1:]))
        print(f"sweep monotonicity: loss_a nonincreasing={mono_a} loss_b nondecreasing={mono_b}")


class TestLossDefinitions:
    def test_matching_inputs_zero_each_term(self, extractor):
        rng = np.random.default_rng(23)
        img = Tensor(rng.uniform(size=(1, 3, 32, 32)))
        s_total, _ = style_loss(extractor, img, img)
        c_total, _ = content_loss(extractor, img, img)
        assert abs(float(s_total.data)) <= 1e-6
        assert abs(float(c_total.data)) <= 1e-6

    def test_gram_hand_example(self):
        g = gram(Tensor(np.array([[[1.0, 2.0]]])))
        assert g.shape == (1, 1)
        assert abs(float(g.data[0, 0]) - 2.5) <= 1e-6

    def test_style_term_hand_example(self):
        gram_p = gram(Tensor(np.array([[[1.0, 2.0]]])))
        gram_s = gram(Tensor(np.array([[[1.0, 1.0]]])))
        term = gram_distance(gram_p, gram_s, channels=1)
        assert abs(float(term.data) - 2.25) <= 1e-6


class TestPersistence:
    def test_checkpoint_round_trip_bit_exact(self, converged_base, extractor, toy_assets, tmp_path):
        grams = {
            name: gram_targets(extractor, load_image(toy_assets["styles"][name]))
            for name in ("A", "B")
        }
        bundle = CheckpointBundle(model=converged_base["model"], grams=grams)
        first = tmp_path / "model.ckpt"
        save_checkpoint(bundle, first)
        loaded = load_checkpoint(first)
        for (name, a), (_, b) in zip(
            _named_arrays(bundle.model), _named_arrays(loaded.model)
        ):
            assert a.tobytes() == b.tobytes(), name
        for style, taps in grams.items():
            for tap, value in taps.items():
                assert loaded.grams[style][tap].tobytes() == value.astype(np.float32).tobytes()
        second = tmp_path / "again.ckpt"
        save_checkpoint(loaded, second)
        assert first.read_bytes() == second.read_bytes()

    def test_full_width_payload_is_four_bytes_per_parameter(self, tmp_path):
        model = build_network(NetworkConfig(), ["A", "B"], seed=0)
        path = tmp_path / "full.ckpt"
        save_checkpoint(CheckpointBundle(model=model), path)
        assert _payload_bytes(path) == 4 * (1674432 + 2 * 3206)

    def test_style_export_size_and_round_trip(self, converged_base, tmp_path):
        model = converged_base["model"]
        path = tmp_path / "a.style"
        export_style(model, "A", path)
        assert _payload_bytes(path) == 8 * sum(model.bank.channels)

        target = model.copy()
        imported = import_style(target, path, rename="A2")
        assert imported == "A2"
        va = select_style(model.bank, "A")
        vb = select_style(target.bank, "A2")
        for site in range(len(va.channels)):
            assert va.gamma[site].tobytes() == vb.gamma[site].tobytes()
            assert va.beta[site].tobytes() == vb.beta[site].tobytes()

        rng = np.random.default_rng(29)
        content = Tensor(rng.uniform(size=(1, 3, 32, 32)))
        out_a = forward(model, content, ["A"])
        out_b = forward(target, content, ["A2"])
        assert out_a.data.tobytes() == out_b.data.tobytes()
