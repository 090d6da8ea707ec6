import numpy as np
import pytest

from pastiche.autodiff import Tensor
from pastiche.checkpoint import (
    CheckpointBundle,
    export_style,
    import_style,
    load_checkpoint,
    save_checkpoint,
)
from pastiche.errors import (
    ArchitectureMismatchError,
    CheckpointError,
    UnknownStyleError,
)
from pastiche.losses import ExtractorConfig
from pastiche.network import NetworkConfig, build_network, count_parameters, forward

TOY = NetworkConfig(width_multiplier=0.25, image_size=32)


def toy_bundle(styles=("A", "B"), seed=5, grams=False):
    model = build_network(TOY, list(styles), seed=seed)
    extras = {}
    if grams:
        rng = np.random.default_rng(99)
        extras = {
            name: {
                "stage1": rng.normal(size=(4, 4)).astype(np.float32),
                "stage2": rng.normal(size=(8, 8)).astype(np.float32),
            }
            for name in styles
        }
    return CheckpointBundle(model, ExtractorConfig(), extras)


def assert_models_equal(a, b):
    assert a.config == b.config
    assert a.bank.style_names == b.bank.style_names
    for name in a.kernels:
        np.testing.assert_array_equal(a.kernels[name].data, b.kernels[name].data)
    for ta, tb in zip(a.bank.row_tensors(), b.bank.row_tensors()):
        np.testing.assert_array_equal(ta.data, tb.data)


class TestRoundTrip:
    def test_save_load_save_byte_identical(self, tmp_path):
        bundle = toy_bundle(grams=True)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(bundle, p1)
        loaded = load_checkpoint(p1)
        save_checkpoint(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_forward_outputs_bit_identical(self, tmp_path):
        bundle = toy_bundle()
        path = tmp_path / "m.ckpt"
        save_checkpoint(bundle, path)
        loaded = load_checkpoint(path)
        assert_models_equal(bundle.model, loaded.model)
        rng = np.random.default_rng(3)
        x = Tensor(rng.uniform(size=(1, 3, 32, 32)).astype(np.float32))
        out_a = forward(bundle.model, x, ["A"])
        out_b = forward(loaded.model, x, ["A"])
        np.testing.assert_array_equal(out_a.data, out_b.data)

    def test_gram_cache_round_trips(self, tmp_path):
        bundle = toy_bundle(grams=True)
        path = tmp_path / "m.ckpt"
        save_checkpoint(bundle, path)
        loaded = load_checkpoint(path)
        assert set(loaded.grams) == set(bundle.grams)
        for style, taps in bundle.grams.items():
            for tap, value in taps.items():
                np.testing.assert_array_equal(loaded.grams[style][tap], value)

    def test_payload_size_is_four_bytes_per_parameter(self, tmp_path):
        bundle = toy_bundle(grams=True)
        path = tmp_path / "m.ckpt"
        save_checkpoint(bundle, path)
        header = path.read_bytes().split(b"\ndata\n")[0].decode().splitlines()
        declared = next(int(l.split()[1]) for l in header if l.startswith("payload "))
        counts = count_parameters(bundle.model)
        assert declared == 4 * counts.total

    def test_extractor_kernels_round_trip(self, tmp_path):
        bundle = toy_bundle()
        fx = bundle.feature_extractor()
        bundle.extractor_kernels = [k.data.copy() for k in fx.kernels]
        path = tmp_path / "m.ckpt"
        save_checkpoint(bundle, path)
        loaded = load_checkpoint(path)
        assert loaded.extractor_kernels is not None
        for a, b in zip(bundle.extractor_kernels, loaded.extractor_kernels):
            np.testing.assert_array_equal(a, b)
        rebuilt = loaded.feature_extractor()
        for a, b in zip(fx.kernels, rebuilt.kernels):
            np.testing.assert_array_equal(a.data, b.data)


class TestCorruption:
    def test_truncated_payload_names_tensor(self, tmp_path):
        bundle = toy_bundle()
        path = tmp_path / "m.ckpt"
        save_checkpoint(bundle, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-200])
        with pytest.raises(CheckpointError, match="style.B"):
            load_checkpoint(path)

    def test_version_mismatch_rejected(self, tmp_path):
        bundle = toy_bundle()
        path = tmp_path / "m.ckpt"
        save_checkpoint(bundle, path)
        raw = path.read_bytes().replace(b"pastiche-ckpt 1", b"pastiche-ckpt 9", 1)
        path.write_bytes(raw)
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "m.ckpt"
        path.write_bytes(b"\x89PNG not a checkpoint")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_missing_tensor_line_rejected(self, tmp_path):
        bundle = toy_bundle()
        path = tmp_path / "m.ckpt"
        save_checkpoint(bundle, path)
        head, blob = path.read_bytes().split(b"\ndata\n", 1)
        lines = head.decode().splitlines()
        victim = next(l for l in lines if l.startswith("tensor style.A.0.gamma"))
        lines.remove(victim)
        path.write_bytes("\n".join(lines).encode() + b"\ndata\n" + blob)
        with pytest.raises(CheckpointError, match="style.A.0.gamma"):
            load_checkpoint(path)


class TestStyleTransfer:
    def test_export_import_round_trip(self, tmp_path):
        bundle = toy_bundle(("A", "B"))
        base = build_network(TOY, ["A"], seed=5)
        path = tmp_path / "b.style"
        export_style(bundle.model, "B", path)
        name = import_style(base, path)
        assert name == "B"
        ga, gb = bundle.model.bank.rows("B"), base.bank.rows("B")
        for rows_a, rows_b in zip(ga, gb):
            for ta, tb in zip(rows_a, rows_b):
                np.testing.assert_array_equal(ta.data, tb.data)
        rng = np.random.default_rng(8)
        x = Tensor(rng.uniform(size=(1, 3, 32, 32)).astype(np.float32))
        np.testing.assert_array_equal(
            forward(bundle.model, x, ["B"]).data, forward(base, x, ["B"]).data
        )

    def test_import_replaces_existing_rows(self, tmp_path):
        donor = toy_bundle(("A",), seed=6).model
        target = build_network(TOY, ["A"], seed=7)
        path = tmp_path / "a.style"
        export_style(donor, "A", path)
        import_style(target, path)
        for rows_d, rows_t in zip(donor.bank.rows("A"), target.bank.rows("A")):
            for td, tt in zip(rows_d, rows_t):
                np.testing.assert_array_equal(td.data, tt.data)

    def test_import_rename(self, tmp_path):
        donor = toy_bundle(("A",)).model
        target = build_network(TOY, ["A"], seed=8)
        path = tmp_path / "a.style"
        export_style(donor, "A", path)
        name = import_style(target, path, rename="A2")
        assert name == "A2"
        assert target.bank.style_names == ["A", "A2"]

    def test_export_payload_is_eight_bytes_per_channel(self, tmp_path):
        model = toy_bundle(("A",)).model
        path = tmp_path / "a.style"
        export_style(model, "A", path)
        header = path.read_bytes().split(b"\ndata\n")[0].decode().splitlines()
        declared = next(int(l.split()[1]) for l in header if l.startswith("payload "))
        assert declared == 8 * sum(model.bank.channels)

    def test_import_into_wrong_width_rejected(self, tmp_path):
        donor = toy_bundle(("A",)).model
        wide = build_network(NetworkConfig(width_multiplier=0.5, image_size=32), ["X"], seed=9)
        path = tmp_path / "a.style"
        export_style(donor, "A", path)
        with pytest.raises(ArchitectureMismatchError):
            import_style(wide, path)

    def test_export_unknown_style_rejected(self, tmp_path):
        model = toy_bundle(("A",)).model
        with pytest.raises(UnknownStyleError):
            export_style(model, "Z", tmp_path / "z.style")

    def test_checkpoint_not_accepted_as_style_file(self, tmp_path):
        bundle = toy_bundle()
        path = tmp_path / "m.ckpt"
        save_checkpoint(bundle, path)
        target = build_network(TOY, ["A"], seed=5)
        with pytest.raises(CheckpointError):
            import_style(target, path)
