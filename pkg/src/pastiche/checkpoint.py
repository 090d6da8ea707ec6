"""Checkpoint container: a human-readable manifest plus raw float payloads.

Layout (all text lines "\n"-terminated, fixed key order so files diff
cleanly)::

    pastiche-ckpt 1
    config {...}                 # network architecture, sorted-key JSON
    extractor {...}              # feature-extractor config, sorted-key JSON
    styles ["A", "B"]
    channels [32, 64, ...]       # normalization-site channel counts
    tensor <name> float32 <d0,d1,...> <offset>
    ...
    payload <nbytes>
    cache <name> float32 <dims> <offset>
    ...
    cachepayload <nbytes>
    data
    <payload bytes><cache bytes>

The payload region holds exactly the model parameters (shared kernels and
every style's gamma/beta rows, plus extractor kernels when explicitly
included), concatenated little-endian float32 at the stated offsets.  The
cache region holds derived artifacts — per-style Gram targets — which the
blend service needs but which are not parameters; keeping them out of the
payload keeps the payload size equal to 4 bytes x parameter count.

Style export files are the same idea with a ``pastiche-style 1`` magic and
only one style's rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import (
    ArchitectureMismatchError,
    CheckpointError,
    UnknownStyleError,
)
from .losses import ExtractorConfig, FeatureExtractor
from .network import ModelWeights, NetworkConfig, build_network, layer_plan

CKPT_MAGIC = "pastiche-ckpt 1"
STYLE_MAGIC = "pastiche-style 1"
_DTYPE = np.dtype("<f4")


@dataclass
class CheckpointBundle:
    """Everything a service or CLI needs to run a saved model."""

    model: ModelWeights
    extractor_config: ExtractorConfig = field(default_factory=ExtractorConfig)
    grams: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    extractor_kernels: list[np.ndarray] | None = None

    def feature_extractor(self) -> FeatureExtractor:
        fx = FeatureExtractor.from_seed(self.extractor_config)
        if self.extractor_kernels is not None:
            if len(self.extractor_kernels) != len(fx.kernels):
                raise ArchitectureMismatchError(
                    "stored extractor kernels do not match extractor config"
                )
            for tensor, stored in zip(fx.kernels, self.extractor_kernels):
                if tensor.shape != stored.shape:
                    raise ArchitectureMismatchError(
                        f"extractor kernel shape {stored.shape} != {tensor.shape}"
                    )
                tensor.data = stored.astype(tensor.data.dtype)
        return fx


def _check_name(name: str) -> str:
    if not name or any(ch in name for ch in "\n\r\t"):
        raise CheckpointError(f"tensor name {name!r} not storable")
    return name


def _named_model_tensors(model: ModelWeights) -> list[tuple[str, np.ndarray]]:
    """Deterministic (name, array) order: kernels by layer, then style rows."""
    out = [(f"net.{spec.name}.kernel", model.kernels[spec.name].data)
           for spec in layer_plan(model.config)]
    for style in model.bank.style_names:
        gamma_rows, beta_rows = model.bank.rows(style)
        for site, (g, b) in enumerate(zip(gamma_rows, beta_rows)):
            out.append((f"style.{style}.{site}.gamma", g.data))
            out.append((f"style.{style}.{site}.beta", b.data))
    return out


def _table_and_blob(entries: list[tuple[str, np.ndarray]], keyword: str) -> tuple[list[str], bytes]:
    lines = []
    parts = []
    offset = 0
    for name, array in entries:
        raw = np.ascontiguousarray(array, dtype=_DTYPE).tobytes()
        dims = ",".join(str(d) for d in array.shape)
        lines.append(f"{keyword} {_check_name(name)} float32 {dims} {offset}")
        parts.append(raw)
        offset += len(raw)
    return lines, b"".join(parts)


def save_checkpoint(bundle: CheckpointBundle, path) -> None:
    """Write the bundle; save -> load -> save is byte-identical."""
    model = bundle.model
    tensors = _named_model_tensors(model)
    if bundle.extractor_kernels is not None:
        for i, array in enumerate(bundle.extractor_kernels):
            tensors.append((f"fx.stage{i + 1}.kernel", array))
    cache = [
        (f"gram.{style}.{tap}", bundle.grams[style][tap])
        for style in sorted(bundle.grams)
        for tap in sorted(bundle.grams[style])
    ]
    tensor_lines, payload = _table_and_blob(tensors, "tensor")
    cache_lines, cache_blob = _table_and_blob(cache, "cache")
    for style in model.bank.style_names:
        _check_name(style)
    header = [
        CKPT_MAGIC,
        "config " + json.dumps(model.config.to_dict(), sort_keys=True, separators=(",", ":")),
        "extractor " + json.dumps(bundle.extractor_config.to_dict(), sort_keys=True, separators=(",", ":")),
        "styles " + json.dumps(list(model.bank.style_names), separators=(",", ":")),
        "channels " + json.dumps(list(model.bank.channels), separators=(",", ":")),
        *tensor_lines,
        f"payload {len(payload)}",
        *cache_lines,
        f"cachepayload {len(cache_blob)}",
        "data",
    ]
    Path(path).write_bytes("\n".join(header).encode() + b"\n" + payload + cache_blob)


def _split_container(raw: bytes, magic: str) -> tuple[list[str], bytes]:
    marker = b"\ndata\n"
    cut = raw.find(marker)
    if cut < 0:
        raise CheckpointError("corrupt manifest: no data marker")
    try:
        lines = raw[:cut].decode()
    except UnicodeDecodeError:
        raise CheckpointError("corrupt manifest: not utf-8 text") from None
    header = lines.split("\n")
    if not header or header[0] != magic:
        got = header[0] if header else ""
        if got.startswith(magic.rsplit(" ", 1)[0] + " "):
            raise CheckpointError(f"unsupported format version: {got!r}")
        raise CheckpointError(f"not a {magic.split(' ')[0]} file")
    return header[1:], raw[cut + len(marker):]


def _parse_entry(line: str, keyword: str) -> tuple[str, tuple[int, ...], int]:
    body = line[len(keyword) + 1:]
    try:
        name, dtype, dims, offset = body.rsplit(None, 3)
        if dtype != "float32":
            raise CheckpointError(f"unsupported dtype {dtype!r} for {name!r}")
        shape = tuple(int(d) for d in dims.split(","))
        return name, shape, int(offset)
    except ValueError:
        raise CheckpointError(f"corrupt manifest line: {line!r}") from None


def _read_block(blob: bytes, name: str, shape: tuple[int, ...], offset: int) -> np.ndarray:
    nbytes = int(np.prod(shape)) * _DTYPE.itemsize
    if offset + nbytes > len(blob):
        raise CheckpointError(f"truncated payload: tensor {name!r} is incomplete")
    flat = np.frombuffer(blob, dtype=_DTYPE, count=int(np.prod(shape)), offset=offset)
    return flat.reshape(shape).copy()


def _parse_header(header: list[str], json_keys: tuple[str, ...]):
    """Manifest -> (json fields, tensor entries, payload size, cache entries, cache size)."""
    fields = {}
    tensors: list[tuple[str, tuple[int, ...], int]] = []
    caches: list[tuple[str, tuple[int, ...], int]] = []
    payload_n = cache_n = None
    for line in header:
        if not line:
            continue
        key = line.split(" ", 1)[0]
        if key in json_keys:
            try:
                fields[key] = json.loads(line[len(key) + 1:])
            except json.JSONDecodeError:
                raise CheckpointError(f"corrupt manifest line: {line!r}") from None
        elif key == "tensor":
            tensors.append(_parse_entry(line, "tensor"))
        elif key == "cache":
            caches.append(_parse_entry(line, "cache"))
        elif key == "payload":
            payload_n = int(line.split(" ", 1)[1])
        elif key == "cachepayload":
            cache_n = int(line.split(" ", 1)[1])
        else:
            raise CheckpointError(f"corrupt manifest line: {line!r}")
    missing = [k for k in json_keys if k not in fields]
    if missing or payload_n is None or cache_n is None:
        raise CheckpointError(f"manifest missing keys: {missing or ['payload sizes']}")
    return fields, tensors, payload_n, caches, cache_n


def load_checkpoint(path) -> CheckpointBundle:
    """Rebuild a bundle; every model tensor must be present with exact shapes."""
    header, blob = _split_container(Path(path).read_bytes(), CKPT_MAGIC)
    fields, tensors, payload_n, caches, cache_n = _parse_header(
        header, ("config", "extractor", "styles", "channels")
    )
    if len(blob) < payload_n + cache_n:
        # Name the first tensor whose extent falls past the available bytes.
        avail_payload = min(len(blob), payload_n)
        avail_cache = len(blob) - payload_n
        for entries, avail in ((tensors, avail_payload), (caches, avail_cache)):
            for name, shape, offset in entries:
                if offset + int(np.prod(shape)) * _DTYPE.itemsize > avail:
                    raise CheckpointError(
                        f"truncated payload: tensor {name!r} is incomplete"
                    )
        raise CheckpointError("truncated payload")
    payload, cache_blob = blob[:payload_n], blob[payload_n:payload_n + cache_n]

    config = NetworkConfig.from_dict(fields["config"])
    extractor_config = ExtractorConfig.from_dict(fields["extractor"])
    styles = list(fields["styles"])
    model = build_network(config, styles, seed=0)
    if list(model.bank.channels) != list(fields["channels"]):
        raise CheckpointError(
            f"manifest channels {fields['channels']} do not match config-derived "
            f"channels {list(model.bank.channels)}"
        )

    expected = {name: array for name, array in _named_model_tensors(model)}
    seen = set()
    fx_kernels: dict[int, np.ndarray] = {}
    for name, shape, offset in tensors:
        block = _read_block(payload, name, shape, offset)
        if name.startswith("fx.stage") and name.endswith(".kernel"):
            fx_kernels[int(name[len("fx.stage"):-len(".kernel")])] = block
            continue
        if name not in expected:
            raise CheckpointError(f"unexpected tensor {name!r} in manifest")
        if name in seen:
            raise CheckpointError(f"tensor {name!r} appears twice")
        target = expected[name]
        if target.shape != shape:
            raise ArchitectureMismatchError(
                f"tensor {name!r} has shape {shape}, model wants {target.shape}"
            )
        target[...] = block
        seen.add(name)
    absent = sorted(set(expected) - seen)
    if absent:
        raise CheckpointError(f"manifest missing tensor {absent[0]!r}")

    grams: dict[str, dict[str, np.ndarray]] = {}
    for name, shape, offset in caches:
        if not name.startswith("gram."):
            raise CheckpointError(f"unexpected cache entry {name!r}")
        style, tap = name[len("gram."):].rsplit(".", 1)
        grams.setdefault(style, {})[tap] = _read_block(cache_blob, name, shape, offset)

    kernels = None
    if fx_kernels:
        kernels = [fx_kernels[i] for i in sorted(fx_kernels)]
    return CheckpointBundle(model, extractor_config, grams, kernels)


def export_style(model: ModelWeights, name: str, path) -> None:
    """Write one style's rows — the transmittable form of a learned style."""
    gamma_rows, beta_rows = model.bank.rows(name)  # raises UnknownStyleError
    entries = []
    for site, (g, b) in enumerate(zip(gamma_rows, beta_rows)):
        entries.append((f"style.{name}.{site}.gamma", g.data))
        entries.append((f"style.{name}.{site}.beta", b.data))
    tensor_lines, payload = _table_and_blob(entries, "tensor")
    header = [
        STYLE_MAGIC,
        "style " + json.dumps(name),
        "channels " + json.dumps(list(model.bank.channels), separators=(",", ":")),
        *tensor_lines,
        f"payload {len(payload)}",
        "cachepayload 0",
        "data",
    ]
    Path(path).write_bytes("\n".join(header).encode() + b"\n" + payload)


def import_style(model: ModelWeights, path, rename: str | None = None) -> str:
    """Append (or replace) a named row set from an exported style file."""
    header, blob = _split_container(Path(path).read_bytes(), STYLE_MAGIC)
    fields, tensors, payload_n, _, _ = _parse_header(header, ("style", "channels"))
    if len(blob) < payload_n:
        for name, shape, offset in tensors:
            if offset + int(np.prod(shape)) * _DTYPE.itemsize > len(blob):
                raise CheckpointError(f"truncated payload: tensor {name!r} is incomplete")
        raise CheckpointError("truncated payload")
    channels = list(fields["channels"])
    if channels != list(model.bank.channels):
        raise ArchitectureMismatchError(
            f"style file channels {channels} do not match model channels "
            f"{list(model.bank.channels)}"
        )
    stored_name = fields["style"]
    name = rename or stored_name
    n_sites = len(channels)
    rows: dict[tuple[int, str], np.ndarray] = {}
    prefix = f"style.{stored_name}."
    for tensor_name, shape, offset in tensors:
        if not tensor_name.startswith(prefix):
            raise CheckpointError(f"unexpected tensor {tensor_name!r} in style file")
        site_str, kind = tensor_name[len(prefix):].rsplit(".", 1)
        site = int(site_str)
        if kind not in ("gamma", "beta") or not 0 <= site < n_sites:
            raise CheckpointError(f"unexpected tensor {tensor_name!r} in style file")
        if shape != (channels[site],):
            raise ArchitectureMismatchError(
                f"tensor {tensor_name!r} has shape {shape}, site wants ({channels[site]},)"
            )
        rows[(site, kind)] = _read_block(blob, tensor_name, shape, offset)
    missing = [
        f"style.{stored_name}.{site}.{kind}"
        for site in range(n_sites)
        for kind in ("gamma", "beta")
        if (site, kind) not in rows
    ]
    if missing:
        raise CheckpointError(f"manifest missing tensor {missing[0]!r}")

    bank = model.bank
    if name not in bank.style_names:
        from .styles import add_style_row

        add_style_row(bank, name, seed=0)
    gamma_rows, beta_rows = bank.rows(name)
    for site in range(n_sites):
        gamma_rows[site].data[...] = rows[(site, "gamma")].astype(gamma_rows[site].data.dtype)
        beta_rows[site].data[...] = rows[(site, "beta")].astype(beta_rows[site].data.dtype)
    return name
