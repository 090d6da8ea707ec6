"""Image files in and out, plus the evaluation preprocessing ops.

Supports 8-bit PNG (gray, RGB, RGBA; palette/16-bit/interlaced rejected) and
binary PPM (P6, maxval 255), both hand-rolled on zlib/struct so the package
carries no imaging dependency.  Images travel as (1, 3, h, w) tensors with
values in [0, 1]; grayscale broadcasts to 3 channels, alpha is dropped.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import ImageFormatError, ShapeError

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


# ---------------------------------------------------------------------------
# PNG


def _png_decode(blob: bytes) -> np.ndarray:
    if len(blob) < 8 or blob[:8] != _PNG_MAGIC:
        raise ImageFormatError("not a PNG file")
    pos = 8
    idat = bytearray()
    header = None
    while pos + 8 <= len(blob):
        length, ctype = struct.unpack(">I4s", blob[pos : pos + 8])
        body = blob[pos + 8 : pos + 8 + length]
        if len(body) != length:
            raise ImageFormatError("truncated PNG chunk")
        crc = struct.unpack(">I", blob[pos + 8 + length : pos + 12 + length])[0]
        if zlib.crc32(ctype + body) & 0xFFFFFFFF != crc:
            raise ImageFormatError(f"bad CRC in {ctype.decode('latin1')} chunk")
        pos += 12 + length
        if ctype == b"IHDR":
            header = struct.unpack(">IIBBBBB", body)
        elif ctype == b"IDAT":
            idat.extend(body)
        elif ctype == b"IEND":
            break
    if header is None:
        raise ImageFormatError("PNG missing IHDR")
    width, height, depth, color, compression, filt, interlace = header
    if depth != 8:
        raise ImageFormatError(f"unsupported PNG bit depth {depth} (only 8-bit)")
    if color not in (0, 2, 6):
        raise ImageFormatError(f"unsupported PNG color type {color}")
    if compression != 0 or filt != 0:
        raise ImageFormatError("unsupported PNG compression/filter method")
    if interlace != 0:
        raise ImageFormatError("interlaced PNG not supported")
    channels = {0: 1, 2: 3, 6: 4}[color]
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise ImageFormatError(f"corrupt PNG data: {exc}") from None
    stride = width * channels
    if len(raw) != height * (stride + 1):
        raise ImageFormatError("truncated PNG pixel data")
    out = np.empty((height, stride), dtype=np.uint8)
    raw = np.frombuffer(raw, dtype=np.uint8).reshape(height, stride + 1)
    for y in range(height):
        _unfilter_scanline(
            raw[y, 0], raw[y, 1:], out[y], out[y - 1] if y else None, channels
        )
    pixels = out.reshape(height, width, channels)
    if channels == 1:
        pixels = np.repeat(pixels, 3, axis=2)
    elif channels == 4:
        pixels = pixels[:, :, :3]
    return pixels


def _unfilter_scanline(ftype, line, recon, prev, bpp):
    if ftype == 0:
        recon[:] = line
    elif ftype == 1:  # Sub: per-lane running sum
        lanes = line.reshape(-1, bpp).astype(np.uint32)
        recon[:] = (lanes.cumsum(axis=0) & 0xFF).astype(np.uint8).reshape(-1)
    elif ftype == 2:  # Up
        up = prev if prev is not None else 0
        recon[:] = line + up
    elif ftype == 3:  # Average
        up = prev.astype(np.uint16) if prev is not None else np.zeros(len(line), np.uint16)
        for i in range(len(line)):
            left = recon[i - bpp] if i >= bpp else 0
            recon[i] = (int(line[i]) + ((int(left) + int(up[i])) >> 1)) & 0xFF
    elif ftype == 4:  # Paeth
        up = prev.astype(np.int32) if prev is not None else np.zeros(len(line), np.int32)
        for i in range(len(line)):
            a = int(recon[i - bpp]) if i >= bpp else 0
            b = int(up[i])
            c = int(prev[i - bpp]) if (prev is not None and i >= bpp) else 0
            p = a + b - c
            pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
            pred = a if (pa <= pb and pa <= pc) else (b if pb <= pc else c)
            recon[i] = (int(line[i]) + pred) & 0xFF
    else:
        raise ImageFormatError(f"unknown PNG filter type {ftype}")


def _png_chunk(ctype: bytes, body: bytes) -> bytes:
    return (
        struct.pack(">I", len(body))
        + ctype
        + body
        + struct.pack(">I", zlib.crc32(ctype + body) & 0xFFFFFFFF)
    )


def _png_encode(pixels: np.ndarray) -> bytes:
    height, width, _ = pixels.shape
    ihdr = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    scanlines = np.concatenate(
        [np.zeros((height, 1), dtype=np.uint8), pixels.reshape(height, width * 3)], axis=1
    )
    return (
        _PNG_MAGIC
        + _png_chunk(b"IHDR", ihdr)
        + _png_chunk(b"IDAT", zlib.compress(scanlines.tobytes(), 6))
        + _png_chunk(b"IEND", b"")
    )


# ---------------------------------------------------------------------------
# PPM (P6)


def _ppm_decode(blob: bytes) -> np.ndarray:
    if not blob.startswith(b"P6"):
        raise ImageFormatError("not a P6 PPM file")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PPM header")
        fields.append(blob[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError:
        raise ImageFormatError("malformed PPM header") from None
    if maxval != 255:
        raise ImageFormatError(f"unsupported PPM maxval {maxval} (only 255)")
    data = blob[pos : pos + width * height * 3]
    if len(data) != width * height * 3:
        raise ImageFormatError("truncated PPM pixel data")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)


def _ppm_encode(pixels: np.ndarray) -> bytes:
    height, width, _ = pixels.shape
    return b"P6\n%d %d\n255\n" % (width, height) + pixels.tobytes()


# ---------------------------------------------------------------------------
# public API


def _to_hwc_uint8(image) -> np.ndarray:
    arr = image.data if isinstance(image, Tensor) else np.asarray(image)
    if arr.ndim == 4:
        if arr.shape[0] != 1:
            raise ShapeError(f"save_image wants a single image, got batch {arr.shape[0]}")
        arr = arr[0]
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ShapeError(f"save_image wants (3, h, w) values, got {arr.shape}")
    quantized = np.clip(np.rint(arr.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)
    return quantized.transpose(1, 2, 0)


def _from_hwc_uint8(pixels: np.ndarray) -> Tensor:
    values = pixels.astype(np.float32) / 255.0
    return Tensor(values.transpose(2, 0, 1)[None, :, :, :])


def decode_image(blob: bytes) -> Tensor:
    """Decode PNG or P6 PPM bytes to a (1, 3, h, w) tensor in [0, 1]."""
    if blob[:8] == _PNG_MAGIC:
        return _from_hwc_uint8(_png_decode(blob))
    if blob[:2] == b"P6":
        return _from_hwc_uint8(_ppm_decode(blob))
    raise ImageFormatError("unsupported image format (PNG or P6 PPM only)")


def encode_png(image) -> bytes:
    return _png_encode(_to_hwc_uint8(image))


def load_image(path) -> Tensor:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from None
    return decode_image(blob)


def save_image(image, path) -> None:
    path = Path(path)
    pixels = _to_hwc_uint8(image)
    if path.suffix.lower() == ".ppm":
        path.write_bytes(_ppm_encode(pixels))
    else:
        path.write_bytes(_png_encode(pixels))


def resize_smaller_side(image: Tensor, target: int) -> Tensor:
    """Bilinear resize so min(h, w) == target, preserving aspect ratio."""
    if target < 1:
        raise ShapeError(f"target must be >= 1, got {target}")
    arr = image.data
    h, w = arr.shape[2], arr.shape[3]
    if min(h, w) == target:
        return image
    scale = target / min(h, w)
    # Smaller side lands exactly on target; the other rounds, ties upward.
    new_h = target if h <= w else int(np.floor(h * scale + 0.5))
    new_w = target if w < h else int(np.floor(w * scale + 0.5))
    return Tensor(_bilinear(arr, new_h, new_w))


def _bilinear(arr: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    n, c, h, w = arr.shape
    ys = np.clip((np.arange(new_h) + 0.5) * (h / new_h) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(new_w) + 0.5) * (w / new_w) - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).astype(arr.dtype)[:, None]
    wx = (xs - x0).astype(arr.dtype)[None, :]
    top = arr[:, :, y0][:, :, :, x0] * (1 - wx) + arr[:, :, y0][:, :, :, x1] * wx
    bottom = arr[:, :, y1][:, :, :, x0] * (1 - wx) + arr[:, :, y1][:, :, :, x1] * wx
    return top * (1 - wy) + bottom * wy


def center_crop(image: Tensor, size: int) -> Tensor:
    """Centered square crop; odd remainders bias toward the upper-left."""
    arr = image.data
    h, w = arr.shape[2], arr.shape[3]
    if size > h or size > w:
        raise ShapeError(f"crop {size} exceeds image dims {h}x{w}")
    top = (h - size) // 2
    left = (w - size) // 2
    return Tensor(arr[:, :, top : top + size, left : left + size].copy())
