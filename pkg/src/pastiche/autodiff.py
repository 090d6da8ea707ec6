"""Dense tensor engine with reverse-mode gradients.

Only the primitives the transfer network and its losses need are provided:
elementwise arithmetic, a handful of activations, reductions, 2-D matmul,
mirror padding, strided cross-correlation, nearest-neighbor upsampling and
basic indexing.  Operations compute eagerly on numpy arrays; while a
:class:`GradientTape` is active they additionally record a backward closure
per operation, and ``tape.backward(loss)`` replays the record in reverse to
accumulate gradients.

Precision is controlled globally: float32 by default, with a ``precision``
context manager used by the gradient-verification suite to run everything
in float64.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

_DEFAULT_DTYPE = np.dtype(np.float32)


def default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype


@contextmanager
def precision(dtype):
    """Temporarily switch the default element type ("float32"/"float64")."""
    previous = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


class Tensor:
    """Immutable-by-convention numpy array wrapper that can join a tape.

    ``requires_grad`` marks trainable leaves; outputs of recorded operations
    inherit it from their inputs.  Tensors hash by identity so they can key
    gradient maps.
    """

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _scalar_error(self)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad, dtype=self.data.dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # Arithmetic lifts plain numbers/arrays to constant tensors and follows
    # numpy broadcasting; the public add() below is the strict-shape variant.
    def __add__(self, other):
        return _add(self, _lift(other, self))

    def __radd__(self, other):
        return _add(_lift(other, self), self)

    def __sub__(self, other):
        return _sub(self, _lift(other, self))

    def __rsub__(self, other):
        return _sub(_lift(other, self), self)

    def __mul__(self, other):
        return _mul(self, _lift(other, self))

    def __rmul__(self, other):
        return _mul(_lift(other, self), self)

    def __truediv__(self, other):
        return _div(self, _lift(other, self))

    def __rtruediv__(self, other):
        return _div(_lift(other, self), self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __neg__(self):
        return _mul(self, _lift(-1.0, self))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def _scalar_error(t: Tensor):
    raise ShapeError(f"expected a scalar tensor, got shape {t.shape}")


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.data.dtype), dtype=like.data.dtype)


_ACTIVE_TAPE: "GradientTape | None" = None


class GradientTape:
    """Records operations in execution order for one backward pass.

    Single-writer: one training step owns one tape.  After ``backward`` the
    accumulated gradients are queryable through :meth:`grad`; tensors that
    were not reachable from the loss report an all-zero gradient.
    """

    def __init__(self):
        self._ops: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._grads: dict[Tensor, np.ndarray] | None = None

    def __enter__(self) -> "GradientTape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a GradientTape is already active")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Reverse-mode sweep from a scalar loss; returns the gradient map."""
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[Tensor, np.ndarray] = {loss: np.ones_like(loss.data)}
        # Execution order is a topological order, so one reverse sweep
        # accumulates every adjoint before it is consumed.
        for out, parents, backward_fn in reversed(self._ops):
            out_grad = grads.get(out)
            if out_grad is None:
                continue
            for parent, grad in zip(parents, backward_fn(out_grad)):
                if grad is None or not parent.requires_grad:
                    continue
                held = grads.get(parent)
                grads[parent] = grad if held is None else held + grad
        self._grads = grads
        return grads

    def grad(self, tensor: Tensor) -> np.ndarray:
        if self._grads is None:
            raise RuntimeError("backward() has not run on this tape")
        found = self._grads.get(tensor)
        return np.zeros_like(tensor.data) if found is None else found


def backward(loss: Tensor, tape: GradientTape) -> dict[Tensor, np.ndarray]:
    return tape.backward(loss)


def _emit(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires, dtype=data.dtype)
    if requires and _ACTIVE_TAPE is not None:
        _ACTIVE_TAPE._ops.append((out, parents, backward_fn))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise arithmetic


def _add(x: Tensor, y: Tensor) -> Tensor:
    data = x.data + y.data
    return _emit(data, (x, y), lambda g: (_unbroadcast(g, x.shape), _unbroadcast(g, y.shape)))


def _sub(x: Tensor, y: Tensor) -> Tensor:
    data = x.data - y.data
    return _emit(data, (x, y), lambda g: (_unbroadcast(g, x.shape), _unbroadcast(-g, y.shape)))


def _mul(x: Tensor, y: Tensor) -> Tensor:
    data = x.data * y.data
    xd, yd = x.data, y.data
    return _emit(
        data,
        (x, y),
        lambda g: (_unbroadcast(g * yd, x.shape), _unbroadcast(g * xd, y.shape)),
    )


def _div(x: Tensor, y: Tensor) -> Tensor:
    data = x.data / y.data
    xd, yd = x.data, y.data
    return _emit(
        data,
        (x, y),
        lambda g: (
            _unbroadcast(g / yd, x.shape),
            _unbroadcast(-g * xd / (yd * yd), y.shape),
        ),
    )


def add(x: Tensor, y: Tensor) -> Tensor:
    """Strict elementwise sum: operands must have identical shapes."""
    if x.shape != y.shape:
        raise ShapeError(f"add requires identical shapes, got {x.shape} and {y.shape}")
    return _add(x, y)


def power(x: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)
    data = x.data**exponent
    xd = x.data
    return _emit(data, (x,), lambda g: (g * exponent * xd ** (exponent - 1.0),))


def square(x: Tensor) -> Tensor:
    xd = x.data
    return _emit(xd * xd, (x,), lambda g: (g * (2.0 * xd),))


def sqrt(x: Tensor) -> Tensor:
    data = np.sqrt(x.data)
    return _emit(data, (x,), lambda g: (g * (0.5 / data),))


def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0)
    mask = x.data > 0
    return _emit(data, (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    data = np.empty_like(xd)
    pos = xd >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    data[~pos] = ex / (1.0 + ex)
    # Keep the codomain strictly open even where float rounding saturates.
    tiny = np.finfo(data.dtype).eps
    np.clip(data, tiny, 1.0 - tiny, out=data)
    return _emit(data, (x,), lambda g: (g * data * (1.0 - data),))


# ---------------------------------------------------------------------------
# reductions and shape ops


def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _emit(np.asarray(data), (x,), backward_fn)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.shape[a] for a in axes]))
    return tensor_sum(x, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    data = x.data.reshape(shape)
    return _emit(data, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {x.shape}")
    return _emit(np.ascontiguousarray(x.data.T), (x,), lambda g: (g.T,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects matrices, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _emit(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def getitem(x: Tensor, index) -> Tensor:
    data = x.data[index]

    def backward_fn(g):
        grad = np.zeros_like(x.data)
        grad[index] += g
        return (grad,)

    return _emit(np.asarray(data), (x,), backward_fn)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError("stack needs at least one tensor")
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward_fn(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _emit(data, tensors, backward_fn)


# ---------------------------------------------------------------------------
# spatial ops (rank-4: batch, channel, height, width)


def _require_rank4(x: Tensor, op: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{op} expects a (n, c, h, w) tensor, got shape {x.shape}")


def _reflect_indices(dim: int, pad: int) -> np.ndarray:
    # Reflection excludes the edge sample: index -1 maps to 1, index dim to dim-2.
    idx = np.arange(-pad, dim + pad)
    idx = np.abs(idx)
    return np.where(idx >= dim, 2 * (dim - 1) - idx, idx)


def mirror_pad(x: Tensor, pad: int) -> Tensor:
    """Reflect-pad both spatial axes by ``pad`` samples per side."""
    _require_rank4(x, "mirror_pad")
    pad = int(pad)
    if pad < 0:
        raise ShapeError(f"pad must be non-negative, got {pad}")
    if pad == 0:
        return _emit(x.data.copy(), (x,), lambda g: (g,))
    n, c, h, w = x.shape
    if pad >= h or pad >= w:
        raise ShapeError(f"pad {pad} must be smaller than spatial dims ({h}, {w})")
    rows = _reflect_indices(h, pad)
    cols = _reflect_indices(w, pad)
    data = x.data[:, :, rows[:, None], cols[None, :]]

    def backward_fn(g):
        grad = np.zeros_like(x.data)
        np.add.at(grad, (slice(None), slice(None), rows[:, None], cols[None, :]), g)
        return (grad,)

    return _emit(data, (x,), backward_fn)


def _correlate(padded: Tensor, kernel: Tensor, stride: int) -> Tensor:
    n, c, hp, wp = padded.shape
    out_c, in_c, kh, kw = kernel.shape
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    windows = sliding_window_view(padded.data, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # One GEMM per sample (batched matmul) so each sample's arithmetic is
    # independent of batch composition: a batch-of-N pass reproduces N
    # single passes exactly, not just approximately.
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n, oh * ow, c * kh * kw
    )
    kmat = kernel.data.reshape(out_c, -1)
    data = np.matmul(cols, kmat.T).reshape(n, oh, ow, out_c).transpose(0, 3, 1, 2)
    data = np.ascontiguousarray(data)

    def backward_fn(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n, oh * ow, out_c)
        grad_kernel = None
        if kernel.requires_grad:
            grad_kernel = np.tensordot(gmat, cols, axes=([0, 1], [0, 1])).reshape(
                out_c, in_c, kh, kw
            )
        grad_padded = None
        if padded.requires_grad:
            dwin = np.matmul(gmat, kmat).reshape(n, oh, ow, c, kh, kw)
            grad_padded = np.zeros_like(padded.data)
            for ki in range(kh):
                for kj in range(kw):
                    grad_padded[
                        :, :, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride
                    ] += dwin[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
        return (grad_padded, grad_kernel)

    return _emit(data, (padded, kernel), backward_fn)


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1) -> Tensor:
    """SAME cross-correlation: mirror-pad by floor(k/2), then stride.

    Output spatial dims are ceil(dim / stride).  Odd kernels only; that is
    what makes the two halves of the SAME contract consistent.
    """
    _require_rank4(x, "conv2d")
    if kernel.ndim != 4:
        raise ShapeError(f"kernel must be (out_c, in_c, kh, kw), got shape {kernel.shape}")
    out_c, in_c, kh, kw = kernel.shape
    if min(out_c, in_c, kh, kw) < 1:
        raise ShapeError(f"kernel has a zero-size dimension: {kernel.shape}")
    if in_c != x.shape[1]:
        raise ShapeError(f"kernel expects {in_c} input channels, tensor has {x.shape[1]}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"kernel dims must be odd for SAME padding, got {kh}x{kw}")
    stride = int(stride)
    if stride < 1:
        raise ShapeError(f"stride must be positive, got {stride}")
    if kh != kw:
        # Pad each axis independently: two mirror_pad calls would pad both,
        # so square kernels are the supported case (all network kernels are).
        raise ShapeError(f"only square kernels are supported, got {kh}x{kw}")
    padded = mirror_pad(x, kh // 2) if kh > 1 else x
    return _correlate(padded, kernel, stride)


def upsample_nn(x: Tensor, factor: int) -> Tensor:
    """Nearest-neighbor upsampling: each pixel becomes a factor x factor block."""
    _require_rank4(x, "upsample_nn")
    factor = int(factor)
    if factor < 1:
        raise ShapeError(f"factor must be positive, got {factor}")
    if factor == 1:
        return _emit(x.data.copy(), (x,), lambda g: (g,))
    n, c, h, w = x.shape
    data = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def backward_fn(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return _emit(data, (x,), backward_fn)
