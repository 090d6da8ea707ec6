"""Independent numerical oracles used across the test suite.

Gradient checks run the function under test in float64 and compare the
tape's gradient against central finite differences computed here, without
touching the reverse-mode machinery.
"""

import numpy as np

from pastiche import autodiff as ad


def finite_difference(fn, arrays, wrt, h=1e-5):
    """Central-difference gradient of ``fn`` w.r.t. ``arrays[wrt]``.

    ``fn`` maps a list of float64 numpy arrays to a scalar float.  Each
    coordinate is perturbed by +/- h.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    target = arrays[wrt]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = fn(arrays)
        flat[i] = keep - h
        down = fn(arrays)
        flat[i] = keep
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def check_gradients(build, arrays, rtol=1e-4, atol=1e-6, h=1e-5):
    """Compare tape gradients of ``build`` against finite differences.

    ``build`` takes a list of Tensors and returns a scalar Tensor.  Runs in
    float64 so the comparison is limited by truncation error, not rounding.
    """
    with ad.precision("float64"):
        tensors = [ad.Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
        with ad.GradientTape() as tape:
            loss = build(tensors)
        tape.backward(loss)
        analytic = [tape.grad(t) for t in tensors]

        def as_scalar(inputs):
            for t, a in zip(tensors, inputs):
                t.data = np.asarray(a, dtype=np.float64)
            out = float(build(tensors).data)
            for t, a in zip(tensors, arrays):
                t.data = np.asarray(a, dtype=np.float64)
            return out

        for i in range(len(arrays)):
            numeric = finite_difference(as_scalar, arrays, i, h=h)
            np.testing.assert_allclose(
                analytic[i],
                numeric,
                rtol=rtol,
                atol=atol,
                err_msg=f"gradient mismatch for input {i}",
            )
    return analytic


def check_gradient_coords(build, tensor, coords, rtol=1e-3, atol=1e-8, h=1e-5):
    """Spot-check tape gradients of ``build`` at chosen flat coordinates.

    For functions too large to difference exhaustively.  ``build`` takes no
    arguments, reads ``tensor`` (already float64), and returns a scalar
    Tensor; ``coords`` are flat indices into it.  Perturbs the live array.
    """
    coords = list(coords)
    with ad.GradientTape() as tape:
        loss = build()
    tape.backward(loss)
    analytic = tape.grad(tensor).reshape(-1)[coords]
    flat = tensor.data.reshape(-1)
    numeric = []
    for idx in coords:
        keep = flat[idx]
        flat[idx] = keep + h
        up = float(build().data)
        flat[idx] = keep - h
        down = float(build().data)
        flat[idx] = keep
        numeric.append((up - down) / (2.0 * h))
    np.testing.assert_allclose(analytic, np.array(numeric), rtol=rtol, atol=atol)
    return analytic
