"""Differentiable ops over :class:`Tensor`.

Each op computes its forward value with numpy and registers an exact
backward rule on every active :class:`GradientTape`. Ops with a
non-differentiable point (``relu``, ``reduce_max_rows``) also report their
branch decisions to an optional recorder, which ``grad_check`` uses to flag
finite differences that straddle a kink.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from functools import lru_cache
from typing import Sequence

import numpy as np

from .tensor import Tensor, record

BN_EPS = 1e-5
NORM_FLOOR = 1e-12


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


# ---------------------------------------------------------------------------
# branch recording (for grad_check kink detection)

_branch = threading.local()


@contextmanager
def record_branches():
    """Collect a byte signature of every piecewise-linear branch taken."""
    log: list[bytes] = []
    prev = getattr(_branch, "log", None)
    _branch.log = log
    try:
        yield log
    finally:
        _branch.log = prev


def _note_branch(sig: np.ndarray) -> None:
    log = getattr(_branch, "log", None)
    if log is not None:
        log.append(np.ascontiguousarray(sig).tobytes())


# ---------------------------------------------------------------------------
# helpers


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _out(arr: np.ndarray, inputs: tuple[Tensor, ...], backward) -> Tensor:
    return record(Tensor._wrap(arr), inputs, backward)


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        val = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}") from exc
    return _out(val, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        val = a.data - b.data
    except ValueError as exc:
        raise ShapeError(f"cannot subtract shapes {a.shape} and {b.shape}") from exc
    return _out(val, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        val = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}") from exc
    return _out(
        val,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(t: Tensor, c: float) -> Tensor:
    c = float(c)
    return _out(t.data * c, (t,), lambda g: (g * c,))


def add_scalar(t: Tensor, c: float) -> Tensor:
    c = float(c)
    return _out(t.data + c, (t,), lambda g: (g,))


def square(t: Tensor) -> Tensor:
    return _out(t.data * t.data, (t,), lambda g: (2.0 * g * t.data,))


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def _sigmoid_fwd(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _sigmoid_deriv(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return y * (1.0 - y)


def _relu_fwd(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _relu_deriv(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (x > 0).astype(np.float64)


# name -> (forward, derivative(x, y)); looked up at call time
ELEMENTWISE = {
    "sigmoid": (_sigmoid_fwd, _sigmoid_deriv),
    "relu": (_relu_fwd, _relu_deriv),
}


def elementwise(t: Tensor, fn: str, arg: float | None = None) -> Tensor:
    """Apply a registered primitive entrywise: sigmoid, relu, scale or add."""
    if fn == "scale":
        return scale(t, 1.0 if arg is None else arg)
    if fn == "add":
        return add_scalar(t, 0.0 if arg is None else arg)
    try:
        fwd, _ = ELEMENTWISE[fn]
    except KeyError:
        raise ValueError(f"unknown elementwise primitive {fn!r}") from None
    x = t.data
    y = fwd(x)
    if fn == "relu":
        _note_branch(x > 0)

    def backward(g):
        return (g * ELEMENTWISE[fn][1](x, y),)

    return _out(y, (t,), backward)


def sigmoid(t: Tensor) -> Tensor:
    return elementwise(t, "sigmoid")


def relu(t: Tensor) -> Tensor:
    return elementwise(t, "relu")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` over the last two axes; leading axes broadcast as batch dims."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    try:
        val = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}") from exc

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _out(val, (a, b), backward)


def transpose_last(t: Tensor) -> Tensor:
    if t.ndim < 2:
        raise ShapeError(f"need at least 2 dims to transpose, got {t.shape}")
    return _out(np.swapaxes(t.data, -1, -2), (t,), lambda g: (np.swapaxes(g, -1, -2),))


def reshape(t: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        val = t.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {t.shape} to {tuple(shape)}") from exc
    return _out(val, (t,), lambda g: (g.reshape(t.shape),))


def concat(ts: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = tuple(ts)
    val = np.concatenate([t.data for t in ts], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _out(val, ts, backward)


def slice_axis0(t: Tensor, start: int, stop: int) -> Tensor:
    val = t.data[start:stop]

    def backward(g):
        full = np.zeros_like(t.data)
        full[start:stop] = g
        return (full,)

    return _out(val, (t,), backward)


# ---------------------------------------------------------------------------
# reductions


def sum_all(t: Tensor) -> Tensor:
    return _out(np.array(t.data.sum()), (t,), lambda g: (np.broadcast_to(g, t.shape),))


def mean_all(t: Tensor) -> Tensor:
    n = t.size
    return _out(np.array(t.data.mean()), (t,), lambda g: (np.broadcast_to(g / n, t.shape),))


def sum_axis(t: Tensor, axis: int | tuple[int, ...], keepdims: bool = False) -> Tensor:
    val = t.data.sum(axis=axis, keepdims=keepdims)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(a % t.ndim for a in axes)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, t.shape),)

    return _out(val, (t,), backward)


def mean_axis(t: Tensor, axis: int | tuple[int, ...], keepdims: bool = False) -> Tensor:
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    n = int(np.prod([t.shape[a] for a in axes]))
    return scale(sum_axis(t, axis, keepdims), 1.0 / n)


def reduce_max_rows(a: Tensor) -> tuple[Tensor, np.ndarray]:
    """Max over the last axis with lowest-index tie-breaking.

    The gradient of each row maximum is routed entirely to its argmax entry.
    """
    if a.ndim < 2:
        raise ShapeError(f"reduce_max_rows needs a >=2-D tensor, got {a.shape}")
    idx = np.argmax(a.data, axis=-1)  # numpy returns the first maximal index
    vals = np.take_along_axis(a.data, idx[..., None], axis=-1)[..., 0]
    _note_branch(idx.astype(np.int64))

    def backward(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, idx[..., None], g[..., None], axis=-1)
        return (full,)

    return _out(vals, (a,), backward), idx


# ---------------------------------------------------------------------------
# resampling


@lru_cache(maxsize=256)
def interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear interpolation operator (n_out x n_in), half-pixel centers, edge clamp."""
    if n_in < 1 or n_out < 1:
        raise ValueError(f"resize dims must be >= 1, got {n_in} -> {n_out}")
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - frac)
    np.add.at(m, (rows, i1), frac)
    m.flags.writeable = False
    return m


def bilinear_resize(t: Tensor, out_h: int, out_w: int) -> Tensor:
    """Resize the last two axes (H, W) to (out_h, out_w)."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output dims must be >= 1, got {out_h}x{out_w}")
    if t.ndim < 2:
        raise ShapeError(f"bilinear_resize needs a >=2-D tensor, got {t.shape}")
    ry = interp_matrix(t.shape[-2], out_h)
    rx = interp_matrix(t.shape[-1], out_w)
    val = ry @ t.data @ rx.T

    def backward(g):
        return (ry.T @ g @ rx,)

    return _out(val, (t,), backward)


# ---------------------------------------------------------------------------
# network layers


def conv1x1(t: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Per-pixel affine map over the trailing channel axis: ``t @ w + b``."""
    if w.ndim != 2 or t.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(
            f"conv1x1 shape mismatch: input {t.shape}, weight {w.shape}, bias {b.shape}"
        )
    lead = t.shape[:-1]
    flat = t.data.reshape(-1, t.shape[-1])
    val = (flat @ w.data + b.data).reshape(*lead, w.shape[1])

    def backward(g):
        g2 = g.reshape(-1, w.shape[1])
        gx = (g2 @ w.data.T).reshape(t.shape)
        gw = flat.T @ g2
        gb = g2.sum(axis=0)
        return gx, gw, gb

    return _out(val, (t, w, b), backward)


dense = conv1x1


def conv3x3_s2(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """3x3 convolution, stride 2, zero padding 1, NHWC layout.

    ``w`` has shape (3, 3, Cin, Cout); output spatial dims are ceil(H/2), ceil(W/2).
    """
    if x.ndim != 4 or w.shape[:3] != (3, 3, x.shape[3]) or b.shape != (w.shape[3],):
        raise ShapeError(f"conv3x3 shape mismatch: input {x.shape}, weight {w.shape}, bias {b.shape}")
    n, h, wd, cin = x.shape
    cout = w.shape[3]
    ho, wo = (h + 1) // 2, (wd + 1) // 2
    xp = np.zeros((n, h + 2, wd + 2, cin))
    xp[:, 1 : h + 1, 1 : wd + 1] = x.data
    cols = np.empty((n, ho, wo, 9, cin))
    for di in range(3):
        for dj in range(3):
            cols[:, :, :, di * 3 + dj] = xp[:, di : di + 2 * ho : 2, dj : dj + 2 * wo : 2]
    cols = cols.reshape(n * ho * wo, 9 * cin)
    wm = w.data.reshape(9 * cin, cout)
    val = (cols @ wm + b.data).reshape(n, ho, wo, cout)

    def backward(g):
        g2 = g.reshape(-1, cout)
        gw = (cols.T @ g2).reshape(w.shape)
        gb = g2.sum(axis=0)
        gcols = (g2 @ wm.T).reshape(n, ho, wo, 9, cin)
        gxp = np.zeros_like(xp)
        for di in range(3):
            for dj in range(3):
                gxp[:, di : di + 2 * ho : 2, dj : dj + 2 * wo : 2] += gcols[:, :, :, di * 3 + dj]
        return gxp[:, 1 : h + 1, 1 : wd + 1], gw, gb

    return _out(val, (x, w, b), backward)


def batchnorm(t: Tensor, gamma: Tensor, beta: Tensor, eps: float = BN_EPS) -> Tensor:
    """Training-mode batch normalization of an (N, F) tensor."""
    if t.ndim != 2 or gamma.shape != (t.shape[1],) or beta.shape != (t.shape[1],):
        raise ShapeError(f"batchnorm shape mismatch: input {t.shape}, gamma {gamma.shape}, beta {beta.shape}")
    n = t.shape[0]
    if n < 2:
        raise ValueError("batchnorm in training mode needs at least 2 rows")
    x = t.data
    mu = x.mean(axis=0)
    xc = x - mu
    var = (xc * xc).mean(axis=0)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    val = gamma.data * xhat + beta.data

    def backward(g):
        dxhat = g * gamma.data
        gx = (inv_std / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        return gx, (g * xhat).sum(axis=0), g.sum(axis=0)

    return _out(val, (t, gamma, beta), backward)


def l2_normalize(t: Tensor) -> Tensor:
    """Normalize along the last axis; rejects vectors with norm below 1e-12."""
    x = t.data
    norm = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    if np.any(norm < NORM_FLOOR):
        raise ValueError("cannot normalize a zero-norm vector")
    y = x / norm

    def backward(g):
        return ((g - y * (g * y).sum(axis=-1, keepdims=True)) / norm,)

    return _out(y, (t,), backward)
