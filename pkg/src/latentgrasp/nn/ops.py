"""Primitive layers and losses.

Spatial ops accept either an unbatched ``(C, D, H, W)`` tensor or a batched
``(N, C, D, H, W)`` one. Dense ops accept ``(n,)`` or ``(N, n)``.
"""
from __future__ import annotations

import numpy as np

from .tensor import Op, Tensor, apply

KERNEL = 3
PAD = 1


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


class _Add(Op):
    name = "add"

    def forward(self, a, b):
        _check_same_shape(a, b, "add")
        return a + b

    def backward(self, g):
        return g, g


class _Sub(Op):
    name = "sub"

    def forward(self, a, b):
        _check_same_shape(a, b, "sub")
        return a - b

    def backward(self, g):
        return g, -g


class _Mul(Op):
    name = "mul"

    def forward(self, a, b):
        _check_same_shape(a, b, "mul")
        self.a, self.b = a, b
        return a * b

    def backward(self, g):
        return g * self.b, g * self.a


class _Scale(Op):
    name = "scale"

    def __init__(self, c: float):
        self.c = c

    def forward(self, a):
        return a * self.c

    def backward(self, g):
        return (g * self.c,)


def add(a: Tensor, b: Tensor) -> Tensor:
    return apply(_Add(), a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return apply(_Sub(), a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return apply(_Mul(), a, b)


def scale(a: Tensor, c: float) -> Tensor:
    return apply(_Scale(c), a)


class _ReLU(Op):
    name = "relu"

    def forward(self, x):
        self.mask = x > 0  # subgradient 0 at exactly 0
        return np.where(self.mask, x, 0.0)

    def backward(self, g):
        return (g * self.mask,)


def relu(x: Tensor) -> Tensor:
    return apply(_ReLU(), x)


class _Sigmoid(Op):
    name = "sigmoid"

    def forward(self, x):
        # split by sign to avoid overflow in exp
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        e = np.exp(x[~pos])
        out[~pos] = e / (1.0 + e)
        self.out = out
        return out

    def backward(self, g):
        return (g * self.out * (1.0 - self.out),)


def sigmoid(x: Tensor) -> Tensor:
    return apply(_Sigmoid(), x)


def sigmoid_np(x: np.ndarray) -> np.ndarray:
    return _Sigmoid().forward(np.asarray(x, dtype=np.float64))


class _Linear(Op):
    name = "fully_connected"

    def forward(self, x, w, b):
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValueError(f"fully_connected: weights {w.shape} / bias {b.shape} disagree")
        if x.shape[-1] != w.shape[1]:
            raise ValueError(f"fully_connected: input width {x.shape[-1]} != weights n_in {w.shape[1]} (weights {w.shape})")
        if x.ndim not in (1, 2):
            raise ValueError(f"fully_connected: expected (n,) or (N, n) input, got {x.shape}")
        self.x, self.w = x, w
        return x @ w.T + b

    def backward(self, g):
        x, w = self.x, self.w
        if x.ndim == 1:
            return g @ w, np.outer(g, x), g
        return g @ w, g.T @ x, g.sum(axis=0)


def fully_connected(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    return apply(_Linear(), x, weights, bias)


def _batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 4:
        return x[None], True
    if x.ndim == 5:
        return x, False
    raise ValueError(f"expected (C,D,H,W) or (N,C,D,H,W), got {x.shape}")


def conv_output_size(n: int, stride: int) -> int:
    return (n + 2 * PAD - KERNEL) // stride + 1


def _im2col(xp: np.ndarray, s: int, out: tuple[int, int, int]) -> np.ndarray:
    """Padded (N, C, D, H, W) -> columns laid out (C*27, N*D'*H'*W')."""
    n, c = xp.shape[:2]
    do, ho, wo = out
    cols = np.empty((c, KERNEL**3, n, do, ho, wo))
    xt = xp.transpose(1, 0, 2, 3, 4)
    idx = 0
    for i in range(KERNEL):
        for j in range(KERNEL):
            for k in range(KERNEL):
                cols[:, idx] = xt[:, :, i:i + s * do:s, j:j + s * ho:s, k:k + s * wo:s]
                idx += 1
    return cols.reshape(c * KERNEL**3, n * do * ho * wo)


def _pad(x: np.ndarray) -> np.ndarray:
    return np.pad(x, ((0, 0), (0, 0), (PAD, PAD), (PAD, PAD), (PAD, PAD)))


def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None, s: int):
    n = x.shape[0]
    out = tuple(conv_output_size(d, s) for d in x.shape[2:])
    cols = _im2col(_pad(x), s, out)
    y = w.reshape(w.shape[0], -1) @ cols
    if b is not None:
        y += b[:, None]
    y = y.reshape(w.shape[0], n, *out).transpose(1, 0, 2, 3, 4)
    return np.ascontiguousarray(y), cols


class _Conv3d(Op):
    name = "conv3d"

    def __init__(self, stride: int):
        if stride < 1:
            raise ValueError(f"stride must be >= 1, got {stride}")
        self.stride = stride
        self.need_input_grad = True

    def forward(self, x, w, b):
        given = x.shape
        x, self.unbatched = _batched(x)
        n, c, d, h, wd = x.shape
        if w.ndim != 5 or w.shape[2:] != (KERNEL,) * 3:
            raise ValueError(f"conv3d: kernels must be (C_out, C_in, 3, 3, 3), got {w.shape}")
        if w.shape[1] != c:
            raise ValueError(f"conv3d: kernels {w.shape} expect C_in={w.shape[1]} but input {given} has C_in={c}")
        if b.shape != (w.shape[0],):
            raise ValueError(f"conv3d: bias {b.shape} does not match C_out={w.shape[0]}")
        if min(d, h, wd) < KERNEL:
            raise ValueError(f"conv3d: spatial dims must be >= 3, got {(d, h, wd)}")
        y, self.cols = _conv_forward(x, w, b, self.stride)
        self.w, self.xshape = w, x.shape
        return y[0] if self.unbatched else y

    def backward(self, g):
        if self.unbatched:
            g = g[None]
        co = g.shape[1]
        gm = g.transpose(1, 0, 2, 3, 4).reshape(co, -1)
        dw = (gm @ self.cols.T).reshape(self.w.shape)
        db = gm.sum(axis=1)
        if not self.need_input_grad:
            return None, dw, db
        if self.stride == 1:
            # input gradient is a convolution with flipped, channel-swapped kernels
            wf = np.ascontiguousarray(self.w[:, :, ::-1, ::-1, ::-1].transpose(1, 0, 2, 3, 4))
            dx, _ = _conv_forward(g, wf, None, 1)
        else:
            dx = self._scatter(gm)
        if self.unbatched:
            dx = dx[0]
        return dx, dw, db

    def _scatter(self, gm):
        n, c, d, h, w = self.xshape
        s = self.stride
        do, ho, wo = (conv_output_size(v, s) for v in (d, h, w))
        dcols = (self.w.reshape(self.w.shape[0], -1).T @ gm).reshape(c, KERNEL**3, n, do, ho, wo)
        dxp = np.zeros((c, n, d + 2 * PAD, h + 2 * PAD, w + 2 * PAD))
        idx = 0
        for i in range(KERNEL):
            for j in range(KERNEL):
                for k in range(KERNEL):
                    dxp[:, :, i:i + s * do:s, j:j + s * ho:s, k:k + s * wo:s] += dcols[:, idx]
                    idx += 1
        dx = dxp[:, :, PAD:-PAD, PAD:-PAD, PAD:-PAD].transpose(1, 0, 2, 3, 4)
        return np.ascontiguousarray(dx)


def conv3d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    """3x3x3 convolution with zero padding 1."""
    return apply(_Conv3d(stride), x, kernels, bias)


class _MaxPool3d(Op):
    name = "max_pool3d"

    def __init__(self, window: int):
        self.window = window

    def forward(self, x):
        x, self.unbatched = _batched(x)
        n, c, d, h, w = x.shape
        k = self.window
        if d % k or h % k or w % k:
            raise ValueError(f"max_pool3d: spatial dims {(d, h, w)} not divisible by window {k}")
        blocks = x.reshape(n, c, d // k, k, h // k, k, w // k, k)
        blocks = blocks.transpose(0, 1, 2, 4, 6, 3, 5, 7).reshape(n, c, d // k, h // k, w // k, k**3)
        # argmax returns the first maximum, i.e. the lowest linear index in the window
        self.arg = blocks.argmax(axis=-1)
        self.xshape = x.shape
        out = np.take_along_axis(blocks, self.arg[..., None], axis=-1)[..., 0]
        return out[0] if self.unbatched else out

    def backward(self, g):
        if self.unbatched:
            g = g[None]
        n, c, d, h, w = self.xshape
        k = self.window
        gb = np.zeros(g.shape + (k**3,))
        np.put_along_axis(gb, self.arg[..., None], g[..., None], axis=-1)
        gb = gb.reshape(n, c, d // k, h // k, w // k, k, k, k).transpose(0, 1, 2, 5, 3, 6, 4, 7)
        dx = gb.reshape(self.xshape)
        return (dx[0] if self.unbatched else dx,)


def max_pool3d(x: Tensor, window: int = 2, stride: int = 2) -> Tensor:
    if stride != window:
        raise ValueError("only non-overlapping pooling (stride == window) is supported")
    return apply(_MaxPool3d(window), x)


class _Upsample(Op):
    name = "upsample_nearest3d"

    def __init__(self, factor: int):
        self.f = factor

    def forward(self, x):
        x, self.unbatched = _batched(x)
        f = self.f
        out = x.repeat(f, axis=2).repeat(f, axis=3).repeat(f, axis=4)
        return out[0] if self.unbatched else out

    def backward(self, g):
        if self.unbatched:
            g = g[None]
        n, c, d, h, w = g.shape
        f = self.f
        dx = g.reshape(n, c, d // f, f, h // f, f, w // f, f).sum(axis=(3, 5, 7))
        return (dx[0] if self.unbatched else dx,)


def upsample_nearest3d(x: Tensor, factor: int = 2) -> Tensor:
    return apply(_Upsample(factor), x)


class _Reshape(Op):
    name = "reshape"

    def __init__(self, shape):
        self.shape = tuple(shape)

    def forward(self, x):
        self.xshape = x.shape
        return x.reshape(self.shape)

    def backward(self, g):
        return (g.reshape(self.xshape),)


def reshape(x: Tensor, shape) -> Tensor:
    return apply(_Reshape(shape), x)


class _Concat(Op):
    name = "concat"

    def forward(self, *xs):
        self.sizes = [x.shape[-1] for x in xs]
        return np.concatenate(xs, axis=-1)

    def backward(self, g):
        cuts = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(g, cuts, axis=-1))


def concat(*xs: Tensor) -> Tensor:
    """Concatenate along the last axis."""
    return apply(_Concat(), *xs)


class _Slice(Op):
    name = "slice"

    def __init__(self, start: int, stop: int):
        self.start, self.stop = start, stop

    def forward(self, x):
        self.xshape = x.shape
        return x[..., self.start:self.stop].copy()

    def backward(self, g):
        dx = np.zeros(self.xshape)
        dx[..., self.start:self.stop] = g
        return (dx,)


def take(x: Tensor, start: int, stop: int) -> Tensor:
    """Slice ``[start, stop)`` of the last axis."""
    return apply(_Slice(start, stop), x)


class _MSE(Op):
    name = "mse_loss"

    def forward(self, p, t):
        _check_same_shape(p, t, "mse_loss")
        self.diff = p - t
        return np.asarray(np.mean(self.diff**2))

    def backward(self, g):
        d = 2.0 * self.diff / self.diff.size * g
        return d, -d


def mse_loss(prediction: Tensor, target: Tensor) -> Tensor:
    """Mean (not sum) of squared differences."""
    return apply(_MSE(), prediction, target)


class _Sum(Op):
    name = "sum"

    def forward(self, x):
        self.xshape = x.shape
        return np.asarray(x.sum())

    def backward(self, g):
        return (np.full(self.xshape, float(g)),)


def total(x: Tensor) -> Tensor:
    return apply(_Sum(), x)
