"""Building blocks shared by the autoencoders."""
from __future__ import annotations

import numpy as np

from ..nn import Tensor, max_pool3d, relu, reshape, upsample_nearest3d
from ..nn.module import Module
from ..nn.ops import sigmoid_np

GRID = 16
CHANNELS = (1, 8, 16, 32)
FLAT = CHANNELS[-1] * 2**3  # 16^3 -> 2^3 after three pools


def add_conv_encoder(m: Module, rng: np.random.Generator, prefix: str = "enc") -> None:
    for i in range(3):
        m.conv(f"{prefix}.c{i + 1}", CHANNELS[i], CHANNELS[i + 1], rng)


def conv_features(m: Module, x: Tensor, prefix: str = "enc") -> Tensor:
    """(B, 1, 16, 16, 16) occupancy -> (B, 256) flattened features."""
    h = x
    for i in range(3):
        h = max_pool3d(relu(m.conv3d(f"{prefix}.c{i + 1}", h)))
    return reshape(h, (x.shape[0], FLAT))


def add_conv_decoder(m: Module, n_in: int, rng: np.random.Generator, prefix: str = "dec") -> None:
    m.linear(f"{prefix}.fc", n_in, FLAT, rng)
    for i in range(3, 0, -1):
        m.conv(f"{prefix}.c{i}", CHANNELS[i], CHANNELS[i - 1], rng)


def init_output(m: Module, occupancy: float, prefix: str = "dec") -> None:
    """Start the decoder near the mean occupancy so sigmoid outputs are not saturated."""
    p = float(np.clip(occupancy, 1e-3, 1 - 1e-3))
    m._params[f"{prefix}.c1.w"].data *= 0.1
    m._params[f"{prefix}.c1.b"].data[:] = np.log(p / (1 - p))


def conv_decode(m: Module, z: Tensor, prefix: str = "dec") -> Tensor:
    """(B, n_in) latent -> (B, 1, 16, 16, 16) voxel logits."""
    h = relu(m.fc(f"{prefix}.fc", z))
    h = reshape(h, (z.shape[0], CHANNELS[-1], 2, 2, 2))
    for i in range(3, 0, -1):
        h = m.conv3d(f"{prefix}.c{i}", upsample_nearest3d(h))
        if i > 1:
            h = relu(h)
    return h


def as_batch(grids) -> Tensor:
    g = np.asarray(grids, dtype=np.float64)
    if g.ndim == 3:
        g = g[None]
    if g.shape[1:] != (GRID, GRID, GRID):
        raise ValueError(f"expected {GRID}^3 grids, got shape {g.shape[1:]}")
    return Tensor(g[:, None])


def voxel_accuracy(x, x_hat) -> float:
    """Percent of voxels that agree after thresholding both grids at 0.5."""
    x, x_hat = np.asarray(x), np.asarray(x_hat)
    if x.shape != x_hat.shape:
        raise ValueError(f"grid shapes differ: {x.shape} vs {x_hat.shape}")
    return 100.0 * float(np.mean((x > 0.5) == (x_hat > 0.5)))


def logits_to_grid(logits: np.ndarray) -> np.ndarray:
    return sigmoid_np(np.asarray(logits))


def tile(v: np.ndarray, batch: int) -> Tensor:
    return Tensor(np.broadcast_to(v, (batch,) + v.shape).copy())


def zscore_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    return mean, np.where(std > 1e-12, std, 1.0)


def check_vector(z, n: int, what: str) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != n:
        raise ValueError(f"{what} must have length {n}, got {z.shape[-1]}")
    return z
