"""Target autoencoder: occupancy grid + physical scalars <-> z_T."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from ..nn import Tensor, concat, mse_loss, relu, sigmoid
from ..nn.module import Module
from ..voxels.physics import PhysicalProperties
from ..voxels.shapes import TargetSample
from . import common
from .training import TrainConfig, batched, fit, split_indices

M_T = 32
N_PROPS = 5
_FLOOR = 1e-12


def props_features(props: np.ndarray) -> np.ndarray:
    """Mass and moments span decades, so they are modelled in log space; mu stays linear."""
    p = np.atleast_2d(np.asarray(props, dtype=np.float64))
    out = p.copy()
    out[:, :4] = np.log(np.maximum(p[:, :4], _FLOOR))
    return out


def features_to_props(f: np.ndarray) -> np.ndarray:
    f = np.atleast_2d(f).copy()
    f[:, :4] = np.exp(f[:, :4])
    return f


class AE1(Module):
    def __init__(self, m_t: int = M_T, seed: int = 0):
        super().__init__()
        self.m_t = m_t
        rng = np.random.default_rng(seed)
        common.add_conv_encoder(self, rng)
        self.linear("enc.fc", common.FLAT + N_PROPS, m_t, rng)
        common.add_conv_decoder(self, m_t, rng)
        self.linear("prop.fc1", m_t, 32, rng)
        self.linear("prop.fc2", 32, N_PROPS, rng)
        self._buffers["prop_mean"] = np.zeros(N_PROPS)
        self._buffers["prop_std"] = np.ones(N_PROPS)

    def fit_normalization(self, props: np.ndarray) -> None:
        mean, std = common.zscore_stats(props_features(props))
        self._buffers["prop_mean"], self._buffers["prop_std"] = mean, std

    def normalize(self, props: np.ndarray) -> np.ndarray:
        return (props_features(props) - self._buffers["prop_mean"]) / self._buffers["prop_std"]

    def denormalize(self, pn: np.ndarray) -> np.ndarray:
        return features_to_props(pn * self._buffers["prop_std"] + self._buffers["prop_mean"])

    # graph-level pieces, all batched
    def encode_t(self, x: Tensor, pn: Tensor) -> Tensor:
        return self.fc("enc.fc", concat(common.conv_features(self, x), pn))

    def decode_t(self, z: Tensor) -> tuple[Tensor, Tensor]:
        logits = common.conv_decode(self, z)
        pn = self.fc("prop.fc2", relu(self.fc("prop.fc1", z)))
        return logits, pn

    def loss_t(self, x: Tensor, pn: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        logits, pn_hat = self.decode_t(self.encode_t(x, pn))
        return ae1_loss(x, pn, sigmoid(logits), pn_hat), logits, pn_hat

    # numpy API
    def encode(self, grid, props) -> np.ndarray:
        x = common.as_batch(grid)
        pv = props.vector() if isinstance(props, PhysicalProperties) else np.asarray(props)
        pn = Tensor(self.normalize(pv))
        if pn.shape[0] != x.shape[0]:
            raise ValueError(f"{x.shape[0]} grids but {pn.shape[0]} property rows")
        z = self.encode_t(x, pn).data
        return z[0] if np.ndim(grid) == 3 else z

    def decode(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Voxel logits ``(16,16,16)`` and de-normalized property estimates ``(5,)``."""
        z = common.check_vector(z, self.m_t, "z_T")
        single = z.ndim == 1
        logits, pn = self.decode_t(Tensor(np.atleast_2d(z)))
        props = self.denormalize(pn.data)
        logits = logits.data[:, 0]
        return (logits[0], props[0]) if single else (logits, props)


def ae1_loss(x: Tensor, pn: Tensor, x_hat: Tensor, pn_hat: Tensor) -> Tensor:
    """Voxel MSE on post-sigmoid occupancies plus normalized property MSE (weight 1)."""
    return mse_loss(x_hat, x) + mse_loss(pn_hat, pn)


def voxel_accuracy(x, x_hat) -> float:
    return common.voxel_accuracy(x, x_hat)


def _arrays(samples: Sequence[TargetSample]) -> tuple[np.ndarray, np.ndarray]:
    grids = np.stack([s.grid for s in samples])
    props = np.stack([s.props.vector() for s in samples])
    return grids, props


def evaluate(model: AE1, grids: np.ndarray, props: np.ndarray) -> dict:
    loss = acc = rel = iou = 0.0
    n = len(grids)
    for sl in batched(n):
        x = Tensor(grids[sl][:, None])
        pn = Tensor(model.normalize(props[sl]))
        lt, logits, pn_hat = model.loss_t(x, pn)
        k = sl.stop - sl.start
        loss += lt.item() * k
        pred = logits.data[:, 0] > 0.0
        truth = grids[sl] > 0.5
        acc += 100.0 * np.mean(pred == truth, axis=(1, 2, 3)).sum()
        inter = (pred & truth).sum(axis=(1, 2, 3))
        union = np.maximum((pred | truth).sum(axis=(1, 2, 3)), 1)
        iou += (inter / union).sum()
        mass_hat = model.denormalize(pn_hat.data)[:, 0]
        rel += (np.abs(mass_hat - props[sl, 0]) / props[sl, 0]).sum()
    return {"val_loss": loss / n, "val_voxel_acc": acc / n, "val_prop_relerr": rel / n, "val_iou": iou / n}


def train_ae1(samples: Sequence[TargetSample], cfg: TrainConfig, metrics_path: str | Path | None = None,
              target_acc: float | None = None) -> tuple[AE1, list[dict]]:
    grids, props = _arrays(samples)
    tr, va = split_indices(len(samples), cfg.seed)
    model = AE1(seed=cfg.seed)
    model.fit_normalization(props[tr])
    common.init_output(model, grids[tr].mean())
    pn_all = model.normalize(props)

    def batch_loss(idx):
        return model.loss_t(Tensor(grids[idx][:, None]), Tensor(pn_all[idx]))[0]

    stop = (lambda row: row["val_voxel_acc"] >= target_acc) if target_acc else None
    rows = fit(model, batch_loss, lambda: evaluate(model, grids[va], props[va]), tr, cfg, metrics_path, stop)
    return model, rows
