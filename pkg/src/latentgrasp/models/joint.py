"""Joint autoencoder over z_GT = [z_T (32) | z_G (48)] -> z_C (48).

Everything inside the network runs on z-scored latents; the statistics are
buffers of the checkpoint. The layout of z_GT is fixed: slicing at 32 is the
only way target and gripper parts are separated, so no decoder output
position ever changes meaning.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from ..nn import Tensor, mse_loss, relu, take
from ..nn.module import Module
from ..nn.ops import add, mul, scale
from ..seeding import derive_seed
from ..voxels.dataset import LatentPair
from ..voxels.gripper import GripperSample, PreGrasp, jittered_pose
from ..voxels.shapes import TargetSample
from . import common
from .gripper import AE2, M_G, M_GEOM, pose_features
from .target import AE1, M_T
from .training import TrainConfig, batched, fit, split_indices

M_GT = M_T + M_G
M_C = 48
HIDDEN = 64


def concat_latents(z_t, z_g) -> np.ndarray:
    z_t = common.check_vector(z_t, M_T, "z_T")
    z_g = common.check_vector(z_g, M_G, "z_G")
    return np.concatenate([z_t, z_g], axis=-1)


def split_latents(z_gt) -> tuple[np.ndarray, np.ndarray]:
    z_gt = common.check_vector(z_gt, M_GT, "z_GT")
    return z_gt[..., :M_T], z_gt[..., M_T:]


class AE3(Module):
    def __init__(self, m_c: int = M_C, alpha: float = 0.5, beta: float = 1.0, seed: int = 0):
        super().__init__()
        if not (alpha > 0 and beta > 0):
            raise ValueError(f"loss weights must be positive, got alpha={alpha} beta={beta}")
        if m_c >= M_GT:
            raise ValueError(f"m_C={m_c} must be below {M_GT}")
        self.m_c = m_c
        rng = np.random.default_rng(seed)
        self.linear("enc.fc1", M_GT, HIDDEN, rng)
        self.linear("enc.fc2", HIDDEN, m_c, rng)
        self.linear("dec.fc1", m_c, HIDDEN, rng)
        self.linear("dec.fc2", HIDDEN, M_GT, rng)
        self._buffers.update(
            z_mean=np.zeros(M_GT), z_std=np.ones(M_GT), alpha=np.array(alpha), beta=np.array(beta),
            zc_std=np.ones(m_c), pose_std=np.ones(7),
        )

    @property
    def alpha(self) -> float:
        return float(self._buffers["alpha"])

    @property
    def beta(self) -> float:
        return float(self._buffers["beta"])

    def normalize(self, z_gt) -> np.ndarray:
        return (np.asarray(z_gt) - self._buffers["z_mean"]) / self._buffers["z_std"]

    def denormalize(self, zn) -> np.ndarray:
        return np.asarray(zn) * self._buffers["z_std"] + self._buffers["z_mean"]

    def encode_t(self, zn: Tensor) -> Tensor:
        return self.fc("enc.fc2", relu(self.fc("enc.fc1", zn)))

    def decode_t(self, zc: Tensor) -> Tensor:
        return self.fc("dec.fc2", relu(self.fc("dec.fc1", zc)))

    def encode(self, z_gt) -> np.ndarray:
        z = common.check_vector(z_gt, M_GT, "z_GT")
        out = self.encode_t(Tensor(np.atleast_2d(self.normalize(z)))).data
        return out[0] if z.ndim == 1 else out

    def decode(self, z_c) -> np.ndarray:
        z = common.check_vector(z_c, self.m_c, "z_C")
        out = self.denormalize(self.decode_t(Tensor(np.atleast_2d(z))).data)
        return out[0] if z.ndim == 1 else out

    def gripper_raw(self, zn_hat: Tensor) -> Tensor:
        """De-normalized z_G slice of a normalized reconstruction, kept on the graph."""
        b = zn_hat.shape[0]
        g = take(zn_hat, M_T, M_GT)
        return add(mul(g, common.tile(self._buffers["z_std"][M_T:], b)), common.tile(self._buffers["z_mean"][M_T:], b))


def ae3_loss(zn: Tensor, zn_hat: Tensor, pf: Tensor, pf_hat: Tensor, alpha: float, beta: float) -> Tensor:
    """L_recon + alpha (L_G + L_T) + beta L_pose.

    L_T and L_G are the squared errors of their slices divided by the full
    latent width, so L_recon == L_T + L_G holds exactly.
    """
    if not (np.isfinite(alpha) and np.isfinite(beta)) or alpha < 0 or beta < 0:
        raise ValueError(f"loss weights must be non-negative, got alpha={alpha} beta={beta}")
    recon = mse_loss(zn_hat, zn)
    l_t = scale(mse_loss(take(zn_hat, 0, M_T), take(zn, 0, M_T)), M_T / M_GT)
    l_g = scale(mse_loss(take(zn_hat, M_T, M_GT), take(zn, M_T, M_GT)), M_G / M_GT)
    out = recon + scale(l_g + l_t, alpha)
    if beta:
        out = out + scale(mse_loss(pf_hat, pf), beta)
    return out


def loss_parts(zn: Tensor, zn_hat: Tensor) -> tuple[float, float, float]:
    d = (zn_hat.data - zn.data) ** 2
    return float(d.mean()), float(d[:, :M_T].sum() / d.size), float(d[:, M_T:].sum() / d.size)


def latent_accuracy(zn, zn_hat, tol: float = 0.1) -> float:
    """Percent of elements within ``tol`` dataset standard deviations.

    Inputs are already z-scored, so the tolerance applies directly.
    """
    zn, zn_hat = np.asarray(zn), np.asarray(zn_hat)
    if zn.shape != zn_hat.shape:
        raise ValueError(f"latent shapes differ: {zn.shape} vs {zn_hat.shape}")
    return 100.0 * float(np.mean(np.abs(zn - zn_hat) <= tol))


def pair_loss(model: AE3, ae2: AE2, zn: Tensor, pf: Tensor) -> Tensor:
    zn_hat = model.decode_t(model.encode_t(zn))
    with ae2.frozen():
        pf_hat = ae2.pose_head(take(model.gripper_raw(zn_hat), M_GEOM, M_G))
    return ae3_loss(zn, zn_hat, pf, pf_hat, model.alpha, model.beta)


def build_latent_pairs(targets: Sequence[TargetSample], grippers: Sequence[GripperSample], ae1: AE1, ae2: AE2,
                       n_pairs: int, seed: int) -> list[LatentPair]:
    """Encode (target, gripper, pose) triples with the frozen encoders.

    The pose is a jittered pre-grasp for the pair's own target, so the joint
    latent sees gripper poses that make sense for the target beside them.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be positive")
    z_t = np.concatenate([
        ae1.encode(np.stack([t.grid for t in targets[sl]]), np.stack([t.props.vector() for t in targets[sl]]))
        for sl in batched(len(targets))
    ])
    f_g = np.concatenate([
        ae2.geometry_features(common.as_batch(np.stack([g.grid for g in grippers[sl]]))).data
        for sl in batched(len(grippers))
    ])
    refs: dict[int, PreGrasp] = {}
    rows = []
    for i in range(n_pairs):
        s = derive_seed(seed, "pair", i)
        rng = np.random.default_rng(s)
        j, k = int(rng.integers(len(targets))), int(rng.integers(len(grippers)))
        if j not in refs:
            refs[j] = PreGrasp.for_target(targets[j].grid)
        rows.append((j, k, s, jittered_pose(refs[j], rng).vector()))
    poses = np.stack([r[3] for r in rows])
    f_p = ae2.pose_code(Tensor(pose_features(poses))).data
    return [
        LatentPair(np.concatenate([z_t[j], f_g[k], f_p[i]]), poses[i], j, k, s)
        for i, (j, k, s, _) in enumerate(rows)
    ]


def evaluate(model: AE3, ae2: AE2, zn: np.ndarray, pf: np.ndarray) -> dict:
    n = len(zn)
    loss = recon = acc = 0.0
    for sl in batched(n, 512):
        zt, pt = Tensor(zn[sl]), Tensor(pf[sl])
        k = sl.stop - sl.start
        loss += pair_loss(model, ae2, zt, pt).item() * k
        zn_hat = model.decode_t(model.encode_t(zt)).data
        recon += float(np.mean((zn_hat - zn[sl]) ** 2)) * k
        acc += latent_accuracy(zn[sl], zn_hat) * k
    return {"val_loss": loss / n, "val_recon": recon / n, "val_latent_acc": acc / n}


def train_ae3(pairs: Sequence[LatentPair], ae2: AE2, cfg: TrainConfig, alpha: float = 0.5, beta: float = 1.0,
              metrics_path: str | Path | None = None, stop=None) -> tuple[AE3, list[dict]]:
    z = np.stack([p.z_gt for p in pairs])
    poses = np.stack([p.pose for p in pairs])
    tr, va = split_indices(len(pairs), cfg.seed)
    model = AE3(alpha=alpha, beta=beta, seed=cfg.seed)
    mean, std = common.zscore_stats(z[tr])
    model._buffers["z_mean"], model._buffers["z_std"] = mean, std
    model._buffers["pose_std"] = poses[tr].std(axis=0)
    zn = model.normalize(z)
    pf = pose_features(poses)

    def batch_loss(idx):
        return pair_loss(model, ae2, Tensor(zn[idx]), Tensor(pf[idx]))

    rows = fit(model, batch_loss, lambda: evaluate(model, ae2, zn[va], pf[va]), tr, cfg, metrics_path, stop)
    model._buffers["zc_std"] = common.zscore_stats(model.encode(z[tr]))[1]
    return model, rows
