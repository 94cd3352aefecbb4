"""Gripper autoencoder: fingertip grid through a conv path, pose through a
separate dense path; z_G = [F_G (40) | F_p (8)]."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from ..nn import Tensor, concat, mse_loss, relu, sigmoid, take
from ..nn.module import Module
from ..voxels import pose as quat
from ..voxels.gripper import GripperSample
from ..voxels.physics import CUBE_EDGE, VOXEL_EDGE
from ..voxels.pose import QUAT_TOL, Pose
from . import common
from .training import TrainConfig, batched, fit, split_indices

M_GEOM = 40
M_POSE = 8
M_G = M_GEOM + M_POSE
POS_TOL_VOXELS = 1.0
ANGLE_TOL_DEG = 10.0


def pose_features(poses: np.ndarray) -> np.ndarray:
    """Rows ``[r (m), q]`` -> network inputs: position over the grid extent, quaternion raw."""
    p = np.atleast_2d(np.asarray(poses, dtype=np.float64)).copy()
    p[:, :3] /= CUBE_EDGE
    return p


def features_to_pose(f: np.ndarray) -> np.ndarray:
    f = np.atleast_2d(np.asarray(f, dtype=np.float64)).copy()
    f[:, :3] *= CUBE_EDGE
    for row in f:
        q = row[3:]
        row[3:] = quat.normalize(q) if np.linalg.norm(q) > 1e-12 else [1.0, 0.0, 0.0, 0.0]
    return f


class AE2(Module):
    def __init__(self, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        common.add_conv_encoder(self, rng)
        self.linear("enc.fc", common.FLAT, M_GEOM, rng)
        self.linear("pose_enc.fc1", 7, 16, rng)
        self.linear("pose_enc.fc2", 16, M_POSE, rng)
        common.add_conv_decoder(self, M_GEOM, rng)
        self.linear("pose_dec.fc1", M_POSE, 16, rng)
        self.linear("pose_dec.fc2", 16, 7, rng)

    def geometry_features(self, x: Tensor) -> Tensor:
        return self.fc("enc.fc", common.conv_features(self, x))

    def pose_code(self, pf: Tensor) -> Tensor:
        return self.fc("pose_enc.fc2", relu(self.fc("pose_enc.fc1", pf)))

    def encode_t(self, x: Tensor, pf: Tensor) -> Tensor:
        return concat(self.geometry_features(x), self.pose_code(pf))

    def pose_head(self, f_p: Tensor) -> Tensor:
        """F_p -> normalized pose features (quaternion not yet renormalized)."""
        return self.fc("pose_dec.fc2", relu(self.fc("pose_dec.fc1", f_p)))

    def decode_t(self, z: Tensor) -> tuple[Tensor, Tensor]:
        logits = common.conv_decode(self, take(z, 0, M_GEOM))
        return logits, self.pose_head(take(z, M_GEOM, M_G))

    def loss_t(self, x: Tensor, pf: Tensor):
        logits, pf_hat = self.decode_t(self.encode_t(x, pf))
        return ae2_loss(x, pf, sigmoid(logits), pf_hat), logits, pf_hat

    # numpy API
    def encode(self, grid, pose) -> np.ndarray:
        poses = [pose] if isinstance(pose, Pose) else list(pose)
        for p in poses:
            if abs(np.linalg.norm(p.q) - 1.0) > QUAT_TOL:
                raise ValueError("pose quaternion is not normalized")
        x = common.as_batch(grid)
        pf = Tensor(pose_features(np.stack([p.vector() for p in poses])))
        if pf.shape[0] != x.shape[0]:
            raise ValueError(f"{x.shape[0]} grids but {pf.shape[0]} poses")
        z = self.encode_t(x, pf).data
        return z[0] if np.ndim(grid) == 3 else z

    def decode_pose(self, z) -> np.ndarray:
        """Pose rows ``[r, q]`` from z_G (or from F_p alone); q renormalized."""
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        f_p = z[:, M_GEOM:] if z.shape[1] == M_G else common.check_vector(z, M_POSE, "F_p")
        return features_to_pose(self.pose_head(Tensor(f_p)).data)

    def decode(self, z) -> tuple[np.ndarray, Pose]:
        z = common.check_vector(z, M_G, "z_G")
        if z.ndim != 1:
            raise ValueError("decode takes a single latent; use decode_t for batches")
        logits, _ = self.decode_t(Tensor(z[None]))
        return logits.data[0, 0], Pose.from_vector(self.decode_pose(z)[0])


def ae2_loss(x: Tensor, pf: Tensor, x_hat: Tensor, pf_hat: Tensor) -> Tensor:
    return mse_loss(x_hat, x) + mse_loss(pf_hat, pf)


def pose_errors(p: np.ndarray, p_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Position error in voxels and geodesic angle in degrees, per row."""
    p, p_hat = np.atleast_2d(p), np.atleast_2d(p_hat)
    pos = np.linalg.norm(p[:, :3] - p_hat[:, :3], axis=1) / VOXEL_EDGE
    ang = np.degrees([quat.angle_between(a[3:], b[3:]) for a, b in zip(p, p_hat)])
    return pos, np.asarray(ang)


def combined_accuracy(geom_acc: float, within_tol: float) -> float:
    """Equal-weight mean of geometry voxel accuracy and pose within-tolerance rate (both %)."""
    return 0.5 * geom_acc + 0.5 * within_tol


def evaluate(model: AE2, grids: np.ndarray, poses: np.ndarray) -> dict:
    n = len(grids)
    loss = acc = pose_mse = 0.0
    pos_all, ang_all = [], []
    for sl in batched(n):
        x = Tensor(grids[sl][:, None])
        pf = Tensor(pose_features(poses[sl]))
        lt, logits, pf_hat = model.loss_t(x, pf)
        loss += lt.item() * (sl.stop - sl.start)
        pose_mse += float(np.mean((pf_hat.data - pf.data) ** 2, axis=1).sum())
        acc += 100.0 * np.mean((logits.data[:, 0] > 0.0) == (grids[sl] > 0.5), axis=(1, 2, 3)).sum()
        pos, ang = pose_errors(poses[sl], features_to_pose(pf_hat.data))
        pos_all.append(pos)
        ang_all.append(ang)
    pos, ang = np.concatenate(pos_all), np.concatenate(ang_all)
    within = 100.0 * np.mean((pos <= POS_TOL_VOXELS) & (ang <= ANGLE_TOL_DEG))
    geom = acc / n
    return {
        "val_loss": loss / n,
        "val_voxel_acc": geom,
        "val_pose_mse": pose_mse / n,
        "val_pose_pos_err_voxels": float(pos.mean()),
        "val_pose_quat_angle_deg": float(ang.mean()),
        "val_pose_within_tol": float(within),
        "val_combined_acc": combined_accuracy(geom, within),
    }


def train_ae2(samples: Sequence[GripperSample], cfg: TrainConfig, metrics_path: str | Path | None = None,
              stop=None) -> tuple[AE2, list[dict]]:
    grids = np.stack([s.grid for s in samples])
    poses = np.stack([s.pose.vector() for s in samples])
    pf_all = pose_features(poses)
    tr, va = split_indices(len(samples), cfg.seed)
    model = AE2(seed=cfg.seed)
    common.init_output(model, grids[tr].mean())

    def batch_loss(idx):
        return model.loss_t(Tensor(grids[idx][:, None]), Tensor(pf_all[idx]))[0]

    rows = fit(model, batch_loss, lambda: evaluate(model, grids[va], poses[va]), tr, cfg, metrics_path, stop)
    return model, rows
