"""Latent-space and pose-space grasp agents on the shared PoWER loop."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..grasp import GraspEvaluator, SQUEEZE_FORCE
from ..models.gripper import AE2
from ..models.joint import AE3
from ..models.target import AE1, M_T
from ..voxels.gripper import GripperSample
from ..voxels.pose import Pose
from ..voxels.shapes import TargetSample
from .power import PowerConfig, PowerState, RolloutRecord, RunResult, run_power

PENALTY_ALPHA = 0.01
PENALTY_BETA = 0.01
EPISODE_COLUMNS = ["episode", "reward", "lifted", "stability", "penalty_T", "penalty_G", "sigma_mean"]


@dataclass
class Models:
    ae1: AE1
    ae2: AE2
    ae3: AE3


@dataclass(frozen=True)
class Pair:
    target: TargetSample
    gripper: GripperSample
    pose: Pose  # initial gripper pose relative to the target


class LatentTask:
    """Reward over perturbations of z_C for one (target, gripper, pose) pair.

    ``z_C + delta`` is decoded by the joint decoder; the gripper slice goes
    through the gripper decoder's pose head and the grasp is evaluated at that
    pose on the real target and gripper. Penalties compare the decoded
    latents with the encoded ones in z-scored units.
    """

    def __init__(self, pair: Pair, models: Models, penalty_alpha: float = PENALTY_ALPHA,
                 penalty_beta: float = PENALTY_BETA, squeeze_force: float = SQUEEZE_FORCE):
        self.models = models
        self.alpha, self.beta = penalty_alpha, penalty_beta
        z_t = models.ae1.encode(pair.target.grid, pair.target.props)
        z_g = models.ae2.encode(pair.gripper.grid, pair.pose)
        self.zn = models.ae3.normalize(np.concatenate([z_t, z_g]))
        self.z_c = models.ae3.encode(np.concatenate([z_t, z_g]))
        self.evaluator = GraspEvaluator(pair.target, pair.gripper, squeeze_force)

    def decode_pose(self, delta: np.ndarray) -> tuple[Pose, np.ndarray]:
        z_hat = self.models.ae3.decode(self.z_c + delta)
        pose = Pose.from_vector(self.models.ae2.decode_pose(z_hat[M_T:])[0])
        return pose, self.models.ae3.normalize(z_hat)

    def penalties(self, zn_hat: np.ndarray) -> tuple[float, float]:
        d = zn_hat - self.zn
        return float(d[:M_T] @ d[:M_T]), float(d[M_T:] @ d[M_T:])

    def __call__(self, delta: np.ndarray) -> tuple[float, bool, dict]:
        pose, zn_hat = self.decode_pose(delta)
        pen_t, pen_g = self.penalties(zn_hat)
        quality, out = self.evaluator(pose)
        if not out.valid:
            reward = 0.0
        else:
            reward = quality - self.alpha * pen_t - self.beta * pen_g
        info = {"lifted": out.lifted, "stability": out.stability, "valid": out.valid,
                "penalty_T": pen_t, "penalty_G": pen_g}
        return reward, out.lifted, info


class BaselineTask:
    """Reward over direct perturbations of the 7-component pose vector."""

    def __init__(self, pair: Pair, squeeze_force: float = SQUEEZE_FORCE):
        self.p0 = pair.pose.vector()
        self.evaluator = GraspEvaluator(pair.target, pair.gripper, squeeze_force)

    def pose(self, delta: np.ndarray) -> Pose:
        v = self.p0 + delta
        q = v[3:] if np.linalg.norm(v[3:]) > 1e-12 else np.array([1.0, 0.0, 0.0, 0.0])
        return Pose.make(v[:3], q)

    def __call__(self, delta: np.ndarray) -> tuple[float, bool, dict]:
        quality, out = self.evaluator(self.pose(delta))
        info = {"lifted": out.lifted, "stability": out.stability, "valid": out.valid,
                "penalty_T": 0.0, "penalty_G": 0.0}
        return (quality if out.valid else 0.0), out.lifted, info


def latent_sigma0(models: Models) -> np.ndarray:
    return 0.5 * models.ae3._buffers["zc_std"]


def baseline_sigma0(models: Models) -> np.ndarray:
    return 0.5 * models.ae3._buffers["pose_std"]


def run_latent_agent(pair: Pair, models: Models, cfg: PowerConfig, seed: int,
                     state: PowerState | None = None, **task_kw) -> tuple[RunResult, PowerState]:
    state = state or PowerState.fresh(latent_sigma0(models))
    return run_power(LatentTask(pair, models, **task_kw), state, cfg, seed), state


def run_baseline_agent(pair: Pair, sigma0: np.ndarray, cfg: PowerConfig, seed: int,
                       state: PowerState | None = None, **task_kw) -> tuple[RunResult, PowerState]:
    state = state or PowerState.fresh(sigma0)
    return run_power(BaselineTask(pair, **task_kw), state, cfg, seed), state


def episode_row(rec: RolloutRecord) -> dict:
    i = rec.info
    return {
        "episode": rec.episode, "reward": rec.reward, "lifted": int(bool(i.get("lifted", rec.success))),
        "stability": float(i.get("stability", 0.0)), "penalty_T": float(i.get("penalty_T", 0.0)),
        "penalty_G": float(i.get("penalty_G", 0.0)), "sigma_mean": float(i["sigma_mean"]),
    }


def write_episodes(records: Sequence[RolloutRecord], path: str | Path, extra: dict | None = None) -> None:
    cols = (list(extra) if extra else []) + EPISODE_COLUMNS
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for rec in records:
            row = dict(extra or {})
            row.update(episode_row(rec))
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def toy_reward(target: np.ndarray, success_at: float = 0.5):
    """Concave reward ``1 - |delta - target|^2 / |target|^2``: optimum 1 at ``delta = target``."""
    target = np.asarray(target, dtype=np.float64)
    norm2 = float(target @ target)
    if norm2 <= 0:
        raise ValueError("toy optimum must be non-zero")

    def reward(delta: np.ndarray) -> tuple[float, bool, dict]:
        d = delta - target
        r = 1.0 - float(d @ d) / norm2
        return r, r >= success_at, {"lifted": r >= success_at, "stability": 0.0}

    return reward
