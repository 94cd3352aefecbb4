"""Episodic reward-weighted policy search over a perturbation vector.

One episode is one rollout. Every ``n_rollouts`` episodes the mean moves to
a reward-weighted average of the best rollouts seen so far (importance
pool), and the exploration std-devs shrink geometrically.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..seeding import derive_seed


@dataclass
class PolicyParams:
    mean: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).copy()
        self.sigma = np.asarray(self.sigma, dtype=np.float64).copy()
        if self.mean.shape != self.sigma.shape:
            raise ValueError(f"mean {self.mean.shape} and sigma {self.sigma.shape} differ")
        if not np.all(self.sigma > 0):
            raise ValueError("exploration std-devs must be positive")


@dataclass(frozen=True)
class PowerConfig:
    n_rollouts: int = 20
    eta: float = 0.5
    sigma_decay: float = 0.995
    sigma_floor: float = 0.02  # fraction of the initial sigma
    pool_size: int = 10
    window: int = 50  # M
    success_rate: float = 0.8
    episode_cap: int = 2000

    def __post_init__(self):
        if self.n_rollouts < 1 or self.pool_size < 1 or self.window < 1 or self.episode_cap < 1:
            raise ValueError("counts must be positive")
        if not 0 < self.sigma_decay <= 1 or not 0 < self.sigma_floor <= 1:
            raise ValueError("sigma_decay and sigma_floor must lie in (0, 1]")
        if not 0 <= self.success_rate <= 1:
            raise ValueError("success_rate must lie in [0, 1]")


@dataclass
class RolloutRecord:
    episode: int
    delta: np.ndarray
    reward: float
    success: bool
    info: dict = field(default_factory=dict)


def sample_perturbation(policy: PolicyParams, rng: np.random.Generator) -> np.ndarray:
    return policy.mean + policy.sigma * rng.standard_normal(policy.mean.shape)


def power_update(policy: PolicyParams, rollouts: Sequence[RolloutRecord], eta: float) -> np.ndarray:
    """New mean ``theta + eta * sum_i w_i (delta_i - theta)`` with ``w_i = R_i / sum_j R_j``.

    Negative rewards are shifted up by the minimum first; an all-zero reward
    vector leaves the mean where it is.
    """
    if not rollouts:
        raise ValueError("power_update needs at least one rollout")
    rewards = np.array([r.reward for r in rollouts], dtype=np.float64)
    rewards = rewards - min(0.0, float(rewards.min()))
    total = rewards.sum()
    if total <= 0:
        return policy.mean.copy()
    # convex form of mean + eta * sum w_i (delta_i - mean); exact at one-hot w and eta in {0, 1}
    return (1.0 - eta) * policy.mean + eta * ((rewards / total) @ np.stack([r.delta for r in rollouts]))


def check_termination(history: Sequence[bool], window: int, success_rate: float) -> bool:
    if len(history) < window:
        return False
    return float(np.mean(history[-window:])) >= success_rate


RewardFn = Callable[[np.ndarray], tuple[float, bool, dict]]


@dataclass
class PowerState:
    policy: PolicyParams
    sigma0: np.ndarray
    pool: list[RolloutRecord] = field(default_factory=list)
    batch: list[RolloutRecord] = field(default_factory=list)
    history: list[bool] = field(default_factory=list)
    episodes: int = 0  # lifetime episode counter, keys the rollout RNG streams
    updates: int = 0

    @classmethod
    def fresh(cls, sigma0, mean=None) -> "PowerState":
        sigma0 = np.asarray(sigma0, dtype=np.float64)
        mean = np.zeros_like(sigma0) if mean is None else mean
        return cls(PolicyParams(mean, sigma0), sigma0.copy())

    def reset_progress(self) -> None:
        """Forget success history and the importance pool but keep mean and sigma."""
        self.pool, self.batch, self.history = [], [], []


@dataclass
class RunResult:
    records: list[RolloutRecord]
    episodes_to_threshold: int | None  # episodes of this run, None if the cap was hit

    @property
    def converged(self) -> bool:
        return self.episodes_to_threshold is not None


def _update(state: PowerState, cfg: PowerConfig) -> None:
    merged = sorted(state.pool + state.batch, key=lambda r: (-r.reward, r.episode))
    state.pool = merged[:cfg.pool_size]
    state.batch = []
    mean = power_update(state.policy, state.pool, cfg.eta)
    sigma = np.maximum(state.policy.sigma * cfg.sigma_decay, cfg.sigma_floor * state.sigma0)
    state.policy = PolicyParams(mean, sigma)
    state.updates += 1


def run_power(reward_fn: RewardFn, state: PowerState, cfg: PowerConfig, seed: int,
              episode_cap: int | None = None, on_episode=None, stop_at_threshold: bool = True) -> RunResult:
    """Roll out until the success window clears the threshold or the cap.

    The RNG for episode ``k`` is derived from ``(seed, k)`` alone, so a run
    is reproducible from its seed regardless of how it is chunked.
    """
    cap = cfg.episode_cap if episode_cap is None else episode_cap
    records = []
    for local in range(1, cap + 1):
        rng = np.random.default_rng(derive_seed(seed, "rollout", state.episodes))
        delta = sample_perturbation(state.policy, rng)
        reward, success, info = reward_fn(delta)
        rec = RolloutRecord(state.episodes, delta, float(reward), bool(success), info)
        info.setdefault("sigma_mean", float(state.policy.sigma.mean()))
        state.episodes += 1
        state.history.append(rec.success)
        state.batch.append(rec)
        records.append(rec)
        if on_episode is not None:
            on_episode(rec)
        if len(state.batch) >= cfg.n_rollouts:
            _update(state, cfg)
        if stop_at_threshold and check_termination(state.history, cfg.window, cfg.success_rate):
            return RunResult(records, local)
    return RunResult(records, None)

