"""Flat experiment configuration loaded from YAML."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

import yaml


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int = 0
    # data
    n_base_targets: int = 400
    perturbations_per_target: int = 5
    n_grippers: int = 500
    train_limit: int = 0  # > 0 trains every stage on the first N samples only
    # autoencoders
    ae1_epochs: int = 30
    ae1_batch: int = 8
    ae1_lr: float = 1e-3
    ae2_epochs: int = 40
    ae2_batch: int = 8
    ae2_lr: float = 1e-3
    ae3_epochs: int = 300
    ae3_batch: int = 64
    ae3_lr: float = 1e-3
    ae3_alpha: float = 0.5
    ae3_beta: float = 1.0
    n_pairs: int = 4000
    # reinforcement learning
    rl_reward: str = "oracle"  # oracle | toy
    rl_rollouts: int = 20
    rl_eta: float = 0.5
    rl_sigma_decay: float = 0.995
    rl_sigma_floor: float = 0.02
    rl_pool: int = 10
    rl_window: int = 50
    rl_success: float = 0.8
    rl_episode_cap: int = 2000
    rl_penalty_alpha: float = 0.01
    rl_penalty_beta: float = 0.01
    squeeze_force: float = 20.0
    adapt_seeds: int = 10
    adapt_swap: str = "target"  # target | gripper

    def __post_init__(self):
        positive = [
            "n_base_targets", "perturbations_per_target", "n_grippers", "ae1_epochs", "ae1_batch",
            "ae2_epochs", "ae2_batch", "ae3_epochs", "ae3_batch", "n_pairs", "rl_rollouts", "rl_pool",
            "rl_window", "rl_episode_cap", "adapt_seeds",
        ]
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("ae1_lr", "ae2_lr", "ae3_lr", "ae3_alpha", "ae3_beta", "squeeze_force"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must fit in u64")
        if self.train_limit < 0:
            raise ConfigError("train_limit must be >= 0")
        if self.rl_reward not in ("oracle", "toy"):
            raise ConfigError(f"rl_reward must be 'oracle' or 'toy', got {self.rl_reward!r}")
        if self.adapt_swap not in ("target", "gripper"):
            raise ConfigError(f"adapt_swap must be 'target' or 'gripper', got {self.adapt_swap!r}")
        if self.rl_penalty_alpha < 0 or self.rl_penalty_beta < 0:
            raise ConfigError("penalty weights must be >= 0")

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        out = {}
        for k, v in data.items():
            typ = type(getattr(cls, k))
            if typ is float and isinstance(v, int) and not isinstance(v, bool):
                v = float(v)
            if not isinstance(v, typ) or isinstance(v, bool):
                raise ConfigError(f"{k} must be {typ.__name__}, got {v!r}")
            out[k] = v
        return cls(**out)

    @classmethod
    def load(cls, path: str | Path | None, **overrides) -> "ExperimentConfig":
        data = {}
        if path is not None:
            try:
                loaded = yaml.safe_load(Path(path).read_text())
            except (OSError, yaml.YAMLError) as err:
                raise ConfigError(f"cannot read config {path}: {err}") from err
            if loaded is None:
                loaded = {}
            if not isinstance(loaded, dict):
                raise ConfigError("config file must be a flat key: value mapping")
            data.update(loaded)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(data)

    def to_yaml(self) -> str:
        return yaml.safe_dump(asdict(self), sort_keys=True)
