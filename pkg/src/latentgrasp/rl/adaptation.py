"""Re-convergence after swapping the target or gripper of a solved pair."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..seeding import derive_seed
from .agents import BaselineTask, LatentTask, Models, Pair, baseline_sigma0, latent_sigma0
from .power import PowerConfig, PowerState, RolloutRecord, run_power


@dataclass
class AgentRun:
    pre_episodes: int | None
    post_episodes: int | None
    curve: list[bool] = field(default_factory=list)  # post-swap success flags


@dataclass
class SeedResult:
    seed: int
    latent: AgentRun
    baseline: AgentRun

    @property
    def improvement(self) -> float | None:
        kl, kb = self.latent.post_episodes, self.baseline.post_episodes
        if kl is None or kb is None:
            return None
        return 100.0 * (kb - kl) / kb

    @property
    def latent_faster(self) -> bool:
        kl, kb = self.latent.post_episodes, self.baseline.post_episodes
        if kl is None:
            return False
        return kb is None or kl < kb


def adapt_agent(task_before, task_after, sigma0: np.ndarray, cfg: PowerConfig, seed: int) -> tuple[AgentRun, list[RolloutRecord]]:
    """Train to threshold on ``task_before``, swap, and count episodes to re-reach it.

    Mean and sigma carry over the swap; the success window and importance pool
    start empty, so the count is at least the window length.
    """
    state = PowerState.fresh(sigma0)
    pre = run_power(task_before, state, cfg, derive_seed(seed, "pre"))
    if not pre.converged:
        return AgentRun(None, None), pre.records
    state.reset_progress()
    post = run_power(task_after, state, cfg, derive_seed(seed, "post"))
    return AgentRun(pre.episodes_to_threshold, post.episodes_to_threshold, [r.success for r in post.records]), pre.records + post.records


def run_seed(before: Pair, after: Pair, models: Models, cfg: PowerConfig, seed: int, **task_kw) -> tuple[SeedResult, dict]:
    latent, lrec = adapt_agent(LatentTask(before, models, **task_kw), LatentTask(after, models, **task_kw),
                               latent_sigma0(models), cfg, derive_seed(seed, "latent"))
    base_kw = {k: v for k, v in task_kw.items() if k == "squeeze_force"}
    baseline, brec = adapt_agent(BaselineTask(before, **base_kw), BaselineTask(after, **base_kw),
                                 baseline_sigma0(models), cfg, derive_seed(seed, "baseline"))
    return SeedResult(seed, latent, baseline), {"latent": lrec, "baseline": brec}


@dataclass
class AdaptationReport:
    swap: str
    episode_cap: int
    results: list[SeedResult]

    def summary(self) -> dict:
        cap = self.episode_cap

        def eps(run: AgentRun) -> int:
            # a run that never re-converged counts as the cap
            return run.post_episodes if run.post_episodes is not None else cap

        lat = [eps(r.latent) for r in self.results]
        base = [eps(r.baseline) for r in self.results]
        med_l, med_b = float(np.median(lat)), float(np.median(base))
        per_seed = [r.improvement for r in self.results]
        paired = [p for p in per_seed if p is not None]
        return {
            "swap": self.swap,
            "n_seeds": len(self.results),
            "median_episodes_latent": med_l,
            "median_episodes_baseline": med_b,
            "improvement_percent": 100.0 * (med_b - med_l) / med_b if med_b > 0 else None,
            "median_paired_improvement_percent": float(np.median(paired)) if paired else None,
            "latent_faster_seeds": int(sum(r.latent_faster for r in self.results)),
            "nonconverged_latent": int(sum(r.latent.post_episodes is None for r in self.results)),
            "nonconverged_baseline": int(sum(r.baseline.post_episodes is None for r in self.results)),
            "reference_improvement_percent": 35.8,
        }

    def to_json(self) -> str:
        body = {
            "summary": self.summary(),
            "seeds": [
                {
                    "seed": r.seed,
                    "latent": {"pre_episodes": r.latent.pre_episodes, "episodes_to_threshold": r.latent.post_episodes},
                    "baseline": {"pre_episodes": r.baseline.pre_episodes, "episodes_to_threshold": r.baseline.post_episodes},
                    "improvement_percent": r.improvement,
                }
                for r in self.results
            ],
        }
        return json.dumps(body, indent=2, sort_keys=True) + "\n"


def adaptation_experiment(pairs: Callable[[int], tuple[Pair, Pair]] | tuple[Pair, Pair], models: Models,
                          cfg: PowerConfig, seeds: Sequence[int], swap: str = "target",
                          **task_kw) -> tuple[AdaptationReport, dict]:
    """``pairs`` is either a fixed (before, after) tuple or a per-seed factory."""
    results, records = [], {}
    for s in seeds:
        before, after = pairs(s) if callable(pairs) else pairs
        res, rec = run_seed(before, after, models, cfg, s, **task_kw)
        results.append(res)
        records[s] = rec
    return AdaptationReport(swap, cfg.episode_cap, results), records


__all__ = ["AgentRun", "SeedResult", "AdaptationReport", "adapt_agent", "run_seed", "adaptation_experiment"]
