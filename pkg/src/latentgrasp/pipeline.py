"""Stage runners behind the command line.

Each stage writes into its own directory under the output root and never
touches files of another stage. Seeds for every stage are derived from the
master seed and the stage name.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .grasp import GraspEvaluator
from .models import gripper as m_gripper
from .models import joint as m_joint
from .models import target as m_target
from .models.training import TrainConfig, TrainingDiverged, split_indices
from .nn import checkpoint
from .rl.adaptation import adaptation_experiment
from .rl.agents import (
    BaselineTask, LatentTask, Models, Pair, baseline_sigma0, latent_sigma0, toy_reward, write_episodes,
)
from .rl.power import PowerConfig, PowerState, run_power
from .seeding import derive_seed
from .voxels import gripper as v_gripper
from .voxels.dataset import build_grippers, dataset_read, dataset_write
from .voxels.gripper import PreGrasp, canonical_pose, jittered_pose
from .voxels.shapes import build_targets

log = logging.getLogger(__name__)

STAGES = {"gen-data": "data", "ae1": "ae1", "ae2": "ae2", "ae3": "ae3", "rl-latent": "rl-latent",
          "rl-baseline": "rl-baseline", "adapt": "adapt", "eval": "eval"}


class StageError(RuntimeError):
    """Validation failure: bad inputs, missing prerequisites, refusing to overwrite."""


class NotConverged(RuntimeError):
    pass


def stage_dir(root: Path, stage: str, create: bool = False) -> Path:
    d = Path(root) / STAGES[stage]
    if create:
        if d.exists() and any(d.iterdir()):
            raise StageError(f"{d} already holds outputs; choose a new --out directory")
        try:
            d.mkdir(parents=True, exist_ok=True)
        except OSError as err:
            raise StageError(f"cannot create {d}: {err}") from err
    return d


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise StageError(f"missing prerequisite stage '{stage}': {path} not found")
    return path


def _snapshot(d: Path, cfg: ExperimentConfig) -> None:
    (d / "config.yaml").write_text(cfg.to_yaml())


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# data

def gen_data(cfg: ExperimentConfig, out: Path) -> dict:
    d = stage_dir(out, "gen-data", create=True)
    seed = cfg.master_seed
    targets = build_targets(cfg.n_base_targets, cfg.perturbations_per_target, derive_seed(seed, "targets"))
    grippers = build_grippers(cfg.n_grippers, targets, derive_seed(seed, "grippers"))
    dataset_write(targets, d / "targets.ggds")
    dataset_write(grippers, d / "grippers.ggds")
    # re-read and check the invariants before declaring success
    t2, g2 = dataset_read(d / "targets.ggds"), dataset_read(d / "grippers.ggds")
    if len(t2) != len(targets) or len(g2) != len(grippers):
        raise StageError("dataset re-read count mismatch")
    for t in t2:
        i1, i2, i3 = t.props.principal_moments
        if not (t.props.mass > 0 and i1 + i2 >= i3 * (1 - 1e-12) and t.grid.any()):
            raise StageError(f"target {t.provenance} violates the physical invariants")
    for g in g2:
        if v_gripper.aperture(g.grid) <= 0:
            raise StageError("gripper with closed aperture")
    _snapshot(d, cfg)
    manifest = {"targets": len(targets), "grippers": len(grippers), "master_seed": seed,
                "resolution": 16, "created": time.strftime("%Y-%m-%dT%H:%M:%S")}
    _write_json(d / "manifest.json", manifest)
    return manifest


def load_data(out: Path):
    d = stage_dir(out, "gen-data")
    return dataset_read(_require(d / "targets.ggds", "gen-data")), dataset_read(_require(d / "grippers.ggds", "gen-data"))


def _limit(samples, cfg: ExperimentConfig):
    return samples[:cfg.train_limit] if cfg.train_limit else samples


# training

def _train_cfg(cfg: ExperimentConfig, stage: str) -> TrainConfig:
    return TrainConfig(epochs=getattr(cfg, f"{stage}_epochs"), batch=getattr(cfg, f"{stage}_batch"),
                       lr=getattr(cfg, f"{stage}_lr"), seed=derive_seed(cfg.master_seed, stage))


def _save_model(model, path: Path) -> None:
    checkpoint.save(path, model.state_dict())


_MODEL_TYPES = {"ae1": m_target.AE1, "ae2": m_gripper.AE2, "ae3": m_joint.AE3}


def load_model(out: Path, stage: str):
    model = _MODEL_TYPES[stage]()
    model.load_state_dict(checkpoint.load(_require(stage_dir(out, stage) / f"{stage}.ggnn", stage)))
    return model


def load_models(out: Path) -> Models:
    return Models(*(load_model(out, s) for s in ("ae1", "ae2", "ae3")))


def train(stage: str, cfg: ExperimentConfig, out: Path) -> dict:
    if stage == "ae3":
        for pre in ("ae1", "ae2"):
            _require(stage_dir(out, pre) / f"{pre}.ggnn", pre)
    targets, grippers = load_data(out)
    d = stage_dir(out, stage, create=True)
    tcfg = _train_cfg(cfg, stage)
    metrics = d / "metrics.csv"
    try:
        if stage == "ae1":
            model, rows = m_target.train_ae1(_limit(targets, cfg), tcfg, metrics)
            key = "val_voxel_acc"
        elif stage == "ae2":
            model, rows = m_gripper.train_ae2(_limit(grippers, cfg), tcfg, metrics)
            key = "val_combined_acc"
        else:
            ae1, ae2 = load_model(out, "ae1"), load_model(out, "ae2")
            tr, _ = split_indices(len(targets), derive_seed(cfg.master_seed, "ae1"))
            pool = _limit([targets[i] for i in tr], cfg)
            pairs = m_joint.build_latent_pairs(pool, grippers, ae1, ae2,
                                               cfg.train_limit or cfg.n_pairs, derive_seed(cfg.master_seed, "pairs"))
            dataset_write(pairs, d / "latents.ggds")
            model, rows = m_joint.train_ae3(pairs, ae2, tcfg, cfg.ae3_alpha, cfg.ae3_beta, metrics)
            key = "val_latent_acc"
    except TrainingDiverged as err:
        (d / f"{stage}.last_good.ggnn").write_bytes(checkpoint.dumps(err.state))
        raise StageError(f"{stage} training diverged: {err}") from err
    _save_model(model, d / f"{stage}.ggnn")
    _snapshot(d, cfg)
    best = max(rows, key=lambda r: -r["val_loss"])
    return {"stage": stage, "epochs": len(rows), key: float(best[key])}


# reinforcement learning

def _power_cfg(cfg: ExperimentConfig) -> PowerConfig:
    return PowerConfig(n_rollouts=cfg.rl_rollouts, eta=cfg.rl_eta, sigma_decay=cfg.rl_sigma_decay,
                       sigma_floor=cfg.rl_sigma_floor, pool_size=cfg.rl_pool, window=cfg.rl_window,
                       success_rate=cfg.rl_success, episode_cap=cfg.rl_episode_cap)


def _graspable(target, gripper) -> bool:
    pose = canonical_pose(PreGrasp.for_target(target.grid))
    return GraspEvaluator(target, gripper).outcome(pose).lifted


def select_pairs(targets, grippers, cfg: ExperimentConfig, seed: int, swap: str) -> tuple[Pair, Pair]:
    """Held-out targets that the gripper can lift from their own canonical pose.

    The starting pose is a jittered pre-grasp for the first target and is kept
    across the swap.
    """
    _, val = split_indices(len(targets), derive_seed(cfg.master_seed, "ae1"))
    rng = np.random.default_rng(derive_seed(seed, "pair-select"))
    for _ in range(1000):
        a, b = (targets[i] for i in rng.choice(val, 2, replace=False))
        g, g2 = (grippers[i] for i in rng.choice(len(grippers), 2, replace=False))
        if not _graspable(a, g):
            continue
        if swap == "target" and not _graspable(b, g):
            continue
        if swap == "gripper" and not _graspable(a, g2):
            continue
        p0 = jittered_pose(PreGrasp.for_target(a.grid), rng)
        before = Pair(a, g, p0)
        after = Pair(b, g, p0) if swap == "target" else Pair(a, g2, p0)
        return before, after
    raise StageError("no graspable held-out pair found")


def rl(agent: str, cfg: ExperimentConfig, out: Path) -> dict:
    pcfg = _power_cfg(cfg)
    seed = derive_seed(cfg.master_seed, "rl", agent)
    if cfg.rl_reward == "toy":
        d = stage_dir(out, f"rl-{agent}", create=True)
        dim = m_joint.M_C if agent == "latent" else 7
        optimum = np.random.default_rng(derive_seed(seed, "toy")).normal(0.0, 1.0, dim)
        reward, sigma0, before = toy_reward(optimum), np.full(dim, 0.5), None
    else:
        # the baseline needs the joint checkpoint only for its pose statistics
        models = load_models(out)
        targets, grippers = load_data(out)
        d = stage_dir(out, f"rl-{agent}", create=True)
        before, _ = select_pairs(targets, grippers, cfg, seed, cfg.adapt_swap)
        kw = {"squeeze_force": cfg.squeeze_force}
        if agent == "latent":
            reward = LatentTask(before, models, cfg.rl_penalty_alpha, cfg.rl_penalty_beta, **kw)
            sigma0 = latent_sigma0(models)
        else:
            reward, sigma0 = BaselineTask(before, **kw), baseline_sigma0(models)
    state = PowerState.fresh(sigma0)
    res = run_power(reward, state, pcfg, seed)
    write_episodes(res.records, d / "episodes.csv")
    summary = {"agent": agent, "reward": cfg.rl_reward, "converged": res.converged,
               "episodes_to_threshold": res.episodes_to_threshold, "episodes": len(res.records),
               "updates": state.updates, "final_mean_reward": float(np.mean([r.reward for r in res.records[-cfg.rl_window:]]))}
    if cfg.rl_reward == "toy":
        summary["reward_at_mean"] = float(reward(state.policy.mean)[0])
    _write_json(d / "summary.json", summary)
    _snapshot(d, cfg)
    if not res.converged:
        raise NotConverged(f"{agent} agent hit the episode cap ({pcfg.episode_cap}) without reaching the threshold")
    return summary


def adapt(cfg: ExperimentConfig, out: Path) -> dict:
    models = load_models(out)
    targets, grippers = load_data(out)
    d = stage_dir(out, "adapt", create=True)
    pcfg = _power_cfg(cfg)
    base = derive_seed(cfg.master_seed, "adapt")
    seeds = [derive_seed(base, i) for i in range(cfg.adapt_seeds)]
    report, records = adaptation_experiment(
        lambda s: select_pairs(targets, grippers, cfg, s, cfg.adapt_swap), models, pcfg, seeds, cfg.adapt_swap,
        penalty_alpha=cfg.rl_penalty_alpha, penalty_beta=cfg.rl_penalty_beta, squeeze_force=cfg.squeeze_force,
    )
    (d / "report.json").write_text(report.to_json())
    with open(d / "curves.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "agent", "post_episode", "lifted"])
        for r in report.results:
            for name, run in (("latent", r.latent), ("baseline", r.baseline)):
                for k, flag in enumerate(run.curve, 1):
                    w.writerow([r.seed, name, k, int(flag)])
    for s, rec in records.items():
        for name, rows in rec.items():
            write_episodes(rows, d / f"episodes_{name}_{s}.csv")
    _snapshot(d, cfg)
    summary = report.summary()
    if summary["nonconverged_latent"] or summary["nonconverged_baseline"]:
        summary["_nonconverged"] = True
    return summary


# evaluation

def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.2f}"


def evaluate(cfg: ExperimentConfig, out: Path) -> tuple[list[tuple[str, float | None, float]], str]:
    d = stage_dir(out, "eval", create=True)
    try:
        targets, grippers = load_data(out)
    except StageError:
        targets = grippers = None
    values: dict[str, float | None] = {"ae1": None, "ae2": None, "ae3": None, "adapt": None}
    for stage in ("ae1", "ae2", "ae3"):
        ck = stage_dir(out, stage) / f"{stage}.ggnn"
        if not ck.exists() or targets is None:
            continue
        if stage == "ae1":
            model = load_model(out, "ae1")
            _, va = split_indices(len(_limit(targets, cfg)), derive_seed(cfg.master_seed, "ae1"))
            sub = [_limit(targets, cfg)[i] for i in va]
            g = np.stack([t.grid for t in sub])
            p = np.stack([t.props.vector() for t in sub])
            values["ae1"] = float(m_target.evaluate(model, g, p)["val_voxel_acc"])
        elif stage == "ae2":
            model = load_model(out, "ae2")
            gs = _limit(grippers, cfg)
            _, va = split_indices(len(gs), derive_seed(cfg.master_seed, "ae2"))
            g = np.stack([gs[i].grid for i in va])
            p = np.stack([gs[i].pose.vector() for i in va])
            values["ae2"] = float(m_gripper.evaluate(model, g, p)["val_combined_acc"])
        else:
            models = load_models(out)
            pairs = dataset_read(stage_dir(out, "ae3") / "latents.ggds")
            _, va = split_indices(len(pairs), derive_seed(cfg.master_seed, "ae3"))
            z = np.stack([pairs[i].z_gt for i in va])
            pf = m_gripper.pose_features(np.stack([pairs[i].pose for i in va]))
            values["ae3"] = float(m_joint.evaluate(models.ae3, models.ae2, models.ae3.normalize(z), pf)["val_latent_acc"])
    rep = stage_dir(out, "adapt") / "report.json"
    if rep.exists():
        values["adapt"] = json.loads(rep.read_text())["summary"]["improvement_percent"]
    table = [
        ("AE1 target voxel accuracy (%)", values["ae1"], 90.52),
        ("AE2 gripper combined accuracy (%)", values["ae2"], 85.23),
        ("AE3 latent-element accuracy (%)", values["ae3"], 71.16),
        ("Adaptation improvement, latent vs baseline (%)", values["adapt"], 35.8),
    ]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "measured", "reference"])
    for name, v, ref in table:
        w.writerow([name, _fmt(v), f"{ref:.2f}"])
    (d / "table.csv").write_text(buf.getvalue())
    _snapshot(d, cfg)
    width = max(len(r[0]) for r in table)
    text = "\n".join(f"{name:<{width}}  {_fmt(v):>8}  (reference {ref:.2f})" for name, v, ref in table)
    return table, text
