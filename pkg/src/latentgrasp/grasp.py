"""Quasi-static two-finger grasp evaluation on voxel grids.

Coordinates are in voxel units relative to the centre of the target grid;
a gripper-frame point ``g`` sits at ``r / voxel_edge + R(q) g`` in the target
frame. Local x of the gripper is the closing axis: the left finger (low x)
travels along +x, the right finger along -x.

Closing model: both fingers start retracted by ``OPEN_STROKE`` voxels from
their modelled position and advance in ``STEP`` increments. A finger stops
at the last position where none of its voxel centres lies inside an
occupied target voxel. Fingers stop early if they would meet. A finger that
already overlaps the target in the retracted position means the pose is
invalid (:class:`PenetrationError`).

Stability of an antipodal pair (i, j) is the product of three [0, 1] terms:

* friction margin ``1 - max(angle_i, angle_j) / atan(mu)``
* principal-axis alignment ``(a - 1/sqrt(3)) / (1 - 1/sqrt(3))`` where
  ``a`` is the largest |cosine| between the grasp line and an inertia
  eigenvector
* centre-of-mass closeness ``max(0, 1 - d / R)`` with ``d`` the distance
  from the COM to the grasp line and ``R`` half the bounding-box diagonal

and the grasp stability is the best pair's value.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .voxels import gripper as grip
from .voxels.gripper import GripperSample
from .voxels.physics import GRAVITY, RESOLUTION, VOXEL_EDGE, inertia_tensor
from .voxels.pose import Pose, to_matrix
from .voxels.shapes import TargetSample

N = RESOLUTION
STEP = 0.25
OPEN_STROKE = 2.0
CONTACT_RADIUS = 1.5  # voxel-centre distance, strict
GRIPPER_MU = 0.8
SAFETY_FACTOR = 1.2
SQUEEZE_FORCE = 20.0
FORCE_CAP = 40.0
W_LIFT, W_STABLE, W_FORCE = 0.6, 0.3, 0.1

_FACES = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.float64)


class PenetrationError(ValueError):
    pass


@dataclass
class ContactSet:
    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))  # metres, target frame
    normals: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))  # inward, unit
    mu: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class GraspOutcome:
    lifted: bool
    stability: float
    applied_force: float
    contact_count: int
    valid: bool = True
    closure: bool = False


INVALID = GraspOutcome(False, 0.0, 0.0, 0, valid=False)


def _centers(idx: np.ndarray) -> np.ndarray:
    return idx + 0.5 - N / 2


class TargetScene:
    """Per-target data reused across many grasp evaluations."""

    def __init__(self, target: TargetSample):
        occ = target.grid > 0.5
        if not occ.any():
            raise ValueError("target grid is empty")
        self.occ = occ
        self.mass = target.props.mass
        self.mu = target.props.friction_mu
        padded = np.pad(occ, 1)
        idx = np.argwhere(occ)
        exposed = np.zeros((len(idx), 6), dtype=bool)
        for f, d in enumerate(_FACES.astype(int)):
            nb = idx + 1 + d
            exposed[:, f] = ~padded[nb[:, 0], nb[:, 1], nb[:, 2]]
        surf = exposed.any(axis=1)
        self.surface = _centers(idx[surf].astype(np.float64))
        self.exposed = exposed[surf]
        _, com, tensor = inertia_tensor(target.grid)
        self.com = com / VOXEL_EDGE
        self.axes = np.linalg.eigh(tensor)[1].T  # rows are principal directions
        lo, hi = idx.min(axis=0), idx.max(axis=0) + 1
        self.radius = 0.5 * float(np.linalg.norm(hi - lo))

    def occupied(self, pts: np.ndarray) -> np.ndarray:
        ijk = np.floor(pts + N / 2).astype(int)
        inside = np.all((ijk >= 0) & (ijk < N), axis=-1)
        out = np.zeros(pts.shape[:-1], dtype=bool)
        ii = ijk[inside]
        out[inside] = self.occ[ii[..., 0], ii[..., 1], ii[..., 2]]
        return out


class GripperModel:
    """Finger voxel centres and inner-surface points in the gripper frame."""

    def __init__(self, gripper: GripperSample):
        occ = gripper.grid > 0.5
        idx = np.argwhere(occ)
        left = idx[:, 0] < N // 2
        self.fingers = []
        for side, sign in ((left, 1), (~left, -1)):
            pts = idx[side]
            nxt = pts + np.array([sign, 0, 0])
            ok = (nxt[:, 0] >= 0) & (nxt[:, 0] < N)
            face = np.ones(len(pts), dtype=bool)
            face[ok] = ~occ[nxt[ok, 0], nxt[ok, 1], nxt[ok, 2]]
            self.fingers.append((_centers(pts.astype(np.float64)), _centers(pts[face].astype(np.float64)), sign))
        self.aperture = float(grip.aperture(gripper.grid))


def _travel_limit(gm: GripperModel) -> int:
    return int(np.floor((gm.aperture + 2 * OPEN_STROKE) / STEP))


def close_fingers(scene: TargetScene, gm: GripperModel, pose: Pose) -> list[tuple[np.ndarray, np.ndarray]]:
    """Sweep both fingers shut; returns per finger (surface points, travel direction), target frame."""
    rot = to_matrix(pose.q)
    r = np.asarray(pose.r) / VOXEL_EDGE
    kmax = _travel_limit(gm)
    travel = -OPEN_STROKE + STEP * np.arange(kmax + 1)
    first_hit = []
    for pts, _, sign in gm.fingers:
        moved = pts[None, :, :] + (sign * travel)[:, None, None] * np.array([1.0, 0.0, 0.0])
        world = r + moved @ rot.T
        hit = scene.occupied(world).any(axis=1)
        if hit[0]:
            raise PenetrationError("gripper overlaps the target before closing")
        first_hit.append(int(np.argmax(hit)) if hit.any() else None)
    # steps each finger may take before the fingers would meet
    stops = [k - 1 if k is not None else kmax for k in first_hit]
    if stops[0] + stops[1] > kmax:
        if first_hit[0] is None and first_hit[1] is None:
            stops = [kmax // 2, kmax - kmax // 2]
        elif first_hit[0] is None:
            stops[0] = kmax - stops[1]
        elif first_hit[1] is None:
            stops[1] = kmax - stops[0]
    out = []
    for (_, face, sign), k in zip(gm.fingers, stops):
        t = travel[k]
        world = r + (face + sign * t * np.array([1.0, 0.0, 0.0])) @ rot.T
        out.append((world, sign * rot[:, 0]))
    return out


def contacts_from_fingers(scene: TargetScene, fingers) -> ContactSet:
    pos, nor = [], []
    for pts, direction in fingers:
        d2 = ((scene.surface[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
        near = d2.min(axis=1) < CONTACT_RADIUS**2
        if not near.any():
            continue
        # face whose outward normal most opposes the finger's travel
        score = np.where(scene.exposed[near], _FACES @ direction, np.inf)
        face = np.argmin(score, axis=1)
        outward = _FACES[face]
        pos.append((scene.surface[near] + 0.5 * outward) * VOXEL_EDGE)
        nor.append(-outward)
    if not pos:
        return ContactSet()
    positions, normals = np.concatenate(pos), np.concatenate(nor)
    mu = np.full(len(positions), min(scene.mu, GRIPPER_MU))
    return ContactSet(positions, normals, mu)


def extract_contacts(target: TargetSample, gripper: GripperSample, pose: Pose) -> ContactSet:
    scene = TargetScene(target)
    return contacts_from_fingers(scene, close_fingers(scene, GripperModel(gripper), pose))


def _pair_angles(c: ContactSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cosines between each pair's connecting line and both inward normals."""
    d = c.positions[None, :, :] - c.positions[:, None, :]  # i -> j
    length = np.linalg.norm(d, axis=-1)
    safe = np.where(length > 0, length, 1.0)
    u = d / safe[..., None]
    cos_i = np.einsum("ijk,ik->ij", u, c.normals)
    cos_j = -np.einsum("ijk,jk->ij", u, c.normals)
    return cos_i, cos_j, length > 0


def antipodal_pairs(c: ContactSet) -> np.ndarray:
    """Boolean matrix of pairs whose connecting line lies in both friction cones."""
    if len(c) < 2:
        return np.zeros((len(c), len(c)), dtype=bool)
    cos_i, cos_j, distinct = _pair_angles(c)
    lim = np.cos(np.arctan(c.mu))
    return distinct & (cos_i >= lim[:, None]) & (cos_j >= lim[None, :])


def force_closure(contacts: ContactSet) -> bool:
    return bool(antipodal_pairs(contacts).any())


def lift_capacity_ok(mu: float, squeeze_force: float, mass: float) -> bool:
    return 2.0 * mu * squeeze_force >= SAFETY_FACTOR * mass * GRAVITY


def stability(scene: TargetScene, c: ContactSet, pairs: np.ndarray) -> float:
    ii, jj = np.nonzero(np.triu(pairs | pairs.T, 1))
    if len(ii) == 0:
        return 0.0
    cos_i, cos_j, _ = _pair_angles(c)
    half = np.arctan(c.mu[0])
    ang = np.maximum(np.arccos(np.clip(cos_i[ii, jj], -1, 1)), np.arccos(np.clip(cos_j[ii, jj], -1, 1)))
    margin = np.clip(1.0 - ang / half, 0.0, 1.0)
    p_i, p_j = c.positions[ii] / VOXEL_EDGE, c.positions[jj] / VOXEL_EDGE
    u = p_j - p_i
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    a = np.abs(u @ scene.axes.T).max(axis=1)
    align = np.clip((a - 1 / np.sqrt(3)) / (1 - 1 / np.sqrt(3)), 0.0, 1.0)
    w = scene.com - p_i
    dist = np.linalg.norm(w - (w * u).sum(axis=1, keepdims=True) * u, axis=1)
    close = np.maximum(0.0, 1.0 - dist / scene.radius)
    return float((margin * align * close).max())


def evaluate_contacts(scene: TargetScene, c: ContactSet, squeeze_force: float) -> GraspOutcome:
    pairs = antipodal_pairs(c)
    closure = bool(pairs.any())
    mu = float(c.mu[0]) if len(c) else min(scene.mu, GRIPPER_MU)
    lifted = len(c) >= 2 and closure and lift_capacity_ok(mu, squeeze_force, scene.mass)
    stab = stability(scene, c, pairs) if lifted else 0.0
    return GraspOutcome(lifted, stab, float(squeeze_force), len(c), True, closure)


def simulate_grasp(target: TargetSample, gripper: GripperSample, pose: Pose,
                   squeeze_force: float = SQUEEZE_FORCE) -> GraspOutcome:
    scene = TargetScene(target)
    c = contacts_from_fingers(scene, close_fingers(scene, GripperModel(gripper), pose))
    return evaluate_contacts(scene, c, squeeze_force)


def grasp_quality(outcome: GraspOutcome, force_cap: float = FORCE_CAP) -> float:
    economy = 1.0 - min(1.0, outcome.applied_force / force_cap)
    return W_LIFT * float(outcome.lifted) + W_STABLE * outcome.stability + W_FORCE * economy


class GraspEvaluator:
    """Caches the target/gripper preprocessing for repeated poses; invalid poses score 0."""

    def __init__(self, target: TargetSample, gripper: GripperSample, squeeze_force: float = SQUEEZE_FORCE):
        self.scene = TargetScene(target)
        self.gm = GripperModel(gripper)
        self.squeeze_force = squeeze_force

    def outcome(self, pose: Pose) -> GraspOutcome:
        try:
            fingers = close_fingers(self.scene, self.gm, pose)
        except PenetrationError:
            return INVALID
        return evaluate_contacts(self.scene, contacts_from_fingers(self.scene, fingers), self.squeeze_force)

    def __call__(self, pose: Pose) -> tuple[float, GraspOutcome]:
        out = self.outcome(pose)
        return (grasp_quality(out) if out.valid else 0.0), out
