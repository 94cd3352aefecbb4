"""Procedural target objects with machining-like features."""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import pose as quat
from .physics import (
    PLA_DENSITY, RESOLUTION, PhysicalProperties, compute_physical_properties, scale_properties,
)
from ..seeding import derive_seed

N = RESOLUTION
FRICTION_RANGE = (0.3, 0.6)


class ShapeFamily(IntEnum):
    box = 0
    cylinder = 1
    sphere = 2
    l_bracket = 3
    slotted_block = 4
    through_hole_block = 5


PARAM_NAMES = {
    ShapeFamily.box: ("ex", "ey", "ez"),
    ShapeFamily.cylinder: ("radius", "height"),
    ShapeFamily.sphere: ("radius",),
    ShapeFamily.l_bracket: ("leg_a", "leg_b", "thickness", "depth"),
    ShapeFamily.slotted_block: ("ex", "ey", "ez", "slot_width", "slot_depth"),
    ShapeFamily.through_hole_block: ("ex", "ey", "ez", "hole_radius"),
}


@dataclass(frozen=True)
class Perturbation:
    rotation: tuple[float, float, float, float]
    scale: float
    translation: tuple[float, float, float]  # voxels

    def vector(self) -> list[float]:
        return [*self.rotation, self.scale, *self.translation]

    @classmethod
    def from_vector(cls, v) -> "Perturbation":
        v = [float(x) for x in v]
        return cls(tuple(v[:4]), v[4], tuple(v[5:8]))


@dataclass(frozen=True)
class Provenance:
    family: ShapeFamily
    params: tuple[float, ...]
    seed: int
    perturbation: Perturbation | None = None

    def flat_params(self) -> list[float]:
        extra = self.perturbation.vector() if self.perturbation else []
        return [*self.params, *extra]

    @classmethod
    def from_flat(cls, family: int, flat, seed: int) -> "Provenance":
        fam = ShapeFamily(family)
        k = len(PARAM_NAMES[fam])
        flat = [float(x) for x in flat]
        pert = Perturbation.from_vector(flat[k:]) if len(flat) > k else None
        return cls(fam, tuple(flat[:k]), int(seed), pert)


@dataclass(frozen=True, eq=False)
class TargetSample:
    grid: np.ndarray  # (16, 16, 16) float64 in {0, 1}
    props: PhysicalProperties
    provenance: Provenance

    def __eq__(self, other) -> bool:
        return (isinstance(other, TargetSample) and np.array_equal(self.grid, other.grid)
                and self.props == other.props and self.provenance == other.provenance)

    __hash__ = None


def _centers() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # voxel-center coordinates relative to the grid center, in voxels
    c = np.arange(N) + 0.5 - N / 2
    return np.meshgrid(c, c, c, indexing="ij")


def _box(x, y, z, ex, ey, ez, cx=0.0, cy=0.0, cz=0.0):
    return (np.abs(x - cx) < ex / 2) & (np.abs(y - cy) < ey / 2) & (np.abs(z - cz) < ez / 2)


def _check_params(family: ShapeFamily, p: tuple[float, ...]) -> None:
    names = PARAM_NAMES[family]
    if len(p) != len(names):
        raise ValueError(f"{family.name} expects params {names}, got {len(p)} values")
    for name, v in zip(names, p):
        if not np.isfinite(v) or v <= 0:
            raise ValueError(f"{family.name}: degenerate parameter {name}={v}")
    if family is ShapeFamily.cylinder:
        lim = (2 * p[0], p[1])
    elif family is ShapeFamily.sphere:
        lim = (2 * p[0],)
    elif family is ShapeFamily.l_bracket:
        lim = (p[0], p[1], p[3])
    else:
        lim = p[:3]
    if max(lim) > N:
        raise ValueError(f"{family.name}: params {p} do not fit the {N}^3 grid")
    if family is ShapeFamily.l_bracket and p[2] >= min(p[0], p[1]):
        raise ValueError("l_bracket: thickness must be below both leg lengths")
    if family is ShapeFamily.slotted_block and (p[3] >= p[0] or p[4] >= p[2]):
        raise ValueError("slotted_block: slot must be narrower and shallower than the block")
    if family is ShapeFamily.through_hole_block and 2 * p[3] >= min(p[0], p[1]):
        raise ValueError("through_hole_block: hole wider than the block")


def voxelize(family: ShapeFamily, params) -> np.ndarray:
    family = ShapeFamily(family)
    p = tuple(float(v) for v in params)
    _check_params(family, p)
    x, y, z = _centers()
    if family is ShapeFamily.box:
        occ = _box(x, y, z, *p)
    elif family is ShapeFamily.cylinder:
        r, h = p
        occ = (x**2 + y**2 < r**2) & (np.abs(z) < h / 2)
    elif family is ShapeFamily.sphere:
        occ = x**2 + y**2 + z**2 < p[0] ** 2
    elif family is ShapeFamily.l_bracket:
        a, b, t, d = p
        # two plates sharing the corner at (-a/2, -b/2), extruded along z
        x0, y0 = -a / 2, -b / 2
        foot = (x >= x0) & (x < x0 + a) & (y >= y0) & (y < y0 + t)
        wall = (x >= x0) & (x < x0 + t) & (y >= y0) & (y < y0 + b)
        occ = (foot | wall) & (np.abs(z) < d / 2)
    elif family is ShapeFamily.slotted_block:
        ex, ey, ez, sw, sd = p
        slot = (np.abs(x) < sw / 2) & (z > ez / 2 - sd)
        occ = _box(x, y, z, ex, ey, ez) & ~slot
    else:
        ex, ey, ez, hr = p
        occ = _box(x, y, z, ex, ey, ez) & ~(x**2 + y**2 < hr**2)
    grid = occ.astype(np.float64)
    if not grid.any():
        raise ValueError(f"{family.name} with params {p} occupies no voxel")
    return grid


def sample_params(family: ShapeFamily, rng: np.random.Generator) -> tuple[float, ...]:
    """Random parameters inside the family bounds; one extent is kept gripper-sized."""
    u = rng.uniform
    family = ShapeFamily(family)
    if family is ShapeFamily.box:
        return (u(3, 6), u(5, 13), u(5, 13))
    if family is ShapeFamily.cylinder:
        return (u(2, 3.5), u(6, 14))
    if family is ShapeFamily.sphere:
        return (u(2.5, 4),)
    if family is ShapeFamily.l_bracket:
        return (u(6, 13), u(6, 13), u(2, 4), u(3, 6))
    if family is ShapeFamily.slotted_block:
        ex, ez = u(8, 13), u(6, 12)
        return (ex, u(4, 7), ez, u(2, 4), u(2, ez / 2))
    return (u(8, 13), u(8, 13), u(3, 6), u(1.5, 3))


def generate_target(family, params, rng_seed: int, density: float = PLA_DENSITY) -> TargetSample:
    family = ShapeFamily(family)
    grid = voxelize(family, params)
    mu = float(np.random.default_rng(rng_seed).uniform(*FRICTION_RANGE))
    props = compute_physical_properties(grid, density, mu)
    prov = Provenance(family, tuple(float(v) for v in params), int(rng_seed))
    return TargetSample(grid, props, prov)


def resample(grid: np.ndarray, rotation, scale: float, translation) -> np.ndarray:
    """Nearest-neighbor resampling of a rotated/scaled/translated grid.

    Raises if any occupied source voxel maps outside the grid.
    """
    rot = quat.to_matrix(rotation)
    t = np.asarray(translation, dtype=np.float64)
    src = np.argwhere(grid > 0.5) + 0.5 - N / 2
    mapped = scale * src @ rot.T + t
    if np.any(mapped < -N / 2) or np.any(mapped >= N / 2):
        raise ValueError("perturbed shape is clipped by the grid boundary")
    x, y, z = _centers()
    out_pts = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    back = ((out_pts - t) @ rot) / scale  # inverse rotation is the transpose
    idx = np.floor(back + N / 2).astype(int)
    inside = np.all((idx >= 0) & (idx < N), axis=1)
    occ = np.zeros(len(out_pts))
    ii = idx[inside]
    occ[inside] = grid[ii[:, 0], ii[:, 1], ii[:, 2]]
    out = occ.reshape(N, N, N)
    if not out.any():
        raise ValueError("perturbed shape vanished after resampling")
    return out


def perturb_sample(sample: TargetSample, rotation, scale: float, translation) -> TargetSample:
    if not 0.7 <= scale <= 1.3:
        raise ValueError(f"scale {scale} outside [0.7, 1.3]")
    if sample.provenance.perturbation is not None:
        raise ValueError("sample is already perturbed")
    rotation = quat.canonical(rotation)
    grid = resample(sample.grid, rotation, scale, translation)
    props = scale_properties(sample.props, scale, rotation)
    pert = Perturbation(tuple(float(v) for v in rotation), float(scale), tuple(float(v) for v in translation))
    prov = Provenance(sample.provenance.family, sample.provenance.params, sample.provenance.seed, pert)
    return TargetSample(grid, props, prov)


def regenerate(prov: Provenance, density: float = PLA_DENSITY) -> TargetSample:
    base = generate_target(prov.family, prov.params, prov.seed, density)
    if prov.perturbation is None:
        return base
    p = prov.perturbation
    return perturb_sample(base, p.rotation, p.scale, p.translation)


def _right_angle_rotations() -> list[np.ndarray]:
    out = []
    for axis in np.eye(3):
        for k in range(4):
            out.append(quat.from_axis_angle(axis, k * np.pi / 2))
    # the 24 proper rotations of the cube, deduplicated by matrix
    mats = {}
    for a in out:
        for b in out:
            q = quat.normalize(quat.multiply(a, b))
            key = tuple(np.round(quat.to_matrix(q), 6).ravel())
            mats.setdefault(key, q)
    return list(mats.values())


CUBE_ROTATIONS = _right_angle_rotations()


def random_perturbation(rng: np.random.Generator, max_tilt_deg: float = 15.0,
                        max_shift: float = 2.0) -> tuple[np.ndarray, float, np.ndarray]:
    base = CUBE_ROTATIONS[rng.integers(len(CUBE_ROTATIONS))]
    tilt = quat.random_small(rng, np.radians(max_tilt_deg))
    rot = quat.normalize(quat.multiply(tilt, base))
    return rot, float(rng.uniform(0.7, 1.3)), rng.uniform(-max_shift, max_shift, 3)


def build_targets(n_base: int, per_base: int, master_seed: int, max_tries: int = 50) -> list[TargetSample]:
    """``n_base`` procedural objects, each perturbed ``per_base`` times.

    Sample ``i`` draws only from streams keyed by ``(master_seed, i)``, so any
    subset can be regenerated independently.
    """
    if n_base < 1 or per_base < 1:
        raise ValueError("dataset counts must be positive")
    out = []
    families = list(ShapeFamily)
    for b in range(n_base):
        base_seed = derive_seed(master_seed, "target-base", b)
        brng = np.random.default_rng(base_seed)
        family = families[b % len(families)]
        base = generate_target(family, sample_params(family, brng), base_seed)
        for j in range(per_base):
            prng = np.random.default_rng(derive_seed(master_seed, "target-perturb", b, j))
            for _ in range(max_tries):
                rot, s, t = random_perturbation(prng)
                try:
                    out.append(perturb_sample(base, rot, s, t))
                    break
                except ValueError:
                    continue
            else:
                raise RuntimeError(f"could not place perturbation {j} of base object {b}")
    return out
