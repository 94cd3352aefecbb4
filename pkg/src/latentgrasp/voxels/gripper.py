"""Two-finger fingertip geometry in the gripper frame.

Grid axes: x is the closing axis (left finger at low x, right finger at high
x), z the approach axis. Each finger is a pad spanning ``PAD_Y`` x ``PAD_Z``
whose inner face is offset per (y, z) column by the contact profile.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import pose as quat
from .physics import RESOLUTION, VOXEL_EDGE, inertia_tensor
from .pose import Pose

N = RESOLUTION
PAD_Y = (4, 12)
PAD_Z = (2, 14)
BASE_THICKNESS = 3  # left finger occupies x in [0, 3), right in [N-3, N)
MAX_OFFSET = 2
MAX_AMPLITUDE = 2.0
JITTER_POS_VOXELS = 1.0
JITTER_ROT_DEG = 10.0


class Fingertip(IntEnum):
    flat = 0
    curved = 1
    v_groove = 2


@dataclass(frozen=True)
class PreGrasp:
    """Reference for the canonical pose: target COM (voxels from grid center) and closing axis."""

    com: tuple[float, float, float]
    axis: int

    @classmethod
    def nominal(cls) -> "PreGrasp":
        return cls((0.0, 0.0, 0.0), 0)

    @classmethod
    def for_target(cls, grid: np.ndarray) -> "PreGrasp":
        _, com, _ = inertia_tensor(grid)
        occ = np.argwhere(grid > 0.5)
        extent = np.ptp(occ, axis=0) + 1
        # fingers straddle the COM across the thinnest bounding-box extent
        return cls(tuple(float(c) for c in com / VOXEL_EDGE), int(np.argmin(extent)))


@dataclass(frozen=True)
class GripperProvenance:
    fingertip: Fingertip
    amplitude: float
    reference: PreGrasp
    seed: int

    def flat_params(self) -> list[float]:
        return [self.amplitude, *self.reference.com, float(self.reference.axis)]

    @classmethod
    def from_flat(cls, fingertip: int, flat, seed: int) -> "GripperProvenance":
        flat = [float(x) for x in flat]
        return cls(Fingertip(fingertip), flat[0], PreGrasp(tuple(flat[1:4]), int(flat[4])), int(seed))


@dataclass(frozen=True, eq=False)
class GripperSample:
    grid: np.ndarray
    pose: Pose
    provenance: GripperProvenance

    @property
    def contact_profile(self) -> np.ndarray:
        """Per-column inner-face offsets ``(2, ny, nz)`` relative to the flat base plane."""
        return surface_offsets(self.grid)

    def __eq__(self, other) -> bool:
        return (isinstance(other, GripperSample) and np.array_equal(self.grid, other.grid)
                and self.pose == other.pose and self.provenance == other.provenance)

    __hash__ = None


def base_profile(fingertip: Fingertip) -> np.ndarray:
    """Inner-face offsets of the unperturbed primitive, shape ``(ny, nz)``."""
    ys = np.arange(*PAD_Y) + 0.5
    nz = PAD_Z[1] - PAD_Z[0]
    cy = (PAD_Y[0] + PAD_Y[1]) / 2
    if fingertip is Fingertip.flat:
        row = np.zeros(len(ys))
    elif fingertip is Fingertip.curved:
        half = (PAD_Y[1] - PAD_Y[0]) / 2
        row = np.round(2.0 * (1.0 - ((ys - cy) / half) ** 2))
    else:
        row = np.clip(np.floor(np.abs(ys - cy) + 0.5) - 2, -2, 1)
    return np.repeat(row[:, None], nz, axis=1).astype(int)


def build_grid(offsets: np.ndarray) -> np.ndarray:
    """Voxelize both fingers from per-finger offsets ``(2, ny, nz)``."""
    grid = np.zeros((N, N, N))
    y0, y1 = PAD_Y
    z0, z1 = PAD_Z
    for j, y in enumerate(range(y0, y1)):
        for k, z in enumerate(range(z0, z1)):
            t_left = BASE_THICKNESS + int(offsets[0, j, k])
            t_right = BASE_THICKNESS + int(offsets[1, j, k])
            grid[:t_left, y, z] = 1.0
            grid[N - t_right:, y, z] = 1.0
    return grid


def surface_offsets(grid: np.ndarray) -> np.ndarray:
    y0, y1 = PAD_Y
    z0, z1 = PAD_Z
    pads = grid[:, y0:y1, z0:z1] > 0.5
    left = pads[: N // 2].sum(axis=0) - BASE_THICKNESS
    right = pads[N // 2:].sum(axis=0) - BASE_THICKNESS
    return np.stack([left, right]).astype(int)


def aperture(grid: np.ndarray) -> int:
    """Smallest free gap between the two fingers along the closing axis, in voxels."""
    off = surface_offsets(grid)
    return int(N - 2 * BASE_THICKNESS - (off[0] + off[1]).max())


def canonical_pose(ref: PreGrasp) -> Pose:
    r = np.asarray(ref.com) * VOXEL_EDGE
    if ref.axis == 0:
        q = np.array([1.0, 0.0, 0.0, 0.0])
    elif ref.axis == 1:
        q = quat.from_axis_angle([0, 0, 1], np.pi / 2)  # local x -> y
    else:
        q = quat.from_axis_angle([0, 1, 0], -np.pi / 2)  # local x -> z
    return Pose.make(r, q)


def jittered_pose(ref: PreGrasp, rng: np.random.Generator) -> Pose:
    base = canonical_pose(ref)
    r = base.r + rng.normal(0.0, JITTER_POS_VOXELS, 3) * VOXEL_EDGE
    q = quat.multiply(quat.random_small(rng, np.radians(JITTER_ROT_DEG)), base.q)
    return Pose.make(r, q)


def generate_gripper(base_fingertip, perturbation_amplitude: float, rng_seed: int,
                     reference: PreGrasp | None = None) -> GripperSample:
    fingertip = Fingertip(base_fingertip)
    amp = float(perturbation_amplitude)
    if not 0.0 <= amp <= MAX_AMPLITUDE:
        raise ValueError(f"perturbation amplitude {amp} outside [0, {MAX_AMPLITUDE}] voxels")
    reference = reference or PreGrasp.nominal()
    rng = np.random.default_rng(rng_seed)
    base = base_profile(fingertip)
    noise = np.rint(rng.uniform(-amp, amp, (2,) + base.shape)).astype(int)
    offsets = np.clip(base[None] + noise, -MAX_OFFSET, MAX_OFFSET)
    grid = build_grid(offsets)
    if aperture(grid) <= 0:
        raise ValueError("perturbed fingertips close the aperture")
    pose = jittered_pose(reference, rng)
    return GripperSample(grid, pose, GripperProvenance(fingertip, amp, reference, int(rng_seed)))


def regenerate(prov: GripperProvenance) -> GripperSample:
    return generate_gripper(prov.fingertip, prov.amplitude, prov.seed, prov.reference)
