from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RESOLUTION = 16
CUBE_EDGE = 0.10  # m, bounding cube of every sample
VOXEL_EDGE = CUBE_EDGE / RESOLUTION
PLA_DENSITY = 1250.0  # kg/m^3
GRAVITY = 9.81


@dataclass(frozen=True)
class PhysicalProperties:
    mass: float
    principal_moments: tuple[float, float, float]  # ascending
    friction_mu: float

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not 0.05 <= self.friction_mu <= 1.5:
            raise ValueError(f"friction coefficient {self.friction_mu} outside [0.05, 1.5]")

    def vector(self) -> np.ndarray:
        return np.array([self.mass, *self.principal_moments, self.friction_mu])

    @classmethod
    def from_vector(cls, v) -> "PhysicalProperties":
        v = [float(x) for x in v]
        return cls(v[0], (v[1], v[2], v[3]), v[4])


def voxel_centers(grid: np.ndarray, voxel_edge: float = VOXEL_EDGE) -> np.ndarray:
    """Occupied voxel centers in meters, relative to the grid center."""
    n = grid.shape[0]
    idx = np.argwhere(grid > 0.5).astype(np.float64)
    return (idx + 0.5 - n / 2) * voxel_edge


def inertia_tensor(grid: np.ndarray, density: float = PLA_DENSITY, voxel_edge: float = VOXEL_EDGE):
    """Mass, center of mass and inertia tensor about it (point mass per voxel)."""
    pts = voxel_centers(grid, voxel_edge)
    if len(pts) == 0:
        raise ValueError("empty grid has no mass")
    m_vox = density * voxel_edge**3
    mass = m_vox * len(pts)
    com = pts.mean(axis=0)
    d = pts - com
    sq = np.einsum("ij,ij->i", d, d)
    tensor = m_vox * (np.eye(3) * sq.sum() - d.T @ d)
    return mass, com, tensor


def compute_physical_properties(grid: np.ndarray, density: float = PLA_DENSITY,
                                friction_mu: float = 0.45, voxel_edge: float = VOXEL_EDGE) -> PhysicalProperties:
    mass, _, tensor = inertia_tensor(grid, density, voxel_edge)
    moments = np.linalg.eigvalsh(tensor)
    moments = np.clip(moments, 0.0, None)  # eigvalsh can return -1e-20 for a point mass
    return PhysicalProperties(float(mass), tuple(float(x) for x in moments), float(friction_mu))


def scale_properties(props: PhysicalProperties, scale: float, rotation=None) -> PhysicalProperties:
    """Mass goes with scale^3, moments with scale^5; a rotation leaves the principal moments unchanged."""
    mass = props.mass * scale**3
    tensor = np.diag(props.principal_moments) * scale**5
    if rotation is not None:
        from .pose import to_matrix
        rot = to_matrix(rotation)
        tensor = rot @ tensor @ rot.T
    moments = np.clip(np.linalg.eigvalsh(tensor), 0.0, None)
    return PhysicalProperties(float(mass), tuple(float(x) for x in moments), props.friction_mu)
