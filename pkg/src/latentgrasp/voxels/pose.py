"""Unit quaternions ``[w, x, y, z]`` and gripper poses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

QUAT_TOL = 1e-6


def normalize(q) -> np.ndarray:
    """Unit length with the canonical sign ``w >= 0``."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if not n > 0:
        raise ValueError("cannot normalize a zero quaternion")
    q = q / n
    if q[0] < 0:
        q = -q
    return q


def canonical(q) -> np.ndarray:
    """Like :func:`normalize`, but leaves an already-unit quaternion's bits alone."""
    q = np.asarray(q, dtype=np.float64)
    if abs(np.linalg.norm(q) - 1.0) > 1e-12:
        return normalize(q)
    return -q if q[0] < 0 else q.copy()


def multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def conjugate(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=np.float64)


def from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])


def to_matrix(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def angle_between(a, b) -> float:
    """Geodesic rotation angle (radians) between two orientations."""
    d = abs(float(np.dot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return 2.0 * float(np.arccos(min(1.0, d)))


def random_unit(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation (Shoemake)."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1 - u1), np.sqrt(u1)
    q = np.array([a * np.sin(2 * np.pi * u2), a * np.cos(2 * np.pi * u2),
                  b * np.sin(2 * np.pi * u3), b * np.cos(2 * np.pi * u3)])
    return normalize(q[[3, 0, 1, 2]])


def random_small(rng: np.random.Generator, max_angle: float) -> np.ndarray:
    axis = rng.normal(size=3)
    return from_axis_angle(axis, rng.uniform(0.0, max_angle))


@dataclass(frozen=True, eq=False)
class Pose:
    """Gripper pose in the target frame: position ``r`` (m) and orientation ``q``."""

    r: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=np.float64).reshape(3)
        q = np.asarray(self.q, dtype=np.float64).reshape(4)
        if abs(np.linalg.norm(q) - 1.0) > QUAT_TOL:
            raise ValueError(f"quaternion not unit length (norm {np.linalg.norm(q):.9f})")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "q", q)

    @classmethod
    def make(cls, r, q) -> "Pose":
        return cls(r, normalize(q))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_vector(cls, v) -> "Pose":
        v = np.asarray(v, dtype=np.float64)
        return cls.make(v[:3], v[3:7])

    def vector(self) -> np.ndarray:
        return np.concatenate([self.r, self.q])

    def __eq__(self, other) -> bool:
        return isinstance(other, Pose) and np.array_equal(self.r, other.r) and np.array_equal(self.q, other.q)

    def __hash__(self):
        return hash(self.vector().tobytes())
