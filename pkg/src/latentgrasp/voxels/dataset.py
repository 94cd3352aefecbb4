"""``GGDS`` sample containers.

Little-endian layout::

    magic b"GGDS" | version u32 | kind u8 | resolution u16 | count u32
    per sample:
        occupancy bitset, n^3 bits padded to a byte (absent when n == 0)
        property block, f64 x PROPERTY_LEN[kind]
        provenance: spec u8 | param count u16 | params f64... | seed u64

kind 0 holds targets (mass, I1, I2, I3, mu), kind 1 grippers (r, q) and
kind 2 latent pairs (z_GT followed by the pair's pose).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Sequence

import numpy as np

from . import gripper as grip
from .gripper import GripperProvenance, GripperSample, PreGrasp
from .physics import RESOLUTION, PhysicalProperties
from .pose import Pose
from .shapes import Provenance, TargetSample
from ..seeding import derive_seed

MAGIC = b"GGDS"
VERSION = 1
LATENT_WIDTH = 80


class Kind(IntEnum):
    target = 0
    gripper = 1
    latent = 2


PROPERTY_LEN = {Kind.target: 5, Kind.gripper: 7, Kind.latent: LATENT_WIDTH + 7}


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LatentPair:
    """One AE3 training row: the concatenated latent and the pose it encodes."""

    z_gt: np.ndarray
    pose: np.ndarray
    target_index: int
    gripper_index: int
    seed: int

    def __eq__(self, other) -> bool:
        return (isinstance(other, LatentPair) and np.array_equal(self.z_gt, other.z_gt)
                and np.array_equal(self.pose, other.pose)
                and (self.target_index, self.gripper_index, self.seed)
                == (other.target_index, other.gripper_index, other.seed))

    __hash__ = None


def _kind_of(sample) -> Kind:
    if isinstance(sample, TargetSample):
        return Kind.target
    if isinstance(sample, GripperSample):
        return Kind.gripper
    if isinstance(sample, LatentPair):
        return Kind.latent
    raise TypeError(f"cannot serialize {type(sample).__name__}")


def _pack_sample(sample, kind: Kind) -> bytes:
    parts = []
    if kind is not Kind.latent:
        parts.append(np.packbits(sample.grid.reshape(-1) > 0.5).tobytes())
    if kind is Kind.target:
        block = sample.props.vector()
        spec, params, seed = int(sample.provenance.family), sample.provenance.flat_params(), sample.provenance.seed
    elif kind is Kind.gripper:
        block = sample.pose.vector()
        prov = sample.provenance
        spec, params, seed = int(prov.fingertip), prov.flat_params(), prov.seed
    else:
        block = np.concatenate([sample.z_gt, sample.pose])
        spec, params, seed = 0, [float(sample.target_index), float(sample.gripper_index)], sample.seed
    parts.append(np.asarray(block, dtype="<f8").tobytes())
    parts.append(struct.pack("<BH", spec, len(params)))
    parts.append(np.asarray(params, dtype="<f8").tobytes())
    parts.append(struct.pack("<Q", seed))
    return b"".join(parts)


def dumps(samples: Sequence) -> bytes:
    if len(samples) == 0:
        raise DatasetError("refusing to write an empty dataset")
    kind = _kind_of(samples[0])
    if any(_kind_of(s) is not kind for s in samples):
        raise DatasetError("all samples in one file must be the same kind")
    res = 0 if kind is Kind.latent else RESOLUTION
    head = MAGIC + struct.pack("<IBHI", VERSION, int(kind), res, len(samples))
    return head + b"".join(_pack_sample(s, kind) for s in samples)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise DatasetError(f"truncated dataset at byte offset {self.pos} (need {n} more bytes)")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(buf: bytes) -> list:
    rd = _Reader(buf)
    if rd.take(4) != MAGIC:
        raise DatasetError("bad magic at byte offset 0, expected b'GGDS'")
    version, kind, res, count = rd.unpack("<IBHI")
    if version != VERSION:
        raise DatasetError(f"unsupported dataset version {version} at byte offset 4")
    try:
        kind = Kind(kind)
    except ValueError:
        raise DatasetError(f"unknown sample kind {kind} at byte offset 8") from None
    nbits = res**3
    out = []
    for _ in range(count):
        grid = None
        if nbits:
            bits = np.frombuffer(rd.take((nbits + 7) // 8), dtype=np.uint8)
            grid = np.unpackbits(bits)[:nbits].reshape(res, res, res).astype(np.float64)
        block = np.frombuffer(rd.take(8 * PROPERTY_LEN[kind]), dtype="<f8").astype(np.float64)
        spec, nparams = rd.unpack("<BH")
        params = np.frombuffer(rd.take(8 * nparams), dtype="<f8").astype(np.float64)
        (seed,) = rd.unpack("<Q")
        if kind is Kind.target:
            out.append(TargetSample(grid, PhysicalProperties.from_vector(block), Provenance.from_flat(spec, params, seed)))
        elif kind is Kind.gripper:
            out.append(GripperSample(grid, Pose(block[:3], block[3:]), GripperProvenance.from_flat(spec, params, seed)))
        else:
            out.append(LatentPair(block[:LATENT_WIDTH].copy(), block[LATENT_WIDTH:].copy(), int(params[0]), int(params[1]), seed))
    if rd.pos != len(buf):
        raise DatasetError(f"trailing bytes after byte offset {rd.pos}")
    return out


def dataset_write(samples: Sequence, path: str | Path) -> None:
    Path(path).write_bytes(dumps(samples))


def dataset_read(path: str | Path) -> list:
    return loads(Path(path).read_bytes())


def build_grippers(n: int, targets: Sequence[TargetSample], master_seed: int) -> list[GripperSample]:
    """Fingertips cycling through the primitives; each pose is a jittered
    pre-grasp for a randomly chosen reference target."""
    if n < 1:
        raise ValueError("dataset counts must be positive")
    tips = list(grip.Fingertip)
    out = []
    for i in range(n):
        rng = np.random.default_rng(derive_seed(master_seed, "gripper", i))
        amp = float(rng.uniform(0.0, grip.MAX_AMPLITUDE))
        ref = PreGrasp.for_target(targets[int(rng.integers(len(targets)))].grid)
        out.append(grip.generate_gripper(tips[i % len(tips)], amp, derive_seed(master_seed, "gripper-sample", i), ref))
    return out
