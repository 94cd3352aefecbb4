from .physics import (
    CUBE_EDGE, PLA_DENSITY, RESOLUTION, VOXEL_EDGE, PhysicalProperties,
    compute_physical_properties, inertia_tensor, scale_properties,
)
from .pose import Pose
from .shapes import (
    Perturbation, Provenance, ShapeFamily, TargetSample, build_targets, generate_target,
    perturb_sample, regenerate,
)
from .gripper import Fingertip, GripperSample, PreGrasp, generate_gripper
from .dataset import LatentPair, build_grippers, dataset_read, dataset_write

__all__ = [
    "CUBE_EDGE", "PLA_DENSITY", "RESOLUTION", "VOXEL_EDGE", "PhysicalProperties",
    "compute_physical_properties", "inertia_tensor", "scale_properties", "Pose",
    "Perturbation", "Provenance", "ShapeFamily", "TargetSample", "build_targets",
    "generate_target", "perturb_sample", "regenerate", "Fingertip", "GripperSample",
    "PreGrasp", "generate_gripper", "LatentPair", "build_grippers", "dataset_read",
    "dataset_write",
]
