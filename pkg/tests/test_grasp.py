import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latentgrasp.grasp import (
    GRIPPER_MU, ContactSet, GraspEvaluator, GraspOutcome, PenetrationError, TargetScene, evaluate_contacts,
    extract_contacts, force_closure, grasp_quality, lift_capacity_ok, simulate_grasp,
)
from latentgrasp.voxels import pose as quat
from latentgrasp.voxels.gripper import Fingertip, PreGrasp, canonical_pose, generate_gripper, jittered_pose
from latentgrasp.voxels.physics import VOXEL_EDGE
from latentgrasp.voxels.pose import Pose
from latentgrasp.voxels.shapes import ShapeFamily, build_targets, generate_target


def brute_force_closure(c: ContactSet) -> bool:
    """Pairwise cone containment measured with explicit angles."""
    n = len(c)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d = c.positions[j] - c.positions[i]
            L = math.sqrt(float(d @ d))
            if L == 0:
                continue
            a_i = math.acos(max(-1.0, min(1.0, float(d @ c.normals[i]) / L)))
            a_j = math.acos(max(-1.0, min(1.0, float(-d @ c.normals[j]) / L)))
            if a_i <= math.atan(c.mu[i]) and a_j <= math.atan(c.mu[j]):
                return True
    return False


def contacts(pos, nrm, mu):
    nrm = np.asarray(nrm, dtype=float)
    nrm = nrm / np.linalg.norm(nrm, axis=1, keepdims=True)
    return ContactSet(np.asarray(pos, dtype=float), nrm, np.full(len(pos), float(mu)))


@pytest.fixture(scope="module")
def slab():
    return generate_target(ShapeFamily.box, (4, 10, 10), 0)


@pytest.fixture(scope="module")
def flat():
    return generate_gripper(Fingertip.flat, 0.0, 0)


# force closure

def test_opposing_collinear_contacts_close():
    c = contacts([[-1, 0, 0], [1, 0, 0]], [[1, 0, 0], [-1, 0, 0]], 0.5)
    assert force_closure(c)


def test_forty_five_degrees_outside_narrow_cone():
    s = math.sqrt(0.5)
    c = contacts([[-1, 0, 0], [1, 0, 0]], [[s, s, 0], [-s, s, 0]], 0.3)
    assert not force_closure(c)
    # the same geometry closes once the cone exceeds 45 degrees
    c.mu[:] = 1.1
    assert force_closure(c)


def test_single_contact_never_closes():
    assert not force_closure(contacts([[0, 0, 0]], [[1, 0, 0]], 1.0))
    assert not force_closure(ContactSet())


def test_coincident_contacts_ignored():
    c = contacts([[0, 0, 0], [0, 0, 0]], [[1, 0, 0], [-1, 0, 0]], 1.0)
    assert not force_closure(c)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40))
def test_closure_matches_brute_force(seed, n):
    rng = np.random.default_rng(seed)
    pos = rng.normal(size=(n, 3))
    nrm = rng.normal(size=(n, 3))
    c = contacts(pos, nrm, rng.uniform(0.05, 1.5))
    c.mu = rng.uniform(0.05, 1.5, n)
    assert force_closure(c) == brute_force_closure(c)


# lift arithmetic

def test_lift_inequality_cases():
    assert lift_capacity_ok(0.5, 10.0, 0.1)
    assert not lift_capacity_ok(0.05, 1.0, 1.0)
    # boundary: capacity exactly equal to the requirement lifts
    m = 2 * 0.5 * 10.0 / (1.2 * 9.81)
    assert lift_capacity_ok(0.5, 10.0, m * (1 - 1e-12))


# quality

def test_quality_cases():
    assert grasp_quality(GraspOutcome(False, 0.0, 20.0, 0)) <= 0.1
    assert grasp_quality(GraspOutcome(True, 1.0, 0.0, 2)) == pytest.approx(1.0)
    assert grasp_quality(GraspOutcome(True, 0.5, 40.0, 2)) == pytest.approx(0.75)
    assert grasp_quality(GraspOutcome(True, 0.5, 80.0, 2)) == pytest.approx(0.75)


# contact extraction

def test_flat_fingers_on_slab_touch_two_opposing_faces(slab, flat):
    c = extract_contacts(slab, flat, Pose.identity())
    assert len(c) > 0
    assert np.allclose(np.linalg.norm(c.normals, axis=1), 1.0, atol=1e-9)
    faces = {tuple(np.round(n).astype(int)) for n in c.normals}
    assert faces == {(1, 0, 0), (-1, 0, 0)}
    xs = np.unique(np.round(c.positions[:, 0] / VOXEL_EDGE, 9))
    assert set(xs) == {-2.0, 2.0}
    assert np.allclose(c.mu, min(slab.props.friction_mu, GRIPPER_MU))


def test_contact_positions_on_occupied_faces(slab, flat):
    c = extract_contacts(slab, flat, Pose.identity())
    scene = TargetScene(slab)
    # stepping half a voxel inward along the normal lands inside the target
    inside = c.positions / VOXEL_EDGE + 0.5 * c.normals
    assert scene.occupied(inside).all()
    outside = c.positions / VOXEL_EDGE - 0.5 * c.normals
    assert not scene.occupied(outside).any()


def test_far_gripper_has_no_contacts(slab, flat):
    far = Pose.make([0.0, 0.0, 0.09], [1, 0, 0, 0])
    c = extract_contacts(slab, flat, far)
    assert len(c) == 0
    out = simulate_grasp(slab, flat, far)
    assert not out.lifted and out.stability == 0.0 and out.contact_count == 0


def test_penetrating_pose_rejected(flat):
    wide = generate_target(ShapeFamily.box, (16, 10, 10), 0)
    with pytest.raises(PenetrationError):
        extract_contacts(wide, flat, Pose.identity())
    q, out = GraspEvaluator(wide, flat)(Pose.identity())
    assert q == 0.0 and not out.valid


def test_slab_grasp_lifts(slab, flat):
    out = simulate_grasp(slab, flat, Pose.identity())
    assert out.lifted and out.closure
    assert 0.0 < out.stability <= 1.0
    assert out.applied_force == 20.0


def test_rotated_slab_grasp_lifts():
    # the canonical pose follows the thinnest extent onto the y axis
    t = generate_target(ShapeFamily.box, (10, 4, 10), 0)
    g = generate_gripper(Fingertip.flat, 0.0, 0)
    pose = canonical_pose(PreGrasp.for_target(t.grid))
    assert simulate_grasp(t, g, pose).lifted


def test_heavy_low_friction_target_slips(slab, flat):
    slick = dataclasses.replace(slab, props=dataclasses.replace(slab.props, friction_mu=0.05))
    out = simulate_grasp(slick, flat, Pose.identity(), squeeze_force=1.0)
    assert not out.lifted


def test_monotone_in_friction():
    targets = build_targets(6, 1, master_seed=4)
    g = generate_gripper(Fingertip.flat, 1.0, 3)
    rng = np.random.default_rng(0)
    flips = 0
    for t in targets:
        pose = jittered_pose(PreGrasp.for_target(t.grid), rng)
        prev = False
        for mu in (0.05, 0.1, 0.3, 0.5, 0.8, 1.2):
            tm = dataclasses.replace(t, props=dataclasses.replace(t.props, friction_mu=mu))
            out = GraspEvaluator(tm, g, squeeze_force=5.0).outcome(pose)
            if prev:
                assert out.lifted
            flips += out.lifted and not prev
            prev = out.lifted
    assert flips >= 3


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_quality_bounds_and_lift_implication(seed):
    rng = np.random.default_rng(seed)
    t = build_targets(1, 1, master_seed=seed % 1000)[0]
    g = generate_gripper(Fingertip(seed % 3), float(rng.uniform(0, 2)), seed)
    ev = GraspEvaluator(t, g)
    r = rng.normal(0, 2, 3) * VOXEL_EDGE
    pose = Pose.make(r, quat.random_unit(rng))
    q, out = ev(pose)
    assert 0.0 <= q <= 1.0
    if q >= 0.6:
        assert out.lifted
    if out.contact_count < 2:
        assert not out.lifted
    if not out.lifted:
        assert out.stability == 0.0


def test_evaluator_matches_simulate(slab, flat):
    ev = GraspEvaluator(slab, flat)
    pose = Pose.make([0.001, -0.002, 0.0], quat.from_axis_angle([0, 0, 1], 0.1))
    assert ev.outcome(pose) == simulate_grasp(slab, flat, pose)


def test_evaluate_contacts_requires_two(slab):
    scene = TargetScene(slab)
    one = contacts([[0, 0, 0]], [[1, 0, 0]], 0.5)
    out = evaluate_contacts(scene, one, 20.0)
    assert not out.lifted and out.stability == 0.0
