import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latentgrasp.models import common
from latentgrasp.models.gripper import AE2, M_G, M_GEOM, ae2_loss, combined_accuracy, pose_errors, pose_features
from latentgrasp.models.joint import (
    AE3, M_GT, ae3_loss, build_latent_pairs, concat_latents, latent_accuracy, loss_parts, pair_loss,
    split_latents, train_ae3,
)
from latentgrasp.models.target import AE1, M_T, ae1_loss, train_ae1, voxel_accuracy
from latentgrasp.models.training import TrainConfig, TrainingDiverged, fit, split_indices
from latentgrasp.nn import Tensor, checkpoint, parameter
from latentgrasp.nn.gradcheck import check_gradients
from latentgrasp.voxels.dataset import build_grippers
from latentgrasp.voxels.gripper import Fingertip, generate_gripper
from latentgrasp.voxels.pose import Pose
from latentgrasp.voxels.shapes import ShapeFamily, build_targets, generate_target


@pytest.fixture(scope="module")
def targets():
    return build_targets(4, 2, master_seed=3)


@pytest.fixture(scope="module")
def grippers(targets):
    return build_grippers(6, targets, master_seed=3)


# voxel accuracy

def test_voxel_accuracy_fixtures():
    rng = np.random.default_rng(0)
    x = (rng.random((16, 16, 16)) > 0.5).astype(float)
    assert voxel_accuracy(x, x) == 100.0
    assert voxel_accuracy(x, 1 - x) == 0.0
    half = x.copy()
    half[:8] = 1 - half[:8]
    assert voxel_accuracy(x, half) == 50.0


def test_voxel_accuracy_shape_mismatch():
    with pytest.raises(ValueError):
        voxel_accuracy(np.zeros((16, 16, 16)), np.zeros((8, 8, 8)))


# AE1

def test_ae1_loss_perfect_and_complement():
    rng = np.random.default_rng(1)
    x = (rng.random((2, 1, 16, 16, 16)) > 0.7).astype(float)
    pn = rng.normal(size=(2, 5))
    assert ae1_loss(Tensor(x), Tensor(pn), Tensor(x), Tensor(pn)).item() == 0.0
    assert ae1_loss(Tensor(x), Tensor(pn), Tensor(1 - x), Tensor(pn)).item() == 1.0


def test_ae1_loss_gradcheck_outputs():
    rng = np.random.default_rng(2)
    x = Tensor((rng.random((2, 1, 4, 4, 4)) > 0.5).astype(float))
    pn = Tensor(rng.normal(size=(2, 5)))
    xh = parameter(rng.random((2, 1, 4, 4, 4)))
    ph = parameter(rng.normal(size=(2, 5)))
    assert check_gradients(lambda: ae1_loss(x, pn, xh, ph), [xh, ph]).passed


def _off_kink(m, seed=7):
    # zero biases put empty-region activations exactly on the relu kink
    rng = np.random.default_rng(seed)
    for name, p in m.named_parameters().items():
        if name.endswith(".b"):
            p.data += rng.normal(0, 0.05, p.data.shape)
    return m


def test_ae1_model_gradcheck(targets):
    m = _off_kink(AE1(seed=0))
    props = np.stack([t.props.vector() for t in targets[:2]])
    m.fit_normalization(props)
    x = common.as_batch(np.stack([t.grid for t in targets[:2]]))
    pn = Tensor(m.normalize(props))
    res = check_gradients(lambda: m.loss_t(x, pn)[0], m.parameters(), max_per_param=4,
                          rng=np.random.default_rng(0))
    assert res.passed, res


def test_ae1_encode_deterministic_and_finite(targets):
    m = AE1(seed=5)
    t = targets[0]
    a, b = m.encode(t.grid, t.props), m.encode(t.grid, t.props)
    assert a.shape == (M_T,)
    assert np.array_equal(a, b)
    assert np.all(np.isfinite(a))


def test_ae1_batched_encode_matches_single(targets):
    m = AE1(seed=5)
    grids = np.stack([t.grid for t in targets[:3]])
    props = np.stack([t.props.vector() for t in targets[:3]])
    z = m.encode(grids, props)
    assert np.allclose(z[1], m.encode(targets[1].grid, targets[1].props), atol=1e-12)


def test_ae1_rejects_wrong_resolution_and_length():
    m = AE1(seed=0)
    t = generate_target(ShapeFamily.sphere, (3,), 0)
    with pytest.raises(ValueError):
        m.encode(np.zeros((8, 8, 8)), t.props)
    with pytest.raises(ValueError):
        m.decode(np.zeros(M_T + 1))


def test_ae1_zero_latent_decodes_finite():
    logits, props = AE1(seed=0).decode(np.zeros(M_T))
    assert logits.shape == (16, 16, 16)
    assert props.shape == (5,)
    assert np.all(np.isfinite(logits)) and np.all(np.isfinite(props))


def test_ae1_training_is_deterministic(targets):
    cfg = TrainConfig(epochs=2, batch=4, lr=1e-3, seed=1)
    _, rows_a = train_ae1(targets[:4], cfg)
    _, rows_b = train_ae1(targets[:4], cfg)
    assert rows_a == rows_b


def test_ae1_checkpoint_round_trip(tmp_path, targets):
    m = AE1(seed=2)
    m.fit_normalization(np.stack([t.props.vector() for t in targets]))
    checkpoint.save(tmp_path / "a.ggnn", m.state_dict())
    m2 = AE1(seed=9)
    m2.load_state_dict(checkpoint.load(tmp_path / "a.ggnn"))
    t = targets[0]
    assert np.array_equal(m.encode(t.grid, t.props), m2.encode(t.grid, t.props))


# AE2

def test_ae2_rejects_unnormalized_quaternion():
    g = generate_gripper(Fingertip.flat, 0.0, 0)
    bad = Pose.__new__(Pose)
    object.__setattr__(bad, "r", np.zeros(3))
    object.__setattr__(bad, "q", np.array([1.0, 1e-2, 0.0, 0.0]))
    with pytest.raises(ValueError):
        AE2(seed=0).encode(g.grid, bad)


def test_ae2_identity_pose_features_reproducible():
    g = generate_gripper(Fingertip.curved, 0.0, 0)
    m = AE2(seed=0)
    a, b = m.encode(g.grid, Pose.identity()), m.encode(g.grid, Pose.identity())
    assert np.array_equal(a, b)
    assert np.all(np.isfinite(a[M_GEOM:]))


def test_ae2_path_separation():
    m = AE2(seed=1)
    g1 = generate_gripper(Fingertip.flat, 1.0, 1)
    g2 = generate_gripper(Fingertip.v_groove, 1.0, 2)
    p1 = Pose.make([0.01, 0.0, 0.0], [1, 0, 0, 0])
    p2 = Pose.make([0.0, -0.02, 0.01], [0.9, 0.1, 0.3, 0.0])
    a, b = m.encode(g1.grid, p1), m.encode(g1.grid, p2)
    assert np.array_equal(a[:M_GEOM], b[:M_GEOM])
    assert not np.array_equal(a[M_GEOM:], b[M_GEOM:])
    c = m.encode(g2.grid, p1)
    assert np.array_equal(a[M_GEOM:], c[M_GEOM:])
    assert not np.array_equal(a[:M_GEOM], c[:M_GEOM])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1e3))
def test_ae2_decoded_quaternion_is_unit(seed, mag):
    z = np.random.default_rng(seed).normal(size=M_G) * mag
    p = AE2(seed=0).decode_pose(z)[0]
    assert abs(np.linalg.norm(p[3:]) - 1.0) <= 1e-9


def test_ae2_decode_shapes_and_length_check():
    m = AE2(seed=0)
    logits, pose = m.decode(np.zeros(M_G))
    assert logits.shape == (16, 16, 16)
    assert isinstance(pose, Pose)
    with pytest.raises(ValueError):
        m.decode(np.zeros(M_G - 1))


def test_ae2_pose_only_error_is_pose_term():
    rng = np.random.default_rng(0)
    x = Tensor((rng.random((1, 1, 16, 16, 16)) > 0.5).astype(float))
    p = np.array([[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]])
    p_off = p.copy()
    p_off[0, 0] += 0.10  # full grid extent
    pf, pf_off = pose_features(p), pose_features(p_off)
    loss = ae2_loss(x, Tensor(pf), x, Tensor(pf_off)).item()
    assert loss == pytest.approx(1.0 / 7.0, rel=1e-12)
    assert ae2_loss(x, Tensor(pf), x, Tensor(pf)).item() == 0.0


def test_ae2_loss_gradcheck():
    rng = np.random.default_rng(3)
    x = Tensor((rng.random((2, 1, 4, 4, 4)) > 0.5).astype(float))
    pf = Tensor(rng.normal(size=(2, 7)))
    xh = parameter(rng.random((2, 1, 4, 4, 4)))
    ph = parameter(rng.normal(size=(2, 7)))
    assert check_gradients(lambda: ae2_loss(x, pf, xh, ph), [xh, ph]).passed


def test_ae2_model_gradcheck(grippers):
    m = _off_kink(AE2(seed=0))
    x = common.as_batch(np.stack([g.grid for g in grippers[:2]]))
    pf = Tensor(pose_features(np.stack([g.pose.vector() for g in grippers[:2]])))
    res = check_gradients(lambda: m.loss_t(x, pf)[0], m.parameters(), max_per_param=4,
                          rng=np.random.default_rng(1))
    assert res.passed, res


def test_pose_errors_and_combined_accuracy():
    p = np.array([[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]])
    q = p.copy()
    q[0, 1] = 0.10 / 16  # one voxel
    pos, ang = pose_errors(p, q)
    assert pos[0] == pytest.approx(1.0)
    assert ang[0] == pytest.approx(0.0, abs=1e-6)
    assert combined_accuracy(90.0, 70.0) == 80.0


# AE3 layout and loss

def test_concat_layout_fixtures():
    z = concat_latents(np.ones(32), np.full(48, 2.0))
    assert z.shape == (80,)
    assert np.all(z[:32] == 1) and np.all(z[32:] == 2)
    a, b = split_latents(z)
    assert np.array_equal(a, np.ones(32)) and np.array_equal(b, np.full(48, 2.0))


@pytest.mark.parametrize("bad", [(31, 48), (32, 47)])
def test_concat_rejects_wrong_lengths(bad):
    with pytest.raises(ValueError):
        concat_latents(np.zeros(bad[0]), np.zeros(bad[1]))


def test_split_rejects_wrong_length():
    with pytest.raises(ValueError):
        split_latents(np.zeros(79))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_split_inverts_concat(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=32), rng.normal(size=48)
    a2, b2 = split_latents(concat_latents(a, b))
    assert np.array_equal(a, a2) and np.array_equal(b, b2)


def test_ae3_loss_perfect_is_zero():
    rng = np.random.default_rng(0)
    z, pf = Tensor(rng.normal(size=(3, M_GT))), Tensor(rng.normal(size=(3, 7)))
    assert ae3_loss(z, z, pf, pf, 0.5, 1.0).item() == 0.0


def test_ae3_loss_identity_alpha_one_beta_zero():
    rng = np.random.default_rng(1)
    z, zh = Tensor(rng.normal(size=(4, M_GT))), Tensor(rng.normal(size=(4, M_GT)))
    pf, ph = Tensor(rng.normal(size=(4, 7))), Tensor(rng.normal(size=(4, 7)))
    recon, l_t, l_g = loss_parts(z, zh)
    assert recon == pytest.approx(l_t + l_g, rel=1e-12)
    assert ae3_loss(z, zh, pf, ph, 1.0, 0.0).item() == pytest.approx(2 * recon, rel=1e-12)


@pytest.mark.parametrize("alpha,beta", [(-0.1, 1.0), (0.5, -1.0), (np.nan, 1.0)])
def test_ae3_loss_rejects_bad_weights(alpha, beta):
    z = Tensor(np.zeros((1, M_GT)))
    p = Tensor(np.zeros((1, 7)))
    with pytest.raises(ValueError):
        ae3_loss(z, z, p, p, alpha, beta)


@pytest.mark.parametrize("alpha,beta", [(0.0, 1.0), (0.5, 0.0)])
def test_ae3_model_rejects_non_positive_weights(alpha, beta):
    with pytest.raises(ValueError):
        AE3(alpha=alpha, beta=beta)


def test_ae3_loss_gradcheck():
    rng = np.random.default_rng(2)
    z, pf = Tensor(rng.normal(size=(2, M_GT))), Tensor(rng.normal(size=(2, 7)))
    zh, ph = parameter(rng.normal(size=(2, M_GT))), parameter(rng.normal(size=(2, 7)))
    assert check_gradients(lambda: ae3_loss(z, zh, pf, ph, 0.5, 1.0), [zh, ph]).passed


def test_ae3_pair_loss_gradcheck():
    rng = np.random.default_rng(4)
    m, ae2 = AE3(seed=0), AE2(seed=0)
    zn = Tensor(rng.normal(size=(3, M_GT)))
    pf = Tensor(rng.normal(size=(3, 7)))
    res = check_gradients(lambda: pair_loss(m, ae2, zn, pf), m.parameters(), max_per_param=12,
                          rng=np.random.default_rng(0))
    assert res.passed, res


def test_latent_accuracy_fixtures():
    z = np.random.default_rng(0).normal(size=(4, M_GT))
    assert latent_accuracy(z, z) == 100.0
    assert latent_accuracy(z, z + 10.0) == 0.0
    half = z.copy()
    half[:, :40] += 1.0
    assert latent_accuracy(z, half) == 50.0


def test_ae3_encode_decode_determinism_and_shapes():
    m = AE3(seed=3)
    z = np.random.default_rng(1).normal(size=M_GT)
    c1, c2 = m.encode(z), m.encode(z)
    assert c1.shape == (48,) and np.array_equal(c1, c2)
    out = m.decode(np.zeros(48))
    assert out.shape == (M_GT,) and np.all(np.isfinite(out))
    with pytest.raises(ValueError):
        m.encode(np.zeros(79))
    with pytest.raises(ValueError):
        m.decode(np.zeros(47))


def test_latent_pairs_and_ae3_training(targets, grippers):
    ae1, ae2 = AE1(seed=0), AE2(seed=0)
    ae1.fit_normalization(np.stack([t.props.vector() for t in targets]))
    pairs = build_latent_pairs(targets, grippers, ae1, ae2, 12, seed=0)
    assert len(pairs) == 12
    p = pairs[3]
    z_t, z_g = split_latents(p.z_gt)
    t = targets[p.target_index]
    assert np.allclose(z_t, ae1.encode(t.grid, t.props), atol=1e-12)
    g = grippers[p.gripper_index]
    assert np.allclose(z_g, ae2.encode(g.grid, Pose.from_vector(p.pose)), atol=1e-12)
    cfg = TrainConfig(epochs=3, batch=4, lr=1e-3, seed=0)
    m, rows = train_ae3(pairs, ae2, cfg)
    _, rows2 = train_ae3(pairs, ae2, cfg)
    assert rows == rows2
    assert np.all(m._buffers["zc_std"] > 0)


# training loop

def test_split_indices():
    tr, va = split_indices(10, 0)
    assert np.array_equal(tr, va)
    tr, va = split_indices(100, 0)
    assert len(tr) == 90 and len(va) == 10
    assert not set(tr) & set(va)


def test_divergence_keeps_last_good_state():
    m = AE3(seed=0)
    before = m.state_dict()
    calls = {"n": 0}

    def batch_loss(idx):
        calls["n"] += 1
        return Tensor(np.array(np.nan))

    with pytest.raises(TrainingDiverged) as info:
        fit(m, batch_loss, lambda: {"val_loss": 0.0}, np.arange(4), TrainConfig(epochs=1, batch=2))
    for k, v in before.items():
        assert np.array_equal(info.value.state[k], v)
