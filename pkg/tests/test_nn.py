import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latentgrasp.nn import (
    SGD, Adam, Tape, Tensor, backward, conv3d, fully_connected, max_pool3d,
    mse_loss, parameter, relu, reshape,
)
from latentgrasp.nn import checkpoint
from latentgrasp.nn.gradcheck import check_gradients
from latentgrasp.nn.ops import add, conv_output_size, sigmoid, upsample_nearest3d


def test_conv3d_zero_input():
    rng = np.random.default_rng(0)
    out = conv3d(Tensor(np.zeros((2, 5, 5, 5))), Tensor(rng.normal(size=(3, 2, 3, 3, 3))), Tensor(np.zeros(3)))
    assert out.shape == (3, 5, 5, 5)
    assert np.all(out.data == 0)


def test_conv3d_ones_center_is_27():
    out = conv3d(Tensor(np.ones((1, 3, 3, 3))), Tensor(np.ones((1, 1, 3, 3, 3))), Tensor(np.zeros(1)))
    assert out.data[0, 1, 1, 1] == 27.0
    # corner sees a 2x2x2 window because of the zero padding
    assert out.data[0, 0, 0, 0] == 8.0


def test_conv3d_identity_kernel():
    x = np.zeros((1, 5, 5, 5))
    x[0, 2, 1, 3] = 1.0
    k = np.zeros((1, 1, 3, 3, 3))
    k[0, 0, 1, 1, 1] = 1.0
    out = conv3d(Tensor(x), Tensor(k), Tensor(np.zeros(1)))
    np.testing.assert_array_equal(out.data, x)


def test_conv3d_matches_direct_loop():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 4, 5, 3))
    w = rng.normal(size=(3, 2, 3, 3, 3))
    b = rng.normal(size=3)
    for stride in (1, 2):
        out = conv3d(Tensor(x), Tensor(w), Tensor(b), stride=stride).data
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (1, 1)))
        for o in range(3):
            for i in range(out.shape[1]):
                for j in range(out.shape[2]):
                    for k in range(out.shape[3]):
                        win = xp[:, i * stride:i * stride + 3, j * stride:j * stride + 3, k * stride:k * stride + 3]
                        assert out[o, i, j, k] == pytest.approx(np.sum(win * w[o]) + b[o], abs=1e-12)


def test_conv3d_channel_mismatch_names_shapes():
    with pytest.raises(ValueError, match=r"\(4, 3, 3, 3, 3\).*\(2, 5, 5, 5\)"):
        conv3d(Tensor(np.zeros((2, 5, 5, 5))), Tensor(np.zeros((4, 3, 3, 3, 3))), Tensor(np.zeros(4)))


@settings(max_examples=30, deadline=None)
@given(
    c=st.integers(1, 3), d=st.integers(3, 9), h=st.integers(3, 9), w=st.integers(3, 9), stride=st.integers(1, 3),
)
def test_conv3d_output_shape_property(c, d, h, w, stride):
    out = conv3d(Tensor(np.ones((c, d, h, w))), Tensor(np.ones((2, c, 3, 3, 3))), Tensor(np.zeros(2)), stride=stride)
    assert out.shape == (2, conv_output_size(d, stride), conv_output_size(h, stride), conv_output_size(w, stride))
    assert out.shape[1] == (d + 2 - 3) // stride + 1


@settings(max_examples=30, deadline=None)
@given(c=st.integers(1, 3), d=st.integers(1, 4), h=st.integers(1, 4), w=st.integers(1, 4))
def test_max_pool_shape_property(c, d, h, w):
    out = max_pool3d(Tensor(np.zeros((c, 2 * d, 2 * h, 2 * w))))
    assert out.shape == (c, d, h, w)


def test_max_pool_cases():
    out = max_pool3d(Tensor(np.full((2, 4, 4, 4), 3.5)))
    assert np.all(out.data == 3.5)
    out = max_pool3d(Tensor(np.arange(8.0).reshape(1, 2, 2, 2)))
    assert out.data.shape == (1, 1, 1, 1) and out.data.item() == 7.0
    with pytest.raises(ValueError):
        max_pool3d(Tensor(np.zeros((1, 3, 4, 4))))


def test_max_pool_tie_goes_to_lowest_index():
    x = parameter(np.ones((1, 2, 2, 2)))
    with Tape() as tape:
        loss = reshape(max_pool3d(x), (1,))
        loss = mse_loss(loss, Tensor(np.zeros(1)))
    backward(tape, loss)
    g = x.grad.reshape(-1)
    assert g[0] == 2.0 and np.all(g[1:] == 0)


def test_relu_values():
    np.testing.assert_array_equal(relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])
    x = np.array([0.5, 1.0, 7.0])
    np.testing.assert_array_equal(relu(Tensor(x)).data, x)


def test_relu_subgradient_at_zero():
    x = parameter(np.array([0.0, 1.0]))
    with Tape() as tape:
        loss = mse_loss(relu(x), Tensor(np.array([-1.0, 0.0])))
    backward(tape, loss)
    assert x.grad[0] == 0.0


def test_fully_connected_cases():
    np.testing.assert_array_equal(fully_connected(Tensor([2.0, 3.0]), Tensor(np.eye(2)), Tensor(np.zeros(2))).data, [2.0, 3.0])
    np.testing.assert_array_equal(fully_connected(Tensor([2.0, 3.0]), Tensor([[1.0, 1.0]]), Tensor([0.0])).data, [5.0])
    with pytest.raises(ValueError):
        fully_connected(Tensor([1.0, 2.0, 3.0]), Tensor(np.eye(2)), Tensor(np.zeros(2)))


def test_fully_connected_jacobian_is_weights():
    rng = np.random.default_rng(3)
    w = rng.normal(size=(3, 4))
    x0 = rng.normal(size=4)
    jac = np.zeros((3, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = 1e-5
        up = fully_connected(Tensor(x0 + e), Tensor(w), Tensor(np.zeros(3))).data
        dn = fully_connected(Tensor(x0 - e), Tensor(w), Tensor(np.zeros(3))).data
        jac[:, j] = (up - dn) / 2e-5
    np.testing.assert_allclose(jac, w, rtol=1e-4)


def test_mse_cases():
    a = Tensor(np.arange(6.0))
    assert mse_loss(a, Tensor(np.arange(6.0))).item() == 0.0
    assert mse_loss(Tensor([1.0, 1.0]), Tensor([0.0, 0.0])).item() == 1.0
    with pytest.raises(ValueError):
        mse_loss(Tensor([1.0]), Tensor([1.0, 2.0]))


def test_backward_square():
    x = parameter(np.array(3.0))
    with Tape() as tape:
        y = x * x
    backward(tape, y)
    assert x.grad == 6.0


def test_backward_rejects_non_scalar():
    x = parameter(np.ones(3))
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(ValueError):
        backward(tape, y)


def test_backward_twice_identical_and_zero_loss():
    rng = np.random.default_rng(4)
    w = parameter(rng.normal(size=(2, 3)))
    b = parameter(np.zeros(2))
    x = Tensor(rng.normal(size=3))
    with Tape() as tape:
        pred = fully_connected(x, w, b)
        loss = mse_loss(pred, Tensor(rng.normal(size=2)))
    g1 = backward(tape, loss)[id(w)].copy()
    g2 = backward(tape, loss)[id(w)].copy()
    np.testing.assert_array_equal(g1, g2)

    with Tape() as tape:
        pred = fully_connected(x, w, b)
        loss = mse_loss(pred, Tensor(pred.data.copy()))
    backward(tape, loss)
    assert np.all(w.grad == 0) and np.all(b.grad == 0)


def test_tape_replay_and_reverse_order():
    rng = np.random.default_rng(5)
    w = parameter(rng.normal(size=(2, 1, 3, 3, 3)))
    b = parameter(np.zeros(2))
    x = Tensor(rng.normal(size=(1, 4, 4, 4)))
    with Tape() as tape:
        loss = mse_loss(max_pool3d(relu(conv3d(x, w, b))), Tensor(np.zeros((2, 2, 2, 2))))
    recorded = [r.output.data.copy() for r in tape.records]
    for old, new in zip(recorded, tape.replay()):
        np.testing.assert_array_equal(old, new)
    seen = []
    backward(tape, loss, visit=lambda r: seen.append(r.op.name))
    assert seen == [r.op.name for r in reversed(tape.records)]


def _composite(seed):
    rng = np.random.default_rng(seed)
    w = parameter(rng.normal(size=(2, 1, 3, 3, 3)))
    cb = parameter(rng.normal(size=2) * 0.1)
    fw = parameter(rng.normal(size=(3, 16)))
    fb = parameter(rng.normal(size=3) * 0.1)
    x = Tensor(rng.normal(size=(1, 4, 4, 4)))
    t = Tensor(rng.normal(size=3))

    def loss():
        h = max_pool3d(relu(conv3d(x, w, cb)))
        return mse_loss(fully_connected(reshape(h, (16,)), fw, fb), t)

    return loss, [w, cb, fw, fb]


@pytest.mark.parametrize("seed", range(3))
def test_composite_graph_gradcheck(seed):
    loss, params = _composite(seed)
    res = check_gradients(loss, params)
    assert res.passed, res


@pytest.mark.parametrize("op", ["pool", "relu", "sigmoid", "upsample", "mse"])
def test_single_layer_gradcheck(op):
    rng = np.random.default_rng(11)
    x = parameter(rng.normal(size=(2, 4, 4, 4)))
    target = {"pool": (2, 2, 2, 2), "upsample": (2, 8, 8, 8)}.get(op, (2, 4, 4, 4))
    t = Tensor(rng.normal(size=target))
    fn = {
        "pool": lambda: mse_loss(max_pool3d(x), t),
        "relu": lambda: mse_loss(relu(x), t),
        "sigmoid": lambda: mse_loss(sigmoid(x), t),
        "upsample": lambda: mse_loss(upsample_nearest3d(x), t),
        "mse": lambda: mse_loss(x, t),
    }[op]
    assert check_gradients(fn, [x]).passed


def test_sgd_cases():
    p = parameter(np.array(1.0))
    opt = SGD([p], lr=0.1)
    opt.step([np.array(1.0)])
    assert p.data == pytest.approx(0.9, abs=0, rel=1e-15)
    assert opt.state.step == 1
    q = parameter(np.array([1.0, -2.0]))
    SGD([q], lr=0.1).step([np.zeros(2)])
    np.testing.assert_array_equal(q.data, [1.0, -2.0])


def test_sgd_geometric_decay_on_square():
    p = parameter(np.array(1.0))
    opt = SGD([p], lr=0.1)
    for i in range(100):
        with Tape() as tape:
            loss = p * p
        backward(tape, loss)
        opt.step([p.grad])
        assert opt.state.step == i + 1
    assert abs(p.data) < 1e-8
    assert p.data == pytest.approx(0.8**100, rel=1e-9)


def test_optimizer_rejects_nan():
    p = parameter(np.array([1.0]), name="w")
    with pytest.raises(FloatingPointError, match="w"):
        Adam([p]).step([np.array([np.nan])])


def test_adam_state_shapes_and_determinism():
    def run():
        p = parameter(np.array([[1.0, 2.0], [3.0, 4.0]]))
        opt = Adam([p], lr=0.01)
        for _ in range(5):
            opt.step([p.data * 2])
        return p.data, opt.state
    a, st_a = run()
    b, _ = run()
    np.testing.assert_array_equal(a, b)
    assert st_a.m[0].shape == (2, 2) and st_a.v[0].shape == (2, 2) and st_a.step == 5


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    tensors = {"enc.w": rng.normal(size=(3, 2, 3, 3, 3)), "scalar": np.array(2.5), "vec": rng.normal(size=7)}
    path = tmp_path / "m.ggnn"
    checkpoint.save(path, tensors)
    raw = path.read_bytes()
    assert raw[:4] == b"GGNN"
    back = checkpoint.load(path)
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].tobytes() == np.asarray(tensors[k]).tobytes()
    with pytest.raises(checkpoint.CheckpointError, match="offset"):
        checkpoint.loads(raw[:-5])


@pytest.mark.parametrize("stride", [1, 2])
def test_conv3d_gradcheck_stride(stride):
    rng = np.random.default_rng(4 + stride)
    x = parameter(rng.normal(size=(2, 2, 5, 5, 5)))
    w = parameter(rng.normal(size=(3, 2, 3, 3, 3)) * 0.3)
    b = parameter(rng.normal(size=3))
    n = conv_output_size(5, stride)
    t = Tensor(rng.normal(size=(2, 3, n, n, n)))
    assert check_gradients(lambda: mse_loss(conv3d(x, w, b, stride=stride), t), [x, w, b]).passed


def test_gradcheck_flags_stencil_across_relu_kink():
    x = parameter(np.array([5e-6, 0.7, -0.4]))
    t = Tensor(-np.ones(3))
    res = check_gradients(lambda: mse_loss(relu(x), t), [x])
    assert res.kinks == 1 and res.rel_ok == 2 and res.passed


def test_gradcheck_wrong_gradient_is_not_a_kink():
    x = parameter(np.array([0.3, -0.2]))
    t = Tensor(np.zeros(2))
    # the detached copy hides half of the dependence from the tape
    res = check_gradients(lambda: mse_loss(add(x, Tensor(x.data.copy())), t), [x])
    assert res.kinks == 0 and not res.passed


def test_gradcheck_ignores_stale_gradients():
    x, y = parameter(np.array([0.3, -0.2])), parameter(np.array([1.0]))
    y.grad = np.array([5.0])  # left over from some earlier backward
    res = check_gradients(lambda: mse_loss(x, Tensor(np.zeros(2))), [x, y])
    assert res.passed and res.rel_ok == 3
