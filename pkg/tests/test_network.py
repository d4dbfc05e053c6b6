import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annealbnn.errors import ParameterError, ShapeError
from annealbnn.network import (
    Dataset,
    MiniBatch,
    Network,
    active_hessian,
    apply_mask,
    decode_array,
    encode_array,
    forward,
    grad_loglik,
    load_checkpoint,
    loglik,
    n_params_for,
    output_gradient,
    predict,
    save_checkpoint,
)

from conftest import hand_forward


def fd_grad(net, data, noise_var=1.0, h=1e-5):
    g = np.zeros(net.n_params)
    probe = net.copy()
    for k in np.flatnonzero(net.mask):
        probe.params[k] = net.params[k] + h
        up = loglik(probe, data, noise_var)
        probe.params[k] = net.params[k] - h
        down = loglik(probe, data, noise_var)
        probe.params[k] = net.params[k]
        g[k] = (up - down) / (2 * h)
    return g


def test_param_count():
    assert n_params_for((3, 5, 1)) == 3 * 5 + 5 + 5 + 1
    assert Network((200, 64, 16, 1)).n_params == 200 * 64 + 64 + 64 * 16 + 16 + 16 + 1


def test_zero_network():
    net = Network((4, 3, 1))
    assert forward(net, np.arange(4.0)) == 0.0


def test_affine_case():
    net = Network((2, 1), "identity", np.array([1.0, 2.0, 0.5]))
    assert forward(net, np.array([1.0, 1.0])) == 3.5


def test_forward_matches_hand_rolled(rng):
    net = Network.init((3, 5, 1), "tanh", rng)
    net.params += rng.normal(0, 0.5, net.n_params)
    for _ in range(10):
        x = rng.normal(size=3)
        assert abs(forward(net, x) - hand_forward((3, 5, 1), net.params, x)) <= 1e-12


def test_forward_deep_and_relu(rng):
    net = Network.init((4, 6, 3, 1), "relu", rng)
    x = rng.normal(size=4)
    want = hand_forward((4, 6, 3, 1), net.params, x, act=lambda z: np.maximum(z, 0.0))
    assert forward(net, x) == pytest.approx(want, abs=1e-12)


def test_forward_deterministic(rng):
    net = Network.init((3, 5, 1), "tanh", rng)
    X = rng.normal(size=(7, 3))
    assert np.array_equal(predict(net, X), predict(net, X))


def test_network_copies_inputs():
    params = np.ones(3)
    mask = np.array([True, False, True])
    net = Network((2, 1), "identity", params, mask)
    assert params[1] == 1.0
    net.params[0] = 5.0
    assert params[0] == 1.0


def test_loglik_perfect_fit():
    net = Network((1, 1), "identity", np.array([1.0, 0.0]))
    X = np.arange(4.0).reshape(4, 1)
    data = Dataset(X, X[:, 0])
    assert loglik(net, data) == pytest.approx(-4 * 0.5 * math.log(2 * math.pi), abs=1e-14)
    assert loglik(net, data) == pytest.approx(-3.67575, abs=1e-5)


def test_loglik_single_residual():
    net = Network((1, 1), "identity", np.zeros(2))
    data = Dataset(np.zeros((1, 1)), np.array([1.0]))
    assert loglik(net, data) == pytest.approx(-0.5 - 0.5 * math.log(2 * math.pi), abs=1e-15)


def test_loglik_density_sum(small_problem):
    net, data = small_problem
    for s2 in (0.5, 1.0, 3.0):
        mu = [hand_forward((3, 4, 1), net.params, x) for x in data.inputs]
        want = sum(-0.5 * math.log(2 * math.pi * s2) - (y - m) ** 2 / (2 * s2) for y, m in zip(data.targets, mu))
        assert loglik(net, data, s2) == pytest.approx(want, abs=1e-12)


def test_grad_zero_residuals(rng):
    net = Network.init((3, 4, 1), "tanh", rng)
    X = rng.normal(size=(10, 3))
    data = Dataset(X, predict(net, X))
    assert np.max(np.abs(grad_loglik(net, None, data))) < 1e-13


def test_grad_full_batch_rescale_identity(small_problem):
    net, data = small_problem
    idx = np.arange(data.n)
    a = grad_loglik(net, MiniBatch(idx), data, rescale=True)
    b = grad_loglik(net, MiniBatch(idx), data, rescale=False)
    assert np.array_equal(a, b)
    assert np.allclose(a, grad_loglik(net, None, data), rtol=1e-13)


def test_grad_matches_fd(small_problem):
    net, data = small_problem
    g = grad_loglik(net, None, data, 1.0)
    num = fd_grad(net, data)
    np.testing.assert_allclose(g, num, rtol=1e-6, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["tanh", "identity"]), st.floats(0.3, 3.0))
def test_grad_fd_property(seed, act, noise_var):
    rng = np.random.default_rng(seed)
    sizes = (int(rng.integers(1, 5)), int(rng.integers(1, 6)), 1)
    net = Network.init(sizes, act, rng)
    net.params += rng.normal(0, 0.3, net.n_params)
    net.mask = rng.random(net.n_params) > 0.2
    net.params[~net.mask] = 0.0
    data = Dataset(rng.normal(size=(8, sizes[0])), rng.normal(size=8))
    g = grad_loglik(net, None, data, noise_var)
    num = fd_grad(net, data, noise_var)
    assert np.all(g[~net.mask] == 0.0)
    assert np.all(np.abs(g - num) <= 1e-6 * np.abs(num) + 1e-8)


def test_minibatch_rescale_unbiased(rng):
    net = Network.init((2, 3, 1), "tanh", rng)
    data = Dataset(rng.normal(size=(6, 2)), rng.normal(size=6))
    full = grad_loglik(net, None, data)
    batches = list(itertools.combinations(range(6), 2))
    mean = np.mean([grad_loglik(net, MiniBatch(np.array(b)), data) for b in batches], axis=0)
    np.testing.assert_allclose(mean, full, rtol=0, atol=1e-12)


def test_minibatch_validation():
    data = Dataset(np.zeros((3, 1)), np.zeros(3))
    net = Network((1, 1))
    with pytest.raises(ParameterError):
        grad_loglik(net, MiniBatch(np.array([0, 0])), data)
    with pytest.raises(ParameterError):
        grad_loglik(net, MiniBatch(np.array([5])), data)


def test_hessian_linear_exact(rng):
    X = rng.normal(size=(40, 3))
    data = Dataset(X, rng.normal(size=40))
    net = Network((3, 1), "identity", rng.normal(size=4), mask=[True, True, True, False])
    H, asym = active_hessian(net, data, 1.0, return_asymmetry=True)
    np.testing.assert_allclose(H, X.T @ X / 40, atol=1e-6)
    assert asym <= 1e-6


def test_hessian_tanh_second_scheme(rng):
    net = Network.init((3, 4, 1), "tanh", rng)
    net.params += rng.normal(0, 0.3, net.n_params)
    data = Dataset(rng.normal(size=(50, 3)), rng.normal(size=50))
    H, asym = active_hessian(net, data, 1.0, return_asymmetry=True)
    assert asym <= 1e-6
    # independent oracle: second differences of loglik itself, step 1e-4
    k = net.n_params
    h = 1e-4
    f0 = loglik(net, data)
    alt = np.zeros((k, k))
    probe = net.copy()
    for i in range(k):
        for j in range(i, k):
            def f(di, dj):
                probe.params[:] = net.params
                probe.params[i] += di
                probe.params[j] += dj
                return loglik(probe, data)
            if i == j:
                d2 = (f(h, 0) - 2 * f0 + f(-h, 0)) / h ** 2
            else:
                d2 = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h)
            alt[i, j] = alt[j, i] = -d2 / data.n
    scale = np.max(np.abs(alt))
    assert np.max(np.abs(H - alt)) <= 1e-3 * scale


def test_apply_mask_cases(rng):
    net = Network.init((4, 3, 1), "tanh", rng)
    net.params[-4:] = rng.normal(size=4)
    X = rng.normal(size=(5, 4))
    same = apply_mask(net, np.ones(net.n_params, dtype=bool))
    assert np.array_equal(predict(same, X), predict(net, X))
    zero = apply_mask(net, np.zeros(net.n_params, dtype=bool))
    assert np.all(predict(zero, X) == 0.0)
    mask = np.ones(net.n_params, dtype=bool)
    mask[: 3 * 4].reshape(3, 4)[:, 2] = False
    cut = apply_mask(net, mask)
    x = rng.normal(size=4)
    y = x.copy()
    y[2] += 10.0
    assert forward(cut, x) == forward(cut, y)
    assert forward(net, x) != forward(net, y)


def test_output_gradient_linear(rng):
    net = Network((3, 1), "identity", rng.normal(size=4))
    X0 = rng.normal(size=(5, 3))
    J = output_gradient(net, X0)
    np.testing.assert_allclose(J, np.hstack([X0, np.ones((5, 1))]), atol=1e-9)


def test_checkpoint_roundtrip(tmp_path, rng):
    net = Network.init((5, 4, 1), "tanh", rng)
    net.params *= np.pi
    net.mask = rng.random(net.n_params) > 0.3
    net.params[~net.mask] = 0.0
    path = tmp_path / "net.json"
    save_checkpoint(path, net)
    back, doc = load_checkpoint(path)
    assert doc["format_version"] == 1
    assert np.array_equal(back.params, net.params)
    assert np.array_equal(back.mask, net.mask)
    assert back.layer_sizes == net.layer_sizes and back.activation == net.activation
    save_checkpoint(tmp_path / "again.json", back)
    assert path.read_bytes() == (tmp_path / "again.json").read_bytes()


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_encode_exact(values):
    a = np.array(values)
    assert np.array_equal(decode_array(encode_array(a)), a)


def test_bad_shapes():
    with pytest.raises(ShapeError):
        Network((3, 2))
    with pytest.raises(ShapeError):
        Network((3, 1), params=np.zeros(3))
    with pytest.raises(ShapeError):
        predict(Network((3, 1)), np.zeros((2, 4)))
