import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socdiff.neuralnet import (
    AdamMoments,
    AgentNet,
    adam_update,
    backward,
    bptt_gradients,
    finite_diff_grad,
    forward,
    forward_sequence,
    gru_cell,
    init_params,
    param_count,
)


def scalar_gru(x, h, p):
    """Plain-loop reference for one GRU update."""
    m, n = len(h), len(x)

    def affine(W, U, b, hvec):
        return [sum(W[i][k] * x[k] for k in range(n)) + sum(U[i][k] * hvec[k] for k in range(m)) + b[i]
                for i in range(m)]

    sig = lambda a: 1.0 / (1.0 + math.exp(-a))
    r = [sig(a) for a in affine(p["W_r"], p["U_r"], p["b_r"], h)]
    z = [sig(a) for a in affine(p["W_z"], p["U_z"], p["b_z"], h)]
    rh = [r[i] * h[i] for i in range(m)]
    hc = [math.tanh(a) for a in affine(p["W_h"], p["U_h"], p["b_h"], rh)]
    return [z[i] * h[i] + (1 - z[i]) * hc[i] for i in range(m)]


def scalar_q(net, xs):
    """Reference Q-values for a single episode, layer by layer with plain loops."""
    pl = [{k: v.tolist() for k, v in net.layer(layer).items()} for layer in range(net.n_layers)]
    hs = [[0.0] * net.hidden_dim for _ in range(net.n_layers)]
    qs = []
    for x in xs:
        inp = list(x)
        for layer in range(net.n_layers):
            hs[layer] = scalar_gru(inp, hs[layer], pl[layer])
            inp = hs[layer]
        W, b = net["head_w"].tolist(), net["head_b"].tolist()
        qs.append([sum(W[a][k] * inp[k] for k in range(net.hidden_dim)) + b[a] for a in range(2)])
    return qs


def random_net(input_dim, seed, scale=0.4):
    rng = np.random.default_rng(seed)
    net = init_params(input_dim, 12, rng)
    net.params[:] += rng.normal(0.0, scale, net.params.size)
    return net


def rel_error(a, b, floor=1e-6):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def test_param_layout_and_count():
    m, d = 12, 11
    per_layer = lambda fan_in: 3 * (m * fan_in + m * m + m)
    assert param_count(d, m) == per_layer(d) + per_layer(m) + 2 * m + 2
    net = AgentNet(d, m)
    names = [name for name, _ in net.layout]
    assert names[:9] == ["l0.W_r", "l0.U_r", "l0.b_r", "l0.W_z", "l0.U_z", "l0.b_z", "l0.W_h", "l0.U_h", "l0.b_h"]
    assert names[-2:] == ["head_w", "head_b"]
    assert net["l0.W_r"].shape == (m, d) and net["l1.W_r"].shape == (m, m) and net["head_w"].shape == (2, m)
    net.params[0] = 7.0
    assert net["l0.W_r"][0, 0] == 7.0


def test_gru_zero_params():
    p = AgentNet(3, 4).layer(0)
    v = np.array([[0.3, -0.2, 0.9, -1.0]])
    assert np.array_equal(gru_cell(np.ones((1, 3)), v, p), 0.5 * v)
    assert np.array_equal(gru_cell(np.ones((1, 3)), np.zeros((1, 4)), p), np.zeros((1, 4)))


def test_gru_matches_scalar_oracle():
    net = random_net(5, 1, scale=0.8)
    rng = np.random.default_rng(2)
    x, h = rng.normal(size=5), rng.uniform(-1, 1, 12)
    p = {k: v.tolist() for k, v in net.layer(0).items()}
    got = gru_cell(x[None], h[None], net.layer(0))[0]
    assert np.allclose(got, scalar_gru(x.tolist(), h.tolist(), p), rtol=0, atol=1e-14)


def test_gru_dimension_mismatch():
    with pytest.raises(ValueError):
        gru_cell(np.zeros((1, 4)), np.zeros((1, 12)), AgentNet(3, 12).layer(0))
    with pytest.raises(ValueError):
        forward(AgentNet(3, 12), AgentNet(3, 12).zero_state(), np.zeros((1, 4)))


def test_forward_trivial_heads():
    net = AgentNet(4, 12)
    q, _ = forward(net, net.zero_state(), np.array([[0.7, 0.5, 1.0, 0.0]]))
    assert q.tolist() == [[0.0, 0.0]]
    net["head_b"][:] = [1.0, -1.0]
    h = net.zero_state()
    for x in np.random.default_rng(0).normal(size=(5, 1, 4)):
        q, h = forward(net, h, x)
        assert q.tolist() == [[1.0, -1.0]]


def test_forward_matches_scalar_oracle():
    net = random_net(6, 3)
    xs = np.random.default_rng(4).normal(size=(7, 6))
    expected = np.array(scalar_q(net, xs))
    q_seq, _ = forward_sequence(net, xs[:, None, :])
    assert np.allclose(q_seq[:, 0, :], expected, rtol=0, atol=1e-12)
    h = net.zero_state()
    for t, x in enumerate(xs):
        q, h = net.step(x[None], h)
        assert np.allclose(q[0], expected[t], rtol=0, atol=1e-12)


@pytest.mark.parametrize("T", [1, 3, 5, 20])
def test_bptt_matches_finite_differences(T):
    net = random_net(5, 10 + T)
    rng = np.random.default_rng(T)
    xs = rng.normal(size=(T, 3, 5))
    dq = rng.normal(size=(T, 3, 2))
    loss = lambda n, ep: float(np.sum(forward_sequence(n, ep)[0] * dq))
    analytic = bptt_gradients(net, xs, dq)
    numeric = finite_diff_grad(net, xs, loss, 1e-5)
    assert rel_error(analytic, numeric).max() <= 1e-4


def test_bptt_zero_loss_gradient():
    net = random_net(4, 0)
    xs = np.random.default_rng(0).normal(size=(6, 2, 4))
    assert np.all(bptt_gradients(net, xs, np.zeros((6, 2, 2))) == 0.0)


def test_bptt_single_step_chain_rule():
    # From a zero state the recurrent matrices and the reset gate have no effect.
    net = random_net(4, 8)
    rng = np.random.default_rng(8)
    xs, dq = rng.normal(size=(1, 3, 4)), rng.normal(size=(1, 3, 2))
    _, cache = forward_sequence(net, xs)
    g = AgentNet(4, 12, params=backward(net, cache, dq))
    for layer in (0, 1):
        for name in ("U_r", "U_z", "U_h", "W_r", "b_r"):
            assert np.all(g[f"l{layer}.{name}"] == 0.0)
    assert np.allclose(g["head_b"], dq.sum(axis=(0, 1)))
    assert np.allclose(g["head_w"], dq[0].T @ cache.top[0])
    # top layer: h = (1 - z) * tanh(W_h x + b_h), x = layer-0 output
    x1 = cache.inputs[1][0]
    z, hc = cache.z[1][0], cache.hc[1][0]
    dh = dq[0] @ net["head_w"]
    assert np.allclose(g["l1.b_h"], (dh * (1 - z) * (1 - hc**2)).sum(axis=0))
    assert np.allclose(g["l1.W_z"], (dh * -hc * z * (1 - z)).T @ x1)


def test_finite_diff_quadratic():
    net = AgentNet(2, 1, n_layers=1)
    net.params[0] = 1.5
    loss = lambda n, _: 3.0 * n.params[0] ** 2
    g = finite_diff_grad(net, None, loss, 1e-3)
    assert g[0] == pytest.approx(9.0, abs=1e-9)
    assert np.all(g[1:] == 0.0)
    assert np.all(finite_diff_grad(net, None, lambda n, _: 0.0, 1e-3) == 0.0)
    with pytest.raises(ValueError):
        finite_diff_grad(net, None, loss, 0.0)


def test_adam_zero_gradient():
    p = np.array([1.0, -2.0])
    mom = AdamMoments(np.array([0.5, -0.5]), np.array([0.25, 0.25]), 3)
    new, nm = adam_update(p, np.zeros(2), mom, 1e-3)
    assert np.allclose(nm.m, 0.9 * mom.m) and np.allclose(nm.v, 0.999 * mom.v)
    assert nm.step_count == 4
    fresh, _ = adam_update(p, np.zeros(2), AdamMoments.zeros(2), 1e-3)
    assert np.array_equal(fresh, p)


def test_adam_first_step_closed_form():
    g = np.array([0.3, -4.0, 1e-9])
    new, mom = adam_update(np.zeros(3), g, AdamMoments.zeros(3), 5e-4)
    assert np.allclose(new, -5e-4 * g / (np.abs(g) + 1e-8), rtol=1e-12, atol=0)
    assert mom.step_count == 1


def test_adam_quadratic_trajectory():
    # reference: the same recursion in plain floats on f(x) = (x - 3)^2
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    x_ref, m, v = 0.0, 0.0, 0.0
    x = np.array([0.0])
    mom = AdamMoments.zeros(1)
    dist = []
    for t in range(1, 101):
        g_ref = 2 * (x_ref - 3)
        m = b1 * m + (1 - b1) * g_ref
        v = b2 * v + (1 - b2) * g_ref * g_ref
        x_ref -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        x, mom = adam_update(x, 2 * (x - 3), mom, lr)
        assert x[0] == pytest.approx(x_ref, abs=1e-12)
        dist.append(abs(x[0] - 3))
    burn_in = 5
    assert all(b < a for a, b in zip(dist[burn_in:], dist[burn_in + 1 :]))
    assert dist[-1] < dist[0]


def test_init_params():
    a = init_params(11, 12, np.random.default_rng(42))
    b = init_params(11, 12, np.random.default_rng(42))
    assert np.array_equal(a.params, b.params)
    for name, shape in a.layout:
        arr = a[name]
        if len(shape) == 1:
            assert np.all(arr == 0.0)
        else:
            assert np.all(np.abs(arr) <= 1.0 / math.sqrt(shape[1]))
    big = init_params(400, 300, np.random.default_rng(1), n_layers=1)["l0.W_r"]
    k = 1.0 / math.sqrt(400)
    assert abs(big.mean()) <= 3 * k / math.sqrt(3 * big.size)


def test_serialization_round_trip():
    net = random_net(7, 5)
    back = AgentNet.from_bytes(net.to_bytes(), 7, 12)
    assert back.params.tobytes() == net.params.tobytes()
    xs = np.random.default_rng(0).normal(size=(20, 4, 7))
    assert forward_sequence(net, xs)[0].tobytes() == forward_sequence(back, xs)[0].tobytes()
    assert len(net.to_bytes()) == 8 * param_count(7, 12)


def test_forward_deterministic():
    net = random_net(3, 9)
    xs = np.random.default_rng(1).normal(size=(10, 5, 3))
    assert forward_sequence(net, xs)[0].tobytes() == forward_sequence(net, xs)[0].tobytes()


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(0.0, 5.0), T=st.integers(1, 12))
def test_hidden_state_stays_in_unit_box(seed, scale, T):
    net = random_net(4, seed, scale)
    xs = np.random.default_rng(seed).normal(0, 3, size=(T, 2, 4))
    _, cache = forward_sequence(net, xs)
    for hs in (cache.inputs[1], cache.top):
        assert np.all(np.abs(hs) <= 1.0)
        assert np.all(np.isfinite(hs))
