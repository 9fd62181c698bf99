"""Two-layer GRU Q-network in plain numpy, with exact backpropagation through time.

All parameters of one network live in a single float64 vector. The order is
the snapshot order:

    for each layer:  W_r, U_r, b_r, W_z, U_z, b_z, W_h, U_h, b_h
    then:            head_w (2 x m), head_b (2,)

``W_*`` are (m x fan_in), ``U_*`` are (m x m), all row-major. Named arrays on
an ``AgentNet`` are views into that vector, so writing ``net.params[:]``
updates every view.

Cell convention (update gate keeps the old state)::

    r  = sigmoid(W_r x + U_r h + b_r)
    z  = sigmoid(W_z x + U_z h + b_z)
    hc = tanh(W_h x + U_h (r * h) + b_h)
    h' = z * h + (1 - z) * hc
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GATES = ("r", "z", "h")
N_ACTIONS = 2


def sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def param_layout(input_dim: int, hidden_dim: int, n_layers: int = 2) -> list[tuple[str, tuple[int, ...]]]:
    m = hidden_dim
    layout = []
    for layer in range(n_layers):
        fan_in = input_dim if layer == 0 else m
        for g in GATES:
            layout.append((f"l{layer}.W_{g}", (m, fan_in)))
            layout.append((f"l{layer}.U_{g}", (m, m)))
            layout.append((f"l{layer}.b_{g}", (m,)))
    layout.append(("head_w", (N_ACTIONS, m)))
    layout.append(("head_b", (N_ACTIONS,)))
    return layout


def param_count(input_dim: int, hidden_dim: int, n_layers: int = 2) -> int:
    return sum(int(np.prod(shape)) for _, shape in param_layout(input_dim, hidden_dim, n_layers))


class AgentNet:
    """One agent's recurrent Q-network."""

    def __init__(self, input_dim: int, hidden_dim: int = 12, n_layers: int = 2, params=None):
        self.input_dim = int(input_dim)
        self.hidden_dim = int(hidden_dim)
        self.n_layers = int(n_layers)
        self.layout = param_layout(self.input_dim, self.hidden_dim, self.n_layers)
        size = sum(int(np.prod(s)) for _, s in self.layout)
        if params is None:
            self.params = np.zeros(size)
        else:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (size,):
                raise ValueError(f"expected {size} parameters, got shape {params.shape}")
            self.params = params.copy()
        self.views: dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in self.layout:
            k = int(np.prod(shape))
            self.views[name] = self.params[offset : offset + k].reshape(shape)
            offset += k
        self._layers = []
        for index in range(self.n_layers):
            prefix = f"l{index}."
            self._layers.append({k[len(prefix) :]: v for k, v in self.views.items() if k.startswith(prefix)})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.views[name]

    def layer(self, index: int) -> dict[str, np.ndarray]:
        return self._layers[index]

    def copy(self) -> AgentNet:
        return AgentNet(self.input_dim, self.hidden_dim, self.n_layers, self.params)

    def zero_state(self, batch: int = 1) -> list[np.ndarray]:
        return [np.zeros((batch, self.hidden_dim)) for _ in range(self.n_layers)]

    def step(self, x: np.ndarray, hidden: list[np.ndarray]) -> tuple[np.ndarray, list[np.ndarray]]:
        """One period: ``x`` is (B, input_dim); returns Q-values (B, 2) and the new hidden state."""
        return forward(self, hidden, x)

    def forward_sequence(self, xs: np.ndarray):
        return forward_sequence(self, xs)

    def backward(self, cache, dq: np.ndarray) -> np.ndarray:
        return backward(self, cache, dq)

    def to_bytes(self) -> bytes:
        return self.params.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, input_dim: int, hidden_dim: int, n_layers: int = 2) -> AgentNet:
        return cls(input_dim, hidden_dim, n_layers, np.frombuffer(data, dtype="<f8"))


def gru_cell(x: np.ndarray, h: np.ndarray, p: dict[str, np.ndarray]) -> np.ndarray:
    """One GRU update. ``x`` is (..., fan_in), ``h`` is (..., m)."""
    if x.shape[-1] != p["W_r"].shape[1] or h.shape[-1] != p["U_r"].shape[0]:
        raise ValueError(
            f"dimension mismatch: x {x.shape}, h {h.shape}, W {p['W_r'].shape}, U {p['U_r'].shape}"
        )
    r = sigmoid(x @ p["W_r"].T + h @ p["U_r"].T + p["b_r"])
    z = sigmoid(x @ p["W_z"].T + h @ p["U_z"].T + p["b_z"])
    hc = np.tanh(x @ p["W_h"].T + (r * h) @ p["U_h"].T + p["b_h"])
    return z * h + (1.0 - z) * hc


def forward(net: AgentNet, hidden: list[np.ndarray], observation: np.ndarray):
    """Feed one observation through every layer, then the Q head on the top layer."""
    x = np.asarray(observation, dtype=np.float64)
    if x.shape[-1] != net.input_dim:
        raise ValueError(f"observation length {x.shape[-1]} != input_dim {net.input_dim}")
    new_hidden = []
    for layer, h in enumerate(hidden):
        x = gru_cell(x, h, net.layer(layer))
        new_hidden.append(x)
    q = x @ net["head_w"].T + net["head_b"]
    return q, new_hidden


@dataclass
class SequenceCache:
    inputs: list[np.ndarray]  # per layer (T, B, fan_in)
    h_prev: list[np.ndarray]  # per layer (T, B, m)
    r: list[np.ndarray]
    z: list[np.ndarray]
    hc: list[np.ndarray]
    top: np.ndarray  # (T, B, m)


def forward_sequence(net: AgentNet, xs: np.ndarray) -> tuple[np.ndarray, SequenceCache]:
    """Unroll over a whole episode from a zero hidden state.

    ``xs`` is (T, B, input_dim). Returns Q-values (T, B, 2) and the
    activations needed by ``backward``. Layers are unrolled one after the
    other, which is equivalent to stepping because no layer reads from the
    layer above it.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 3 or xs.shape[2] != net.input_dim:
        raise ValueError(f"expected inputs (T, B, {net.input_dim}), got {xs.shape}")
    T, B, _ = xs.shape
    m = net.hidden_dim
    cache = SequenceCache([], [], [], [], [], None)
    seq = xs
    for layer in range(net.n_layers):
        p = net.layer(layer)
        pre_r = seq @ p["W_r"].T + p["b_r"]
        pre_z = seq @ p["W_z"].T + p["b_z"]
        pre_h = seq @ p["W_h"].T + p["b_h"]
        h_prev = np.empty((T, B, m))
        r_all = np.empty((T, B, m))
        z_all = np.empty((T, B, m))
        hc_all = np.empty((T, B, m))
        out = np.empty((T, B, m))
        h = np.zeros((B, m))
        for t in range(T):
            h_prev[t] = h
            r = sigmoid(pre_r[t] + h @ p["U_r"].T)
            z = sigmoid(pre_z[t] + h @ p["U_z"].T)
            hc = np.tanh(pre_h[t] + (r * h) @ p["U_h"].T)
            h = z * h + (1.0 - z) * hc
            r_all[t], z_all[t], hc_all[t], out[t] = r, z, hc, h
        cache.inputs.append(seq)
        cache.h_prev.append(h_prev)
        cache.r.append(r_all)
        cache.z.append(z_all)
        cache.hc.append(hc_all)
        seq = out
    cache.top = seq
    q = seq @ net["head_w"].T + net["head_b"]
    return q, cache


def backward(net: AgentNet, cache: SequenceCache, dq: np.ndarray) -> np.ndarray:
    """Reverse-mode gradient of ``sum(dq * q)`` with respect to every parameter.

    ``dq`` is (T, B, 2), the loss gradient with respect to each Q-value.
    Returns a flat vector in the same layout as ``net.params``.
    """
    dq = np.asarray(dq, dtype=np.float64)
    T, B, _ = dq.shape
    m = net.hidden_dim
    grad = AgentNet(net.input_dim, m, net.n_layers)
    g = grad.views
    g["head_w"][:] = dq.reshape(-1, N_ACTIONS).T @ cache.top.reshape(-1, m)
    g["head_b"][:] = dq.sum(axis=(0, 1))
    d_out = dq @ net["head_w"]
    for layer in reversed(range(net.n_layers)):
        p = net.layer(layer)
        hp, r_all, z_all, hc_all = cache.h_prev[layer], cache.r[layer], cache.z[layer], cache.hc[layer]
        da_r = np.empty((T, B, m))
        da_z = np.empty((T, B, m))
        da_h = np.empty((T, B, m))
        carry = np.zeros((B, m))
        for t in reversed(range(T)):
            dh = d_out[t] + carry
            h, r, z, hc = hp[t], r_all[t], z_all[t], hc_all[t]
            dz = dh * (h - hc)
            dah = dh * (1.0 - z) * (1.0 - hc * hc)
            drh = dah @ p["U_h"]
            daz = dz * z * (1.0 - z)
            dar = drh * h * r * (1.0 - r)
            carry = dh * z + drh * r + daz @ p["U_z"] + dar @ p["U_r"]
            da_r[t], da_z[t], da_h[t] = dar, daz, dah
        x = cache.inputs[layer].reshape(T * B, -1)
        h_flat = hp.reshape(T * B, m)
        rh_flat = (r_all * hp).reshape(T * B, m)
        prefix = f"l{layer}."
        for gate, da, rec in (("r", da_r, h_flat), ("z", da_z, h_flat), ("h", da_h, rh_flat)):
            flat = da.reshape(T * B, m)
            g[prefix + f"W_{gate}"][:] = flat.T @ x
            g[prefix + f"U_{gate}"][:] = flat.T @ rec
            g[prefix + f"b_{gate}"][:] = flat.sum(axis=0)
        if layer > 0:
            d_out = da_r @ p["W_r"] + da_z @ p["W_z"] + da_h @ p["W_h"]
    return grad.params


def bptt_gradients(net: AgentNet, episode_inputs: np.ndarray, dq: np.ndarray) -> np.ndarray:
    """Gradient of ``sum(dq * Q(episode_inputs))`` through the fully unrolled recurrence."""
    xs = np.asarray(episode_inputs, dtype=np.float64)
    dq = np.asarray(dq, dtype=np.float64)
    if xs.shape[:2] != dq.shape[:2]:
        raise ValueError(f"inputs {xs.shape} and loss gradients {dq.shape} are not aligned in time/batch")
    _, cache = forward_sequence(net, xs)
    return backward(net, cache, dq)


def finite_diff_grad(net: AgentNet, episode, loss_fn, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``loss_fn(net, episode)``; slow, for testing only."""
    if not step > 0:
        raise ValueError("step must be positive")
    probe = net.copy()
    grad = np.empty_like(probe.params)
    for k in range(probe.params.size):
        orig = probe.params[k]
        probe.params[k] = orig + step
        up = loss_fn(probe, episode)
        probe.params[k] = orig - step
        down = loss_fn(probe, episode)
        probe.params[k] = orig
        grad[k] = (up - down) / (2.0 * step)
    return grad


@dataclass
class AdamMoments:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, size: int) -> AdamMoments:
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_update(
    params: np.ndarray,
    grads: np.ndarray,
    moments: AdamMoments,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps_num: float = 1e-8,
) -> tuple[np.ndarray, AdamMoments]:
    """One bias-corrected Adam step. Returns new params and moments; inputs are not modified."""
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    t = moments.step_count + 1
    m = beta1 * moments.m + (1.0 - beta1) * grads
    v = beta2 * moments.v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + eps_num)
    return new, AdamMoments(m, v, t)


def init_params(input_dim: int, hidden_dim: int, rng: np.random.Generator, n_layers: int = 2) -> AgentNet:
    """Weights ~ Uniform(-k, k) with ``k = 1/sqrt(fan_in)`` of each matrix; biases zero."""
    net = AgentNet(input_dim, hidden_dim, n_layers)
    for name, shape in net.layout:
        if len(shape) == 2:
            k = 1.0 / np.sqrt(shape[1])
            net.views[name][:] = rng.uniform(-k, k, size=shape)
    return net


class StackedNets:
    """A population's networks packed into batched arrays for fast simultaneous evaluation.

    Agent ``i``'s input is zero-padded to the population's widest input;
    the matching weight columns are zero, so outputs equal each agent's own
    network. Gates are packed in the order r, z, h along the last axis.
    Built from the agents' current parameters; rebuild after any update.
    """

    def __init__(self, nets: list[AgentNet]):
        self.nets = nets
        self.n_agents = len(nets)
        self.hidden_dim = m = nets[0].hidden_dim
        self.n_layers = nets[0].n_layers
        if any(n.hidden_dim != m or n.n_layers != self.n_layers for n in nets):
            raise ValueError("all networks in a stack need the same hidden size and depth")
        self.input_dims = [n.input_dim for n in nets]
        self.width = max(self.input_dims)
        N = self.n_agents
        self.W, self.U_rz, self.U_h, self.b = [], [], [], []
        for layer in range(self.n_layers):
            fan_in = self.width if layer == 0 else m
            W = np.zeros((N, fan_in, 3 * m))
            U_rz = np.empty((N, m, 2 * m))
            U_h = np.empty((N, m, m))
            b = np.empty((N, 1, 3 * m))
            for i, net in enumerate(nets):
                p = net.layer(layer)
                d = p["W_r"].shape[1]
                for k, g in enumerate(GATES):
                    W[i, :d, k * m : (k + 1) * m] = p[f"W_{g}"].T
                    b[i, 0, k * m : (k + 1) * m] = p[f"b_{g}"]
                U_rz[i, :, :m] = p["U_r"].T
                U_rz[i, :, m:] = p["U_z"].T
                U_h[i] = p["U_h"].T
            self.W.append(W)
            self.U_rz.append(U_rz)
            self.U_h.append(U_h)
            self.b.append(b)
        self.head_w = np.stack([n["head_w"].T for n in nets])  # (N, m, 2)
        self.head_b = np.stack([n["head_b"][None, :] for n in nets])  # (N, 1, 2)

    def zero_state(self, batch: int) -> list[np.ndarray]:
        return [np.zeros((self.n_agents, batch, self.hidden_dim)) for _ in range(self.n_layers)]

    def step(self, x: np.ndarray, hidden: list[np.ndarray]) -> tuple[np.ndarray, list[np.ndarray]]:
        """``x`` is (N, B, width); returns Q-values (N, B, 2) and the new hidden state."""
        m = self.hidden_dim
        new_hidden = []
        inp = x
        for layer, h in enumerate(hidden):
            pre = inp @ self.W[layer] + self.b[layer]
            rz = sigmoid(pre[..., : 2 * m] + h @ self.U_rz[layer])
            r, z = rz[..., :m], rz[..., m:]
            hc = np.tanh(pre[..., 2 * m :] + (r * h) @ self.U_h[layer])
            inp = z * h + (1.0 - z) * hc
            new_hidden.append(inp)
        return inp @ self.head_w + self.head_b, new_hidden

    def forward_sequence(self, xs: np.ndarray):
        """``xs`` is (T, N, B, width). Returns Q-values (T, N, B, 2) and a cache for ``backward``."""
        T, N, B, _ = xs.shape
        m = self.hidden_dim
        cache = SequenceCache([], [], [], [], [], None)
        seq = xs
        for layer in range(self.n_layers):
            pre = seq @ self.W[layer] + self.b[layer]
            h_prev = np.empty((T, N, B, m))
            rz_all = np.empty((T, N, B, 2 * m))
            hc_all = np.empty((T, N, B, m))
            out = np.empty((T, N, B, m))
            h = np.zeros((N, B, m))
            U_rz, U_h = self.U_rz[layer], self.U_h[layer]
            for t in range(T):
                h_prev[t] = h
                rz = sigmoid(pre[t, ..., : 2 * m] + h @ U_rz)
                hc = np.tanh(pre[t, ..., 2 * m :] + (rz[..., :m] * h) @ U_h)
                z = rz[..., m:]
                h = z * h + (1.0 - z) * hc
                rz_all[t], hc_all[t], out[t] = rz, hc, h
            cache.inputs.append(seq)
            cache.h_prev.append(h_prev)
            cache.r.append(rz_all[..., :m])
            cache.z.append(rz_all[..., m:])
            cache.hc.append(hc_all)
            seq = out
        cache.top = seq
        return seq @ self.head_w + self.head_b, cache

    def backward(self, cache: SequenceCache, dq: np.ndarray) -> list[np.ndarray]:
        """Per-agent flat gradients of ``sum(dq * q)``; ``dq`` is (T, N, B, 2)."""
        T, N, B, _ = dq.shape
        m = self.hidden_dim
        TB = T * B

        def flat(a):  # (T, N, B, k) -> (N, T*B, k)
            return a.transpose(1, 0, 2, 3).reshape(N, TB, a.shape[-1])

        g_head_w = flat(cache.top).transpose(0, 2, 1) @ flat(dq)  # (N, m, 2)
        g_head_b = dq.sum(axis=(0, 2))  # (N, 2)
        d_out = dq @ self.head_w.transpose(0, 2, 1)
        g_W, g_U_rz, g_U_h, g_b = [None] * self.n_layers, [None] * self.n_layers, [None] * self.n_layers, [None] * self.n_layers
        for layer in reversed(range(self.n_layers)):
            hp, r_all, z_all, hc_all = cache.h_prev[layer], cache.r[layer], cache.z[layer], cache.hc[layer]
            U_rz_T = self.U_rz[layer].transpose(0, 2, 1)
            U_h_T = self.U_h[layer].transpose(0, 2, 1)
            da = np.empty((T, N, B, 3 * m))
            carry = np.zeros((N, B, m))
            for t in reversed(range(T)):
                dh = d_out[t] + carry
                h, r, z, hc = hp[t], r_all[t], z_all[t], hc_all[t]
                dah = dh * (1.0 - z) * (1.0 - hc * hc)
                drh = dah @ U_h_T
                da[t, ..., :m] = drh * h * r * (1.0 - r)
                da[t, ..., m : 2 * m] = dh * (h - hc) * z * (1.0 - z)
                da[t, ..., 2 * m :] = dah
                carry = dh * z + drh * r + da[t, ..., : 2 * m] @ U_rz_T
            da_f = flat(da)
            g_W[layer] = flat(cache.inputs[layer]).transpose(0, 2, 1) @ da_f
            g_U_rz[layer] = flat(hp).transpose(0, 2, 1) @ da_f[..., : 2 * m]
            g_U_h[layer] = flat(r_all * hp).transpose(0, 2, 1) @ da_f[..., 2 * m :]
            g_b[layer] = da_f.sum(axis=1)
            if layer > 0:
                d_out = da @ self.W[layer].transpose(0, 2, 1)
        grads = []
        for i, net in enumerate(self.nets):
            g = AgentNet(net.input_dim, m, self.n_layers)
            for layer in range(self.n_layers):
                d = net.input_dim if layer == 0 else m
                pre = f"l{layer}."
                for k, gate in enumerate(GATES):
                    cols = slice(k * m, (k + 1) * m)
                    g.views[pre + f"W_{gate}"][:] = g_W[layer][i, :d, cols].T
                    g.views[pre + f"b_{gate}"][:] = g_b[layer][i, cols]
                g.views[pre + "U_r"][:] = g_U_rz[layer][i, :, :m].T
                g.views[pre + "U_z"][:] = g_U_rz[layer][i, :, m:].T
                g.views[pre + "U_h"][:] = g_U_h[layer][i].T
            g.views["head_w"][:] = g_head_w[i].T
            g.views["head_b"][:] = g_head_b[i]
            grads.append(g.params)
        return grads
