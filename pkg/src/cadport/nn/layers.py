"""Dense, gated-recurrent, 1-D convolution and softmax layers with exact backward passes.

Every layer follows the same protocol::

    y, cache, state = layer.forward(params, x, state=None)
    dx, grads = layer.backward(params, cache, dy)

``params`` is the layer's own dict of arrays; ``grads`` mirrors its keys.
Only the recurrent layer uses ``state``.
"""

import numpy as np

from cadport.errors import ShapeError

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid")


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _activate(kind, z):
    if kind == "identity":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return sigmoid(z)


def _activation_grad(kind, z, y, dy):
    if kind == "identity":
        return dy
    if kind == "relu":
        return dy * (z > 0)
    if kind == "tanh":
        return dy * (1.0 - y * y)
    return dy * y * (1.0 - y)


class Layer:
    kind = "layer"
    recurrent = False

    def __init__(self, name):
        self.name = name

    def init_params(self, rng):
        return {}

    def check_input(self, x, last_dim):
        if x.shape[-1] != last_dim:
            raise ShapeError(f"layer {self.name!r} ({self.kind}) expects last dim {last_dim}, got shape {x.shape}")

    @property
    def out_features(self):
        raise NotImplementedError


class Dense(Layer):
    kind = "dense"

    def __init__(self, name, n_in, n_out, activation="identity", init="glorot"):
        super().__init__(name)
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.n_in, self.n_out, self.activation, self.init = n_in, n_out, activation, init

    @property
    def in_features(self):
        return self.n_in

    @property
    def out_features(self):
        return self.n_out

    def init_params(self, rng):
        if self.init == "zeros":
            W = np.zeros((self.n_in, self.n_out))
        else:
            W = glorot(rng, (self.n_in, self.n_out), self.n_in, self.n_out)
        return {"W": W, "b": np.zeros(self.n_out)}

    def forward(self, p, x, state=None):
        self.check_input(x, self.n_in)
        z = x @ p["W"] + p["b"]
        y = _activate(self.activation, z)
        return y, (x, z, y), None

    def backward(self, p, cache, dy):
        x, z, y = cache
        dz = _activation_grad(self.activation, z, y, dy)
        x2 = x.reshape(-1, self.n_in)
        dz2 = dz.reshape(-1, self.n_out)
        grads = {"W": x2.T @ dz2, "b": dz2.sum(axis=0)}
        return dz @ p["W"].T, grads


class LSTM(Layer):
    """Gated memory cell over a (time, batch..., features) input."""

    kind = "recurrent"
    recurrent = True

    def __init__(self, name, n_in, n_hidden):
        super().__init__(name)
        self.n_in, self.n_hidden = n_in, n_hidden

    @property
    def in_features(self):
        return self.n_in

    @property
    def out_features(self):
        return self.n_hidden

    def init_params(self, rng):
        H = self.n_hidden
        return {
            "Wx": glorot(rng, (self.n_in, 4 * H), self.n_in, 4 * H),
            "Wh": glorot(rng, (H, 4 * H), H, 4 * H),
            "b": np.zeros(4 * H),
        }

    def zero_state(self, batch_shape):
        shape = tuple(batch_shape) + (self.n_hidden,)
        return np.zeros(shape), np.zeros(shape)

    def forward(self, p, x, state=None):
        self.check_input(x, self.n_in)
        if x.ndim < 2:
            raise ShapeError(f"layer {self.name!r} (recurrent) needs a leading time axis, got shape {x.shape}")
        T = x.shape[0]
        batch_shape = x.shape[1:-1]
        H = self.n_hidden
        xs = x.reshape(T, -1, self.n_in)
        B = xs.shape[1]
        if state is None:
            h, c = np.zeros((B, H)), np.zeros((B, H))
        else:
            h, c = (np.asarray(s, dtype=np.float64).reshape(B, H) for s in state)
        hs = np.empty((T + 1, B, H))
        cs = np.empty((T + 1, B, H))
        gates = np.empty((T, B, 4 * H))
        tanh_c = np.empty((T, B, H))
        hs[0], cs[0] = h, c
        Wx, Wh, b = p["Wx"], p["Wh"], p["b"]
        for t in range(T):
            z = xs[t] @ Wx + hs[t] @ Wh + b
            g_ifo = sigmoid(z[:, : 3 * H])
            g_c = np.tanh(z[:, 3 * H:])
            gates[t, :, : 3 * H] = g_ifo
            gates[t, :, 3 * H:] = g_c
            cs[t + 1] = g_ifo[:, H: 2 * H] * cs[t] + g_ifo[:, :H] * g_c
            tanh_c[t] = np.tanh(cs[t + 1])
            hs[t + 1] = g_ifo[:, 2 * H: 3 * H] * tanh_c[t]
        y = hs[1:].reshape((T,) + tuple(batch_shape) + (H,))
        final = (hs[T].reshape(tuple(batch_shape) + (H,)), cs[T].reshape(tuple(batch_shape) + (H,)))
        return y, (xs, hs, cs, gates, tanh_c, x.shape), final

    def backward(self, p, cache, dy):
        xs, hs, cs, gates, tanh_c, x_shape = cache
        T, B, _ = xs.shape
        H = self.n_hidden
        dys = dy.reshape(T, B, H)
        Wx, Wh = p["Wx"], p["Wh"]
        dWx = np.zeros_like(Wx)
        dWh = np.zeros_like(Wh)
        db = np.zeros(4 * H)
        dxs = np.empty_like(xs)
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        dz = np.empty((B, 4 * H))
        for t in range(T - 1, -1, -1):
            i = gates[t, :, :H]
            f = gates[t, :, H: 2 * H]
            o = gates[t, :, 2 * H: 3 * H]
            g = gates[t, :, 3 * H:]
            dh = dys[t] + dh_next
            dc = dc_next + dh * o * (1.0 - tanh_c[t] ** 2)
            dz[:, :H] = dc * g * i * (1.0 - i)
            dz[:, H: 2 * H] = dc * cs[t] * f * (1.0 - f)
            dz[:, 2 * H: 3 * H] = dh * tanh_c[t] * o * (1.0 - o)
            dz[:, 3 * H:] = dc * i * (1.0 - g * g)
            dWx += xs[t].T @ dz
            dWh += hs[t].T @ dz
            db += dz.sum(axis=0)
            dxs[t] = dz @ Wx.T
            dh_next = dz @ Wh.T
            dc_next = dc * f
        return dxs.reshape(x_shape), {"Wx": dWx, "Wh": dWh, "b": db}


class Conv1d(Layer):
    """Convolution along axis -2 of a (..., length, channels) input, zero 'same' padding."""

    kind = "conv1d"

    def __init__(self, name, n_in, n_out, kernel=3, activation="identity", init="glorot"):
        super().__init__(name)
        if kernel < 1 or kernel % 2 == 0:
            raise ValueError("conv1d kernel width must be a positive odd integer")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.n_in, self.n_out, self.kernel, self.activation, self.init = n_in, n_out, kernel, activation, init

    @property
    def in_features(self):
        return self.n_in

    @property
    def out_features(self):
        return self.n_out

    def init_params(self, rng):
        k = self.kernel
        if self.init == "zeros":
            W = np.zeros((k * self.n_in, self.n_out))
        else:
            W = glorot(rng, (k * self.n_in, self.n_out), k * self.n_in, self.n_out)
        return {"W": W, "b": np.zeros(self.n_out)}

    def _columns(self, x):
        pad = self.kernel // 2
        widths = [(0, 0)] * (x.ndim - 2) + [(pad, pad), (0, 0)]
        xp = np.pad(x, widths)
        L = x.shape[-2]
        cols = np.concatenate([xp[..., j: j + L, :] for j in range(self.kernel)], axis=-1)
        return cols

    def forward(self, p, x, state=None):
        self.check_input(x, self.n_in)
        if x.ndim < 2:
            raise ShapeError(f"layer {self.name!r} (conv1d) needs a (length, channels) input, got shape {x.shape}")
        cols = self._columns(x)
        z = cols @ p["W"] + p["b"]
        y = _activate(self.activation, z)
        return y, (x.shape, cols, z, y), None

    def backward(self, p, cache, dy):
        x_shape, cols, z, y = cache
        dz = _activation_grad(self.activation, z, y, dy)
        grads = {
            "W": cols.reshape(-1, cols.shape[-1]).T @ dz.reshape(-1, self.n_out),
            "b": dz.reshape(-1, self.n_out).sum(axis=0),
        }
        dcols = dz @ p["W"].T
        pad = self.kernel // 2
        L = x_shape[-2]
        padded_shape = x_shape[:-2] + (L + 2 * pad, self.n_in)
        dxp = np.zeros(padded_shape)
        for j in range(self.kernel):
            dxp[..., j: j + L, :] += dcols[..., j * self.n_in: (j + 1) * self.n_in]
        return dxp[..., pad: pad + L, :], grads


class Softmax(Layer):
    kind = "softmax"

    def __init__(self, name, n_features=None):
        super().__init__(name)
        self.n_features = n_features

    @property
    def in_features(self):
        return self.n_features

    @property
    def out_features(self):
        return self.n_features

    def forward(self, p, x, state=None):
        if self.n_features is not None:
            self.check_input(x, self.n_features)
        y = softmax(x)
        return y, y, None

    def backward(self, p, cache, dy):
        y = cache
        return y * (dy - np.sum(dy * y, axis=-1, keepdims=True)), {}


def softmax(x):
    z = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
