"""Layer stacks, parameter sets and the forward/backward entry points."""

from dataclasses import dataclass

import numpy as np

from cadport.errors import ShapeError, StateError
from cadport.nn.layers import LSTM, Conv1d, Dense, Softmax


class ParamSet(dict):
    """Named float64 arrays, keyed ``"<layer>.<param>"``."""

    def copy(self):
        return ParamSet({k: v.copy() for k, v in self.items()})

    def zeros_like(self):
        return ParamSet({k: np.zeros_like(v) for k, v in self.items()})

    def weight_names(self):
        """Parameters subject to L1 shrinkage (everything except biases)."""
        return [k for k in self if not k.endswith(".b")]

    def abs_sum(self, names=None):
        names = self.weight_names() if names is None else names
        return float(sum(np.abs(self[k]).sum() for k in names))

    def is_finite(self):
        return all(np.all(np.isfinite(v)) for v in self.values())

    def layer(self, name):
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.items() if k.startswith(prefix)}


LAYER_KINDS = {"dense": Dense, "recurrent": LSTM, "conv1d": Conv1d, "softmax": Softmax}


def _make_layer(index, desc):
    desc = dict(desc)
    kind = desc.pop("kind")
    name = desc.pop("name", f"{kind}{index}")
    if kind == "dense":
        return Dense(name, desc["n_in"], desc["n_out"], desc.get("activation", "identity"), desc.get("init", "glorot"))
    if kind == "recurrent":
        return LSTM(name, desc["n_in"], desc["n_hidden"])
    if kind == "conv1d":
        return Conv1d(
            name, desc["n_in"], desc["n_out"], desc.get("kernel", 3),
            desc.get("activation", "identity"), desc.get("init", "glorot"),
        )
    if kind == "softmax":
        return Softmax(name, desc.get("n_features"))
    raise ValueError(f"unknown layer kind {kind!r}")


@dataclass
class Cache:
    network: "Network"
    params: ParamSet
    layer_caches: list


class Network:
    """An ordered stack of layers built from a list of layer descriptors."""

    def __init__(self, spec):
        self.spec = tuple(dict(d) for d in spec)
        self.layers = [_make_layer(i, d) for i, d in enumerate(self.spec)]
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ValueError("layer names must be unique")
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Softmax) and i != len(self.layers) - 1:
                raise ValueError("softmax is only allowed as the terminal layer")
        prev = None
        for layer in self.layers:
            n_in = layer.in_features
            if prev is not None and n_in is not None and prev.out_features is not None and n_in != prev.out_features:
                raise ShapeError(
                    f"layer {layer.name!r} expects {n_in} features but {prev.name!r} produces {prev.out_features}"
                )
            prev = layer

    @property
    def in_features(self):
        return self.layers[0].in_features if self.layers else None

    def init_params(self, rng):
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        params = ParamSet()
        for layer in self.layers:
            for key, value in layer.init_params(rng).items():
                params[f"{layer.name}.{key}"] = value.astype(np.float64)
        return params

    def forward(self, params, x, state=None):
        """Return ``(output, cache, final_states)``; ``state`` maps recurrent layer names to (h, c)."""
        x = np.asarray(x, dtype=np.float64)
        caches = []
        new_state = {}
        for layer in self.layers:
            layer_state = None if state is None else state.get(layer.name)
            x, cache, final = layer.forward(params.layer(layer.name), x, layer_state)
            caches.append(cache)
            if layer.recurrent:
                new_state[layer.name] = final
        return x, Cache(self, params, caches), new_state

    def backward(self, cache, dy):
        """Return ``(d_input, grads)`` for an upstream gradient ``dy`` on the output."""
        if cache is None or not isinstance(cache, Cache) or cache.network is not self:
            raise StateError("backward called without a matching forward cache")
        grads = ParamSet()
        for layer, lc in zip(reversed(self.layers), reversed(cache.layer_caches)):
            dy, g = layer.backward(cache.params.layer(layer.name), lc, dy)
            for key, value in g.items():
                grads[f"{layer.name}.{key}"] = value
        ordered = ParamSet({k: grads[k] for k in cache.params if k in grads})
        return dy, ordered


def forward(network, params, x, state=None):
    if not isinstance(network, Network):
        network = Network(network)
    y, cache, _ = network.forward(params, x, state)
    return y, cache


def backward(cache, dy):
    if cache is None:
        raise StateError("backward called before forward: no cached activations")
    return cache.network.backward(cache, dy)[1]
