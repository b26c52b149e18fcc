"""Adam and the L1 penalty."""

from dataclasses import dataclass, field

import numpy as np

from cadport.errors import NumericError, ParameterError


@dataclass
class Adam:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params, grads):
        """Update ``params`` in place.

        A step whose gradients are all exactly zero leaves parameters, moments
        and the step counter untouched.
        """
        for name, g in grads.items():
            if name not in params:
                raise ParameterError(f"gradient for unknown parameter {name!r}")
            if g.shape != params[name].shape:
                raise ParameterError(f"gradient shape {g.shape} does not match parameter {name!r} {params[name].shape}")
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter {name!r}")
        if all(not np.any(g) for g in grads.values()):
            return params
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, g in grads.items():
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


def adam_step(state, params, grads):
    return state.step(params, grads)


def l1_penalty(params, lam, names=None):
    """Return ``(lam * sum|w|, lam * sign(w))`` over ``names`` (default: all weights, no biases)."""
    if lam < 0:
        raise ParameterError("L1 weight must be non-negative")
    if names is None:
        names = params.weight_names() if hasattr(params, "weight_names") else list(params)
    value = 0.0
    sub = {}
    for name in names:
        w = params[name]
        value += float(np.abs(w).sum())
        sub[name] = lam * np.sign(w)
    return lam * value, sub
