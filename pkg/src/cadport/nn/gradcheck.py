"""Central finite-difference verification of analytic gradients."""

from dataclasses import dataclass

import numpy as np


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    worst_param: str | None
    checked: int

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return f"gradcheck {status}: max rel error {self.max_rel_error:.3e} ({self.worst_param}) over {self.checked} entries"


def relative_error(a, b, floor=1e-6):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def finite_diff_check(network, params, x, tolerance=1e-4, step=1e-5, seed=0, grad_fn=None, state=None):
    """Compare every parameter gradient against central differences.

    The scalar objective is ``sum(R * network(x))`` for a fixed random
    projection ``R``. ``grad_fn(params, x, R)`` may replace the analytic path
    (used to inject faults in tests).
    """
    y, _, _ = network.forward(params, x, state)
    R = np.random.default_rng(seed).standard_normal(y.shape)

    def loss(p):
        out, _, _ = network.forward(p, x, state)
        return float(np.sum(R * out))

    if grad_fn is None:
        _, cache, _ = network.forward(params, x, state)
        _, grads = network.backward(cache, R)
    else:
        grads = grad_fn(params, x, R)

    worst, worst_name, checked = 0.0, None, 0
    for name, w in params.items():
        analytic = grads[name]
        numeric = np.empty_like(w)
        flat = w.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss(params)
            flat[i] = orig - step
            down = loss(params)
            flat[i] = orig
            num_flat[i] = (up - down) / (2.0 * step)
        if w.size:
            err = float(np.max(relative_error(analytic, numeric)))
            checked += w.size
            if err > worst:
                worst, worst_name = err, name
    return GradCheckReport(worst < tolerance, worst, worst_name, checked)
