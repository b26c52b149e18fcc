"""Backend selection for the numerical hot loops.

The compiled Cython module is preferred. Set ``CADPORT_PURE_PYTHON=1`` to
force the pure-Python fallback (used by the equivalence tests and the
benchmark).
"""

import os

import numpy as np

from cadport import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("CADPORT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from cadport import _ckernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    else:
        _impl = _compiled
        BACKEND = "cython"
else:
    _compiled = None


def compiled_available():
    try:
        from cadport import _ckernels  # noqa: F401
    except ImportError:
        return False
    return True


def get_backend(name=None):
    """Return the kernel module for ``name`` ("cython" / "python"), or the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from cadport import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def binary_search_perplexity(sqdist, perplexity, tol=1e-5, max_iter=200):
    return _impl.binary_search_perplexity(
        np.ascontiguousarray(sqdist, dtype=np.float64), float(perplexity), float(tol), int(max_iter)
    )


def tsne_grad(Y, P, exaggeration=1.0):
    return _impl.tsne_grad(
        np.ascontiguousarray(Y, dtype=np.float64),
        np.ascontiguousarray(P, dtype=np.float64),
        float(exaggeration),
    )


def dbscan_scan(indptr, indices, is_core):
    return _impl.dbscan_scan(
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
        np.ascontiguousarray(is_core, dtype=np.uint8),
    )


def ema(x, alpha):
    return _impl.ema(np.ascontiguousarray(x, dtype=np.float64), float(alpha))
