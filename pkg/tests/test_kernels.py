"""The compiled kernels and the pure-Python fallback must agree."""

import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cadport import kernels
from cadport.tsne import squared_distances

py = kernels.get_backend("python")
needs_compiled = pytest.mark.skipif(not kernels.compiled_available(), reason="extension not built")


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_active_backend_is_compiled_when_available():
    if os.environ.get("CADPORT_PURE_PYTHON") in ("1", "true", "yes"):
        assert kernels.BACKEND == "python"
    elif kernels.compiled_available():
        assert kernels.BACKEND == "cython"


@needs_compiled
@given(st.integers(0, 10_000), st.integers(3, 30))
def test_perplexity_search_agrees(seed, n):
    cy = kernels.get_backend("cython")
    D = squared_distances(np.random.default_rng(seed).normal(size=(n, 3)))
    perp = min(5.0, (n - 1) / 2)
    P1, b1, f1 = py.binary_search_perplexity(D, perp, 1e-5, 200)
    P2, b2, f2 = cy.binary_search_perplexity(D, perp, 1e-5, 200)
    assert f1 == f2 == -1
    np.testing.assert_allclose(b1, b2, rtol=1e-12)
    np.testing.assert_allclose(P1, P2, rtol=1e-10, atol=1e-15)


@needs_compiled
@given(st.integers(0, 10_000), st.floats(1.0, 12.0))
def test_tsne_gradient_agrees(seed, exag):
    cy = kernels.get_backend("cython")
    rng = np.random.default_rng(seed)
    P = rng.uniform(size=(12, 12))
    P = P + P.T
    np.fill_diagonal(P, 0)
    P /= P.sum()
    Y = rng.normal(size=(12, 2))
    g1, k1 = py.tsne_grad(Y, P, exag)
    g2, k2 = cy.tsne_grad(Y, P, exag)
    np.testing.assert_allclose(g1, g2, rtol=1e-10, atol=1e-14)
    assert k1 == pytest.approx(k2, rel=1e-12)


@needs_compiled
@given(st.integers(0, 10_000))
def test_dbscan_scan_agrees(seed):
    cy = kernels.get_backend("cython")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(size=(40, 2))
    adj = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1)) <= 0.15
    counts = adj.sum(1)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    indices = np.nonzero(adj)[1].astype(np.int64)
    core = (counts >= 3).astype(np.uint8)
    l1, n1 = py.dbscan_scan(indptr, indices, core)
    l2, n2 = cy.dbscan_scan(indptr, indices, core)
    assert n1 == n2
    np.testing.assert_array_equal(l1, l2)


@needs_compiled
@given(st.integers(0, 10_000), st.floats(0.01, 1.0))
def test_ema_agrees(seed, alpha):
    cy = kernels.get_backend("cython")
    x = np.random.default_rng(seed).normal(size=50)
    np.testing.assert_allclose(py.ema(x, alpha), cy.ema(x, alpha), rtol=1e-13)
