"""Pure-Python implementations of the hot loops.

Used when the compiled extension is unavailable or ``CADPORT_PURE_PYTHON=1``.
Every function here has the same signature and return convention as its
counterpart in ``_ckernels.pyx``.
"""

import math
from collections import deque

import numpy as np


def binary_search_perplexity(sqdist, perplexity, tol, max_iter):
    sqdist = np.ascontiguousarray(sqdist, dtype=np.float64)
    n = sqdist.shape[0]
    log_u = math.log(perplexity)
    P = np.zeros((n, n))
    betas = np.ones(n)
    failed = -1
    for i in range(n):
        if n == 2:
            P[i, 1 - i] = 1.0
            continue
        mask = np.arange(n) != i
        d = sqdist[i, mask]
        d = d - d.min()
        beta, lo, hi = 1.0, 0.0, math.inf
        # all neighbours equidistant: the row is uniform at every precision
        done = not np.any(d > 0.0)
        if done:
            p, sum_p = np.ones(n - 1), float(n - 1)
        for _ in range(0 if done else max_iter):
            p = np.exp(-d * beta)
            sum_p = p.sum()
            h = math.log(sum_p) + beta * float(d @ p) / sum_p
            diff = h - log_u
            if abs(diff) <= tol:
                done = True
                break
            if diff > 0.0:
                lo = beta
                beta = beta * 2.0 if hi == math.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = beta / 2.0 if lo == 0.0 else (beta + lo) / 2.0
        P[i, mask] = p / sum_p
        betas[i] = beta
        if not done and failed < 0:
            failed = i
    return P, betas, failed


def tsne_grad(Y, P, exaggeration):
    diff = Y[:, None, :] - Y[None, :, :]
    num = 1.0 / (1.0 + np.sum(diff * diff, axis=-1))
    np.fill_diagonal(num, 0.0)
    Q = num / num.sum()
    W = 4.0 * (exaggeration * P - Q) * num
    grad = np.einsum("ij,ijk->ik", W, diff)
    pos = P > 0.0
    kl = float(np.sum(P[pos] * np.log(P[pos] / np.maximum(Q[pos], 1e-300))))
    return grad, kl


def dbscan_scan(indptr, indices, is_core):
    n = len(is_core)
    labels = np.full(n, -1, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if labels[i] != -1 or not is_core[i]:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            p = queue.popleft()
            for q in indices[indptr[p]:indptr[p + 1]]:
                if labels[q] == -1:
                    labels[q] = cluster
                    if is_core[q]:
                        queue.append(q)
        cluster += 1
    return labels, cluster


def ema(x, alpha):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    if len(x) == 0:
        return out
    acc = x[0]
    out[0] = acc
    for t in range(1, len(x)):
        acc = alpha * x[t] + (1.0 - alpha) * acc
        out[t] = acc
    return out
