# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Semantics mirror :mod:`cadport._pykernels` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, INFINITY

cnp.import_array()


def binary_search_perplexity(const double[:, ::1] sqdist, double perplexity,
                             double tol, int max_iter):
    cdef Py_ssize_t n = sqdist.shape[0]
    cdef Py_ssize_t i, j, it
    cdef double log_u = log(perplexity)
    cdef double beta, lo, hi, dmin, dmax, sum_p, sum_dp, h, diff, p
    cdef bint done
    cdef long failed = -1
    P_arr = np.zeros((n, n), dtype=np.float64)
    beta_arr = np.ones(n, dtype=np.float64)
    cdef double[:, ::1] P = P_arr
    cdef double[::1] betas = beta_arr

    for i in range(n):
        if n == 2:
            P[i, 1 - i] = 1.0
            continue
        dmin = INFINITY
        dmax = -INFINITY
        for j in range(n):
            if j != i:
                if sqdist[i, j] < dmin:
                    dmin = sqdist[i, j]
                if sqdist[i, j] > dmax:
                    dmax = sqdist[i, j]
        beta = 1.0
        lo = 0.0
        hi = INFINITY
        done = False
        if dmax == dmin:
            # all neighbours equidistant: the row is uniform at every precision
            for j in range(n):
                P[i, j] = 0.0 if j == i else 1.0 / (n - 1)
            betas[i] = beta
            continue
        for it in range(max_iter):
            sum_p = 0.0
            sum_dp = 0.0
            for j in range(n):
                if j == i:
                    P[i, j] = 0.0
                    continue
                p = exp(-(sqdist[i, j] - dmin) * beta)
                P[i, j] = p
                sum_p += p
                sum_dp += (sqdist[i, j] - dmin) * p
            h = log(sum_p) + beta * sum_dp / sum_p
            diff = h - log_u
            if fabs(diff) <= tol:
                done = True
                break
            if diff > 0.0:
                lo = beta
                if hi == INFINITY:
                    beta = beta * 2.0
                else:
                    beta = (beta + hi) / 2.0
            else:
                hi = beta
                if lo == 0.0:
                    beta = beta / 2.0
                else:
                    beta = (beta + lo) / 2.0
        for j in range(n):
            P[i, j] /= sum_p
        betas[i] = beta
        if not done and failed < 0:
            failed = i
    return P_arr, beta_arr, failed


def tsne_grad(const double[:, ::1] Y, const double[:, ::1] P, double exaggeration):
    cdef Py_ssize_t n = Y.shape[0]
    cdef Py_ssize_t d = Y.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double z = 0.0, dist, diff, w, kl = 0.0, q
    num_arr = np.zeros((n, n), dtype=np.float64)
    grad_arr = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] num = num_arr
    cdef double[:, ::1] grad = grad_arr

    for i in range(n):
        for j in range(i + 1, n):
            dist = 0.0
            for k in range(d):
                diff = Y[i, k] - Y[j, k]
                dist += diff * diff
            w = 1.0 / (1.0 + dist)
            num[i, j] = w
            num[j, i] = w
            z += 2.0 * w
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            q = num[i, j] / z
            w = 4.0 * (exaggeration * P[i, j] - q) * num[i, j]
            for k in range(d):
                grad[i, k] += w * (Y[i, k] - Y[j, k])
            if P[i, j] > 0.0:
                if q < 1e-300:
                    q = 1e-300
                kl += P[i, j] * log(P[i, j] / q)
    return grad_arr, kl


def dbscan_scan(const long[::1] indptr, const long[::1] indices,
                const unsigned char[::1] is_core):
    cdef Py_ssize_t n = is_core.shape[0]
    cdef Py_ssize_t i, head, tail, q, k, p
    cdef long cluster = 0
    labels_arr = np.full(n, -1, dtype=np.int64)
    queue_arr = np.empty(max(n, 1), dtype=np.int64)
    cdef long[::1] labels = labels_arr
    cdef long[::1] queue = queue_arr

    for i in range(n):
        if labels[i] != -1 or not is_core[i]:
            continue
        labels[i] = cluster
        head = 0
        tail = 0
        queue[tail] = i
        tail += 1
        while head < tail:
            p = queue[head]
            head += 1
            for k in range(indptr[p], indptr[p + 1]):
                q = indices[k]
                if labels[q] == -1:
                    labels[q] = cluster
                    if is_core[q]:
                        queue[tail] = q
                        tail += 1
        cluster += 1
    return labels_arr, cluster


def ema(const double[::1] x, double alpha):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t t
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    if n == 0:
        return out_arr
    out[0] = x[0]
    for t in range(1, n):
        out[t] = alpha * x[t] + (1.0 - alpha) * out[t - 1]
    return out_arr
