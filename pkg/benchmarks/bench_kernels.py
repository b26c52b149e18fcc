"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--n 200]

Prints one row per kernel with the best-of-N wall time for each backend,
the speedup and the max absolute difference between the two outputs.
"""

import argparse
import sys
import timeit

import numpy as np

from cadport import kernels
from cadport.tsne import squared_distances


def cases(n, rng):
    X = rng.normal(size=(n, 5))
    D = squared_distances(X)
    P = rng.uniform(size=(n, n))
    P = P + P.T
    np.fill_diagonal(P, 0.0)
    P /= P.sum()
    Y = rng.normal(size=(n, 2))

    pts = rng.uniform(size=(n * 5, 2))
    adj = squared_distances(pts) <= 0.05 ** 2
    counts = adj.sum(1)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    indices = np.nonzero(adj)[1].astype(np.int64)
    core = (counts >= 4).astype(np.uint8)

    series = rng.normal(size=100_000)
    return {
        "perplexity": (lambda k: k.binary_search_perplexity(D, 30.0, 1e-5, 200), lambda r: r[0]),
        "tsne_grad": (lambda k: k.tsne_grad(Y, P, 12.0), lambda r: r[0]),
        "dbscan_scan": (lambda k: k.dbscan_scan(indptr, indices, core), lambda r: r[0]),
        "ema": (lambda k: k.ema(series, 2.0 / 13.0), lambda r: r),
    }


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=200, help="points for the t-SNE kernels")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if not kernels.compiled_available():
        print("compiled extension not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    py, cy = kernels.get_backend("python"), kernels.get_backend("cython")
    rng = np.random.default_rng(args.seed)

    print(f"{'kernel':<12} {'python s':>10} {'cython s':>10} {'speedup':>8} {'max |diff|':>11}")
    for name, (call, pick) in cases(args.n, rng).items():
        t_py = best_time(lambda: call(py), args.repeat)
        t_cy = best_time(lambda: call(cy), args.repeat)
        diff = float(np.max(np.abs(np.asarray(pick(call(py)), float) - np.asarray(pick(call(cy)), float))))
        print(f"{name:<12} {t_py:>10.5f} {t_cy:>10.5f} {t_py / t_cy:>7.1f}x {diff:>11.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
