"""Independent brute-force reimplementations used as test oracles."""

import math

import numpy as np


def dbscan_closure(points, eps, min_pts):
    """Partition by transitive closure of density-reachability, as a set of frozensets plus noise.

    Border points reachable from several clusters are ambiguous; they are
    returned separately with the set of clusters (identified by their core
    sets) that can claim them.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = len(pts)
    near = [[j for j in range(n) if math.dist(pts[i], pts[j]) <= eps] for i in range(n)]
    core = [len(near[i]) >= min_pts for i in range(n)]
    comp = [-1] * n
    k = 0
    for i in range(n):
        if core[i] and comp[i] < 0:
            stack = [i]
            comp[i] = k
            while stack:
                p = stack.pop()
                for q in near[p]:
                    if core[q] and comp[q] < 0:
                        comp[q] = k
                        stack.append(q)
            k += 1
    cores = [frozenset(i for i in range(n) if comp[i] == c) for c in range(k)]
    border = {}
    noise = set()
    for i in range(n):
        if core[i]:
            continue
        owners = {comp[q] for q in near[i] if core[q]}
        if owners:
            border[i] = owners
        else:
            noise.add(i)
    return cores, border, noise


def assignment_matches_closure(labels, points, eps, min_pts):
    cores, border, noise = dbscan_closure(points, eps, min_pts)
    labels = np.asarray(labels)
    if set(np.flatnonzero(labels == -1).tolist()) != noise:
        return False
    ids = sorted(set(labels.tolist()) - {-1})
    if len(ids) != len(cores):
        return False
    core_label = {}
    for c, members in enumerate(cores):
        labs = {int(labels[i]) for i in members}
        if len(labs) != 1:
            return False
        core_label[c] = labs.pop()
    if len(set(core_label.values())) != len(cores):
        return False
    for i, owners in border.items():
        if int(labels[i]) not in {core_label[c] for c in owners}:
            return False
    for lab in ids:
        members = set(np.flatnonzero(labels == lab).tolist())
        c = [c for c, v in core_label.items() if v == lab][0]
        if not cores[c] <= members:
            return False
    return True


def max_drawdown(curve):
    worst = 0.0
    for i in range(len(curve)):
        for j in range(i + 1, len(curve)):
            worst = max(worst, (curve[i] - curve[j]) / curve[i])
    return worst


def mean(xs):
    return math.fsum(xs) / len(xs)


def sample_sd(xs):
    m = mean(xs)
    return math.sqrt(math.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1))


def curve_metrics(curve, periods_per_year=252):
    r = [curve[i + 1] / curve[i] - 1.0 for i in range(len(curve) - 1)]
    mdd = max_drawdown(curve)
    down = [min(x, 0.0) for x in r]
    return {
        "final_value_pct": 100.0 * curve[-1] / curve[0],
        "max_drawdown": mdd,
        "sharpe": mean(r) / sample_sd(r) * math.sqrt(periods_per_year),
        "sortino": mean(r) / sample_sd(down) * math.sqrt(periods_per_year),
        "calmar": mean(r) * periods_per_year / mdd,
        "positive_days": sum(1 for i in range(len(r)) if curve[i + 1] > curve[i]) / len(r),
    }
