"""Density-based clustering with a deterministic scan order."""

from dataclasses import dataclass

import numpy as np

from cadport import kernels
from cadport.errors import ParameterError, ValidationError

NOISE = -1


@dataclass(frozen=True)
class ClusterParams:
    eps: float
    min_pts: int = 4

    def __post_init__(self):
        if not self.eps > 0:
            raise ParameterError(f"eps must be positive, got {self.eps}")
        if int(self.min_pts) != self.min_pts or self.min_pts < 1:
            raise ParameterError(f"min_pts must be an integer >= 1, got {self.min_pts}")


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    n_clusters: int
    core: np.ndarray | None = None

    def members(self, cluster_id):
        return np.flatnonzero(self.labels == cluster_id)

    @property
    def noise(self):
        return np.flatnonzero(self.labels == NOISE)


def _as_points(points):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.size and not np.all(np.isfinite(pts)):
        raise ValidationError("points must be finite")
    return pts


def pairwise_distances(points):
    pts = _as_points(points)
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def eps_neighborhood(p, points, eps):
    """Indices within Euclidean distance ``eps`` of point ``p`` (including ``p``)."""
    pts = _as_points(points)
    d = np.sqrt(np.sum((pts - pts[p]) ** 2, axis=1))
    return set(np.flatnonzero(d <= eps).tolist())


def canonical_order(points, keys=None):
    """Lexicographic order by coordinates; ties by ``keys`` (e.g. symbols) then index."""
    pts = _as_points(points)
    n = len(pts)
    tie = list(range(n)) if keys is None else list(keys)
    return np.array(sorted(range(n), key=lambda i: (tuple(pts[i]), tie[i], i)), dtype=np.int64)


def dbscan(points, params, keys=None):
    """Cluster ``points``; labels are 0..n_c-1 in discovery order, NOISE for the rest.

    Points are scanned in canonical coordinate order, so border points that two
    clusters can reach go to the cluster discovered first, independent of the
    input order.
    """
    pts = _as_points(points)
    n = len(pts)
    if n == 0:
        return ClusterAssignment(np.zeros(0, dtype=np.int64), 0, np.zeros(0, dtype=bool))
    order = canonical_order(pts, keys)
    sorted_pts = pts[order]
    adj = pairwise_distances(sorted_pts) <= params.eps
    counts = adj.sum(axis=1)
    is_core = counts >= params.min_pts
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(counts)
    indices = np.nonzero(adj)[1].astype(np.int64)
    sorted_labels, n_clusters = kernels.dbscan_scan(indptr, indices, is_core)
    labels = np.empty(n, dtype=np.int64)
    labels[order] = sorted_labels
    core = np.empty(n, dtype=bool)
    core[order] = is_core
    return ClusterAssignment(labels, int(n_clusters), core)


def cluster_sizes(assignment):
    labels = np.asarray(assignment.labels)
    return [int(np.count_nonzero(labels == c)) for c in range(assignment.n_clusters)]


def default_params(points, k=4, scale=2.0, min_pts=4):
    """eps = ``scale`` x median distance to the k-th nearest neighbour."""
    pts = _as_points(points)
    if len(pts) <= k:
        raise ValidationError(f"need more than {k} points to estimate eps")
    d = np.sort(pairwise_distances(pts), axis=1)[:, k]
    eps = scale * float(np.median(d))
    if eps <= 0:
        raise ValidationError("degenerate embedding: median neighbour distance is zero")
    return ClusterParams(eps, min_pts)


def write_assignment(path, symbols, assignment):
    with open(path, "w") as fh:
        for s, lab in zip(symbols, assignment.labels):
            fh.write(f"{s},{int(lab)}\n")


def read_assignment(path):
    symbols, labels = [], []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                s, lab = line.strip().split(",")
                symbols.append(s)
                labels.append(int(lab))
    labels = np.array(labels, dtype=np.int64)
    n_clusters = int(labels.max()) + 1 if len(labels) and labels.max() >= 0 else 0
    return symbols, ClusterAssignment(labels, n_clusters)
