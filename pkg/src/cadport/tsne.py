"""Exact t-SNE: perplexity-calibrated affinities and momentum gradient descent on KL(P||Q)."""

from dataclasses import dataclass, field

import numpy as np

from cadport import kernels
from cadport.errors import NumericError, ParameterError, ValidationError


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float | None = None  # None: max(n / exaggeration / 4, 50)
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_initial: float = 0.5
    momentum_final: float = 0.8
    min_gain: float = 0.01
    seed: int = 0


@dataclass
class Embedding:
    coords: np.ndarray
    config: TsneConfig
    kl_trace: list = field(default_factory=list)
    perplexity: float = 0.0


def auto_learning_rate(n, exaggeration):
    return max(n / exaggeration / 4.0, 50.0)


def squared_distances(X):
    X = np.asarray(X, dtype=np.float64)
    sq = np.sum(X * X, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def effective_perplexity(perplexity, n):
    """Clamp the requested perplexity for small inputs so that 1 < perplexity < n."""
    return min(perplexity, max((n - 1) / 3.0, 1.5))


def conditional_probabilities(D, perplexity, tol=1e-5, max_iter=200):
    """Row-conditional Gaussian affinities and their precisions (1 / 2 sigma^2)."""
    n = D.shape[0]
    if n < 2:
        raise ParameterError("need at least two points")
    if not 1.0 < perplexity < n:
        raise ParameterError(f"perplexity {perplexity} must lie in (1, {n})")
    P, beta, failed = kernels.binary_search_perplexity(D, perplexity, tol, max_iter)
    if failed >= 0:
        raise NumericError(f"perplexity bisection did not converge for point {failed} in {max_iter} steps")
    return P, beta


def row_entropy(D, beta, i):
    """Shannon entropy (nats) of row ``i`` of the conditional affinities at precision ``beta``."""
    d = np.delete(D[i], i)
    p = np.exp(-(d - d.min()) * beta)
    p /= p.sum()
    nz = p > 0
    return float(-np.sum(p[nz] * np.log(p[nz])))


def compute_affinities(X, perplexity, tol=1e-5, max_iter=200):
    """Symmetric joint affinities P = (P_j|i + P_i|j) / 2n."""
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValidationError("feature matrix contains non-finite entries")
    n = X.shape[0]
    P_cond, _ = conditional_probabilities(squared_distances(X), perplexity, tol, max_iter)
    P = (P_cond + P_cond.T) / (2.0 * n)
    return P


def kl_divergence(P, Y):
    Y = np.asarray(Y, dtype=np.float64)
    diff = Y[:, None, :] - Y[None, :, :]
    num = 1.0 / (1.0 + np.sum(diff * diff, axis=-1))
    np.fill_diagonal(num, 0.0)
    Q = num / num.sum()
    pos = P > 0
    return float(np.sum(P[pos] * np.log(P[pos] / Q[pos])))


def kl_gradient(P, Y, exaggeration=1.0):
    """Gradient of KL(P||Q) w.r.t. the embedding, and the (unexaggerated) KL value."""
    grad, kl = kernels.tsne_grad(Y, P, exaggeration)
    return grad, kl


def fit_tsne(X, config=TsneConfig(), dims=2):
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 4:
        raise ValidationError(f"t-SNE needs at least 4 points, got {n}")
    perp = effective_perplexity(config.perplexity, n)
    P = compute_affinities(X, perp)
    rng = np.random.default_rng(config.seed)
    Y = 1e-4 * rng.standard_normal((n, dims))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    lr = config.learning_rate
    if lr is None:
        lr = auto_learning_rate(n, config.early_exaggeration)
    elif not lr > 0:
        raise ParameterError(f"learning rate must be positive, got {lr}")
    trace = []
    for it in range(config.iterations):
        exaggerating = it < config.exaggeration_iters
        exag = config.early_exaggeration if exaggerating else 1.0
        grad, kl = kl_gradient(P, Y, exag)
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite t-SNE gradient at iteration {it}")
        trace.append(kl)
        momentum = config.momentum_initial if exaggerating else config.momentum_final
        same_sign = np.sign(grad) == np.sign(update)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, config.min_gain, out=gains)
        update = momentum * update - lr * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
    trace.append(kl_divergence(P, Y))
    return Embedding(Y, config, trace, perp)


def stock_features(values, train_rows):
    """Per-stock mean and std of each indicator over the training rows, standardized across stocks.

    ``values`` holds raw indicators, shape (records, stocks, 25); returns (stocks, 50).
    """
    block = np.asarray(values)[train_rows.start:train_rows.stop]
    feats = np.concatenate([block.mean(axis=0), block.std(axis=0)], axis=1)
    mu = feats.mean(axis=0)
    sd = feats.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    out = (feats - mu) / sd
    if not np.all(np.isfinite(out)):
        raise ValidationError("stock features contain non-finite entries")
    return out


def write_embedding(path, symbols, coords):
    with open(path, "w") as fh:
        for s, (x, y) in zip(symbols, coords):
            fh.write(f"{s},{float(x)!r},{float(y)!r}\n")


def read_embedding(path):
    symbols, rows = [], []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                s, x, y = line.strip().split(",")
                symbols.append(s)
                rows.append((float(x), float(y)))
    return symbols, np.array(rows, dtype=np.float64).reshape(-1, 2)
