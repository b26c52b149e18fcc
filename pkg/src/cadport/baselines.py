"""Online portfolio-selection baselines.

Every strategy follows the same protocol: ``start(n)`` once, then per
period ``decide()`` returns simplex weights for the coming period and
``observe(x)`` feeds the realized price relatives. Decisions only ever see
relatives that have already been observed.
"""

import itertools

import numpy as np

from cadport.errors import NumericError, ParameterError, ValidationError


def project_simplex(v):
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=np.float64)
    n = len(v)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, n + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_simplex_quadratic(y, A, tol=1e-12, max_iter=500):
    """``argmin_x (x - y)' A (x - y)`` over the simplex, for symmetric positive definite ``A``.

    Primal active-set method started from the uniform point.
    """
    y = np.asarray(y, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    n = len(y)
    x = np.full(n, 1.0 / n)
    fixed = np.zeros(n, dtype=bool)
    Ay = A @ y
    for _ in range(max_iter):
        F = np.flatnonzero(~fixed)
        m = len(F)
        K = np.zeros((m + 1, m + 1))
        K[:m, :m] = A[np.ix_(F, F)]
        K[:m, m] = 1.0
        K[m, :m] = 1.0
        rhs = np.append(Ay[F], 1.0)
        sol = np.linalg.solve(K, rhs)
        target = np.zeros(n)
        target[F] = sol[:m]
        nu = sol[m]
        if np.all(target[F] >= -tol):
            x = np.maximum(target, 0.0)
            grad = A @ (x - y)
            mult = grad + nu
            mult[~fixed] = np.inf
            j = int(np.argmin(mult))
            if mult[j] >= -tol:
                return x / x.sum()
            fixed[j] = False
            continue
        step = 1.0
        block = -1
        for i in F:
            if target[i] < x[i] and target[i] < 0:
                a = x[i] / (x[i] - target[i])
                if a < step:
                    step, block = a, i
        x = x + step * (target - x)
        if block >= 0:
            x[block] = 0.0
            fixed[block] = True
    raise NumericError("simplex projection in the quadratic norm did not converge")


def l1_median(points, tol=1e-8, max_iter=500):
    """Geometric (L1) median by the Vardi-Zhang modified Weiszfeld iteration.

    Data points are first tested for optimality directly (the pull of the
    other points is no stronger than the point's multiplicity). Each
    iteration also tries a Newton step on the distance sum and keeps it when
    it does better, because plain Weiszfeld crawls when the minimizer sits
    next to a data point.
    """
    X = np.asarray(points, dtype=np.float64)
    for k in range(len(X)):
        diff = X - X[k]
        d = np.sqrt(np.sum(diff * diff, axis=1))
        nz = d > 0
        if not np.any(nz):
            return X[k].copy()
        R = (diff[nz] / d[nz, None]).sum(axis=0)
        if np.sqrt(R @ R) <= np.count_nonzero(~nz):
            return X[k].copy()

    def total(z):
        return float(np.sqrt(np.sum((X - z) ** 2, axis=1)).sum())

    y = X.mean(axis=0)
    for _ in range(max_iter):
        diff = X - y
        d = np.sqrt(np.sum(diff * diff, axis=1))
        nz = d > 0
        if not np.any(nz):
            return y
        inv = 1.0 / d[nz]
        T = (X[nz] * inv[:, None]).sum(axis=0) / inv.sum()
        eta = np.count_nonzero(~nz)
        R = (diff[nz] * inv[:, None]).sum(axis=0)
        r = np.sqrt(R @ R)
        if eta == 0:
            y_new = T
            u = diff * inv[:, None]
            H = inv.sum() * np.eye(len(y)) - (u * inv[:, None]).T @ u
            step = np.linalg.lstsq(H, R, rcond=None)[0]
            if np.all(np.isfinite(step)) and total(y + step) < total(y_new):
                y_new = y + step
        elif r == 0:
            return y
        else:
            g = min(1.0, eta / r)
            y_new = (1.0 - g) * T + g * y
        if np.sum(np.abs(y_new - y)) <= tol * np.sum(np.abs(y_new)):
            return y_new
        y = y_new
    raise NumericError(f"L1 median did not converge in {max_iter} iterations")


def _check_ratios(x, n):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (n,):
        raise ValidationError(f"expected {n} price relatives, got shape {x.shape}")
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise ValidationError("price relatives must be positive and finite")
    return x


class Strategy:
    name = "base"

    def start(self, n):
        self.n = n
        self.w = np.full(n, 1.0 / n)
        self.history = []
        self.t = 0

    def decide(self):
        return self.w

    def observe(self, x):
        x = _check_ratios(x, self.n)
        self.history.append(x)
        self.t += 1
        self.update(x)

    def update(self, x):
        raise NotImplementedError

    def drifted(self, x):
        g = self.w * x
        return g / g.sum()


class BAH(Strategy):
    name = "BAH"

    def update(self, x):
        self.w = self.drifted(x)


class CRP(Strategy):
    name = "CRP"

    def __init__(self, weights=None):
        self.target = None if weights is None else np.asarray(weights, dtype=np.float64)

    def start(self, n):
        super().start(n)
        if self.target is not None:
            if len(self.target) != n:
                raise ValidationError("CRP target length does not match the universe")
            self.w = self.target.copy()

    def update(self, x):
        pass


def simplex_grid(n, step):
    """All points of the simplex whose coordinates are multiples of ``step``."""
    m = int(round(1.0 / step))
    pts = []
    for bars in itertools.combinations(range(m + n - 1), n - 1):
        prev = -1
        row = []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(m + n - 2 - prev)
        pts.append(row)
    return np.array(pts, dtype=np.float64) / m


class UP(Strategy):
    """Wealth-weighted mixture of constant-rebalanced portfolios.

    Exact grid for up to ``max_grid_assets`` assets, otherwise a seeded
    Dirichlet sample of ``samples`` portfolios.
    """

    name = "UP"

    def __init__(self, step=0.05, max_grid_assets=5, samples=10000, seed=0):
        self.step, self.max_grid_assets, self.samples, self.seed = step, max_grid_assets, samples, seed

    def start(self, n):
        super().start(n)
        if n <= self.max_grid_assets:
            self.grid = simplex_grid(n, self.step)
        else:
            self.grid = np.random.default_rng(self.seed).dirichlet(np.ones(n), size=self.samples)
        self.log_wealth = np.zeros(len(self.grid))
        self.w = self._mix()

    def _mix(self):
        a = np.exp(self.log_wealth - self.log_wealth.max())
        w = a @ self.grid / a.sum()
        return w / w.sum()

    def update(self, x):
        self.log_wealth += np.log(self.grid @ x)
        self.w = self._mix()


class EG(Strategy):
    name = "EG"

    def __init__(self, eta=0.05):
        self.eta = eta

    def update(self, x):
        w = self.w * np.exp(self.eta * x / (self.w @ x))
        self.w = w / w.sum()


class ONS(Strategy):
    name = "ONS"

    def __init__(self, delta=0.125, beta=1.0, eta=0.0):
        self.delta, self.beta, self.eta = delta, beta, eta

    def start(self, n):
        super().start(n)
        self.A = np.eye(n)
        self.b = np.zeros(n)

    def update(self, x):
        grad = x / (self.w @ x)
        self.A += np.outer(grad, grad)
        self.b += (1.0 + 1.0 / self.beta) * grad
        target = self.delta * np.linalg.solve(self.A, self.b)
        p = project_simplex_quadratic(target, self.A)
        self.w = (1.0 - self.eta) * p + self.eta / self.n


class PAMR(Strategy):
    name = "PAMR"

    def __init__(self, eps=0.5):
        self.eps = eps

    def update(self, x):
        self.w = pamr_step(self.w, x, self.eps)


def pamr_step(w, x, eps=0.5):
    """Passive-aggressive mean-reversion step; returns ``w`` itself when the loss is zero."""
    loss = float(w @ x) - eps
    if loss <= 0:
        return w
    dev = x - x.mean()
    denom = float(dev @ dev)
    if denom == 0:
        return w
    return project_simplex(w - (loss / denom) * dev)


def _pa_reversion(w, x_hat, eps):
    loss = eps - float(w @ x_hat)
    if loss <= 0:
        return w
    dev = x_hat - x_hat.mean()
    denom = float(dev @ dev)
    if denom == 0:
        return w
    return project_simplex(w + (loss / denom) * dev)


class OLMAR(Strategy):
    name = "OLMAR"

    def __init__(self, window=5, eps=10.0):
        if window < 1:
            raise ParameterError("window must be positive")
        self.window, self.eps = window, eps

    def start(self, n):
        super().start(n)
        self.prices = [np.ones(n)]

    def predict(self):
        P = np.array(self.prices[-self.window:])
        return P.mean(axis=0) / P[-1]

    def update(self, x):
        self.prices.append(self.prices[-1] * x)
        if len(self.prices) - 1 < self.window:
            x_hat = x
        else:
            x_hat = self.predict()
        self.w = _pa_reversion(self.w, x_hat, self.eps)


class RMR(OLMAR):
    name = "RMR"

    def __init__(self, window=5, eps=10.0, tol=1e-8, max_iter=500):
        super().__init__(window, eps)
        self.tol, self.max_iter = tol, max_iter

    def predict(self):
        P = np.array(self.prices[-self.window:])
        return l1_median(P, self.tol, self.max_iter) / P[-1]


def anticor_transfer(w, log_window1, log_window2):
    """Weights after the correlation-driven transfer between two adjacent windows of log relatives."""
    w = np.asarray(w, dtype=np.float64)
    L1 = np.asarray(log_window1, dtype=np.float64)
    L2 = np.asarray(log_window2, dtype=np.float64)
    m, n = L1.shape
    mu1, mu2 = L1.mean(axis=0), L2.mean(axis=0)
    sd1, sd2 = L1.std(axis=0, ddof=1), L2.std(axis=0, ddof=1)
    cov = (L1 - mu1).T @ (L2 - mu2) / (m - 1)
    den = np.outer(sd1, sd2)
    cor = np.divide(cov, den, out=np.zeros_like(cov), where=den > 0)
    diag = np.diag(cor)
    claim = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j and mu2[i] > mu2[j] and cor[i, j] > 0:
                claim[i, j] = cor[i, j] + max(-diag[i], 0.0) + max(-diag[j], 0.0)
    total = claim.sum(axis=1, keepdims=True)
    transfer = np.divide(w[:, None] * claim, total, out=np.zeros_like(claim), where=total > 0)
    out = w - transfer.sum(axis=1) + transfer.sum(axis=0)
    out = np.maximum(out, 0.0)
    return out / out.sum()


class Anticor(Strategy):
    name = "ANTICOR"

    def __init__(self, window=5):
        if window < 2:
            raise ParameterError("anticor window must be at least 2")
        self.window = window

    def update(self, x):
        w = self.drifted(x)
        k = self.window
        if len(self.history) >= 2 * k:
            L = np.log(np.array(self.history[-2 * k:]))
            w = anticor_transfer(w, L[:k], L[k:])
        self.w = w


BASELINES = {
    "bah": BAH, "crp": CRP, "up": UP, "eg": EG, "ons": ONS,
    "pamr": PAMR, "olmar": OLMAR, "rmr": RMR, "anticor": Anticor,
}


def make_strategy(name, **kwargs):
    key = name.lower()
    if key not in BASELINES:
        raise ParameterError(f"unknown strategy {name!r}; choose from {sorted(BASELINES)}")
    return BASELINES[key](**kwargs)


def run_weights(strategy, ratios):
    """Weight sequence a strategy produces over a (periods, n) relative matrix."""
    ratios = np.asarray(ratios, dtype=np.float64)
    strategy.start(ratios.shape[1])
    out = np.empty_like(ratios)
    for t, x in enumerate(ratios):
        out[t] = strategy.decide()
        strategy.observe(x)
    return out
