"""Commission-aware backtester shared by CAD and the baselines.

A strategy is anything with ``start(n)``, ``decide()`` and ``observe(x)``.
``decide`` returns weights over the ``n`` stocks, optionally followed by a
cash weight; the backtester pads a missing cash slot with 0.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from cadport.a3c import actor_forward, observation, select_signals
from cadport.ddpg import combine_portfolios, state_window, uniform_weights
from cadport.errors import ConfigError, NumericError, ShapeError, ValidationError
from cadport.metrics import MetricsReport, metrics_report
from cadport.trading import MAX_COMMISSION, PortfolioVector, apply_market, update_portfolio

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class BacktestConfig:
    initial: float = 1e6
    commission: float = 0.0005

    def __post_init__(self):
        if not self.initial > 0:
            raise ValidationError(f"initial value must be positive, got {self.initial}")
        if not 0.0 <= self.commission <= MAX_COMMISSION:
            raise ValidationError(f"commission {self.commission} outside [0, {MAX_COMMISSION}]")


@dataclass(frozen=True)
class LedgerEntry:
    period: int
    stock: int
    side: str
    notional: float
    commission: float

    def to_line(self):
        return f"{self.period},{self.stock},{self.side},{float(self.notional)!r},{float(self.commission)!r}"


@dataclass
class BacktestRun:
    name: str
    curve: np.ndarray  # periods + 1 values, curve[0] = initial
    weights: np.ndarray  # (periods, stocks + 1), cash last
    ledger: list = field(default_factory=list)
    report: MetricsReport = None

    @property
    def total_commission(self):
        return math.fsum(e.commission for e in self.ledger)


def _as_weights(w, n):
    w = np.asarray(w, dtype=np.float64)
    if w.shape == (n,):
        w = np.append(w, 0.0)
    elif w.shape != (n + 1,):
        raise ShapeError(f"strategy returned weights of shape {w.shape} for {n} stocks")
    if np.any(~np.isfinite(w)) or np.any(w < -SIMPLEX_TOL) or abs(w.sum() - 1.0) > SIMPLEX_TOL:
        raise ValidationError("strategy weights must lie on the simplex")
    return w


def run_backtest(config, ratios, strategy, name=None):
    """Compound wealth over every row of ``ratios`` (periods, stocks).

    The book starts all cash. Each period the drifted weights are rebalanced
    to the strategy's target, paying ``commission * V * sum|w - w_drift|``
    over stocks, then the period's relatives are applied.
    """
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.ndim != 2:
        raise ShapeError("ratios must be (periods, stocks)")
    T, n = ratios.shape
    strategy.start(n)
    rate = config.commission
    curve = np.empty(T + 1)
    curve[0] = value = float(config.initial)
    weights = np.empty((T, n + 1))
    drift = np.zeros(n + 1)
    drift[n] = 1.0
    ledger = []
    for t in range(T):
        w = _as_weights(strategy.decide(), n)
        diff = w[:n] - drift[:n]
        turnover = np.abs(diff)
        if rate > 0:
            for j in np.flatnonzero(turnover > 0):
                notional = value * float(turnover[j])
                ledger.append(LedgerEntry(t, int(j), "BUY" if diff[j] > 0 else "SELL", notional, rate * notional))
        value -= rate * value * float(turnover.sum())
        x = np.append(ratios[t], 1.0)
        growth = x * w
        g = float(growth.sum())
        value *= g
        if not value > 0 or not math.isfinite(value):
            raise NumericError(f"portfolio value became {value} at period {t}")
        curve[t + 1] = value
        weights[t] = w
        drift = growth / g
        strategy.observe(ratios[t])
    return BacktestRun(name or getattr(strategy, "name", "strategy"), curve, weights, ledger, metrics_report(curve))


class FixedWeights:
    """Replays a precomputed (periods, n) or (periods, n + 1) weight sequence."""

    name = "FIXED"

    def __init__(self, weights):
        self.seq = np.asarray(weights, dtype=np.float64)

    def start(self, n):
        self.t = 0

    def decide(self):
        return self.seq[self.t]

    def observe(self, x):
        self.t += 1


# ---------------------------------------------------------------- CAD wrapper

class A3CSignals:
    """Greedy signals from one cluster agent, hidden state reset every ``window`` decisions."""

    def __init__(self, agent, features):
        self.agent = agent
        self.features = np.asarray(features, dtype=np.float64)
        self.k = 0
        self.h = None

    def __call__(self, t, book):
        if self.k % self.agent.config.window == 0:
            self.h = None
        self.k += 1
        probs, self.h = actor_forward(self.agent, observation(self.features, t, book), self.h)
        return select_signals(probs)


class HedgerWeights:
    def __init__(self, hedger, features, window=64):
        self.hedger, self.features, self.window = hedger, features, window

    def __call__(self, t):
        return self.hedger.weights(state_window(self.features, t, self.window))


def constant_hedge(w):
    w = np.asarray(w, dtype=np.float64)
    return lambda t: w


def equal_books(clusters):
    """Fully invested equal-weight cluster books of value 1."""
    return [PortfolioVector(np.full(len(m), 1.0 / len(m)), 0.0) for m in clusters]


class CadStrategy:
    """Per-cluster virtual books driven by signals, combined by hedge weights.

    ``clusters`` are member-index arrays into the stock axis; stocks outside
    every cluster get weight 0. ``signals[i](t, book)`` returns cluster
    ``i``'s SELL/HOLD/BUY vector and ``hedge(t)`` the cluster weights for the
    decision at record ``t``. The first decision is at record ``start``.
    Virtual books trade at zero commission; real costs are charged by the
    backtester on the combined weights.
    """

    name = "CAD"

    def __init__(self, clusters, signals, hedge, start, books=None):
        if len(clusters) != len(signals):
            raise ConfigError(f"{len(clusters)} clusters but {len(signals)} signal sources")
        if not clusters:
            raise ConfigError("CAD needs at least one cluster")
        self.clusters = [np.asarray(m, dtype=np.int64) for m in clusters]
        self.signals = signals
        self.hedge = hedge
        self.start_t = start
        self.initial_books = books

    def start(self, n):
        self.n = n
        self.t = self.start_t
        self.books = list(self.initial_books) if self.initial_books is not None else equal_books(self.clusters)
        self.history = []

    def decide(self):
        props = []
        for i, src in enumerate(self.signals):
            self.books[i], _ = update_portfolio(self.books[i], src(self.t, self.books[i]), 0.0)
            props.append(self.books[i].proportions())
        w_c = np.asarray(self.hedge(self.t), dtype=np.float64)
        parts = combine_portfolios(w_c, props)
        out = np.zeros(self.n + 1)
        pos = 0
        for m in self.clusters:
            out[m] += parts[pos:pos + len(m)]
            out[self.n] += parts[pos + len(m)]
            pos += len(m) + 1
        self.history.append(w_c)
        return out

    def observe(self, x):
        x = np.asarray(x, dtype=np.float64)
        for i, m in enumerate(self.clusters):
            self.books[i] = apply_market(self.books[i], x[m])
        self.t += 1


def run_cad(config, ratios, rows, clusters, agents, features, hedger=None, hedge_features=None, window=64):
    """Backtest CAD over decision records ``rows``.

    ``agents[i]`` trades cluster ``i`` using ``features`` restricted to its
    members; without a hedger the cluster weights are uniform.
    """
    if agents is None or len(agents) != len(clusters):
        raise ConfigError("one trained agent per cluster is required")
    features = np.asarray(features, dtype=np.float64)
    sources = [A3CSignals(a, features[:, np.asarray(m)]) for a, m in zip(agents, clusters)]
    if hedger is None:
        hedge = constant_hedge(uniform_weights(len(clusters)))
    else:
        if hedge_features is None:
            raise ConfigError("hedger given without hedge features")
        hedge = HedgerWeights(hedger, hedge_features, window)
    strategy = CadStrategy(clusters, sources, hedge, rows.start)
    run = run_backtest(config, np.asarray(ratios)[rows.start:rows.stop], strategy, "CAD")
    run.cluster_weights = np.array(strategy.history)
    return run


# ---------------------------------------------------------------- comparison and output

METRIC_FIELDS = tuple(MetricsReport.__dataclass_fields__)
LOWER_IS_BETTER = {"max_drawdown"}


def compare_strategies(config, ratios, strategies):
    """Backtest each strategy on the same relatives; returns the list of runs."""
    if not strategies:
        raise ValidationError("need at least one strategy")
    return [run_backtest(config, ratios, s) for s in strategies]


def rank_marks(runs):
    """Per metric: the index of the best and second-best run (NaN ranks last)."""
    marks = {}
    for f in METRIC_FIELDS:
        vals = [getattr(r.report, f) for r in runs]
        key = []
        for i, v in enumerate(vals):
            if math.isnan(v):
                key.append((1, 0.0, i))
            else:
                key.append((0, v if f in LOWER_IS_BETTER else -v, i))
        order = [k[2] for k in sorted(key)]
        marks[f] = (order[0], order[1] if len(order) > 1 else None)
    return marks


def format_table(runs):
    """Aligned text table; ``*`` marks the best and ``+`` the second best per column."""
    marks = rank_marks(runs)
    header = ["strategy"] + list(METRIC_FIELDS)
    rows = []
    for i, r in enumerate(runs):
        cells = [r.name]
        for f in METRIC_FIELDS:
            best, second = marks[f]
            tag = "*" if i == best else "+" if i == second else " "
            cells.append(f"{getattr(r.report, f):.4f}{tag}")
        rows.append(cells)
    widths = [max(len(row[c]) for row in [header] + rows) for c in range(len(header))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in [header] + rows]
    return "\n".join(lines) + "\n"


def format_flat(runs):
    """Machine-readable ``strategy,field,value`` lines with full precision."""
    return "".join(f"{r.name},{f},{float(getattr(r.report, f))!r}\n" for r in runs for f in METRIC_FIELDS)


def parse_flat(text):
    out = {}
    for line in text.splitlines():
        if line.strip():
            name, f, v = line.split(",")
            out.setdefault(name, {})[f] = float(v)
    return out


def write_curve(path, curve):
    with open(path, "w") as fh:
        fh.write("period,value\n")
        for t, v in enumerate(curve):
            fh.write(f"{t},{float(v)!r}\n")


def read_curve(path):
    with open(path) as fh:
        lines = fh.read().splitlines()[1:]
    return np.array([float(line.split(",")[1]) for line in lines])


def write_ledger(path, ledger):
    with open(path, "w") as fh:
        fh.write("period,stock,side,notional,commission\n")
        for e in ledger:
            fh.write(e.to_line() + "\n")


def read_ledger(path):
    with open(path) as fh:
        lines = fh.read().splitlines()[1:]
    out = []
    for line in lines:
        p, s, side, notional, fee = line.split(",")
        out.append(LedgerEntry(int(p), int(s), side, float(notional), float(fee)))
    return out
