"""Per-cluster actor-critic trading agent.

The actor maps a (stocks, 26) observation to a SELL/HOLD/BUY distribution per
stock; the critic maps the same observation to a scalar state value. Both are
recurrent and run statefully through 64-record episodes.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from cadport.errors import InsufficientDataError, NumericError, ParameterError, ShapeError, UndefinedMetricError
from cadport.market import N_STATE_CHANNELS
from cadport.nn import Adam, Network, ParamSet, l1_penalty
from cadport.trading import BUY, HOLD, SELL, PortfolioVector, apply_market, portfolio_value, update_portfolio

ACTIONS = np.array([SELL, HOLD, BUY])
PROB_FLOOR = 1e-12
ACCURACY_THRESHOLD = 1.00005


@dataclass(frozen=True)
class A3CConfig:
    window: int = 64
    hidden: tuple = (32, 64)
    lr: float = 1e-4
    batch: int = 16
    l1: float = 1e-3
    epochs: int = 50
    gamma: float = 0.99
    commission: float = 0.0005
    workers: int = 2
    reward_scale: float = 100.0  # rewards in percent log-growth so the L1 term does not swamp the policy gradient
    center_rate: float = 0.01  # step size of the running reward average subtracted from rewards (0 disables)

    def __post_init__(self):
        if self.window < 1 or self.batch < 1 or self.epochs < 0 or self.workers < 1:
            raise ParameterError("window, batch and workers must be positive; epochs non-negative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ParameterError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.lr <= 0 or self.l1 < 0:
            raise ParameterError("learning rate must be positive and L1 weight non-negative")


def actor_network(hidden=(32, 64), n_in=N_STATE_CHANNELS):
    h1, h2 = hidden
    return Network([
        {"kind": "recurrent", "name": "lstm1", "n_in": n_in, "n_hidden": h1},
        {"kind": "recurrent", "name": "lstm2", "n_in": h1, "n_hidden": h2},
        {"kind": "conv1d", "name": "conv", "n_in": h2, "n_out": 3, "kernel": 3, "init": "zeros"},
        {"kind": "softmax", "name": "policy", "n_features": 3},
    ])


def critic_network(hidden=(32, 64), n_in=N_STATE_CHANNELS):
    h1, h2 = hidden
    return Network([
        {"kind": "recurrent", "name": "lstm1", "n_in": n_in, "n_hidden": h1},
        {"kind": "recurrent", "name": "lstm2", "n_in": h1, "n_hidden": h2},
        {"kind": "dense", "name": "value", "n_in": h2, "n_out": 1, "init": "zeros"},
    ])


@dataclass
class A3CAgent:
    actor: ParamSet
    critic: ParamSet
    config: A3CConfig = field(default_factory=A3CConfig)

    def __post_init__(self):
        self.actor_net = actor_network(self.config.hidden)
        self.critic_net = critic_network(self.config.hidden)

    @classmethod
    def init(cls, config=A3CConfig(), seed=0):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        ra, rc = (np.random.default_rng(s) for s in ss.spawn(2))
        return cls(actor_network(config.hidden).init_params(ra), critic_network(config.hidden).init_params(rc), config)

    def copy(self):
        return A3CAgent(self.actor.copy(), self.critic.copy(), self.config)

    def flat_params(self):
        """Actor and critic in one ParamSet (``actor/...``, ``critic/...``) for checkpointing."""
        out = ParamSet({f"actor/{k}": v for k, v in self.actor.items()})
        out.update({f"critic/{k}": v for k, v in self.critic.items()})
        return out

    @classmethod
    def from_flat(cls, flat, config=A3CConfig()):
        actor = ParamSet({k[6:]: v for k, v in flat.items() if k.startswith("actor/")})
        critic = ParamSet({k[7:]: v for k, v in flat.items() if k.startswith("critic/")})
        return cls(actor, critic, config)


def _check_state(states):
    states = np.asarray(states, dtype=np.float64)
    if states.shape[-1] != N_STATE_CHANNELS:
        raise ShapeError(f"state must have {N_STATE_CHANNELS} channels, got shape {states.shape}")
    return states


def actor_forward(agent, states, hidden=None):
    """Policy rows for a (stocks, 26) state, or a (time, stocks, 26) sequence.

    Returns ``(probs, new_hidden)``; probs has shape (stocks, 3) or (time, stocks, 3).
    """
    states = _check_state(states)
    single = states.ndim == 2
    x = states[None] if single else states
    probs, _, new_hidden = agent.actor_net.forward(agent.actor, x, hidden)
    return (probs[0] if single else probs), new_hidden


def critic_forward(agent, states, hidden=None):
    """State values (mean of per-stock heads); shape () or (time,)."""
    states = _check_state(states)
    single = states.ndim == 2
    x = states[None] if single else states
    out, _, new_hidden = agent.critic_net.forward(agent.critic, x, hidden)
    v = value_scale(agent.config) * out[..., 0].mean(axis=-1)
    return (v[0] if single else v), new_hidden


def value_scale(config):
    """Multiplier on the mean value-head output. 1 means the head predicts V directly."""
    return 1.0


def select_signals(policy):
    """Per-stock argmax as -1/0/+1; any exact tie for the maximum resolves to HOLD."""
    p = np.asarray(policy, dtype=np.float64)
    best = p.max(axis=-1, keepdims=True)
    tied = np.count_nonzero(p == best, axis=-1) > 1
    out = ACTIONS[np.argmax(p, axis=-1)]
    return np.where(tied, HOLD, out).astype(np.int64)


def td_error(r, gamma, v_t, v_prev):
    return r + gamma * v_t - v_prev


def _log_prob(p):
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0) or np.any(p > 1):
        raise NumericError("action probabilities must lie in (0, 1]")
    return np.log(np.maximum(p, PROB_FLOOR))


def policy_loss(advantages, probs):
    """``-(1/n) * sum(T_i * log pi_i)`` over a batch of (advantage, chosen-action probability)."""
    adv = np.asarray(advantages, dtype=np.float64)
    if adv.size == 0:
        raise UndefinedMetricError("empty batch")
    return float(-np.mean(adv * _log_prob(probs)))


def critic_loss(rewards, gamma, v_n, v_0):
    """n-step residual ``e = sum gamma^k r_k + gamma^n V(s_n) - V(s_0)``; returns ``(e, e**2)``."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.size == 0:
        raise ParameterError("need at least one reward")
    disc = gamma ** np.arange(len(r))
    e = float(np.sum(disc * r) + gamma ** len(r) * v_n - v_0)
    return e, e * e


def step_reward(b_prev, b_new, x):
    """Log growth from the value before trading to the post-trade, post-commission book after the market moves."""
    before = portfolio_value(b_prev)
    after = portfolio_value(apply_market(b_new, x))
    if before <= 0 or after <= 0:
        raise NumericError("portfolio value must stay positive")
    return math.log(after / before)


def signal_accuracy(signals, ratios, threshold=ACCURACY_THRESHOLD):
    h = np.asarray(signals).ravel()
    pr = np.asarray(ratios, dtype=np.float64).ravel()
    if h.size == 0:
        raise UndefinedMetricError("no signals to score")
    if h.shape != pr.shape:
        raise ShapeError("signals and ratios must be aligned")
    correct = np.where(h == BUY, pr > threshold, np.where(h == SELL, pr < threshold, pr > 1.0))
    return float(np.count_nonzero(correct)) / h.size


def observation(features, t, book):
    """State for the decision applied at record ``t``: indicators of ``t-1`` plus holdings proportions."""
    total = portfolio_value(book)
    prop = book.stocks / total if total > 0 else np.zeros_like(book.stocks)
    return np.concatenate([features[t - 1], prop[:, None]], axis=1)


@dataclass
class EpochRecord:
    epoch: int
    policy_loss: float
    critic_loss: float
    accuracy: float

    def to_line(self):
        return f"{self.epoch},{float(self.policy_loss)!r},{float(self.critic_loss)!r},{float(self.accuracy)!r}"


def episode_windows(rows, window):
    """Non-overlapping full windows of decision indices (each t has t-1 available)."""
    start = max(rows.start, 1)
    return [range(s, s + window) for s in range(start, rows.stop - window + 1, window)]


class _Worker:
    """Steps through its share of episodes one n-step segment at a time."""

    def __init__(self, features, ratios, windows, config, rng):
        self.features, self.ratios, self.windows = features, ratios, windows
        self.config, self.rng = config, rng
        self.queue = []
        self.episode = None
        self.r_bar = 0.0

    def start_epoch(self):
        self.queue = list(self.windows)
        self.episode = None

    def _next_episode(self):
        if not self.queue:
            return False
        n = self.features.shape[1]
        w = self.rng.dirichlet(np.ones(n + 1))
        self.episode = {
            "steps": self.queue.pop(0), "pos": 0,
            "book": PortfolioVector(w[:-1], w[-1]), "actor_h": None, "critic_h": None,
        }
        return True

    def segment(self, agent):
        """Roll out up to ``batch`` steps with ``agent``; None once this epoch's episodes are used up."""
        if self.episode is None and not self._next_episode():
            return None
        cfg = self.config
        ep = self.episode
        steps = ep["steps"][ep["pos"]: ep["pos"] + cfg.batch]
        actor_h0, critic_h0 = ep["actor_h"], ep["critic_h"]
        h = actor_h0
        book = ep["book"]
        states, actions, rewards = [], [], []
        for t in steps:
            s = observation(self.features, t, book)
            probs, h = actor_forward(agent, s, h)
            u = self.rng.random(len(probs))
            idx = np.minimum((u[:, None] > np.cumsum(probs, axis=1)).sum(axis=1), 2)
            traded, _ = update_portfolio(book, ACTIONS[idx], cfg.commission)
            r = cfg.reward_scale * step_reward(book, traded, self.ratios[t])
            rewards.append(r - self.r_bar)
            self.r_bar += cfg.center_rate * (r - self.r_bar)
            book = _renormalize(apply_market(traded, self.ratios[t]))
            states.append(s)
            actions.append(idx)
        s_next = observation(self.features, steps[-1] + 1, book)
        actions = np.stack(actions)
        grads_a, grads_c, lp, lc, critic_h = segment_gradients(
            agent, np.stack(states), actions, np.array(rewards), s_next, actor_h0, critic_h0
        )
        ep.update(book=book, actor_h=h, critic_h=critic_h, pos=ep["pos"] + len(steps))
        if ep["pos"] >= len(ep["steps"]):
            self.episode = None
        acc = signal_accuracy(ACTIONS[actions], self.ratios[steps.start: steps.stop])
        return grads_a, grads_c, lp, lc, acc


def _renormalize(book):
    # Books are scale-free; keeping unit value avoids drift over long training runs.
    total = portfolio_value(book)
    return PortfolioVector(book.stocks / total, book.cash / total)


def segment_gradients(agent, X, actions, rewards, s_next, actor_h0=None, critic_h0=None):
    """Actor/critic gradients for one rollout segment.

    Critic: mean over steps of the squared n-step residual, bootstrapped from
    V(s_next). Actor: ``-(1/n) sum T_i log pi(a_i|s_i)`` with T the one-step
    TD error held constant. L1 subgradients on weights are added to both.
    Returns ``(actor_grads, critic_grads, policy_loss, critic_loss, critic_hidden)``.
    """
    cfg = agent.config
    n = len(X)
    n_stocks = X.shape[1]
    out_c, cache_c, critic_h = agent.critic_net.forward(agent.critic, X, critic_h0)
    scale = value_scale(cfg)
    V = scale * out_c[..., 0].mean(axis=-1)
    v_next = critic_forward(agent, s_next, critic_h)[0] if s_next is not None else 0.0
    V_ext = np.append(V, v_next)
    returns = np.empty(n)
    acc = v_next
    for i in range(n - 1, -1, -1):
        acc = rewards[i] + cfg.gamma * acc
        returns[i] = acc
    e = returns - V
    lc = float(np.mean(e * e))
    dV = -2.0 * e / n
    dout_c = np.repeat((scale * dV / n_stocks)[:, None], n_stocks, axis=1)[..., None]
    _, grads_c = agent.critic_net.backward(cache_c, dout_c)

    T = rewards + cfg.gamma * V_ext[1:] - V_ext[:-1]
    probs, cache_a, _ = agent.actor_net.forward(agent.actor, X, actor_h0)
    chosen = np.take_along_axis(probs, actions[..., None], axis=-1)[..., 0]
    logp = np.log(np.maximum(chosen, PROB_FLOOR)).sum(axis=1)
    lp = float(-np.mean(T * logp))
    dprobs = np.zeros_like(probs)
    coef = -(T / n)[:, None] / np.maximum(chosen, PROB_FLOOR)
    np.put_along_axis(dprobs, actions[..., None], coef[..., None], axis=-1)
    _, grads_a = agent.actor_net.backward(cache_a, dprobs)

    if cfg.l1 > 0:
        _, sub = l1_penalty(agent.actor, cfg.l1)
        for k, g in sub.items():
            grads_a[k] = grads_a[k] + g
    return grads_a, grads_c, lp, lc, critic_h


def a3c_train(features, ratios, rows, config=A3CConfig(), seed=0, workers=None, log=None):
    """Train one cluster agent on decision indices ``rows``.

    ``features`` is (records, stocks, 25) normalized indicators and ``ratios``
    (records, stocks) with ``ratios[t] = close_t / close_{t-1}``. Workers
    collect segments on a shared parameter snapshot each round; their
    gradients are applied one after another in worker order.
    Returns ``(agent, trace)``.
    """
    features = np.asarray(features, dtype=np.float64)
    ratios = np.asarray(ratios, dtype=np.float64)
    if features.ndim != 3 or ratios.shape != features.shape[:2]:
        raise ShapeError("features must be (records, stocks, 25) and ratios (records, stocks)")
    workers = config.workers if workers is None else workers
    if workers != config.workers:
        config = replace(config, workers=workers)
    windows = episode_windows(rows, config.window)
    if not windows:
        raise InsufficientDataError(f"training range of {len(rows)} records is shorter than window {config.window}")
    ss = np.random.SeedSequence(seed)
    init_ss, *worker_ss = ss.spawn(workers + 1)
    agent = A3CAgent.init(config, init_ss)
    opt_a, opt_c = Adam(lr=config.lr), Adam(lr=config.lr)
    pool = [
        _Worker(features, ratios, windows[w::workers], config, np.random.default_rng(s))
        for w, s in enumerate(worker_ss)
    ]
    trace = []
    for epoch in range(config.epochs):
        for wk in pool:
            wk.start_epoch()
        lp_sum = lc_sum = acc_sum = 0.0
        count = 0
        active = list(pool)
        while active:
            snapshot = agent.copy() if workers > 1 else agent
            results = []
            for wk in list(active):
                res = wk.segment(snapshot)
                if res is None:
                    active.remove(wk)
                else:
                    results.append(res)
            for grads_a, grads_c, lp, lc, acc in results:
                if not (math.isfinite(lp) and math.isfinite(lc)):
                    raise NumericError(f"non-finite loss in epoch {epoch}; trace so far: {trace}")
                opt_a.step(agent.actor, grads_a)
                opt_c.step(agent.critic, grads_c)
                lp_sum += lp
                lc_sum += lc
                acc_sum += acc
                count += 1
        rec = EpochRecord(epoch, lp_sum / max(count, 1), lc_sum / max(count, 1), acc_sum / max(count, 1))
        trace.append(rec)
        if log is not None:
            log(rec)
    return agent, trace


@dataclass
class SignalRun:
    signals: np.ndarray  # (len(rows), stocks)
    values: np.ndarray  # book value after each step, starting from 1
    books: list


def run_agent(agent, features, ratios, rows, commission=0.0005, initial=None):
    """Greedy (argmax) signals over ``rows``, with the hidden state reset every ``window`` decisions.

    The cluster book starts from ``initial`` (default: all cash, value 1) and
    follows the trading rule.
    """
    features = np.asarray(features, dtype=np.float64)
    ratios = np.asarray(ratios, dtype=np.float64)
    n = features.shape[1]
    book = initial if initial is not None else PortfolioVector(np.zeros(n), 1.0)
    start = max(rows.start, 1)
    steps = range(start, rows.stop)
    signals = np.empty((len(steps), n), dtype=np.int64)
    values = [portfolio_value(book)]
    books = [book]
    h = None
    for k, t in enumerate(steps):
        if k % agent.config.window == 0:
            h = None
        probs, h = actor_forward(agent, observation(features, t, book), h)
        sig = select_signals(probs)
        book, _ = update_portfolio(book, sig, commission)
        signals[k] = sig
        book = apply_market(book, ratios[t])
        values.append(portfolio_value(book))
        books.append(book)
    return SignalRun(signals, np.array(values), books)


def write_trace(path, trace):
    with open(path, "w") as fh:
        fh.write("epoch,policy_loss,critic_loss,accuracy\n")
        for rec in trace:
            fh.write(rec.to_line() + "\n")
