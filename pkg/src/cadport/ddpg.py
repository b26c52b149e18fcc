"""Cluster hedging: aggregate cluster features, a deterministic-policy-gradient allocator, and portfolio combination."""

import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from cadport.errors import InsufficientDataError, NumericError, ParameterError, ShapeError, ValidationError
from cadport.indicators import INDICATOR_NAMES, N_INDICATORS, POSITIVE_MASK
from cadport.nn import Adam, Network, ParamSet, softmax


@dataclass(frozen=True)
class DDPGConfig:
    window: int = 64
    hidden: int = 32
    gamma: float = 0.99
    tau: float = 0.02
    lr: float = 1e-4
    batch: int = 32
    replay: int = 10000
    max_steps: int = 100000
    episodes: int = 30
    ou_theta: float = 0.15
    ou_mu: float = 0.0
    ou_sigma: float = 0.2
    ou_sigma_final: float = 0.02
    ou_dt: float = 1.0
    reward_scale: float = 100.0
    center_rate: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.tau <= 1.0:
            raise ParameterError("gamma and tau must lie in [0, 1]")
        if min(self.window, self.hidden, self.batch, self.replay, self.max_steps) < 1 or self.episodes < 0:
            raise ParameterError("sizes must be positive")
        if self.lr <= 0 or self.ou_theta < 0 or self.ou_sigma < 0 or self.ou_sigma_final < 0 or self.ou_dt <= 0:
            raise ParameterError("lr, dt must be positive; OU theta and sigma non-negative")


# ---------------------------------------------------------------- features

def positive_levels(values, scale=None):
    """Map each indicator to a strictly positive level.

    Positive-by-construction indicators are used as they are; the others
    become ``exp(value / scale)`` with a per-indicator scale (default: the
    standard deviation over all rows and stocks).
    """
    values = np.asarray(values, dtype=np.float64)
    if scale is None:
        scale = values.reshape(-1, values.shape[-1]).std(axis=0)
    scale = np.where(np.asarray(scale) > 0, scale, 1.0)
    return np.where(POSITIVE_MASK, values, np.exp(np.clip(values / scale, -50.0, 50.0)))


def aggregate_cluster_indices(levels, clusters):
    """Cluster-mean day-over-day ratios, shape (records, 25, n_clusters).

    ``levels`` is (records, stocks, 25) of strictly positive values;
    ``clusters`` is a list of member-index arrays. Row 0 is 1 by definition.
    """
    levels = np.asarray(levels, dtype=np.float64)
    if levels.ndim != 3 or levels.shape[2] != N_INDICATORS:
        raise ShapeError(f"levels must be (records, stocks, {N_INDICATORS}), got {levels.shape}")
    out = np.ones((levels.shape[0], N_INDICATORS, len(clusters)))
    for c, members in enumerate(clusters):
        members = np.asarray(members, dtype=np.int64)
        if members.size == 0:
            raise ValidationError(f"cluster {c} has no members")
        block = levels[:, members, :]
        den = block[:-1]
        if np.any(den == 0):
            t, j, k = np.argwhere(den == 0)[0]
            raise NumericError(
                f"zero denominator: stock {int(members[j])}, index {INDICATOR_NAMES[k]}, day {int(t) + 1}"
            )
        ratios = block[1:] / den
        out[1:, :, c] = ratios.mean(axis=1)
    if not np.all(np.isfinite(out)) or np.any(out <= 0):
        raise NumericError("aggregate ratios must be finite and positive")
    return out


def hedge_features(s_new, rows):
    """Log ratios standardized per indicator with statistics pooled over clusters and ``rows``."""
    logs = np.log(np.asarray(s_new, dtype=np.float64))
    block = logs[rows.start:rows.stop]
    mu = block.mean(axis=(0, 2))
    sd = block.std(axis=(0, 2))
    sd = np.where(sd > 0, sd, 1.0)
    return (logs - mu[None, :, None]) / sd[None, :, None]


def state_window(features, t, window):
    """Observation for the decision at record ``t``: rows ``t-window .. t-1``, as (clusters, window*25)."""
    if t < window:
        raise IndexError(f"decision index {t} needs {window} prior records")
    block = features[t - window:t]  # (window, 25, n_c)
    return np.ascontiguousarray(block.transpose(2, 0, 1).reshape(block.shape[2], -1))


# ---------------------------------------------------------------- noise and replay

@dataclass
class OuNoiseState:
    x: np.ndarray
    theta: float = 0.15
    mu: float = 0.0
    sigma: float = 0.2
    dt: float = 1.0

    def __post_init__(self):
        self.x = np.array(self.x, dtype=np.float64)
        if self.theta < 0 or self.sigma < 0:
            raise ParameterError("OU theta and sigma must be non-negative")
        if not np.all(np.isfinite(self.x)):
            raise ValidationError("OU state must be finite")


def ou_step(state, rng):
    """One Euler step ``x + theta (mu - x) dt + sigma sqrt(dt) z``; returns ``(sample, next_state)``."""
    z = rng.standard_normal(state.x.shape)
    x = state.x + state.theta * (state.mu - state.x) * state.dt + state.sigma * math.sqrt(state.dt) * z
    return x.copy(), replace(state, x=x)


class ReplayBuffer:
    """Fixed-capacity FIFO of transitions with uniform sampling."""

    def __init__(self, capacity=10000):
        if capacity < 1:
            raise ParameterError("replay capacity must be positive")
        self.capacity = capacity
        self.items = deque(maxlen=capacity)
        self.inserted = 0

    def __len__(self):
        return len(self.items)

    def add(self, transition):
        self.items.append(transition)
        self.inserted += 1

    def sample(self, n, rng):
        idx = rng.integers(0, len(self.items), size=n)
        return [self.items[i] for i in idx]


# ---------------------------------------------------------------- networks

def actor_network(n_in, hidden=32):
    return Network([
        {"kind": "dense", "name": "enc", "n_in": n_in, "n_out": hidden, "activation": "relu"},
        {"kind": "dense", "name": "logit", "n_in": hidden, "n_out": 1, "init": "zeros"},
    ])


def critic_networks(n_in, hidden=32):
    enc = Network([{"kind": "dense", "name": "enc", "n_in": n_in, "n_out": hidden, "activation": "relu"}])
    head = Network([
        {"kind": "dense", "name": "h1", "n_in": hidden + 1, "n_out": hidden, "activation": "relu"},
        {"kind": "dense", "name": "q", "n_in": hidden, "n_out": 1},
    ])
    return enc, head


class Hedger:
    """Actor ``mu(s)`` (softmax over clusters) and critic ``Q(s, a)`` (sum of per-cluster heads)."""

    def __init__(self, n_in, hidden=32, actor=None, critic=None, seed=0):
        self.n_in, self.hidden = n_in, hidden
        self.actor_net = actor_network(n_in, hidden)
        self.critic_enc, self.critic_head = critic_networks(n_in, hidden)
        if actor is None or critic is None:
            ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
            ra, rc = (np.random.default_rng(s) for s in ss.spawn(2))
            actor = self.actor_net.init_params(ra)
            critic = ParamSet(self.critic_enc.init_params(rc))
            critic.update(self.critic_head.init_params(rc))
        self.actor, self.critic = actor, critic

    def copy(self):
        return Hedger(self.n_in, self.hidden, self.actor.copy(), self.critic.copy())

    def _check(self, s):
        s = np.asarray(s, dtype=np.float64)
        if s.shape[-1] != self.n_in:
            raise ShapeError(f"hedger expects {self.n_in} features per cluster, got shape {s.shape}")
        return s

    def logits(self, s, params=None):
        s = self._check(s)
        out, cache, _ = self.actor_net.forward(self.actor if params is None else params, s)
        return out[..., 0], cache

    def weights(self, s, noise=None):
        z, _ = self.logits(s)
        if noise is not None:
            z = z + noise
        return softmax(z)

    def q_value(self, s, a, params=None):
        """``Q`` for (batch, clusters, n_in) states and (batch, clusters) actions, plus caches."""
        p = self.critic if params is None else params
        s = self._check(s)
        a = np.asarray(a, dtype=np.float64)
        enc, c_enc, _ = self.critic_enc.forward(p, s)
        x = np.concatenate([enc, a[..., None]], axis=-1)
        q, c_head, _ = self.critic_head.forward(p, x)
        return q[..., 0].sum(axis=-1), (c_enc, c_head)

    def critic_backward(self, caches, dq):
        """Gradients of ``sum(dq * Q)`` w.r.t. critic params and actions."""
        c_enc, c_head = caches
        n_c = c_head.layer_caches[0][0].shape[-2]
        dy = np.repeat(np.asarray(dq, dtype=np.float64)[..., None], n_c, axis=-1)[..., None]
        dx, g_head = self.critic_head.backward(c_head, dy)
        _, g_enc = self.critic_enc.backward(c_enc, dx[..., : self.hidden])
        grads = ParamSet(g_enc)
        grads.update(g_head)
        return grads, dx[..., self.hidden]

    def flat_params(self):
        out = ParamSet({f"actor/{k}": v for k, v in self.actor.items()})
        out.update({f"critic/{k}": v for k, v in self.critic.items()})
        return out

    @classmethod
    def from_flat(cls, flat, n_in, hidden=32):
        actor = ParamSet({k[6:]: v for k, v in flat.items() if k.startswith("actor/")})
        critic = ParamSet({k[7:]: v for k, v in flat.items() if k.startswith("critic/")})
        return cls(n_in, hidden, actor, critic)


def actor_weights(hedger, s, noise=None):
    """Cluster weight vector for one (clusters, n_in) observation; ``noise`` perturbs the logits."""
    return hedger.weights(s, noise)


def critic_target(r, gamma, q_next, terminal=False):
    """``y = r + gamma * Q'(s', mu'(s'))``, with the bootstrap dropped on terminal transitions."""
    return np.where(terminal, r, r + gamma * np.asarray(q_next, dtype=np.float64))


def critic_batch_loss(y, q):
    y = np.asarray(y, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return float(np.mean((y - q) ** 2))


def soft_update(target, source, tau):
    """``tau * source + (1 - tau) * target`` for every parameter; returns a new ParamSet."""
    if not 0.0 <= tau <= 1.0:
        raise ParameterError(f"tau must lie in [0, 1], got {tau}")
    if set(target) != set(source):
        raise ShapeError("target and source parameter names differ")
    out = ParamSet()
    for k, v in target.items():
        if v.shape != source[k].shape:
            raise ShapeError(f"shape mismatch for {k!r}: {v.shape} vs {source[k].shape}")
        out[k] = tau * source[k] + (1.0 - tau) * v
    return out


# ---------------------------------------------------------------- training

@dataclass
class StepRecord:
    step: int
    reward: float
    critic_loss: float

    def to_line(self):
        return f"{self.step},{float(self.reward)!r},{float(self.critic_loss)!r}"


@dataclass
class Minibatch:
    """The tensors of one critic update, kept for independent recomputation."""

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    terminal: np.ndarray
    q_next: np.ndarray  # target critic at (s', mu'(s'))
    y: np.ndarray
    q: np.ndarray
    loss: float


def ddpg_update(hedger, target, batch, features, config, actor_opt, critic_opt):
    """One critic and actor step on a list of ``(t, a, r, t_next, terminal)`` transitions."""
    W = config.window
    s = np.stack([state_window(features, t, W) for t, *_ in batch])
    s2 = np.stack([state_window(features, tn, W) for _, _, _, tn, _ in batch])
    a = np.stack([tr[1] for tr in batch])
    r = np.array([tr[2] for tr in batch])
    term = np.array([tr[4] for tr in batch], dtype=bool)

    a2 = target.weights(s2)
    q_next, _ = target.q_value(s2, a2)
    y = critic_target(r, config.gamma, q_next, term)
    q, caches = hedger.q_value(s, a)
    loss = critic_batch_loss(y, q)
    n = len(batch)
    g_critic, _ = hedger.critic_backward(caches, -2.0 * (y - q) / n)

    z, cache_a = hedger.logits(s)
    w = softmax(z)
    _, caches_pi = hedger.q_value(s, w)
    _, dq_da = hedger.critic_backward(caches_pi, np.full(n, -1.0 / n))  # d(-mean Q)/da
    dz = w * (dq_da - np.sum(dq_da * w, axis=-1, keepdims=True))
    _, g_actor = hedger.actor_net.backward(cache_a, dz[..., None])

    if not (math.isfinite(loss) and g_critic.is_finite() and g_actor.is_finite()):
        raise NumericError("non-finite hedger loss or gradient")
    critic_opt.step(hedger.critic, g_critic)
    actor_opt.step(hedger.actor, g_actor)
    return Minibatch(s, a, r, s2, term, q_next, y, q, loss)


def ddpg_train(features, growth, rows, config=DDPGConfig(), seed=0, log=None, keep_last_batch=False):
    """Train the hedger on decision indices ``rows``.

    ``features`` is (records, 25, clusters) from :func:`hedge_features`;
    ``growth[t, i]`` is cluster ``i``'s book growth over record ``t``. The
    reward for weights ``w`` at ``t`` is ``ln(w . growth[t])``.
    Returns ``(hedger, trace)`` and, with ``keep_last_batch``, the last critic minibatch.
    """
    features = np.asarray(features, dtype=np.float64)
    growth = np.asarray(growth, dtype=np.float64)
    if features.ndim != 3 or growth.shape != (features.shape[0], features.shape[2]):
        raise ShapeError("features must be (records, 25, clusters) and growth (records, clusters)")
    if np.any(growth <= 0) or not np.all(np.isfinite(growth)):
        raise ValidationError("cluster growth factors must be positive and finite")
    W = config.window
    start = max(rows.start, W)
    steps = range(start, rows.stop)
    if len(steps) < 2:
        raise InsufficientDataError(f"training range too short for window {W}")
    n_c = features.shape[2]
    ss = np.random.SeedSequence(seed)
    s_init, s_noise, s_replay = ss.spawn(3)
    hedger = Hedger(W * N_INDICATORS, config.hidden, seed=s_init)
    target = hedger.copy()
    actor_opt, critic_opt = Adam(lr=config.lr), Adam(lr=config.lr)
    rng_noise = np.random.default_rng(s_noise)
    rng_replay = np.random.default_rng(s_replay)
    buffer = ReplayBuffer(config.replay)
    planned = min(config.max_steps, config.episodes * len(steps))
    trace = []
    last = None
    r_bar = 0.0
    step = 0
    for _ in range(config.episodes):
        noise = OuNoiseState(np.zeros(n_c), config.ou_theta, config.ou_mu, config.ou_sigma, config.ou_dt)
        for k, t in enumerate(steps):
            if step >= config.max_steps:
                break
            frac = step / max(planned - 1, 1)
            noise = replace(noise, sigma=config.ou_sigma + frac * (config.ou_sigma_final - config.ou_sigma))
            eps, noise = ou_step(noise, rng_noise)
            w = hedger.weights(state_window(features, t, W), eps)
            raw = math.log(float(w @ growth[t]))
            r = config.reward_scale * raw
            terminal = k == len(steps) - 1
            buffer.add((t, w, r - r_bar, t + 1 if not terminal else t, terminal))
            r_bar += config.center_rate * (r - r_bar)
            loss = float("nan")
            if len(buffer) >= config.batch:
                last = ddpg_update(hedger, target, buffer.sample(config.batch, rng_replay), features, config,
                                   actor_opt, critic_opt)
                loss = last.loss
                target.actor = soft_update(target.actor, hedger.actor, config.tau)
                target.critic = soft_update(target.critic, hedger.critic, config.tau)
            rec = StepRecord(step, raw, loss)
            trace.append(rec)
            if log is not None:
                log(rec)
            step += 1
    return (hedger, trace, last) if keep_last_batch else (hedger, trace)


def hedge_weights(hedger, features, rows, window=64):
    """Deterministic cluster weights for every decision index in ``rows``; shape (len, clusters)."""
    return np.stack([hedger.weights(state_window(features, t, window)) for t in rows])


def uniform_weights(n_clusters):
    return np.full(n_clusters, 1.0 / n_clusters)


def combine_portfolios(w, books):
    """Scale each cluster's simplex portfolio by its cluster weight and concatenate.

    ``books[i]`` is cluster ``i``'s proportions over its stocks with cash last.
    """
    w = np.asarray(w, dtype=np.float64)
    if len(w) != len(books):
        raise ShapeError(f"{len(w)} cluster weights for {len(books)} portfolios")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValidationError("cluster weights must lie on the simplex")
    parts = []
    for wi, b in zip(w, books):
        b = np.asarray(b, dtype=np.float64)
        if np.any(b < 0) or abs(b.sum() - 1.0) > 1e-9:
            raise ValidationError("each cluster portfolio must be normalized (cash included)")
        parts.append(wi * b)
    return np.concatenate(parts)


def write_trace(path, trace):
    with open(path, "w") as fh:
        fh.write("step,reward,critic_loss\n")
        for rec in trace:
            fh.write(rec.to_line() + "\n")


def write_weights(path, weights, periods=None):
    weights = np.asarray(weights)
    periods = range(len(weights)) if periods is None else periods
    with open(path, "w") as fh:
        for p, row in zip(periods, weights):
            fh.write(",".join([str(p)] + [repr(float(v)) for v in row]) + "\n")
