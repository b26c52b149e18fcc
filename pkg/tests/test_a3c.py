import math

import numpy as np
import pytest

from cadport import a3c
from cadport.a3c import A3CAgent, A3CConfig
from cadport.errors import InsufficientDataError, NumericError, ShapeError, UndefinedMetricError
from cadport.trading import BUY, HOLD, SELL, PortfolioVector


def small_agent(seed=0, **kw):
    return A3CAgent.init(A3CConfig(hidden=(4, 5), **kw), seed)


def test_untrained_policy_is_uniform(rng):
    agent = small_agent()
    probs, _ = a3c.actor_forward(agent, rng.normal(size=(7, 26)))
    assert probs.shape == (7, 3)
    np.testing.assert_allclose(probs, 1 / 3, rtol=1e-15)


def test_policy_rows_sum_to_one(rng):
    agent = small_agent()
    for k in agent.actor:
        agent.actor[k] += rng.normal(size=agent.actor[k].shape)
    probs, _ = a3c.actor_forward(agent, rng.normal(size=(10, 4, 26)))
    assert probs.shape == (10, 4, 3)
    np.testing.assert_allclose(probs.sum(-1), 1.0, atol=1e-9)
    assert np.all(probs >= 0)


def test_state_shape_checked():
    with pytest.raises(ShapeError):
        a3c.actor_forward(small_agent(), np.zeros((3, 25)))


def test_select_signals():
    assert a3c.select_signals(np.array([[0.1, 0.2, 0.7]])).tolist() == [BUY]
    assert a3c.select_signals(np.array([[1 / 3, 1 / 3, 1 / 3]])).tolist() == [HOLD]
    rows = np.array([[0.6, 0.3, 0.1], [0.1, 0.8, 0.1]])
    assert a3c.select_signals(rows).tolist() == [SELL, HOLD]
    assert a3c.select_signals(np.array([[0.45, 0.1, 0.45]])).tolist() == [HOLD]


def test_td_error():
    assert a3c.td_error(0, 0.99, 0, 0) == 0
    assert a3c.td_error(1, 0.99, 2, 1) == pytest.approx(1.98, abs=1e-15)
    assert a3c.td_error(0.5, 0.99, 0, 0.3) == pytest.approx(0.2, abs=1e-15)


def test_policy_loss_examples():
    assert a3c.policy_loss([2.0], [1.0]) == 0
    assert a3c.policy_loss([1.0], [math.exp(-1)]) == pytest.approx(1.0, abs=1e-15)
    assert a3c.policy_loss([1.0, 2.0], [math.exp(-1), math.exp(-2)]) == pytest.approx(2.5, abs=1e-15)
    with pytest.raises(NumericError):
        a3c.policy_loss([1.0], [0.0])
    with pytest.raises(UndefinedMetricError):
        a3c.policy_loss([], [])


def test_critic_loss_examples():
    assert a3c.critic_loss([1.0], 0.99, 0.0, 0.0) == (1.0, 1.0)
    assert a3c.critic_loss([0.0, 0.0, 0.0], 0.99, 0.0, 0.0)[0] == 0
    e, sq = a3c.critic_loss([1.0, 1.0], 0.5, 4.0, 2.0)
    assert e == pytest.approx(0.5, abs=1e-15) and sq == pytest.approx(0.25, abs=1e-15)


def test_step_reward():
    b = PortfolioVector(np.array([50.0, 50.0]), 0.0)
    assert a3c.step_reward(b, b, np.ones(2)) == 0
    one = PortfolioVector(np.array([100.0]), 0.0)
    assert a3c.step_reward(one, one, np.array([1.1])) == pytest.approx(math.log(1.1), rel=1e-15)
    # buy 1000 of stock at 0.05%: 0.5 lost before the market moves
    prev = PortfolioVector(np.array([0.0]), 1000.0)
    new = PortfolioVector(np.array([999.5]), 0.0)
    assert a3c.step_reward(prev, new, np.array([1.02])) == pytest.approx(math.log(999.5 * 1.02 / 1000), rel=1e-14)


def test_signal_accuracy():
    sig = np.array([BUY, SELL, HOLD])
    assert a3c.signal_accuracy(sig, [1.01, 0.99, 1.005]) == 1.0
    assert a3c.signal_accuracy([BUY], [0.9]) == 0.0
    assert a3c.signal_accuracy([BUY, BUY], [1.01, 1.0]) == 0.5
    with pytest.raises(UndefinedMetricError):
        a3c.signal_accuracy([], [])


def test_window_longer_than_data():
    feats = np.zeros((30, 2, 25))
    with pytest.raises(InsufficientDataError):
        a3c.a3c_train(feats, np.ones((30, 2)), range(0, 30), A3CConfig(hidden=(4, 5), epochs=1))


def random_segment(rng, agent, n=6, stocks=3):
    X = rng.normal(size=(n, stocks, 26))
    actions = rng.integers(0, 3, size=(n, stocks))
    rewards = rng.normal(size=n)
    s_next = rng.normal(size=(stocks, 26))
    return X, actions, rewards, s_next


def numeric_grad(f, params, h=1e-5):
    out = {}
    for k, w in params.items():
        g = np.empty_like(w)
        for idx in np.ndindex(*w.shape):
            orig = w[idx]
            w[idx] = orig + h
            up = f()
            w[idx] = orig - h
            dn = f()
            w[idx] = orig
            g[idx] = (up - dn) / (2 * h)
        out[k] = g
    return out


def test_segment_gradients_match_finite_differences(rng):
    agent = small_agent(l1=0.0)
    for p in (agent.actor, agent.critic):
        for k in p:
            p[k] += 0.3 * rng.normal(size=p[k].shape)
    X, actions, rewards, s_next = random_segment(rng, agent)
    ga, gc, lp, lc, _ = a3c.segment_gradients(agent, X, actions, rewards, s_next)

    # targets (bootstrapped returns, advantages) are constants of the update
    gamma = agent.config.gamma
    V, h = a3c.critic_forward(agent, X)
    v_next = a3c.critic_forward(agent, s_next, h)[0]
    R = np.array([sum(gamma ** (j - i) * rewards[j] for j in range(i, len(rewards))) for i in range(len(rewards))])
    R += gamma ** np.arange(len(rewards), 0, -1) * v_next
    T = rewards + gamma * np.append(V[1:], v_next) - V
    assert lc == pytest.approx(float(np.mean((R - V) ** 2)), rel=1e-12)

    def critic_obj():
        return float(np.mean((R - a3c.critic_forward(agent, X)[0]) ** 2))

    def actor_obj():
        probs, _ = a3c.actor_forward(agent, X)
        chosen = np.take_along_axis(probs, actions[..., None], -1)[..., 0]
        return float(-np.mean(T * np.log(chosen).sum(1)))

    assert lp == pytest.approx(actor_obj(), rel=1e-12)
    for grads, obj, params in ((gc, critic_obj, agent.critic), (ga, actor_obj, agent.actor)):
        num = numeric_grad(obj, params)
        for k in params:
            rel = np.abs(grads[k] - num[k]) / np.maximum(np.maximum(np.abs(grads[k]), np.abs(num[k])), 1e-5)
            assert rel.max() < 1e-4, k


def test_l1_subgradient_added_to_actor_only(rng):
    agent = small_agent(l1=0.0)
    for k in agent.actor:
        agent.actor[k] += 0.1 * rng.normal(size=agent.actor[k].shape)
    seg = random_segment(rng, agent)
    ga0, gc0, *_ = a3c.segment_gradients(agent, *seg)
    agent_l1 = A3CAgent(agent.actor, agent.critic, A3CConfig(hidden=(4, 5), l1=0.01))
    ga1, gc1, *_ = a3c.segment_gradients(agent_l1, *seg)
    for k in ga0:
        expect = 0.0 if k.endswith(".b") else 0.01 * np.sign(agent.actor[k])
        np.testing.assert_allclose(ga1[k] - ga0[k], expect, atol=1e-15)
    for k in gc0:
        np.testing.assert_array_equal(gc1[k], gc0[k])


def tiny_market(seed=0, records=200, stocks=2):
    rng = np.random.default_rng(seed)
    feats = rng.normal(size=(records, stocks, 25))
    ratios = np.exp(rng.normal(0, 0.01, size=(records, stocks)))
    return feats, ratios


def test_single_worker_training_is_deterministic():
    feats, ratios = tiny_market()
    cfg = A3CConfig(hidden=(4, 5), epochs=2, window=16, workers=1)
    a, tr_a = a3c.a3c_train(feats, ratios, range(0, 150), cfg, seed=4)
    b, tr_b = a3c.a3c_train(feats, ratios, range(0, 150), cfg, seed=4)
    for k in a.actor:
        assert a.actor[k].tobytes() == b.actor[k].tobytes()
    for k in a.critic:
        assert a.critic[k].tobytes() == b.critic[k].tobytes()
    assert [r.to_line() for r in tr_a] == [r.to_line() for r in tr_b]
    assert len(tr_a) == 2


def test_two_workers_run_and_change_parameters():
    feats, ratios = tiny_market()
    cfg = A3CConfig(hidden=(4, 5), epochs=1, window=16, workers=2, lr=1e-2)
    agent, trace = a3c.a3c_train(feats, ratios, range(0, 150), cfg, seed=1)
    init = A3CAgent.init(cfg, np.random.SeedSequence(1).spawn(3)[0])
    assert any(not np.array_equal(agent.actor[k], init.actor[k]) for k in agent.actor)
    assert all(np.isfinite(r.policy_loss) for r in trace)


def test_run_agent_uses_only_past_features():
    feats, ratios = tiny_market()
    agent = small_agent()
    for k in agent.actor:
        agent.actor[k] += np.random.default_rng(2).normal(size=agent.actor[k].shape)
    full = a3c.run_agent(agent, feats, ratios, range(100, 160))
    cut = feats.copy()
    cut[130:] = 99.0
    part = a3c.run_agent(agent, cut, ratios, range(100, 160))
    # the decision at record t sees features up to t - 1
    np.testing.assert_array_equal(full.signals[:31], part.signals[:31])


def test_run_agent_book_bookkeeping():
    feats, ratios = tiny_market()
    run = a3c.run_agent(small_agent(), feats, ratios, range(10, 40))
    assert run.signals.shape == (30, 2)
    assert np.all(run.signals == HOLD)
    np.testing.assert_array_equal(run.values, 1.0)


def test_flat_params_roundtrip():
    agent = small_agent(3)
    back = A3CAgent.from_flat(agent.flat_params(), agent.config)
    for k in agent.actor:
        assert np.array_equal(back.actor[k], agent.actor[k])
    for k in agent.critic:
        assert np.array_equal(back.critic[k], agent.critic[k])
