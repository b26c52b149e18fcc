import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cadport import ddpg
from cadport.ddpg import DDPGConfig, Hedger, OuNoiseState, ReplayBuffer
from cadport.errors import NumericError, ShapeError, ValidationError
from cadport.indicators import N_INDICATORS, POSITIVE_MASK
from cadport.nn import ParamSet


def test_constant_levels_aggregate_to_one():
    lv = np.full((10, 3, N_INDICATORS), 7.0)
    out = ddpg.aggregate_cluster_indices(lv, [np.array([0, 1]), np.array([2])])
    assert out.shape == (10, N_INDICATORS, 2)
    assert np.all(out == 1.0)


def test_first_row_is_one(rng):
    lv = rng.uniform(0.5, 2.0, (6, 4, N_INDICATORS))
    out = ddpg.aggregate_cluster_indices(lv, [np.array([0, 3]), np.array([1, 2])])
    assert np.all(out[0] == 1.0)


def test_aggregate_is_cluster_mean():
    lv = np.ones((2, 2, N_INDICATORS))
    lv[1, 0] = 1.1
    lv[1, 1] = 0.9
    out = ddpg.aggregate_cluster_indices(lv, [np.array([0, 1])])
    np.testing.assert_allclose(out[1, :, 0], 1.0, rtol=1e-15)


def test_zero_denominator_is_located():
    lv = np.ones((3, 2, N_INDICATORS))
    lv[1, 1, 4] = 0.0
    with pytest.raises(NumericError, match="stock 1.*day 2"):
        ddpg.aggregate_cluster_indices(lv, [np.array([0, 1])])


def test_positive_levels_are_positive(rng):
    vals = rng.normal(0, 5, (20, 3, N_INDICATORS))
    vals[..., POSITIVE_MASK] = np.abs(vals[..., POSITIVE_MASK]) + 1
    lv = ddpg.positive_levels(vals)
    assert np.all(lv > 0) and np.all(np.isfinite(lv))
    np.testing.assert_array_equal(lv[..., POSITIVE_MASK], vals[..., POSITIVE_MASK])


def test_ou_examples():
    rng = np.random.default_rng(0)
    x, st_ = ddpg.ou_step(OuNoiseState(np.array([1.0]), theta=0.15, mu=0.0, sigma=0.0), rng)
    assert x[0] == pytest.approx(0.85, abs=1e-15)
    s = OuNoiseState(np.array([0.3, -2.0]), theta=0.0, sigma=0.0)
    for _ in range(5):
        _, s = ddpg.ou_step(s, rng)
    np.testing.assert_array_equal(s.x, [0.3, -2.0])


def test_replay_fifo():
    buf = ReplayBuffer(3)
    for i in range(5):
        buf.add(i)
    assert len(buf) == 3 and list(buf.items) == [2, 3, 4]
    assert set(buf.sample(20, np.random.default_rng(0))) <= {2, 3, 4}


def test_untrained_weights_uniform(rng):
    h = Hedger(8, hidden=4)
    w = ddpg.actor_weights(h, rng.normal(size=(5, 8)))
    np.testing.assert_allclose(w, 0.2, rtol=1e-15)
    np.testing.assert_array_equal(ddpg.actor_weights(h, rng.normal(size=(1, 8))), [1.0])
    with pytest.raises(ShapeError):
        h.weights(np.zeros((2, 7)))


@given(st.integers(0, 10_000))
def test_weights_on_simplex(seed):
    rng = np.random.default_rng(seed)
    h = Hedger(6, hidden=5, seed=seed)
    for k in h.actor:
        h.actor[k] += rng.normal(size=h.actor[k].shape)
    w = h.weights(rng.normal(size=(4, 6)), noise=rng.normal(size=4))
    assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-9


def test_critic_target():
    assert ddpg.critic_target(0.4, 0.99, 123.0, terminal=True) == 0.4
    assert ddpg.critic_target(1.0, 0.99, 2.0) == pytest.approx(2.98, abs=1e-15)
    assert ddpg.critic_target(0.7, 0.0, 55.0) == 0.7


def test_soft_update():
    t = ParamSet({"w": np.zeros(3)})
    s = ParamSet({"w": np.ones(3)})
    np.testing.assert_array_equal(ddpg.soft_update(t, s, 1.0)["w"], s["w"])
    np.testing.assert_array_equal(ddpg.soft_update(t, s, 0.0)["w"], t["w"])
    np.testing.assert_allclose(ddpg.soft_update(t, s, 0.02)["w"], 0.02, rtol=1e-15)
    with pytest.raises(ShapeError):
        ddpg.soft_update(t, ParamSet({"w": np.ones(2)}), 0.5)


def test_combine_examples():
    W = ddpg.combine_portfolios([0.6, 0.4], [np.array([0.5, 0.5, 0.0]), np.array([1.0, 0.0])])
    np.testing.assert_allclose(W, [0.3, 0.3, 0.0, 0.4, 0.0], rtol=1e-15)
    b = np.array([0.2, 0.3, 0.5])
    np.testing.assert_array_equal(ddpg.combine_portfolios([1.0], [b]), b)
    with pytest.raises(ValidationError):
        ddpg.combine_portfolios([0.5, 0.5], [np.array([0.5, 0.6]), np.array([1.0])])


@given(st.integers(0, 10_000), st.integers(1, 5))
def test_combined_weights_sum_to_one(seed, k):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(k))
    books = [rng.dirichlet(np.ones(rng.integers(1, 5))) for _ in range(k)]
    assert abs(ddpg.combine_portfolios(w, books).sum() - 1) < 1e-9


def critic_numeric(h, s, a, dq, eps=1e-6):
    out = {}
    for k, w in h.critic.items():
        g = np.empty_like(w)
        for idx in np.ndindex(*w.shape):
            o = w[idx]
            w[idx] = o + eps
            up = float(np.sum(dq * h.q_value(s, a)[0]))
            w[idx] = o - eps
            dn = float(np.sum(dq * h.q_value(s, a)[0]))
            w[idx] = o
            g[idx] = (up - dn) / (2 * eps)
        out[k] = g
    return out


def test_critic_backward_matches_finite_differences(rng):
    h = Hedger(5, hidden=4, seed=1)
    for k in h.critic:
        h.critic[k] += 0.2 * rng.normal(size=h.critic[k].shape)
    s = rng.normal(size=(3, 2, 5))
    a = rng.dirichlet(np.ones(2), size=3)
    dq = rng.normal(size=3)
    _, caches = h.q_value(s, a)
    grads, da = h.critic_backward(caches, dq)
    num = critic_numeric(h, s, a, dq)
    for k in grads:
        np.testing.assert_allclose(grads[k], num[k], rtol=1e-5, atol=1e-8)
    e = 1e-6
    for i in np.ndindex(*a.shape):
        up, dn = a.copy(), a.copy()
        up[i] += e
        dn[i] -= e
        fd = (np.sum(dq * h.q_value(s, up)[0]) - np.sum(dq * h.q_value(s, dn)[0])) / (2 * e)
        assert da[i] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def toy_hedge_data(records=140, clusters=2, seed=0):
    rng = np.random.default_rng(seed)
    s_new = np.exp(rng.normal(0, 0.05, (records, N_INDICATORS, clusters)))
    growth = np.exp(rng.normal(0, 0.01, (records, clusters)))
    return ddpg.hedge_features(s_new, range(0, records)), growth


def test_training_is_deterministic():
    F, G = toy_hedge_data()
    cfg = DDPGConfig(window=8, hidden=6, batch=8, episodes=2)
    a, ta = ddpg.ddpg_train(F, G, range(0, 100), cfg, seed=3)
    b, tb = ddpg.ddpg_train(F, G, range(0, 100), cfg, seed=3)
    for k in a.actor:
        assert a.actor[k].tobytes() == b.actor[k].tobytes()
    for k in a.critic:
        assert a.critic[k].tobytes() == b.critic[k].tobytes()
    assert [r.to_line() for r in ta] == [r.to_line() for r in tb]


def test_saved_batch_critic_loss_recomputes():
    F, G = toy_hedge_data()
    cfg = DDPGConfig(window=8, hidden=6, batch=8, episodes=1)
    _, _, mb = ddpg.ddpg_train(F, G, range(0, 100), cfg, seed=0, keep_last_batch=True)
    y = [r if term else r + cfg.gamma * qn for r, term, qn in zip(mb.r, mb.terminal, mb.q_next)]
    np.testing.assert_allclose(mb.y, y, rtol=1e-10)
    assert abs(sum((yi - qi) ** 2 for yi, qi in zip(y, mb.q)) / len(y) - mb.loss) <= 1e-10


def test_max_steps_caps_training():
    F, G = toy_hedge_data()
    cfg = DDPGConfig(window=8, hidden=6, batch=8, episodes=5, max_steps=30)
    _, trace = ddpg.ddpg_train(F, G, range(0, 100), cfg, seed=0)
    assert len(trace) == 30


def test_hedge_weights_shape():
    F, G = toy_hedge_data()
    h = Hedger(8 * N_INDICATORS, hidden=4)
    W = ddpg.hedge_weights(h, F, range(100, 140), window=8)
    assert W.shape == (40, 2)
    np.testing.assert_allclose(W.sum(1), 1.0, atol=1e-12)


def test_state_window_uses_prior_rows_only():
    F, _ = toy_hedge_data()
    s = ddpg.state_window(F, 50, 8)
    assert s.shape == (2, 8 * N_INDICATORS)
    G = F.copy()
    G[50:] = 0
    np.testing.assert_array_equal(ddpg.state_window(G, 50, 8), s)
    with pytest.raises(IndexError):
        ddpg.state_window(F, 5, 8)
