"""Acceptance criteria, one test each.

Each test is named ``test_acNN_*`` and the session summary prints one
PASS/FAIL line per criterion (see ``conftest.pytest_terminal_summary``).
Run alone with ``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
import pytest
import yaml

from cadport import a3c, backtest as bt, baselines as bl, ddpg, market, metrics, synth, trading
from cadport.a3c import A3CAgent, A3CConfig
from cadport.backtest import BacktestConfig, CadStrategy, FixedWeights, HedgerWeights
from cadport.ddpg import DDPGConfig
from cadport.dbscan import ClusterParams, dbscan, default_params
from cadport.indicators import WARMUP
from cadport.nn import Network
from cadport.nn.gradcheck import finite_diff_check
from cadport.trading import HOLD, SELL, PortfolioVector
from cadport.tsne import TsneConfig, fit_tsne

import oracles
from conftest import blobs


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def random_net(rng):
    """A small random stack of the layer kinds the agents use."""
    n_in = int(rng.integers(2, 6))
    spec, width = [], n_in
    for _ in range(int(rng.integers(1, 4))):
        kind = rng.choice(["dense", "recurrent", "conv1d"])
        out = int(rng.integers(2, 6))
        if kind == "dense":
            spec.append({"kind": "dense", "n_in": width, "n_out": out,
                         "activation": str(rng.choice(["identity", "tanh", "sigmoid", "relu"]))})
        elif kind == "recurrent":
            spec.append({"kind": "recurrent", "n_in": width, "n_hidden": out})
        else:
            spec.append({"kind": "conv1d", "n_in": width, "n_out": out, "kernel": int(rng.choice([1, 3])),
                         "activation": str(rng.choice(["identity", "tanh"]))})
        width = out
    if rng.random() < 0.4:
        spec.append({"kind": "softmax", "n_features": width})
    return Network(spec), n_in


def test_ac01_gradient_correctness():
    rng = np.random.default_rng(2024)
    worst = 0.0
    with Timer() as tm:
        for trial in range(100):
            net, n_in = random_net(rng)
            p = net.init_params(rng)
            for k in p:
                p[k] += 0.1 * rng.standard_normal(p[k].shape)
            x = rng.standard_normal((int(rng.integers(1, 4)), int(rng.integers(3, 6)), n_in))
            report = finite_diff_check(net, p, x, tolerance=1e-4, seed=trial)
            assert report.passed, f"trial {trial}: {report}"
            worst = max(worst, report.max_rel_error)
    assert worst < 1e-4
    assert tm.elapsed < 60.0


def test_ac02_dbscan_matches_closure():
    rng = np.random.default_rng(77)
    with Timer() as tm:
        for _ in range(50):
            n = int(rng.integers(1, 201))
            pts = rng.uniform(0, 4, (n, 2))
            if rng.random() < 0.5:
                pts = np.vstack([pts, pts[: n // 4]])[:200]  # duplicates
            eps = float(rng.uniform(0.1, 0.8))
            min_pts = int(rng.integers(1, 8))
            a = dbscan(pts, ClusterParams(eps, min_pts))
            assert oracles.assignment_matches_closure(a.labels, pts, eps, min_pts)
    assert tm.elapsed < 30.0


def test_ac03_tsne_recovers_three_blobs():
    with Timer() as tm:
        X = blobs(0)
        emb = fit_tsne(X, TsneConfig(seed=0))
        a = dbscan(emb.coords, default_params(emb.coords))
    assert a.n_clusters == 3 and len(a.noise) == 0
    truth = np.repeat(np.arange(3), 30)
    assert sorted(len(set(truth[a.members(c)])) for c in range(3)) == [1, 1, 1]
    assert tm.elapsed < 120.0


def test_ac04_trading_conservation():
    rng = np.random.default_rng(4)
    for _ in range(10_000):
        n = int(rng.integers(1, 12))
        stocks = rng.uniform(0, 1e6, n) * (rng.random(n) < 0.8)
        b = PortfolioVector(stocks, float(rng.uniform(0, 1e6)) * (rng.random() < 0.5))
        h = rng.integers(-1, 2, n)
        rate = float(rng.choice([0.0, 0.0005, 0.003, 0.01]))
        new, ledger = trading.update_portfolio(b, h, rate)
        before = trading.portfolio_value(b)
        after = trading.portfolio_value(new) + trading.ledger_commission(ledger)
        assert math.isclose(before, after, rel_tol=1e-9, abs_tol=0.0)
        assert np.all(new.stocks[h == SELL] == 0.0)


def test_ac05_wealth_identity():
    rng = np.random.default_rng(5)
    free = BacktestConfig(commission=0.0)
    for _ in range(1000):
        n = int(rng.integers(1, 8))
        X = np.exp(rng.normal(0, 0.02, (360, n)))
        W = rng.dirichlet(np.ones(n + 1), size=360)
        run = bt.run_backtest(free, X, FixedWeights(W))
        growth = np.einsum("ij,ij->i", W, np.hstack([X, np.ones((360, 1))]))
        expect = 1e6 * math.prod(growth.tolist())
        assert abs(run.curve[-1] - expect) <= 1e-9 * expect


def test_ac06_metrics_match_brute_force():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        curve = 1e6 * np.cumprod(np.append(1.0, np.exp(rng.normal(0.0005, 0.015, 360))))
        rep = metrics.metrics_report(curve)
        for k, v in oracles.curve_metrics(curve.tolist()).items():
            got = getattr(rep, k)
            assert abs(got - v) <= 1e-10 * abs(v), (k, got, v)


def test_ac07_loss_oracles_on_saved_batches():
    rng = np.random.default_rng(7)
    cfg = A3CConfig(hidden=(4, 5), window=8, l1=0.0)
    agent = A3CAgent.init(cfg, 3)
    for p in (agent.actor, agent.critic):
        for k in p:
            p[k] += 0.5 * rng.normal(size=p[k].shape)
    n, stocks = 6, 3
    X = rng.normal(size=(n, stocks, a3c.N_STATE_CHANNELS))
    actions = rng.integers(0, 3, (n, stocks))
    rewards = rng.normal(0, 0.5, n)
    s_next = rng.normal(size=(stocks, a3c.N_STATE_CHANNELS))
    _, _, lp, lc, _ = a3c.segment_gradients(agent, X, actions, rewards, s_next)

    V, h = a3c.critic_forward(agent, X)
    v_next = a3c.critic_forward(agent, s_next, h)[0]
    probs, _ = a3c.actor_forward(agent, X)
    chosen = np.take_along_axis(probs, actions[..., None], -1)[..., 0].prod(axis=1)
    T = rewards + cfg.gamma * np.append(V[1:], v_next) - V
    assert abs(lp - a3c.policy_loss(T, chosen)) <= 1e-10
    residuals = [a3c.critic_loss(rewards[i:], cfg.gamma, v_next, V[i])[1] for i in range(n)]
    assert abs(lc - float(np.mean(residuals))) <= 1e-10

    F = rng.normal(size=(120, 25, 2))
    G = np.exp(rng.normal(0, 0.01, (120, 2)))
    dcfg = DDPGConfig(window=8, hidden=6, batch=8, episodes=1)
    _, _, mb = ddpg.ddpg_train(F, G, range(0, 100), dcfg, seed=0, keep_last_batch=True)
    y = [r if term else r + dcfg.gamma * qn for r, term, qn in zip(mb.r, mb.terminal, mb.q_next)]
    assert max(abs(a - b) for a, b in zip(y, mb.y)) <= 1e-10
    assert abs(sum((yi - qi) ** 2 for yi, qi in zip(y, mb.q)) / len(y) - mb.loss) <= 1e-10


def prepared(m):
    vals = market.stack_panels(market.market_panels(m))
    return vals, m.ratios()[WARMUP:]


@pytest.mark.slow
def test_ac08_a3c_smoke():
    with Timer() as tm:
        m = synth.make_synthetic_market([0.01, 0.0], [0.01, 0.01], 2186, seed=0)
        vals, R = prepared(m)
        sp = market.split_dataset(len(vals))
        z = market.ZScore.fit(vals, sp.train).apply(vals)
        agent, _ = a3c.a3c_train(z, R, sp.train, A3CConfig(workers=1), seed=0)
        run = a3c.run_agent(agent, z, R, sp.test)
        acc = a3c.signal_accuracy(run.signals, R[sp.test.start: sp.test.stop])
    print(f"a3c smoke accuracy {acc:.4f} in {tm.elapsed:.0f}s")
    assert acc > 0.6
    assert tm.elapsed < 300.0


def hold_signals(t, book):
    return np.full(len(book.stocks), HOLD)


@pytest.mark.slow
def test_ac09_ddpg_smoke():
    with Timer() as tm:
        m = synth.make_synthetic_market([0.01, 0.01, 0.0, 0.0], [0.01] * 4, 600, seed=0)
        vals, R = prepared(m)
        clusters = [np.array([0, 1]), np.array([2, 3])]
        N = len(vals)
        train, test = range(0, N - 150), range(N - 150, N)
        scale = vals[train.start: train.stop].std(axis=(0, 1))
        s_new = ddpg.aggregate_cluster_indices(ddpg.positive_levels(vals, scale), clusters)
        F = ddpg.hedge_features(s_new, train)
        G = np.stack([R[:, c].mean(1) for c in clusters], 1)
        h, _ = ddpg.ddpg_train(F, G, train, DDPGConfig(episodes=20), seed=0)
        W = ddpg.hedge_weights(h, F, test)

        cfg = BacktestConfig()
        Rt = R[test.start: test.stop]
        cad = bt.run_backtest(cfg, Rt, CadStrategy(clusters, [hold_signals] * 2, HedgerWeights(h, F, 64), test.start))
        uni = bt.run_backtest(cfg, Rt, CadStrategy(clusters, [hold_signals] * 2, bt.constant_hedge([0.5, 0.5]), test.start))
    print(f"ddpg smoke weight {W[:, 0].mean():.4f}, cad {cad.curve[-1]:.0f} vs uniform {uni.curve[-1]:.0f} in {tm.elapsed:.0f}s")
    assert W[:, 0].mean() > 0.6
    assert cad.curve[-1] > uni.curve[-1]
    assert tm.elapsed < 600.0


def test_ac10_baseline_sanity():
    alt = np.array([[2.0, 0.5], [0.5, 2.0]])
    for s, target in ((bl.CRP(), 1.5625), (bl.BAH(), 1.0)):
        W = bl.run_weights(s, alt)
        assert abs(float(np.prod(np.sum(W * alt, axis=1))) - target) <= 1e-12

    w = np.array([0.25, 0.75])
    x = np.array([0.3, 0.5])  # w.x = 0.45 <= eps
    out = bl.pamr_step(w, x, eps=0.5)
    assert out is w and out.tobytes() == np.array([0.25, 0.75]).tobytes()

    rng = np.random.default_rng(10)
    ratios = np.exp(rng.normal(0, 0.03, (10_000, 4)))
    for name in sorted(bl.BASELINES):
        W = bl.run_weights(bl.make_strategy(name), ratios)
        assert np.all(np.isfinite(W)) and np.all(W >= -1e-12), name
        assert np.max(np.abs(W.sum(axis=1) - 1.0)) <= 1e-9, name


E2E = {
    "synth": {"stocks": 20, "periods": 1000},
    "split": {"train": 600, "validation": 100, "test": 250},
    "dbscan": {"eps_scale": 1.0},
    "a3c": {"epochs": 5},
    "ddpg": {"episodes": 4},
    "seed": 11,
}


@pytest.mark.slow
def test_ac11_end_to_end_reproducible(tmp_path):
    from cadport import cli

    cfg = tmp_path / "e2e.yaml"
    cfg.write_text(yaml.safe_dump(E2E))
    with Timer() as tm:
        reports = []
        for name in ("run1", "run2"):
            out = tmp_path / name
            assert cli.main(["all", "--config", str(cfg), "--out", str(out), "-q"]) == 0
            reports.append(((out / "backtest" / "metrics.txt").read_bytes(),
                            (out / "compare" / "metrics.csv").read_bytes()))
    assert reports[0] == reports[1]
    assert b"nan" not in reports[0][0]
    assert tm.elapsed < 900.0


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
