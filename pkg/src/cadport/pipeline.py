"""Stage orchestration with config-hash stamps.

Every stage writes into ``<out>/<stage>/`` and finishes by writing
``stamp.json``. The stamp hash covers the config fields the stage reads
plus the hashes of its upstream stamps, so an unchanged stage is skipped
and a changed input invalidates everything downstream.
"""

import dataclasses
import hashlib
import json
import logging
import zlib
from dataclasses import replace
from pathlib import Path

import numpy as np

from cadport import a3c, backtest, baselines, ddpg, dbscan, market, synth, tsne
from cadport.errors import ConfigError, DependencyError, InsufficientDataError
from cadport.indicators import WARMUP
from cadport.metrics import MetricsReport
from cadport.nn import load_params, save_params
from cadport.trading import PortfolioVector

log = logging.getLogger("cadport")

STAGES = ("synth", "ingest", "embed", "cluster", "train-a3c", "train-ddpg", "backtest", "compare")
STAMP_FORMAT = 1


def substream(seed, name):
    """Integer seed for a named random substream of the global seed."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    return obj


def stage_inputs(config, stage, strategies=None):
    """Config fields a stage depends on, and its upstream stages."""
    c = config
    if stage == "synth":
        return {"synth": c.synth, "seed": c.seed}, []
    if stage == "ingest":
        up = ["synth"] if c.manifest is None else []
        return {"manifest": c.manifest, "split": c.split}, up
    if stage == "embed":
        return {"tsne": c.tsne, "seed": c.seed}, ["ingest"]
    if stage == "cluster":
        return {"dbscan": c.dbscan}, ["embed"]
    if stage == "train-a3c":
        return {"a3c": c.a3c, "seed": c.seed}, ["ingest", "cluster"]
    if stage == "train-ddpg":
        return {"ddpg": c.ddpg, "seed": c.seed}, ["train-a3c"]
    if stage == "backtest":
        return {"backtest": c.backtest.engine()}, ["train-ddpg"]
    if stage == "compare":
        names = list(strategies or c.backtest.strategies)
        up = ["ingest"] + (["backtest"] if "cad" in names else [])
        return {"backtest": c.backtest.engine(), "strategies": names, "seed": c.seed}, up
    raise ConfigError(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")


class Workspace:
    def __init__(self, out):
        self.out = Path(out)

    def dir(self, stage):
        d = self.out / stage
        d.mkdir(parents=True, exist_ok=True)
        return d

    def path(self, stage, name):
        return self.out / stage / name

    def stamp(self, stage):
        p = self.path(stage, "stamp.json")
        if not p.is_file():
            return None
        return json.loads(p.read_text())

    def write_stamp(self, stage, digest):
        text = json.dumps({"stage": stage, "hash": digest, "format": STAMP_FORMAT}, sort_keys=True)
        self.path(stage, "stamp.json").write_text(text + "\n")

    def stage_hash(self, config, stage, strategies=None):
        fields, upstream = stage_inputs(config, stage, strategies)
        ups = []
        for u in upstream:
            st = self.stamp(u)
            if st is None:
                raise DependencyError(f"stage '{stage}' needs '{u}' to be run first")
            ups.append(st["hash"])
        blob = json.dumps({"stage": stage, "fields": fields, "upstream": ups, "format": STAMP_FORMAT},
                          sort_keys=True, default=_jsonable)
        return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------- artifact readers

def load_ingest(ws):
    d = ws.out / "ingest"
    split = json.loads((d / "split.json").read_text())
    return {
        "values": np.load(d / "indicators.npy", allow_pickle=False),
        "ratios": np.load(d / "ratios.npy", allow_pickle=False),
        "symbols": (d / "symbols.txt").read_text().split(),
        "split": market.DataSplit(*(range(*split[k]) for k in ("train", "validation", "test"))),
    }


def load_clusters(ws):
    symbols, assignment = dbscan.read_assignment(ws.path("cluster", "assignment.csv"))
    return [assignment.members(c) for c in range(assignment.n_clusters)], assignment


def load_agents(ws, config, n_clusters):
    return [a3c.A3CAgent.from_flat(load_params(ws.path("train-a3c", f"cluster_{i}.ckpt")), config.a3c)
            for i in range(n_clusters)]


def zscored(data):
    return market.ZScore.fit(data["values"], data["split"].train).apply(data["values"])


def cluster_hedge_features(data, clusters):
    """Standardized log ratios of the cluster-aggregated indicators, fitted on the training rows."""
    values, train = data["values"], data["split"].train
    scale = values[train.start:train.stop].reshape(-1, values.shape[-1]).std(axis=0)
    levels = ddpg.positive_levels(values, scale)
    return ddpg.hedge_features(ddpg.aggregate_cluster_indices(levels, clusters), train)


def cluster_growth(agents, z, ratios, clusters, rows):
    """Per-record growth of each agent-driven cluster book (zero commission, equal-weight start)."""
    growth = np.ones((len(ratios), len(clusters)))
    for i, (agent, m) in enumerate(zip(agents, clusters)):
        start = PortfolioVector(np.full(len(m), 1.0 / len(m)), 0.0)
        run = a3c.run_agent(agent, z[:, m], ratios[:, m], rows, commission=0.0, initial=start)
        first = max(rows.start, 1)
        growth[first:rows.stop, i] = run.values[1:] / run.values[:-1]
    return growth


# ---------------------------------------------------------------- stages

def stage_synth(config, ws, **_):
    s = config.synth
    g = len(s.drifts)
    drifts = [s.drifts[j % g] for j in range(s.stocks)]
    vols = [s.vols[j % g] for j in range(s.stocks)]
    m = synth.make_synthetic_market(drifts, vols, s.periods, seed=substream(config.seed, "market"))
    synth.write_market(m, ws.dir("synth"))


def stage_ingest(config, ws, **_):
    manifest = config.manifest or ws.path("synth", "manifest.csv")
    m = market.load_universe(manifest)
    values = market.stack_panels(market.market_panels(m))
    ratios = m.ratios()[WARMUP:]
    sp = config.split
    split = market.split_dataset(len(values), sp.train, sp.validation, sp.test)
    d = ws.dir("ingest")
    np.save(d / "indicators.npy", values, allow_pickle=False)
    np.save(d / "ratios.npy", ratios, allow_pickle=False)
    (d / "symbols.txt").write_text("\n".join(m.symbols) + "\n")
    (d / "dates.txt").write_text("\n".join(str(x) for x in m.dates[WARMUP:]) + "\n")
    rng = {k: [getattr(split, k).start, getattr(split, k).stop] for k in ("train", "validation", "test")}
    (d / "split.json").write_text(json.dumps(rng, sort_keys=True) + "\n")


def stage_embed(config, ws, **_):
    data = load_ingest(ws)
    feats = tsne.stock_features(data["values"], data["split"].train)
    emb = tsne.fit_tsne(feats, replace(config.tsne, seed=substream(config.seed, "tsne")))
    d = ws.dir("embed")
    tsne.write_embedding(d / "embedding.csv", data["symbols"], emb.coords)
    with open(d / "kl.csv", "w") as fh:
        fh.write("iteration,kl\n")
        for it, kl in enumerate(emb.kl_trace):
            fh.write(f"{it},{float(kl)!r}\n")


def stage_cluster(config, ws, **_):
    symbols, coords = tsne.read_embedding(ws.path("embed", "embedding.csv"))
    c = config.dbscan
    if c.eps is None:
        params = dbscan.default_params(coords, c.k, c.eps_scale, c.min_pts)
    else:
        params = dbscan.ClusterParams(c.eps, c.min_pts)
    assignment = dbscan.dbscan(coords, params, keys=symbols)
    if assignment.n_clusters == 0:
        raise InsufficientDataError("clustering labelled every stock as noise")
    d = ws.dir("cluster")
    dbscan.write_assignment(d / "assignment.csv", symbols, assignment)
    (d / "params.json").write_text(json.dumps({"eps": params.eps, "min_pts": params.min_pts}) + "\n")
    log.info("cluster: %d clusters, %d noise stocks", assignment.n_clusters, len(assignment.noise))


def stage_train_a3c(config, ws, **_):
    data = load_ingest(ws)
    clusters, _ = load_clusters(ws)
    z = zscored(data)
    R = data["ratios"]
    sp = data["split"]
    d = ws.dir("train-a3c")
    summary = []
    for i, m in enumerate(clusters):
        agent, trace = a3c.a3c_train(z[:, m], R[:, m], sp.train, config.a3c, seed=substream(config.seed, f"a3c/{i}"))
        save_params(agent.flat_params(), d / f"cluster_{i}.ckpt", meta={"members": [int(j) for j in m]})
        a3c.write_trace(d / f"trace_{i}.csv", trace)
        run = a3c.run_agent(agent, z[:, m], R[:, m], sp.validation, config.a3c.commission)
        acc = a3c.signal_accuracy(run.signals, R[max(sp.validation.start, 1):sp.validation.stop, m])
        summary.append(f"{i},{len(m)},{float(acc)!r}")
        log.info("train-a3c: cluster %d (%d stocks) validation accuracy %.4f", i, len(m), acc)
    (d / "validation.csv").write_text("cluster,stocks,accuracy\n" + "\n".join(summary) + "\n")


def stage_train_ddpg(config, ws, **_):
    data = load_ingest(ws)
    clusters, _ = load_clusters(ws)
    agents = load_agents(ws, config, len(clusters))
    z = zscored(data)
    train = data["split"].train
    growth = cluster_growth(agents, z, data["ratios"], clusters, train)
    feats = cluster_hedge_features(data, clusters)
    hedger, trace = ddpg.ddpg_train(feats, growth, train, config.ddpg, seed=substream(config.seed, "ddpg"))
    d = ws.dir("train-ddpg")
    save_params(hedger.flat_params(), d / "hedger.ckpt",
                meta={"n_in": hedger.n_in, "hidden": hedger.hidden, "clusters": len(clusters)})
    ddpg.write_trace(d / "trace.csv", trace)
    np.save(d / "growth.npy", growth, allow_pickle=False)


def stage_backtest(config, ws, **_):
    data = load_ingest(ws)
    clusters, _ = load_clusters(ws)
    agents = load_agents(ws, config, len(clusters))
    params, meta = load_params(ws.path("train-ddpg", "hedger.ckpt"), with_meta=True)
    hedger = ddpg.Hedger.from_flat(params, meta["n_in"], meta["hidden"])
    feats = cluster_hedge_features(data, clusters)
    test = data["split"].test
    run = backtest.run_cad(config.backtest.engine(), data["ratios"], test, clusters, agents, zscored(data),
                           hedger, feats, config.ddpg.window)
    d = ws.dir("backtest")
    backtest.write_curve(d / "cad_wealth.csv", run.curve)
    backtest.write_ledger(d / "cad_ledger.csv", run.ledger)
    ddpg.write_weights(d / "cad_weights.csv", run.weights, test)
    ddpg.write_weights(d / "cad_cluster_weights.csv", run.cluster_weights, test)
    (d / "metrics.txt").write_text(run.report.to_text())
    log.info("backtest: CAD final value %.4f%%", run.report.final_value_pct)


def stage_compare(config, ws, strategies=None, **_):
    data = load_ingest(ws)
    test = data["split"].test
    R = data["ratios"][test.start:test.stop]
    engine = config.backtest.engine()
    runs = []
    for name in strategies or config.backtest.strategies:
        if name == "cad":
            curve = backtest.read_curve(ws.path("backtest", "cad_wealth.csv"))
            report = MetricsReport.from_text(ws.path("backtest", "metrics.txt").read_text())
            runs.append(backtest.BacktestRun("CAD", curve, np.empty((0, 0)), [], report))
            continue
        kwargs = {"seed": substream(config.seed, "up")} if name == "up" else {}
        runs.append(backtest.run_backtest(engine, R, baselines.make_strategy(name, **kwargs)))
    d = ws.dir("compare")
    for r in runs:
        backtest.write_curve(d / f"{r.name.lower()}_wealth.csv", r.curve)
        if r.weights.size:
            ddpg.write_weights(d / f"{r.name.lower()}_weights.csv", r.weights, test)
    table = backtest.format_table(runs)
    (d / "table.txt").write_text(table)
    (d / "metrics.csv").write_text(backtest.format_flat(runs))
    log.info("compare:\n%s", table)


RUNNERS = {
    "synth": stage_synth,
    "ingest": stage_ingest,
    "embed": stage_embed,
    "cluster": stage_cluster,
    "train-a3c": stage_train_a3c,
    "train-ddpg": stage_train_ddpg,
    "backtest": stage_backtest,
    "compare": stage_compare,
}


def run_stage(config, out, stage, force=False, strategies=None):
    """Run one stage unless its stamp is current; returns ``"ran"`` or ``"skipped"``."""
    ws = Workspace(out)
    digest = ws.stage_hash(config, stage, strategies)
    stamp = ws.stamp(stage)
    if not force and stamp is not None and stamp["hash"] == digest:
        log.info("%s: up to date, skipped", stage)
        return "skipped"
    RUNNERS[stage](config, ws, strategies=strategies)
    ws.dir(stage)
    ws.write_stamp(stage, digest)
    return "ran"


def run_pipeline(config, out, stages=None, force=False, strategies=None):
    """Run ``stages`` (default: everything after synth, plus synth when no manifest is set) in order."""
    if stages is None:
        stages = [s for s in STAGES if s != "synth" or config.manifest is None]
    return {s: run_stage(config, out, s, force, strategies) for s in stages}
