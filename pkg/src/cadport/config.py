"""Pipeline configuration: strict YAML parsing, defaults and range checks."""

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from cadport.a3c import A3CConfig
from cadport.backtest import BacktestConfig
from cadport.baselines import BASELINES
from cadport.ddpg import DDPGConfig
from cadport.errors import CadportError, ConfigError
from cadport.tsne import TsneConfig

OUT_ENV = "CADPORT_OUT"


@dataclass(frozen=True)
class SplitConfig:
    train: int = 1620
    validation: int = 180
    test: int = 360


@dataclass(frozen=True)
class DbscanConfig:
    eps: float | None = None  # None: eps_scale x median k-NN distance
    min_pts: int = 4
    eps_scale: float = 2.0
    k: int = 4


@dataclass(frozen=True)
class BacktestSection:
    initial: float = 1e6
    commission: float = 0.0005
    strategies: tuple = ("cad",) + tuple(BASELINES)

    def engine(self):
        return BacktestConfig(self.initial, self.commission)


@dataclass(frozen=True)
class SynthConfig:
    stocks: int = 20
    periods: int = 2300
    drifts: tuple = (0.002, 0.0, -0.001)  # one entry per group; stocks are dealt round-robin
    vols: tuple = (0.01, 0.02, 0.005)


@dataclass(frozen=True)
class PipelineConfig:
    manifest: str | None = None  # None: the synth stage's manifest
    split: SplitConfig = field(default_factory=SplitConfig)
    tsne: TsneConfig = field(default_factory=TsneConfig)
    dbscan: DbscanConfig = field(default_factory=DbscanConfig)
    a3c: A3CConfig = field(default_factory=A3CConfig)
    ddpg: DDPGConfig = field(default_factory=DDPGConfig)
    backtest: BacktestSection = field(default_factory=BacktestSection)
    synth: SynthConfig = field(default_factory=SynthConfig)
    seed: int = 0
    out: str = "cadport_out"

    def section(self, name):
        return dataclasses.asdict(getattr(self, name)) if name in SECTIONS else getattr(self, name)


SECTIONS = {
    "split": SplitConfig,
    "tsne": TsneConfig,
    "dbscan": DbscanConfig,
    "a3c": A3CConfig,
    "ddpg": DDPGConfig,
    "backtest": BacktestSection,
    "synth": SynthConfig,
}
HIDDEN_KEYS = {"tsne": {"seed"}}  # derived from the global seed

INF = float("inf")
# (low, high, low inclusive, high inclusive)
RANGES = {
    "split.train": (1, INF, True, True),
    "split.validation": (1, INF, True, True),
    "split.test": (1, INF, True, True),
    "tsne.perplexity": (1, INF, False, True),
    "tsne.iterations": (1, INF, True, True),
    "tsne.learning_rate": (0, INF, False, True),
    "tsne.early_exaggeration": (1, INF, True, True),
    "tsne.exaggeration_iters": (0, INF, True, True),
    "tsne.momentum_initial": (0, 1, True, False),
    "tsne.momentum_final": (0, 1, True, False),
    "tsne.min_gain": (0, 1, False, True),
    "dbscan.eps": (0, INF, False, True),
    "dbscan.min_pts": (1, INF, True, True),
    "dbscan.eps_scale": (0, INF, False, True),
    "dbscan.k": (1, INF, True, True),
    "a3c.window": (1, INF, True, True),
    "a3c.hidden": (1, INF, True, True),
    "a3c.lr": (0, 1, False, True),
    "a3c.batch": (1, INF, True, True),
    "a3c.l1": (0, INF, True, True),
    "a3c.epochs": (0, INF, True, True),
    "a3c.gamma": (0, 1, True, True),
    "a3c.commission": (0, 0.01, True, True),
    "a3c.workers": (1, 64, True, True),
    "a3c.reward_scale": (0, INF, False, True),
    "a3c.center_rate": (0, 1, True, True),
    "ddpg.window": (1, INF, True, True),
    "ddpg.hidden": (1, INF, True, True),
    "ddpg.gamma": (0, 1, True, True),
    "ddpg.tau": (0, 1, False, True),
    "ddpg.lr": (0, 1, False, True),
    "ddpg.batch": (1, INF, True, True),
    "ddpg.replay": (1, INF, True, True),
    "ddpg.max_steps": (1, INF, True, True),
    "ddpg.episodes": (1, INF, True, True),
    "ddpg.ou_theta": (0, INF, True, True),
    "ddpg.ou_sigma": (0, INF, True, True),
    "ddpg.ou_sigma_final": (0, INF, True, True),
    "ddpg.ou_dt": (0, INF, False, True),
    "ddpg.reward_scale": (0, INF, False, True),
    "ddpg.center_rate": (0, 1, True, True),
    "backtest.initial": (0, INF, False, True),
    "backtest.commission": (0, 0.01, True, True),
    "synth.stocks": (1, INF, True, True),
    "synth.periods": (2, INF, True, True),
    "seed": (0, 2**32 - 1, True, True),
}
INT_KEYS = {
    "split.train", "split.validation", "split.test", "tsne.iterations", "tsne.exaggeration_iters",
    "dbscan.min_pts", "dbscan.k", "a3c.window", "a3c.hidden", "a3c.batch", "a3c.epochs", "a3c.workers",
    "ddpg.window", "ddpg.hidden", "ddpg.batch", "ddpg.replay", "ddpg.max_steps", "ddpg.episodes",
    "synth.stocks", "synth.periods", "seed",
}


def _check_number(key, value):
    if value is None:
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if key in INT_KEYS:
        if int(value) != value:
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        value = int(value)
    if key in RANGES:
        lo, hi, lo_in, hi_in = RANGES[key]
        ok_lo = value >= lo if lo_in else value > lo
        ok_hi = value <= hi if hi_in else value < hi
        if not (ok_lo and ok_hi):
            left, right = "[" if lo_in else "(", "]" if hi_in else ")"
            raise ConfigError(f"{key}={value!r} outside {left}{lo}, {hi}{right}")
    return value


def _build_section(name, raw):
    cls = SECTIONS[name]
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a mapping, got {type(raw).__name__}")
    allowed = {f.name for f in dataclasses.fields(cls)} - HIDDEN_KEYS.get(name, set())
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"unknown config key {name}.{key}")
    values = {}
    for key, value in raw.items():
        path = f"{name}.{key}"
        if key in ("hidden", "drifts", "vols", "strategies") and isinstance(value, list):
            if key == "strategies":
                value = tuple(str(v).lower() for v in value)
                for s in value:
                    if s != "cad" and s not in BASELINES:
                        raise ConfigError(f"{path}: unknown strategy {s!r}")
            else:
                value = tuple(_check_number(path, v) for v in value)
        elif path == "ddpg.hidden" or not isinstance(value, (list, tuple, str)):
            value = _check_number(path, value)
        else:
            raise ConfigError(f"{path}: unexpected value {value!r}")
        values[key] = value
    try:
        return cls(**values)
    except CadportError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def parse_config(data, base_dir="."):
    """Build a :class:`PipelineConfig` from an already-loaded mapping."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    top = {f.name for f in dataclasses.fields(PipelineConfig)}
    for key in data:
        if key not in top:
            raise ConfigError(f"unknown config key {key}")
    kwargs = {}
    for name in SECTIONS:
        if name in data:
            kwargs[name] = _build_section(name, data[name])
    if "seed" in data:
        kwargs["seed"] = _check_number("seed", data["seed"])
    if data.get("out") is not None:
        kwargs["out"] = str(data["out"])
    manifest = data.get("manifest")
    if manifest is not None:
        path = Path(manifest)
        if not path.is_absolute():
            path = Path(base_dir) / path
        if not path.is_file():
            raise ConfigError(f"manifest {path} does not exist")
        kwargs["manifest"] = str(path)
    synth = kwargs.get("synth", SynthConfig())
    if len(synth.drifts) != len(synth.vols) or not synth.drifts:
        raise ConfigError("synth.drifts and synth.vols must be non-empty and equally long")
    return PipelineConfig(**kwargs)


def validate_config(path=None):
    """Load and validate a YAML config; ``None`` or an empty file gives all defaults."""
    if path is None:
        return parse_config({})
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return parse_config(data, path.parent)


def resolve_out(config, cli_out=None):
    """Output directory: ``--out`` beats ``CADPORT_OUT`` beats the config file."""
    if cli_out:
        return Path(cli_out)
    env = os.environ.get(OUT_ENV)
    if env:
        return Path(env)
    return Path(config.out)
