"""Backtest performance metrics: final value, drawdown, Sharpe, Sortino, Calmar, positive days."""

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from cadport.errors import UndefinedMetricError, ValidationError

PERIODS_PER_YEAR = 252


def _curve(curve, min_len=2):
    v = np.asarray(curve, dtype=np.float64)
    if v.ndim != 1 or len(v) < min_len:
        raise ValidationError(f"wealth curve needs at least {min_len} values")
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise ValidationError("wealth curve values must be positive and finite")
    return v


def period_returns(curve):
    v = _curve(curve)
    return v[1:] / v[:-1] - 1.0


def final_value(curve):
    """Final wealth as a percentage of the initial wealth."""
    v = _curve(curve)
    return 100.0 * v[-1] / v[0]


def max_drawdown(curve):
    """Largest peak-to-trough decline as a fraction of the running peak."""
    v = _curve(curve, 1)
    peak = np.maximum.accumulate(v)
    return float(np.max((peak - v) / peak))


def _excess(returns, rf):
    r = np.asarray(returns, dtype=np.float64)
    if len(r) < 2:
        raise UndefinedMetricError("need at least two returns")
    return r - rf


def sharpe(returns, rf=0.0, annualize=True):
    ex = _excess(returns, rf)
    sd = ex.std(ddof=1)
    if sd == 0.0:
        raise UndefinedMetricError("zero variance of excess returns")
    ratio = ex.mean() / sd
    return ratio * math.sqrt(PERIODS_PER_YEAR) if annualize else ratio


def sortino(returns, rf=0.0, annualize=True):
    ex = _excess(returns, rf)
    if not np.any(ex < 0):
        raise UndefinedMetricError("no negative excess return: downside deviation is zero")
    down = np.minimum(ex, 0.0).std(ddof=1)
    ratio = ex.mean() / down
    return ratio * math.sqrt(PERIODS_PER_YEAR) if annualize else ratio


def calmar(returns, rf=0.0, curve=None, annualize=True):
    ex = np.asarray(returns, dtype=np.float64) - rf
    if len(ex) == 0:
        raise UndefinedMetricError("no returns")
    if curve is None:
        curve = np.concatenate([[1.0], np.cumprod(1.0 + np.asarray(returns, dtype=np.float64))])
    mdd = max_drawdown(curve)
    if mdd == 0.0:
        raise UndefinedMetricError("max drawdown is zero")
    mean = ex.mean() * (PERIODS_PER_YEAR if annualize else 1)
    return mean / mdd


def positive_days(curve):
    v = _curve(curve)
    return float(np.count_nonzero(v[1:] / v[:-1] > 1.0)) / (len(v) - 1)


@dataclass(frozen=True)
class MetricsReport:
    final_value_pct: float
    max_drawdown: float
    sharpe: float
    sortino: float
    calmar: float
    positive_days: float

    def to_text(self):
        return "".join(f"{f.name}={float(getattr(self, f.name))!r}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text):
        values = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, raw = line.partition("=")
            values[key.strip()] = float(raw)
        names = {f.name for f in fields(cls)}
        if set(values) != names:
            raise ValidationError(f"metrics record fields {sorted(values)} != {sorted(names)}")
        return cls(**values)

    def as_dict(self):
        return asdict(self)


def _or_nan(fn, *args, **kwargs):
    try:
        return float(fn(*args, **kwargs))
    except UndefinedMetricError:
        return math.nan


def metrics_report(curve, rf=0.0, annualize=True):
    """All six metrics; a ratio whose denominator vanishes is reported as NaN."""
    v = _curve(curve)
    r = period_returns(v)
    return MetricsReport(
        final_value_pct=final_value(v),
        max_drawdown=max_drawdown(v),
        sharpe=_or_nan(sharpe, r, rf, annualize),
        sortino=_or_nan(sortino, r, rf, annualize),
        calmar=_or_nan(calmar, r, rf, v, annualize),
        positive_days=positive_days(v),
    )
