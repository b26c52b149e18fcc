"""The fixed set of 25 technical indicators computed from OHLCV arrays."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from cadport import kernels

# (name, strictly positive whenever prices are positive)
INDICATORS = (
    ("ma5", True),
    ("ma10", True),
    ("ma20", True),
    ("ema12", True),
    ("ema26", True),
    ("macd", False),
    ("macd_signal", False),
    ("macd_hist", False),
    ("rsi14", False),
    ("stoch_k14", False),
    ("stoch_d3", False),
    ("williams_r14", False),
    ("roc10", False),
    ("mom10", False),
    ("bb_upper20", True),
    ("bb_lower20", False),
    ("bb_pctb20", False),
    ("atr14", False),
    ("obv", False),
    ("cci20", False),
    ("mfi14", False),
    ("vwap20", True),
    ("log_ret1", False),
    ("vol20", False),
    ("close_ma5", True),
)
INDICATOR_NAMES = tuple(name for name, _ in INDICATORS)
POSITIVE_MASK = np.array([pos for _, pos in INDICATORS])
N_INDICATORS = len(INDICATORS)
WARMUP = 26


def rolling(x, window, func):
    """Apply ``func(windows, axis=1)`` over full windows; the first ``window-1`` rows are NaN."""
    out = np.full(len(x), np.nan)
    if len(x) >= window:
        out[window - 1:] = func(sliding_window_view(x, window), axis=1)
    return out


def sma(x, window):
    return rolling(x, window, np.mean)


def ema(x, span):
    return kernels.ema(x, 2.0 / (span + 1.0))


def wilder(x, period):
    return kernels.ema(x, 1.0 / period)


def _safe_ratio(num, den, fill):
    out = np.full(num.shape, float(fill))
    ok = den != 0.0
    out[ok] = num[ok] / den[ok]
    return out


def shift(x, k, fill=np.nan):
    out = np.full(len(x), fill, dtype=np.float64)
    if k < len(x):
        out[k:] = x[: len(x) - k]
    return out


def compute_matrix(open_, high, low, close, volume):
    """Return the untrimmed (records x 25) indicator matrix; warm-up rows may hold NaN."""
    o = np.asarray(open_, dtype=np.float64)
    h = np.asarray(high, dtype=np.float64)
    lo = np.asarray(low, dtype=np.float64)
    c = np.asarray(close, dtype=np.float64)
    v = np.asarray(volume, dtype=np.float64)
    del o

    ma5, ma10, ma20 = sma(c, 5), sma(c, 10), sma(c, 20)
    ema12, ema26 = ema(c, 12), ema(c, 26)
    macd = ema12 - ema26
    macd_signal = ema(macd, 9)
    macd_hist = macd - macd_signal

    prev_c = shift(c, 1)
    change = np.zeros_like(c)
    change[1:] = np.diff(c)
    avg_gain = wilder(np.maximum(change, 0.0), 14)
    avg_loss = wilder(np.maximum(-change, 0.0), 14)
    rsi = np.where(
        avg_loss > 0.0,
        100.0 - 100.0 / (1.0 + _safe_ratio(avg_gain, avg_loss, 0.0)),
        np.where(avg_gain > 0.0, 100.0, 50.0),
    )

    hh14 = rolling(h, 14, np.max)
    ll14 = rolling(lo, 14, np.min)
    rng14 = hh14 - ll14
    stoch_k = np.where(np.isnan(rng14), np.nan, 100.0 * _safe_ratio(c - ll14, rng14, 0.5))
    stoch_d = sma(stoch_k, 3)
    williams = np.where(np.isnan(rng14), np.nan, -100.0 * _safe_ratio(hh14 - c, rng14, 0.5))

    c10 = shift(c, 10)
    roc = 100.0 * (c / c10 - 1.0)
    mom = c - c10

    sd20 = rolling(c, 20, np.std)
    bb_up = ma20 + 2.0 * sd20
    bb_lo = ma20 - 2.0 * sd20
    width = bb_up - bb_lo
    pctb = np.where(np.isnan(width), np.nan, _safe_ratio(c - bb_lo, width, 0.5))

    tr = np.maximum.reduce([h - lo, np.abs(h - prev_c), np.abs(lo - prev_c)])
    tr[0] = h[0] - lo[0]
    atr = wilder(tr, 14)

    obv = np.cumsum(np.sign(change) * v)

    tp = (h + lo + c) / 3.0
    tp_ma = sma(tp, 20)
    mad = rolling(tp, 20, lambda w, axis: np.mean(np.abs(w - w.mean(axis=axis, keepdims=True)), axis=axis))
    cci = np.where(np.isnan(mad), np.nan, _safe_ratio(tp - tp_ma, 0.015 * mad, 0.0))

    flow = tp * v
    tp_change = np.zeros_like(tp)
    tp_change[1:] = np.diff(tp)
    pos_flow = rolling(np.where(tp_change > 0, flow, 0.0), 14, np.sum)
    neg_flow = rolling(np.where(tp_change < 0, flow, 0.0), 14, np.sum)
    mfi = np.where(
        neg_flow > 0.0,
        100.0 - 100.0 / (1.0 + _safe_ratio(pos_flow, neg_flow, 0.0)),
        np.where(pos_flow > 0.0, 100.0, 50.0),
    )
    mfi[np.isnan(pos_flow)] = np.nan

    vol_sum = rolling(v, 20, np.sum)
    vwap = np.where(vol_sum > 0.0, _safe_ratio(rolling(flow, 20, np.sum), vol_sum, 0.0), tp_ma)
    vwap[np.isnan(vol_sum)] = np.nan

    log_ret = np.log(c / prev_c)
    vol20 = rolling(log_ret, 20, lambda w, axis: np.std(w, axis=axis, ddof=1))

    close_ma5 = c / ma5

    cols = [
        ma5, ma10, ma20, ema12, ema26, macd, macd_signal, macd_hist, rsi, stoch_k,
        stoch_d, williams, roc, mom, bb_up, bb_lo, pctb, atr, obv, cci, mfi, vwap,
        log_ret, vol20, close_ma5,
    ]
    return np.column_stack(cols)
