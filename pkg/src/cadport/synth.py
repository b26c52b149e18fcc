"""Seeded geometric-random-walk markets for tests and demos."""

from pathlib import Path

import numpy as np

from cadport.errors import ValidationError
from cadport.market import Market, OhlcvSeries, write_ohlcv

START_DATE = np.datetime64("2015-01-05", "D")


def business_days(n, start=START_DATE):
    return np.busday_offset(start, np.arange(n), roll="forward").astype("datetime64[D]")


def make_synthetic_market(drifts, vols, periods, seed=0, start_price=100.0, symbols=None, intraday=0.005):
    """Closes follow ``close_t = close_0 * (1 + drift)^t * exp(sum_s (vol * z_s - vol^2 / 2))``.

    With ``vol = 0`` the path is exactly ``close_0 * (1 + drift)^t``. Open is the
    previous close; high/low bracket open and close by a seeded intraday spread
    (zero when ``intraday`` is 0).
    """
    drifts = np.asarray(drifts, dtype=np.float64)
    vols = np.broadcast_to(np.asarray(vols, dtype=np.float64), drifts.shape)
    if periods < 2:
        raise ValidationError("need at least two periods")
    if np.any(vols < 0) or np.any(drifts <= -1):
        raise ValidationError("volatility must be >= 0 and drift > -1")
    n = len(drifts)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((periods - 1, n))
    spread = rng.uniform(0.0, intraday, (2, periods, n))
    volume = np.round(rng.lognormal(13.0, 0.3, (periods, n)))
    log_shock = np.vstack([np.zeros((1, n)), np.cumsum(vols * z - 0.5 * vols * vols, axis=0)])
    t = np.arange(periods)[:, None]
    close = start_price * (1.0 + drifts) ** t * np.exp(log_shock)
    open_ = np.vstack([close[:1], close[:-1]])
    high = np.maximum(open_, close) * (1.0 + spread[0])
    low = np.minimum(open_, close) * (1.0 - spread[1])
    symbols = tuple(symbols) if symbols is not None else tuple(f"S{j:03d}" for j in range(n))
    return Market(symbols, business_days(periods), open_, high, low, close, volume,
                  {"drifts": drifts.tolist(), "vols": vols.tolist(), "seed": seed})


def write_market(market, directory):
    """Write one OHLCV file per stock plus ``manifest.csv``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for j, sym in enumerate(market.symbols):
        write_ohlcv(market.series(j), directory / f"{sym}.csv")
        lines.append(f"{sym},{sym}.csv\n")
    manifest = directory / "manifest.csv"
    manifest.write_text("".join(lines))
    return manifest


def synthetic_series(symbol, drift, vol, periods, seed=0, start_price=100.0):
    m = make_synthetic_market([drift], [vol], periods, seed, start_price, (symbol,))
    return OhlcvSeries(symbol, m.dates, m.open[:, 0], m.high[:, 0], m.low[:, 0], m.close[:, 0], m.volume[:, 0])
