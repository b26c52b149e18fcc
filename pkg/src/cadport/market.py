"""OHLCV ingestion, indicator panels, state tensors and train/validation/test splits."""

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cadport.errors import (
    AlignmentError,
    InsufficientDataError,
    ParseError,
    ValidationError,
)
from cadport.indicators import INDICATOR_NAMES, N_INDICATORS, WARMUP, compute_matrix

N_STATE_CHANNELS = N_INDICATORS + 1
HEADER = ("date", "open", "high", "low", "close", "volume")


@dataclass(frozen=True)
class OhlcvSeries:
    symbol: str
    dates: np.ndarray  # datetime64[D]
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray

    def __post_init__(self):
        n = len(self.dates)
        for name in ("open", "high", "low", "close", "volume"):
            arr = getattr(self, name)
            if len(arr) != n:
                raise ValidationError(f"{self.symbol}: column {name} has {len(arr)} rows, expected {n}")
        for name in ("open", "high", "low", "close"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ValidationError(f"{self.symbol}: non-positive or non-finite {name} price")
        if np.any(~np.isfinite(self.volume)) or np.any(self.volume < 0):
            raise ValidationError(f"{self.symbol}: negative or non-finite volume")
        if n > 1 and np.any(np.diff(self.dates) <= np.timedelta64(0, "D")):
            raise ValidationError(f"{self.symbol}: dates are not strictly increasing")

    def __len__(self):
        return len(self.dates)

    def take(self, idx):
        return OhlcvSeries(
            self.symbol, self.dates[idx], self.open[idx], self.high[idx],
            self.low[idx], self.close[idx], self.volume[idx],
        )


@dataclass(frozen=True)
class IndicatorPanel:
    symbol: str
    dates: np.ndarray
    values: np.ndarray  # (records, 25)
    names: tuple = INDICATOR_NAMES

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != N_INDICATORS:
            raise ValidationError(f"indicator panel must have {N_INDICATORS} columns")
        if self.values.shape[0] != len(self.dates):
            raise ValidationError("indicator panel rows do not match dates")

    def column(self, name):
        return self.values[:, self.names.index(name)]


@dataclass(frozen=True)
class DataSplit:
    train: range
    validation: range
    test: range

    def __post_init__(self):
        if not (self.train.stop == self.validation.start and self.validation.stop == self.test.start):
            raise ValidationError("split ranges must be contiguous and ordered")
        for r in (self.train, self.validation, self.test):
            if r.step != 1 or r.stop < r.start:
                raise ValidationError("split ranges must be forward unit-step ranges")


@dataclass(frozen=True)
class Market:
    """A rectangular, calendar-aligned universe (records x stocks)."""

    symbols: tuple
    dates: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_stocks(self):
        return len(self.symbols)

    def __len__(self):
        return len(self.dates)

    def series(self, j):
        return OhlcvSeries(
            self.symbols[j], self.dates, self.open[:, j], self.high[:, j],
            self.low[:, j], self.close[:, j], self.volume[:, j],
        )

    def ratios(self):
        """Price-ratio matrix; row 0 is all ones (no previous close)."""
        out = np.ones_like(self.close)
        out[1:] = self.close[1:] / self.close[:-1]
        return out


def _parse_date(text, line):
    try:
        return np.datetime64(dt.date.fromisoformat(text.strip()), "D")
    except ValueError as exc:
        raise ParseError(f"bad date {text!r}", line) from exc


def load_ohlcv(path, symbol=None):
    """Read one ``date,open,high,low,close,volume`` file into a validated series."""
    path = Path(path)
    symbol = symbol or path.stem
    dates, rows = [], []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if lineno == 1 and row[0].strip().lower() == "date":
                continue
            if len(row) != 6:
                raise ParseError(f"expected 6 fields, got {len(row)}", lineno)
            dates.append(_parse_date(row[0], lineno))
            try:
                rows.append([float(x) for x in row[1:]])
            except ValueError as exc:
                raise ParseError(f"non-numeric field in {row!r}", lineno) from exc
    data = np.array(rows, dtype=np.float64).reshape(-1, 5)
    return OhlcvSeries(
        symbol,
        np.array(dates, dtype="datetime64[D]"),
        data[:, 0].copy(), data[:, 1].copy(), data[:, 2].copy(), data[:, 3].copy(), data[:, 4].copy(),
    )


def write_ohlcv(series, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for i in range(len(series)):
            w.writerow([
                str(series.dates[i]), repr(float(series.open[i])), repr(float(series.high[i])),
                repr(float(series.low[i])), repr(float(series.close[i])), repr(float(series.volume[i])),
            ])


def read_manifest(path):
    """Parse ``symbol,path`` lines; relative paths resolve against the manifest's directory."""
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ParseError(f"expected 'symbol,path', got {line!r}", lineno)
        file_path = Path(parts[1])
        if not file_path.is_absolute():
            file_path = path.parent / file_path
        entries.append((parts[0], file_path))
    return entries


def align_universe(series_list):
    """Intersect calendars so every series covers exactly the same dates."""
    if not series_list:
        raise InsufficientDataError("empty universe")
    common = series_list[0].dates
    for s in series_list[1:]:
        common = np.intersect1d(common, s.dates)
    if len(common) == 0:
        raise AlignmentError("no common trading dates across the universe")
    aligned = []
    for s in series_list:
        idx = np.searchsorted(s.dates, common)
        aligned.append(s.take(idx))
    return Market(
        tuple(s.symbol for s in aligned),
        common,
        *(np.column_stack([getattr(s, col) for s in aligned]) for col in ("open", "high", "low", "close", "volume")),
    )


def load_universe(manifest_path):
    return align_universe([load_ohlcv(p, sym) for sym, p in read_manifest(manifest_path)])


def compute_indicators(series):
    """Compute the 25-column indicator panel and drop the warm-up prefix."""
    if len(series) <= WARMUP:
        raise InsufficientDataError(
            f"{series.symbol}: {len(series)} records, need more than {WARMUP} for indicator warm-up"
        )
    full = compute_matrix(series.open, series.high, series.low, series.close, series.volume)
    values = full[WARMUP:]
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise ValidationError(
            f"{series.symbol}: non-finite {INDICATOR_NAMES[bad[1]]} at record {bad[0] + WARMUP}"
        )
    return IndicatorPanel(series.symbol, series.dates[WARMUP:], values)


def market_panels(market):
    return [compute_indicators(market.series(j)) for j in range(market.n_stocks)]


def price_ratio(closes, t):
    """Return ``close_t / close_{t-1}`` for every stock.

    ``closes`` is a (records x stocks) array or a sequence of aligned series.
    """
    if not isinstance(closes, np.ndarray):
        closes = np.column_stack([s.close for s in closes])
    closes = np.asarray(closes, dtype=np.float64)
    if closes.ndim == 1:
        closes = closes[:, None]
    if t < 1 or t >= closes.shape[0]:
        raise IndexError(f"price ratio needs 1 <= t < {closes.shape[0]}, got t={t}")
    x = closes[t] / closes[t - 1]
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise ValidationError("price ratios must be positive and finite")
    return x


@dataclass(frozen=True)
class ZScore:
    """Per-stock, per-indicator normalization frozen on the training rows."""

    mean: np.ndarray  # (stocks, 25)
    std: np.ndarray

    @classmethod
    def fit(cls, values, rows):
        """``values`` has shape (records, stocks, 25)."""
        block = values[rows.start:rows.stop]
        mean = block.mean(axis=0)
        std = block.std(axis=0)
        std = np.where(std > 1e-12 * np.maximum(np.abs(mean), 1.0), std, 1.0)
        return cls(mean, std)

    def apply(self, values):
        return (values - self.mean) / self.std


def stack_panels(panels):
    """Stack per-stock panels into a (records, stocks, 25) array, checking date alignment."""
    if not panels:
        raise InsufficientDataError("no panels to stack")
    dates = panels[0].dates
    for p in panels[1:]:
        if len(p.dates) != len(dates) or np.any(p.dates != dates):
            raise AlignmentError(f"panel {p.symbol} does not cover the same dates as {panels[0].symbol}")
    return np.stack([p.values for p in panels], axis=1)


def holdings_proportions(amounts, cash=0.0):
    amounts = np.asarray(amounts, dtype=np.float64)
    total = amounts.sum(axis=-1, keepdims=True) + cash
    return np.divide(amounts, total, out=np.zeros_like(amounts), where=total > 0)


def build_state_tensor(panels, members, holdings=None):
    """Assemble the (records, cluster stocks, 26) agent observation.

    ``panels`` is a list of IndicatorPanel (or a stacked (records, stocks, 25)
    array); ``members`` selects the cluster's stocks: an index sequence, or a
    ``(ClusterAssignment, cluster_id)`` pair. ``holdings`` is a PortfolioVector
    (broadcast over records), a (records, members) proportion array, or None.
    """
    values = panels if isinstance(panels, np.ndarray) else stack_panels(panels)
    if isinstance(members, tuple) and len(members) == 2 and hasattr(members[0], "labels"):
        assignment, cid = members
        members = np.flatnonzero(np.asarray(assignment.labels) == cid)
    members = np.asarray(members, dtype=np.int64)
    if members.size == 0:
        raise ValidationError("cluster has no members")
    n_t = values.shape[0]
    block = values[:, members, :]
    if holdings is None:
        prop = np.zeros((n_t, len(members)))
    elif hasattr(holdings, "stocks"):
        if len(holdings.stocks) != len(members):
            raise ValidationError("holdings length does not match cluster size")
        prop = np.broadcast_to(holdings_proportions(holdings.stocks, holdings.cash), (n_t, len(members)))
    else:
        prop = np.broadcast_to(np.asarray(holdings, dtype=np.float64), (n_t, len(members)))
    if np.any(prop < 0) or np.any(prop.sum(axis=1) > 1.0 + 1e-12):
        raise ValidationError("holdings proportions must be non-negative and sum to at most 1")
    state = np.concatenate([block, prop[:, :, None]], axis=2)
    if not np.all(np.isfinite(state)):
        raise ValidationError("state tensor contains non-finite entries")
    return state


def split_dataset(records, train=1620, validation=180, test=360):
    """Partition ``records`` rows into contiguous train/validation/test ranges.

    When more rows are available than requested, the split is anchored at the
    end so the test range covers the most recent records.
    """
    sizes = (train, validation, test)
    if any(int(s) != s or s < 1 for s in sizes):
        raise ValidationError(f"split sizes must be positive integers, got {sizes}")
    total = train + validation + test
    if records < total:
        raise InsufficientDataError(f"{records} records cannot hold a {train}/{validation}/{test} split")
    start = records - total
    return DataSplit(
        range(start, start + train),
        range(start + train, start + train + validation),
        range(start + train + validation, records),
    )
