"""Signal-driven portfolio updates with cash and commission accounting."""

from dataclasses import dataclass

import numpy as np

from cadport.errors import ValidationError

SELL, HOLD, BUY = -1, 0, 1
MAX_COMMISSION = 0.01


@dataclass(frozen=True)
class PortfolioVector:
    """Capital per stock (currency units) plus a cash slot."""

    stocks: np.ndarray
    cash: float = 0.0

    def __post_init__(self):
        stocks = np.asarray(self.stocks, dtype=np.float64)
        object.__setattr__(self, "stocks", stocks)
        object.__setattr__(self, "cash", float(self.cash))
        if stocks.ndim != 1:
            raise ValidationError("portfolio stock vector must be one-dimensional")
        if np.any(~np.isfinite(stocks)) or np.any(stocks < 0) or not np.isfinite(self.cash) or self.cash < 0:
            raise ValidationError("portfolio entries must be finite and non-negative")

    @property
    def value(self):
        return portfolio_value(self)

    def proportions(self):
        """Simplex form: each position / total value, cash last."""
        total = self.value
        if total <= 0:
            raise ValidationError("cannot normalize a portfolio with zero value")
        return np.append(self.stocks, self.cash) / total

    @classmethod
    def from_weights(cls, weights, value):
        w = np.asarray(weights, dtype=np.float64)
        return cls(w[:-1] * value, float(w[-1] * value))


@dataclass(frozen=True)
class TradeRecord:
    stock: int
    side: str
    notional: float
    commission: float


def portfolio_value(b):
    return float(np.sum(b.stocks) + b.cash)


def apply_market(b, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != b.stocks.shape:
        raise ValidationError(f"price ratio length {x.shape} does not match portfolio {b.stocks.shape}")
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise ValidationError("price ratios must be positive and finite")
    return PortfolioVector(b.stocks * x, b.cash)


def _check_rate(rate):
    if not 0.0 <= rate <= MAX_COMMISSION:
        raise ValidationError(f"commission rate {rate} outside [0, {MAX_COMMISSION}]")


def update_portfolio(b_prev, h, commission=0.0005):
    """Sell every SELL-flagged position, pool proceeds with cash, split equally over BUY flags.

    Commission is charged on both sell and buy notional. With no BUY flag the
    pooled amount stays in cash. Returns ``(b_new, ledger)``.
    """
    _check_rate(commission)
    h = np.asarray(h)
    stocks = b_prev.stocks
    if h.shape != stocks.shape:
        raise ValidationError(f"signal length {h.shape} does not match portfolio {stocks.shape}")
    if not np.all(np.isin(h, (SELL, HOLD, BUY))):
        raise ValidationError("signals must be -1, 0 or +1")
    new = stocks.copy()
    ledger = []
    sell = h == SELL
    proceeds = 0.0
    sell_cost = 0.0
    for j in np.flatnonzero(sell):
        notional = float(stocks[j])
        new[j] = 0.0
        if notional > 0.0:
            fee = commission * notional
            ledger.append(TradeRecord(int(j), "SELL", notional, fee))
            proceeds += notional
            sell_cost += fee
    pool = b_prev.cash + (proceeds - sell_cost)
    buys = np.flatnonzero(h == BUY)
    cash = pool
    if len(buys) and pool > 0.0:
        alloc = pool / len(buys)
        fee = commission * alloc
        for j in buys:
            new[j] += alloc - fee
            ledger.append(TradeRecord(int(j), "BUY", alloc, fee))
        cash = 0.0
    return PortfolioVector(new, max(cash, 0.0)), ledger


def ledger_commission(ledger):
    return float(sum(r.commission for r in ledger))
