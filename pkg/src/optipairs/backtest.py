"""Historical backtest of the threshold rule on a pair of price series.

Conventions: fills at the same-day close that produced the signal; legs are
dollar-balanced with fractional shares; the short leg earns
``amount * (entry - exit) / entry``; no borrow fees or margin interest.
The commission is charged once when a pairs position is opened and once when
it is closed.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .calibration import PriceSeries, SpreadSeries
from .threshold_solver import ThresholdPolicy


class BacktestError(ValueError):
    pass


class AlignmentError(BacktestError):
    pass


class NonpositiveCapitalError(BacktestError):
    pass


@dataclass(frozen=True)
class BacktestConfig:
    policy: ThresholdPolicy
    initial_capital: float = 100_000.0
    commission: float = 5.0
    long_fraction: float = 0.5
    short_fraction: float = 0.5
    reentry_after_stop: bool = True
    reinvest: bool = True

    def __post_init__(self):
        if not self.initial_capital > 0:
            raise ValueError("initial capital must be positive")
        if self.commission < 0:
            raise ValueError("commission must be >= 0")
        for name in ("long_fraction", "short_fraction"):
            f = getattr(self, name)
            if not 0 < f <= 1:
                raise ValueError(f"{name} must be in (0, 1]")
        if self.long_fraction + self.short_fraction > 1 + 1e-12:
            raise ValueError("long_fraction + short_fraction must not exceed 1")


@dataclass(frozen=True)
class Trade:
    entry_date: np.datetime64
    exit_date: np.datetime64
    entry_z: float
    exit_z: float
    exit_reason: str  # target | stop-loss | end-of-data
    profit: float
    long_amount: float
    short_amount: float
    entry_p1: float
    exit_p1: float
    entry_p2: float
    exit_p2: float


TRADE_COLUMNS = [
    "entry_date", "exit_date", "entry_z", "exit_z", "exit_reason", "profit",
    "long_amount", "short_amount", "entry_p1", "exit_p1", "entry_p2", "exit_p2",
]


@dataclass
class BacktestReport:
    initial_capital: float
    trades: list[Trade] = field(default_factory=list)
    equity_dates: np.ndarray = None
    equity: np.ndarray = None

    @property
    def end_balance(self) -> float:
        return float(self.equity[-1])

    @property
    def max_drawdown(self) -> float:
        """Largest peak-to-trough fall of the equity curve, as a fraction."""
        peak = np.maximum.accumulate(self.equity)
        return float(np.max(1.0 - self.equity / peak))

    def summary(self) -> dict:
        profits = [t.profit for t in self.trades]
        return {
            "trade_count": len(self.trades),
            "end_balance": self.end_balance,
            "total_profit": float(sum(profits)),
            "return_pct": 100.0 * (self.end_balance / self.initial_capital - 1.0),
            "max_drawdown": self.max_drawdown,
            "stop_loss_count": sum(t.exit_reason == "stop-loss" for t in self.trades),
            "winning_trades": sum(p > 0 for p in profits),
        }

    def trade_rows(self) -> list[list[str]]:
        rows = []
        for t in self.trades:
            row = []
            for col in TRADE_COLUMNS:
                v = getattr(t, col)
                row.append(str(v) if isinstance(v, (str, np.datetime64)) else repr(float(v)))
            rows.append(row)
        return rows

    def write_trades(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRADE_COLUMNS)
            w.writerows(self.trade_rows())

    def write_equity(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "equity"])
            for d, v in zip(self.equity_dates, self.equity):
                w.writerow([str(d), repr(float(v))])

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def reverse_spread(spread: SpreadSeries, b: float | None = None) -> SpreadSeries:
    """Negate the spread pointwise (trading the pair the other way round).

    The mirrored process has the same dynamics only when the equilibrium is 0;
    pass the model's ``b`` to get a warning otherwise.
    """
    if b is not None and b != 0:
        warnings.warn(f"reversing a spread with equilibrium b={b} != 0; thresholds do not transfer")
    return SpreadSeries(spread.dates.copy(), -spread.z, spread.dt, spread.k0)


def _aligned_prices(spread: SpreadSeries, series: PriceSeries) -> np.ndarray:
    idx = np.searchsorted(series.dates, spread.dates)
    ok = (idx < len(series.dates)) & (series.dates[np.minimum(idx, len(series.dates) - 1)] == spread.dates)
    if not np.all(ok):
        missing = spread.dates[~ok][0]
        raise AlignmentError(f"no price for {series.name or 'series'} on {missing}")
    return series.prices[idx]


def run_backtest(
    cfg: BacktestConfig, spread: SpreadSeries, p1: PriceSeries, p2: PriceSeries
) -> BacktestReport:
    """Flat -> long when z in [x0, x1]; long -> flat when z >= x2 or z <= M.

    Long means long leg 1 and short leg 2 in equal dollar amounts. An open
    position at the end of the data is closed at the last prices.
    """
    pol = cfg.policy
    M = pol.params.M
    x0, x1, x2 = pol.triple
    px1 = _aligned_prices(spread, p1)
    px2 = _aligned_prices(spread, p2)
    z = spread.z
    dates = spread.dates
    n = len(z)

    cash = cfg.initial_capital  # realised account value
    equity = np.empty(n + 1)
    equity[0] = cfg.initial_capital
    trades: list[Trade] = []
    trading = True
    pos = None  # (k_entry, long_amt, short_amt)

    def pnl(k, long_amt, short_amt, k_entry):
        long_pnl = long_amt * (px1[k] / px1[k_entry] - 1.0)
        short_pnl = short_amt * (px2[k_entry] - px2[k]) / px2[k_entry]
        return long_pnl + short_pnl

    def close(k, reason):
        nonlocal cash, pos
        k_entry, long_amt, short_amt = pos
        gross = pnl(k, long_amt, short_amt, k_entry)
        cash += gross - cfg.commission
        profit = gross - 2.0 * cfg.commission
        trades.append(
            Trade(
                dates[k_entry], dates[k], float(z[k_entry]), float(z[k]), reason, float(profit),
                long_amt, short_amt, float(px1[k_entry]), float(px1[k]),
                float(px2[k_entry]), float(px2[k]),
            )
        )
        pos = None
        if cash <= 0:
            raise NonpositiveCapitalError(f"account wiped out on {dates[k]} (balance {cash:.2f})")

    for k in range(n):
        if pos is None:
            if trading and x0 <= z[k] <= x1:
                base = cash if cfg.reinvest else cfg.initial_capital
                pos = (k, cfg.long_fraction * base, cfg.short_fraction * base)
                cash -= cfg.commission
        else:
            if z[k] >= x2:
                close(k, "target")
            elif z[k] <= M:
                close(k, "stop-loss")
                if not cfg.reentry_after_stop:
                    trading = False
        if pos is not None:
            equity[k + 1] = cash + pnl(k, pos[1], pos[2], pos[0])
        else:
            equity[k + 1] = cash

    if pos is not None:
        close(n - 1, "end-of-data")
        equity[n] = cash

    eq_dates = np.concatenate([dates[:1], dates])
    return BacktestReport(cfg.initial_capital, trades, eq_dates, equity)
