"""Spread construction from two price series and least-squares OU fitting."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

TRADING_DAYS = 252


class CalibrationError(ValueError):
    pass


class MisalignedDatesError(CalibrationError):
    pass


class InsufficientHistoryError(CalibrationError):
    pass


class DegenerateSeriesError(CalibrationError):
    pass


class NonStationaryError(CalibrationError):
    pass


def _as_dates(dates) -> np.ndarray:
    return np.asarray(pd.to_datetime(np.asarray(dates)).values.astype("datetime64[D]"))


@dataclass(frozen=True)
class PriceSeries:
    dates: np.ndarray
    prices: np.ndarray
    name: str = ""

    def __post_init__(self):
        dates = _as_dates(self.dates)
        prices = np.asarray(self.prices, dtype=float)
        if dates.shape != prices.shape or dates.ndim != 1:
            raise ValueError("dates and prices must be 1-d and the same length")
        if len(prices) < 2:
            raise ValueError("a price series needs at least 2 observations")
        if np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            raise ValueError("dates must be strictly increasing")
        if not np.all(prices > 0):
            raise ValueError("prices must be positive")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "prices", prices)

    def __len__(self):
        return len(self.prices)


@dataclass(frozen=True)
class SpreadSeries:
    dates: np.ndarray
    z: np.ndarray
    dt: float = 1.0 / TRADING_DAYS
    k0: float = 1.0

    def __post_init__(self):
        dates = _as_dates(self.dates)
        z = np.asarray(self.z, dtype=float)
        if dates.shape != z.shape or len(z) < 2:
            raise ValueError("spread needs matching dates and at least 2 points")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "z", z)

    def __len__(self):
        return len(self.z)

    def truncate(self, last_date) -> "SpreadSeries":
        keep = self.dates <= np.datetime64(last_date, "D")
        return SpreadSeries(self.dates[keep], self.z[keep], self.dt, self.k0)


def read_price_file(path, name: str | None = None) -> PriceSeries:
    """Read a headered delimited file with ``date`` and ``close`` columns."""
    df = pd.read_csv(path, sep=None, engine="python")
    df.columns = [c.strip().lower() for c in df.columns]
    missing = {"date", "close"} - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing column(s) {sorted(missing)}")
    df = df.sort_values("date")
    return PriceSeries(df["date"].to_numpy(), df["close"].to_numpy(float), name or str(path))


def write_price_file(path, series: PriceSeries) -> None:
    pd.DataFrame(
        {"date": series.dates.astype(str), "close": [repr(float(p)) for p in series.prices]}
    ).to_csv(path, index=False)


def read_spread_file(path, dt: float = 1.0 / TRADING_DAYS) -> SpreadSeries:
    df = pd.read_csv(path)
    df.columns = [c.strip().lower() for c in df.columns]
    return SpreadSeries(df["date"].to_numpy(), df["z"].to_numpy(float), dt)


def write_spread_file(path, spread: SpreadSeries) -> None:
    pd.DataFrame(
        {"date": spread.dates.astype(str), "z": [repr(float(v)) for v in spread.z]}
    ).to_csv(path, index=False)


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Trailing simple moving average; entry k averages x[k-window+1 .. k]."""
    return pd.Series(x).rolling(window).mean().to_numpy()


def build_spread(
    p1: PriceSeries, p2: PriceSeries, ma_window: int = 1000, dt: float = 1.0 / TRADING_DAYS
) -> SpreadSeries:
    """z_t = p1_t / MA(p1)_t - p2_t / MA(p2)_t on the common dates.

    The first ``ma_window - 1`` joined observations only warm up the averages.
    """
    if ma_window < 1:
        raise ValueError("ma_window must be >= 1")
    common, i1, i2 = np.intersect1d(p1.dates, p2.dates, return_indices=True)
    if common.size == 0:
        raise MisalignedDatesError("price series share no dates")
    if common.size < ma_window + 1:
        raise InsufficientHistoryError(
            f"{common.size} common observations; need at least {ma_window + 1} "
            f"for a {ma_window}-day moving average and two spread points"
        )
    x1 = p1.prices[i1]
    x2 = p2.prices[i2]
    z = x1 / moving_average(x1, ma_window) - x2 / moving_average(x2, ma_window)
    return SpreadSeries(common[ma_window - 1 :], z[ma_window - 1 :], dt, k0=1.0)


@dataclass(frozen=True)
class OUFit:
    a: float
    b: float
    sigma: float
    se_a: float
    se_b: float
    se_sigma: float
    c0: float
    c1: float
    resid_std: float
    n: int
    dt: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def fit_ou(s: SpreadSeries, min_length: int = 30, fix_b: float | None = None) -> OUFit:
    """Fit z[k+1] = c0 + c1 z[k] + e by OLS and map to (a, b, sigma).

    a = -ln(c1)/dt, b = c0/(1 - c1), sigma = sd(e) sqrt(2a/(1 - c1^2)).
    Standard errors follow by the delta method. With ``fix_b`` the
    regression is run on z - fix_b without intercept.
    """
    z = s.z
    n = len(z) - 1
    if len(z) < min_length:
        raise InsufficientHistoryError(f"need at least {min_length} points, got {len(z)}")
    if np.ptp(z) == 0:
        raise DegenerateSeriesError("spread has zero variance")
    dt = s.dt
    if fix_b is None:
        X = np.column_stack([np.ones(n), z[:-1]])
        y = z[1:]
    else:
        X = (z[:-1] - fix_b)[:, None]
        y = z[1:] - fix_b
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = n - X.shape[1]
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)

    if fix_b is None:
        c0, c1 = float(coef[0]), float(coef[1])
        var_c0, var_c1, cov_01 = cov[0, 0], cov[1, 1], cov[0, 1]
    else:
        c1 = float(coef[0])
        c0 = fix_b * (1.0 - c1)
        var_c0 = cov_01 = 0.0
        var_c1 = cov[0, 0]
    if not 0.0 < c1 < 1.0:
        raise NonStationaryError(f"lag-1 coefficient {c1:.6g} outside (0, 1)")

    a = -math.log(c1) / dt
    b = c0 / (1.0 - c1) if fix_b is None else float(fix_b)
    resid_std = math.sqrt(s2)
    h = 2.0 * a / (1.0 - c1**2)
    sigma = resid_std * math.sqrt(h)

    da_dc1 = -1.0 / (c1 * dt)
    se_a = abs(da_dc1) * math.sqrt(var_c1)
    if fix_b is None:
        db_dc0 = 1.0 / (1.0 - c1)
        db_dc1 = c0 / (1.0 - c1) ** 2
        se_b = math.sqrt(
            db_dc0**2 * var_c0 + db_dc1**2 * var_c1 + 2.0 * db_dc0 * db_dc1 * cov_01
        )
    else:
        se_b = 0.0
    dh_dc1 = (-2.0 * (1.0 - c1**2) / (c1 * dt) - 4.0 * c1 * math.log(c1) / dt) / (1.0 - c1**2) ** 2
    dsig_dc1 = resid_std * dh_dc1 / (2.0 * math.sqrt(h))
    var_resid_std = s2 / (2.0 * dof)
    se_sigma = math.sqrt(h * var_resid_std + dsig_dc1**2 * var_c1)
    return OUFit(a, b, sigma, se_a, se_b, se_sigma, c0, c1, resid_std, n, dt)
