import warnings

import numpy as np
import pytest

from optipairs import ModelParams, ThresholdPolicy
from optipairs.backtest import (
    AlignmentError,
    BacktestConfig,
    NonpositiveCapitalError,
    reverse_spread,
    run_backtest,
)
from optipairs.calibration import PriceSeries, SpreadSeries, build_spread, read_price_file

GOLDEN_WINDOW = 60


def _dates(n):
    return np.busday_offset(np.datetime64("2005-03-01"), np.arange(n), roll="forward")


def _toy_policy(x0=-0.14, x1=-0.08, x2=0.08, M=-0.2):
    # coefficients are irrelevant to the trading rule
    return ThresholdPolicy(ModelParams(M=M), x0, x1, x2, 0.0, 0.0, 0.0, 0.0, 0.0)


def _toy(z, p1, p2):
    d = _dates(len(z))
    return SpreadSeries(d, z), PriceSeries(d, p1, "p1"), PriceSeries(d, p2, "p2")


@pytest.fixture(scope="module")
def fixture_data(data_dir):
    p1 = read_price_file(data_dir / "leg1.csv", "leg1")
    p2 = read_price_file(data_dir / "leg2.csv", "leg2")
    return build_spread(p1, p2, GOLDEN_WINDOW), p1, p2


def test_no_signal_keeps_equity_flat():
    s, p1, p2 = _toy([0.0, 0.01, 0.02, -0.01], [10, 11, 12, 13], [20, 19, 18, 17])
    rep = run_backtest(BacktestConfig(_toy_policy()), s, p1, p2)
    assert rep.trades == []
    assert np.all(rep.equity == 100_000.0)
    assert len(rep.equity) == len(s) + 1
    assert rep.max_drawdown == 0.0


def test_hand_computed_round_trip():
    s, p1, p2 = _toy(
        [0.0, -0.1, -0.05, 0.03, 0.1, 0.0],
        [100, 100, 105, 108, 110, 110],
        [50, 50, 49, 49, 48, 48],
    )
    rep = run_backtest(BacktestConfig(_toy_policy()), s, p1, p2)
    (t,) = rep.trades
    assert t.exit_reason == "target"
    assert (t.entry_date, t.exit_date) == (s.dates[1], s.dates[4])
    # long 50k * 10% + short 50k * 4% - 2 * 5
    assert t.profit == pytest.approx(6990.0, abs=1e-9)
    assert rep.end_balance == pytest.approx(106_990.0, abs=1e-9)
    # mark-to-market on day 3: 50k * 5% + 50k * 2% - entry commission
    assert rep.equity[3] == pytest.approx(100_000 + 2500 + 1000 - 5, abs=1e-9)


def test_commission_difference():
    args = _toy([0.0, -0.1, 0.1], [100, 100, 110], [50, 50, 48])
    free = run_backtest(BacktestConfig(_toy_policy(), commission=0.0), *args)
    paid = run_backtest(BacktestConfig(_toy_policy(), commission=5.0), *args)
    assert free.end_balance - paid.end_balance == pytest.approx(10.0, abs=1e-9)


def test_stop_loss_and_no_reentry():
    z = [-0.1, -0.25, -0.1, 0.1]
    s, p1, p2 = _toy(z, [10, 9, 9.5, 10], [10, 10, 10, 10])
    again = run_backtest(BacktestConfig(_toy_policy()), s, p1, p2)
    assert [t.exit_reason for t in again.trades] == ["stop-loss", "target"]
    assert again.trades[0].exit_z <= -0.2
    once = run_backtest(BacktestConfig(_toy_policy(), reentry_after_stop=False), s, p1, p2)
    assert [t.exit_reason for t in once.trades] == ["stop-loss"]


def test_open_position_closed_at_end():
    s, p1, p2 = _toy([0.0, -0.1, -0.05], [10, 10, 11], [10, 10, 10])
    rep = run_backtest(BacktestConfig(_toy_policy()), s, p1, p2)
    assert rep.trades[-1].exit_reason == "end-of-data"
    assert rep.end_balance == pytest.approx(100_000 + 5000 - 10)


def test_no_reinvest_sizes_from_initial_capital():
    z = [-0.1, 0.1, -0.1, 0.1]
    s, p1, p2 = _toy(z, [10, 12, 12, 12], [10, 10, 10, 10])
    rep = run_backtest(BacktestConfig(_toy_policy(), reinvest=False), s, p1, p2)
    assert rep.trades[1].long_amount == 50_000.0
    rep = run_backtest(BacktestConfig(_toy_policy(), reinvest=True), s, p1, p2)
    assert rep.trades[1].long_amount > 50_000.0


def test_wipeout_raises():
    s, p1, p2 = _toy([-0.1, 0.1], [10, 0.01], [10, 30])
    with pytest.raises(NonpositiveCapitalError):
        run_backtest(BacktestConfig(_toy_policy()), s, p1, p2)


def test_missing_price_date():
    s, p1, _ = _toy([0.0, 0.1, 0.2], [1, 2, 3], [1, 2, 3])
    short = PriceSeries(s.dates[:2], [1.0, 2.0])
    with pytest.raises(AlignmentError):
        run_backtest(BacktestConfig(_toy_policy()), s, p1, short)


def test_config_validation():
    pol = _toy_policy()
    for bad in (dict(initial_capital=0), dict(commission=-1), dict(long_fraction=0.8)):
        with pytest.raises(ValueError):
            BacktestConfig(pol, **bad)


def test_reverse_spread_involution():
    s = SpreadSeries(_dates(2), [0.1, -0.1])
    r = reverse_spread(s)
    assert list(r.z) == [-0.1, 0.1]
    assert np.array_equal(reverse_spread(r).z, s.z)
    with pytest.warns(UserWarning):
        reverse_spread(s, b=0.05)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        reverse_spread(s, b=0.0)


def test_mirrored_fixture_trades_mirror():
    # swapping legs on a fixture whose spread is -z gives the same trade dates
    z = np.array([0.0, -0.1, -0.05, 0.1, 0.0, -0.1, 0.1])
    pa = np.array([10, 10, 10.5, 11, 11, 10, 11.0])
    pb = np.array([20, 20, 19, 18, 18, 19, 18.0])
    s, p1, p2 = _toy(z, pa, pb)
    fwd = run_backtest(BacktestConfig(_toy_policy()), s, p1, p2)
    s_neg = SpreadSeries(s.dates, -z)
    back = run_backtest(BacktestConfig(_toy_policy()), reverse_spread(s_neg), p1, p2)
    assert [(t.entry_date, t.exit_date) for t in fwd.trades] == [
        (t.entry_date, t.exit_date) for t in back.trades
    ]


def test_accounting_identity(policy, fixture_data):
    s, p1, p2 = fixture_data
    for reinvest in (True, False):
        rep = run_backtest(BacktestConfig(policy, reinvest=reinvest), s, p1, p2)
        total = rep.initial_capital + sum(t.profit for t in rep.trades)
        assert rep.end_balance == pytest.approx(total, rel=1e-9)


def test_stop_loss_exits_below_M(policy, fixture_data):
    rep = run_backtest(BacktestConfig(policy), *fixture_data)
    stops = [t for t in rep.trades if t.exit_reason == "stop-loss"]
    assert stops
    assert all(t.exit_z <= -0.2 for t in stops)
    assert all(policy.x0 <= t.entry_z <= policy.x1 for t in rep.trades)


def test_no_lookahead_prefix(policy, fixture_data):
    s, p1, p2 = fixture_data
    full = run_backtest(BacktestConfig(policy), s, p1, p2)
    for cut in (50, 200, 400, len(s) - 1):
        part = run_backtest(BacktestConfig(policy), s.truncate(s.dates[cut]), p1, p2)
        closed = [t for t in part.trades if t.exit_reason != "end-of-data"]
        assert closed == full.trades[: len(closed)]
        # equity up to the day before the cut is unchanged
        assert np.array_equal(part.equity[:cut], full.equity[:cut])


def test_deterministic(policy, fixture_data):
    a = run_backtest(BacktestConfig(policy), *fixture_data)
    b = run_backtest(BacktestConfig(policy), *fixture_data)
    assert a.trade_rows() == b.trade_rows()
    assert np.array_equal(a.equity, b.equity)


def test_golden_trade_log(policy, fixture_data, data_dir, tmp_path):
    rep = run_backtest(BacktestConfig(policy), *fixture_data)
    rep.write_trades(tmp_path / "t.csv")
    rep.write_equity(tmp_path / "e.csv")
    assert (tmp_path / "t.csv").read_bytes() == (data_dir / "golden_trades.csv").read_bytes()
    assert (tmp_path / "e.csv").read_bytes() == (data_dir / "golden_equity.csv").read_bytes()


def test_golden_reversed(policy, fixture_data, data_dir, tmp_path):
    s, p1, p2 = fixture_data
    rep = run_backtest(BacktestConfig(policy), reverse_spread(s), p2, p1)
    rep.write_trades(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_bytes() == (data_dir / "golden_trades_reversed.csv").read_bytes()


def test_summary_fields(policy, fixture_data, tmp_path):
    rep = run_backtest(BacktestConfig(policy), *fixture_data)
    summ = rep.summary()
    assert summ["trade_count"] == len(rep.trades)
    assert summ["stop_loss_count"] >= 1
    assert 0 <= summ["max_drawdown"] < 1
    rep.write_summary(tmp_path / "s.json")
    assert (tmp_path / "s.json").exists()
