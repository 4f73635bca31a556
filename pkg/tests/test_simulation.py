import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optipairs import ModelParams
from optipairs.simulation import (
    default_horizon,
    mc_value,
    path_rewards,
    run_policy,
    simulate_path,
    step_exact,
)


def test_step_exact_deterministic_part():
    p = ModelParams(a=2.0, b=0.1)
    assert step_exact(0.5, 0.25, p, 0.0) == pytest.approx(0.1 + 0.4 * math.exp(-0.5))
    assert step_exact(p.b, 0.3, p, 0.0) == p.b


def test_step_exact_variance():
    p = ModelParams()
    dt = 0.1
    noise = np.random.default_rng(3).standard_normal(1_000_000)
    z = step_exact(0.0, dt, p, noise)
    target = p.sigma**2 * (1 - math.exp(-2 * p.a * dt)) / (2 * p.a)
    assert np.var(z) == pytest.approx(target, rel=0.01)


def test_step_exact_rejects_bad_dt():
    with pytest.raises(ValueError):
        step_exact(0.0, 0.0, ModelParams(), 0.0)


def test_simulated_path_is_reproducible_and_stationary():
    p = ModelParams()
    a = simulate_path(p, 0.0, 1 / 252, 20_000, seed=5)
    b = simulate_path(p, 0.0, 1 / 252, 20_000, seed=5)
    assert np.array_equal(a, b)
    assert a.shape == (20_001,)
    assert np.std(a[2000:]) == pytest.approx(p.stationary_std, rel=0.15)


def test_default_horizon():
    assert default_horizon(ModelParams()) == pytest.approx(-math.log(1e-6) / 0.1)


def test_start_at_stop_loss(policy, params):
    flat = run_policy(policy, params.M, 0, dt=1e-3)
    assert flat.reward == 0.0 and flat.terminated_by == "stop-loss"
    assert [e[1] for e in flat.events] == ["stop-loss-exit"]
    held = run_policy(policy, params.M, 1, dt=1e-3)
    assert held.reward == pytest.approx(params.M - params.K)


def test_long_above_target_sells_immediately(policy, params):
    x = policy.x2 + 0.05
    run = run_policy(policy, x, 1, dt=1e-3, horizon=1.0)
    assert run.events[0] == (0.0, "sell", x)


def test_flat_in_buy_region_buys_immediately(policy):
    x = 0.5 * (policy.x0 + policy.x1)
    run = run_policy(policy, x, 0, dt=1e-3, horizon=1.0)
    assert run.events[0][:2] == (0.0, "buy")


def test_event_sequence_invariants(policy, params):
    for seed in range(5):
        run = run_policy(policy, 0.0, 0, dt=1e-3, seed=seed)
        names = [e[1] for e in run.events]
        times = [e[0] for e in run.events]
        assert times == sorted(times)
        # buys and sells alternate, starting with a buy from flat
        trades = [n for n in names if n != "stop-loss-exit"]
        assert all(n == ("buy" if k % 2 == 0 else "sell") for k, n in enumerate(trades))
        if run.terminated_by == "stop-loss":
            assert names[-1] == "stop-loss-exit" and run.events[-1][2] <= params.M
        for t, name, z in run.events:
            if name == "buy":
                assert policy.x0 <= z <= policy.x1
            elif name == "sell":
                assert z >= policy.x2


def test_run_policy_validation(policy, params):
    with pytest.raises(ValueError):
        run_policy(policy, params.M - 0.01, 0, dt=1e-3)
    with pytest.raises(ValueError):
        run_policy(policy, 0.0, 2, dt=1e-3)


def test_reproducible_rewards(policy):
    a = path_rewards(policy, 0.0, 0, 50, dt=1e-3, seed=11)
    b = path_rewards(policy, 0.0, 0, 50, dt=1e-3, seed=11)
    assert np.array_equal(a, b)


def test_path_independent_of_batch_size(policy):
    big = path_rewards(policy, 0.0, 0, 40, dt=1e-3, seed=2)
    small = path_rewards(policy, 0.0, 0, 10, dt=1e-3, seed=2)
    assert np.array_equal(big[:10], small)
    one = run_policy(policy, 0.0, 0, dt=1e-3, seed=2, path=7)
    assert one.reward == big[7]


def test_mc_value_requires_enough_paths(policy):
    with pytest.raises(ValueError):
        mc_value(policy, 0.0, 0, 10, dt=1e-3)


def test_dt_halving_changes_little(policy):
    # grid monitoring misses some crossings; halving dt must move the
    # estimate by less than two combined standard errors
    n = 20_000
    coarse = mc_value(policy, 0.0, 1, n, 2e-3, horizon=60.0, seed=4)
    fine = mc_value(policy, 0.0, 1, n, 1e-3, horizon=60.0, seed=4)
    assert abs(coarse[0] - fine[0]) < 2 * math.hypot(coarse[1], fine[1])


def test_common_random_numbers_share_paths(policy):
    # the same seed drives a perturbed policy through identical noise
    shifted = policy.shifted(x2=policy.x2 + 0.02)
    a = run_policy(policy, 0.0, 0, dt=1e-3, seed=9, horizon=5.0)
    b = run_policy(shifted, 0.0, 0, dt=1e-3, seed=9, horizon=5.0)
    assert a.events[0] == b.events[0]


@settings(max_examples=20, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(1e-4, 1.0))
def test_step_exact_mean_reverts(z, dt):
    p = ModelParams()
    nxt = step_exact(z, dt, p, 0.0)
    assert abs(nxt - p.b) <= abs(z - p.b)
