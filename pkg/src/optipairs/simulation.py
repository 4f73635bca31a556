"""Exact OU simulation and Monte-Carlo execution of the threshold policy.

Each path draws its noise from its own Philox stream keyed by the run seed,
with the path index in the counter, so a path is fully determined by
``(seed, path_index)`` regardless of how many paths run or in which order.
The time stepping runs in a numba kernel that consumes noise in chunks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .ou_kernel import ModelParams
from .threshold_solver import ThresholdPolicy

BUY, SELL, STOP = 0, 1, 2
EVENT_NAMES = {BUY: "buy", SELL: "sell", STOP: "stop-loss-exit"}

DEFAULT_DISCOUNT_CUTOFF = 1e-6


def default_horizon(params: ModelParams) -> float:
    """Time after which exp(-rho t) < 1e-6."""
    return -math.log(DEFAULT_DISCOUNT_CUTOFF) / params.rho


def step_exact(z, dt: float, params: ModelParams, noise):
    """Exact OU transition over ``dt`` driven by standard normal ``noise``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    decay = math.exp(-params.a * dt)
    scale = params.sigma * math.sqrt(-math.expm1(-2.0 * params.a * dt) / (2.0 * params.a))
    return params.b + (z - params.b) * decay + scale * noise


def path_rng(seed: int, path: int) -> np.random.Generator:
    """Independent counter-based stream for one path."""
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, path, 0]))


def simulate_path(
    params: ModelParams, z0: float, dt: float, n_steps: int, seed: int = 0
) -> np.ndarray:
    """An OU sample path of ``n_steps + 1`` points at spacing ``dt``."""
    noise = path_rng(seed, 0).standard_normal(n_steps)
    decay = math.exp(-params.a * dt)
    scale = params.sigma * math.sqrt(-math.expm1(-2.0 * params.a * dt) / (2.0 * params.a))
    return _ou_recursion(float(z0), params.b, decay, scale, noise)


@numba.njit(cache=True)
def _ou_recursion(z0, b, decay, scale, noise):
    out = np.empty(noise.size + 1)
    out[0] = z0
    z = z0
    for k in range(noise.size):
        z = b + (z - b) * decay + scale * noise[k]
        out[k + 1] = z
    return out


@numba.njit(cache=True)
def _advance(
    z, pos, k, reward, noise, n_steps,
    b, decay, scale, disc_step, M, K, x0, x1, x2,
    ev_k, ev_kind, ev_z, n_ev,
):
    """Run the policy from step ``k`` using this chunk of noise.

    Returns (z, pos, k, reward, n_ev, status): status 0 = needs more noise,
    1 = stopped out, 2 = horizon reached. Events are recorded while there is
    room in the event arrays.
    """
    cap = ev_k.size
    j = 0
    while True:
        if pos == 0:
            if z <= M:
                if n_ev < cap:
                    ev_k[n_ev] = k
                    ev_kind[n_ev] = 2
                    ev_z[n_ev] = z
                n_ev += 1
                return z, pos, k, reward, n_ev, 1
            if x0 <= z <= x1:
                reward -= math.exp(disc_step * k) * (z + K)
                pos = 1
                if n_ev < cap:
                    ev_k[n_ev] = k
                    ev_kind[n_ev] = 0
                    ev_z[n_ev] = z
                n_ev += 1
        else:
            if z <= M:
                reward += math.exp(disc_step * k) * (z - K)
                if n_ev < cap:
                    ev_k[n_ev] = k
                    ev_kind[n_ev] = 2
                    ev_z[n_ev] = z
                n_ev += 1
                return z, 0, k, reward, n_ev, 1
            if z >= x2:
                reward += math.exp(disc_step * k) * (z - K)
                pos = 0
                if n_ev < cap:
                    ev_k[n_ev] = k
                    ev_kind[n_ev] = 1
                    ev_z[n_ev] = z
                n_ev += 1
        if k >= n_steps:
            return z, pos, k, reward, n_ev, 2
        if j >= noise.size:
            return z, pos, k, reward, n_ev, 0
        z = b + (z - b) * decay + scale * noise[j]
        j += 1
        k += 1


@dataclass
class PolicyRun:
    x: float
    i: int
    reward: float
    # (time, event name, z)
    events: list = field(default_factory=list)
    terminated_by: str = "stop-loss"  # or "horizon"
    n_steps: int = 0


_CHUNK0 = 2048
_CHUNK_MAX = 1 << 18


def _run_one(policy, x, i, dt, n_steps, rng, ev_k, ev_kind, ev_z):
    p = policy.params
    decay = math.exp(-p.a * dt)
    scale = p.sigma * math.sqrt(-math.expm1(-2.0 * p.a * dt) / (2.0 * p.a))
    z, pos, k, reward, n_ev = float(x), int(i), 0, 0.0, 0
    chunk = _CHUNK0
    while True:
        noise = rng.standard_normal(chunk)
        z, pos, k, reward, n_ev, status = _advance(
            z, pos, k, reward, noise, n_steps,
            p.b, decay, scale, -p.rho * dt, p.M, p.K, policy.x0, policy.x1, policy.x2,
            ev_k, ev_kind, ev_z, n_ev,
        )
        if status:
            return reward, n_ev, status, k
        chunk = min(2 * chunk, _CHUNK_MAX)


def run_policy(
    policy: ThresholdPolicy,
    x: float,
    i: int,
    dt: float,
    horizon: float | None = None,
    seed: int = 0,
    path: int = 0,
    max_events: int = 100_000,
) -> PolicyRun:
    """Simulate one path of the threshold policy with a full event log.

    Flat: buy at the first grid time with z in [x0, x1]. Long: sell at the
    first grid time with z >= x2, or liquidate at z <= M. Reaching z <= M ends
    the run in either state; no buy is executed there.
    """
    p = policy.params
    if x < p.M:
        raise ValueError("start level must be >= M")
    if i not in (0, 1):
        raise ValueError("position index must be 0 or 1")
    horizon = default_horizon(p) if horizon is None else horizon
    n_steps = int(round(horizon / dt))
    ev_k = np.zeros(max_events, dtype=np.int64)
    ev_kind = np.zeros(max_events, dtype=np.int64)
    ev_z = np.zeros(max_events)
    reward, n_ev, status, k = _run_one(
        policy, x, i, dt, n_steps, path_rng(seed, path), ev_k, ev_kind, ev_z
    )
    n = min(n_ev, max_events)
    events = [(int(ev_k[e]) * dt, EVENT_NAMES[int(ev_kind[e])], float(ev_z[e])) for e in range(n)]
    return PolicyRun(
        float(x), int(i), float(reward), events,
        terminated_by="stop-loss" if status == 1 else "horizon", n_steps=int(k),
    )


def path_rewards(
    policy: ThresholdPolicy, x: float, i: int, n_paths: int, dt: float,
    horizon: float | None = None, seed: int = 0,
) -> np.ndarray:
    """Discounted reward of each path, indexed by path number."""
    p = policy.params
    horizon = default_horizon(p) if horizon is None else horizon
    n_steps = int(round(horizon / dt))
    empty_i = np.zeros(0, dtype=np.int64)
    empty_f = np.zeros(0)
    out = np.empty(n_paths)
    for path in range(n_paths):
        out[path] = _run_one(
            policy, x, i, dt, n_steps, path_rng(seed, path), empty_i, empty_i, empty_f
        )[0]
    return out


def mc_value(
    policy: ThresholdPolicy, x: float, i: int, n_paths: int, dt: float,
    horizon: float | None = None, seed: int = 0,
) -> tuple[float, float]:
    """Sample mean and standard error of the discounted policy reward."""
    if n_paths < 100:
        raise ValueError("n_paths must be >= 100")
    r = path_rewards(policy, x, i, n_paths, dt, horizon, seed)
    # np.sum uses pairwise summation; order is fixed by path index
    mean = float(np.sum(r) / n_paths)
    stderr = float(np.std(r, ddof=1) / math.sqrt(n_paths))
    return mean, stderr
