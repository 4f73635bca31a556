"""Fundamental solutions of the discounted OU generator.

The functions

    phi1(x) = int_0^inf eta(t) exp(-kappa (b - x) t) dt
    phi2(x) = int_0^inf eta(t) exp(+kappa (b - x) t) dt

with ``eta(t) = t**(rho/a - 1) exp(-t**2 / 2)`` and ``kappa = sqrt(2a)/sigma``
span the solutions of ``rho*v - a(b - x) v' - sigma**2/2 v'' = 0``. phi1 is
increasing, phi2 is decreasing. Derivatives are taken under the integral sign,
each one inserting a factor ``kappa*t`` (with sign), so no finite differences
are involved anywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from ._quadrature import QuadratureError, gk15_adaptive

__all__ = [
    "ModelParams",
    "KernelConfig",
    "BasisEval",
    "QuadratureError",
    "eta",
    "basis_eval",
    "structure_vectors",
]


@dataclass(frozen=True)
class ModelParams:
    """Problem instance: OU spread dynamics plus trading frictions.

    a: reversion rate, b: equilibrium level, sigma: volatility,
    rho: discount rate, K: fixed cost per transaction, M: stop-loss level.
    """

    a: float = 1.0
    b: float = 0.0
    sigma: float = 0.56
    rho: float = 0.10
    K: float = 0.001
    M: float = -0.2

    def __post_init__(self):
        for name in ("a", "b", "sigma", "rho", "K", "M"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
        if self.a <= 0:
            raise ValueError(f"a must be > 0, got {self.a}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.rho <= 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if self.K < 0:
            raise ValueError(f"K must be >= 0, got {self.K}")

    @property
    def kappa(self) -> float:
        return math.sqrt(2.0 * self.a) / self.sigma

    @property
    def nu(self) -> float:
        """Exponent ratio rho/a appearing in eta."""
        return self.rho / self.a

    @property
    def buy_bound(self) -> float:
        """Largest admissible upper buy level, (ab - rho K)/(rho + a)."""
        return (self.a * self.b - self.rho * self.K) / (self.rho + self.a)

    @property
    def sell_bound(self) -> float:
        """Smallest admissible sell level, (ab + rho K)/(rho + a)."""
        return (self.a * self.b + self.rho * self.K) / (self.rho + self.a)

    @property
    def c0(self) -> float:
        """Upper bound on the flat-position value function."""
        return (self.rho + self.a) * abs(self.M) / self.rho

    @property
    def stationary_std(self) -> float:
        return self.sigma / math.sqrt(2.0 * self.a)

    def replace(self, **changes) -> "ModelParams":
        fields = {k: getattr(self, k) for k in ("a", "b", "sigma", "rho", "K", "M")}
        fields.update(changes)
        return ModelParams(**fields)


@dataclass(frozen=True)
class KernelConfig:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    # relative size of the neglected tail beyond the truncation point
    tail_tol: float = 1e-14
    max_intervals: int = 4000


DEFAULT_CONFIG = KernelConfig()


@dataclass(frozen=True)
class BasisEval:
    """phi1, phi2 and their first two derivatives at ``x`` (scalars or arrays)."""

    x: np.ndarray | float
    phi1: np.ndarray | float
    phi2: np.ndarray | float
    dphi1: np.ndarray | float
    dphi2: np.ndarray | float
    d2phi1: np.ndarray | float
    d2phi2: np.ndarray | float

    @property
    def det(self):
        """Wronskian phi1*phi2' - phi2*phi1'; negative everywhere."""
        return self.phi1 * self.dphi2 - self.phi2 * self.dphi1

    def matrix(self) -> np.ndarray:
        """Phi(x) = [[phi1, phi2], [phi1', phi2']]; shape (..., 2, 2)."""
        return np.stack(
            [np.stack([self.phi1, self.phi2], -1), np.stack([self.dphi1, self.dphi2], -1)], -2
        )

    def ode_residual(self, params: ModelParams):
        """rho*phi - a(b-x)phi' - sigma^2/2 phi'' for phi1 and phi2."""
        drift = params.a * (params.b - np.asarray(self.x))
        half_var = 0.5 * params.sigma**2
        r1 = params.rho * self.phi1 - drift * self.dphi1 - half_var * self.d2phi1
        r2 = params.rho * self.phi2 - drift * self.dphi2 - half_var * self.d2phi2
        return r1, r2


def eta(t, params: ModelParams):
    """t**(rho/a - 1) * exp(-t**2/2) for t > 0."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(~(t_arr > 0)):
        raise ValueError("eta is defined for t > 0 only")
    out = np.exp((params.nu - 1.0) * np.log(t_arr) - 0.5 * t_arr**2)
    return float(out) if out.ndim == 0 else out


def _log_tail_bound(T, power, gamma):
    """log of an upper bound on int_T^inf t^power exp(-t^2/2 + gamma t) dt.

    For power > 0 uses t^p <= T^p exp(p (t - T)/T) on t >= T, which keeps the
    bound a shifted Gaussian tail.
    """
    lam = np.maximum(power, 0.0) / T
    shift = gamma + lam
    return (
        power * np.log(T)
        - lam * T
        + 0.5 * shift**2
        + 0.5 * math.log(2.0 * math.pi)
        + log_ndtr(shift - T)
    )


def _moment_integrals(x: np.ndarray, params: ModelParams, cfg: KernelConfig) -> np.ndarray:
    """I[s, k, j] = int_0^inf t^k eta(t) exp(sgn_s * kappa (b - x_j) t) dt.

    s = 0 uses sgn = -1 (phi1 family), s = 1 uses sgn = +1 (phi2 family);
    k = 0, 1, 2. Returns shape (2, 3, n).
    """
    nu = params.nu
    c = params.kappa * (params.b - x)  # shape (n,)
    # log of the integrand peak; beyond ~709 the integral itself is not a double
    peak = 0.5 * c**2 + (nu + 1.0) * np.log1p(np.abs(c))
    if np.any(peak > 700.0):
        raise OverflowError(
            f"kappa*|b - x| = {np.max(np.abs(c)):.3g} too large: basis functions overflow"
        )
    gammas = np.stack([-c, c])  # (2, n)
    powers = np.arange(3.0)

    # (0, 1]: t = u**(1/nu) cancels the t**(nu-1) singularity exactly.
    inv_nu = 1.0 / nu
    log_jac = math.log(inv_nu)

    def near(u):
        log_t = inv_nu * np.log(u)
        t = np.exp(log_t)
        expo = (
            log_jac
            - 0.5 * t**2
            + gammas[:, None, :, None] * t
            + powers[None, :, None, None] * log_t
        )
        return np.exp(expo).reshape(-1, u.size)

    # [1, T_j]: mapped to s in [0, 1] so the whole batch shares one partition.
    T = 14.0 + np.maximum(np.abs(c), 1.0)
    span = T - 1.0
    log_span = np.log(span)

    def far(s):
        t = 1.0 + s[None, :] * span[:, None]  # (n, m)
        log_t = np.log(t)
        expo = (
            log_span[None, None, :, None]
            + (nu - 1.0 + powers[None, :, None, None]) * log_t[None, None]
            - 0.5 * t[None, None] ** 2
            + gammas[:, None, :, None] * t[None, None]
        )
        return np.exp(expo).reshape(-1, s.size)

    opts = dict(abs_tol=cfg.abs_tol, rel_tol=cfg.rel_tol, max_intervals=cfg.max_intervals)
    n = x.size
    head, _ = gk15_adaptive(near, 0.0, 1.0, **opts)
    tail, _ = gk15_adaptive(far, 0.0, 1.0, **opts)
    total = (head + tail).reshape(2, 3, n)

    log_bound = _log_tail_bound(
        T[None, None, :], (nu - 1.0 + powers)[None, :, None], gammas[:, None, :]
    )
    with np.errstate(divide="ignore"):
        log_est = np.log(np.abs(total))
    excess = log_bound - (math.log(cfg.tail_tol) + log_est)
    if np.any(excess > 0):
        raise QuadratureError(
            "truncation tail exceeds tolerance", float(np.exp(np.max(excess)) * cfg.tail_tol)
        )
    return total


def basis_eval(x, params: ModelParams, cfg: KernelConfig = DEFAULT_CONFIG) -> BasisEval:
    """Evaluate phi1, phi2 and two derivatives each at scalar or array ``x``."""
    x_arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x_arr)):
        raise ValueError("x must be finite")
    flat = np.atleast_1d(x_arr).ravel()
    I = _moment_integrals(flat, params, cfg)
    k = params.kappa
    parts = (
        I[0, 0],
        I[1, 0],
        k * I[0, 1],
        -k * I[1, 1],
        k * k * I[0, 2],
        k * k * I[1, 2],
    )
    if x_arr.ndim == 0:
        parts = tuple(float(p[0]) for p in parts)
        return BasisEval(float(x_arr), *parts)
    parts = tuple(p.reshape(x_arr.shape) for p in parts)
    return BasisEval(x_arr, *parts)


def _solve_2x2(be: BasisEval, rhs0, rhs1):
    """Cramer's rule against Phi(x); exact enough for a 2x2 with det < 0."""
    det = be.det
    first = (rhs0 * be.dphi2 - be.phi2 * rhs1) / det
    second = (be.phi1 * rhs1 - be.dphi1 * rhs0) / det
    return np.stack([first, second], -1)


def structure_vectors(x, params: ModelParams, cfg: KernelConfig = DEFAULT_CONFIG, be=None):
    """Return ``(R, P1, P2)`` at ``x``, each of shape (..., 2).

    R = Phi^-1 (phi2, phi2'), P1 = Phi^-1 (x + K, 1), P2 = Phi^-1 (x - K, 1).
    R is (0, 1) identically; it is still computed by the solve so downstream
    residuals see the same arithmetic the construction uses.
    """
    if be is None:
        be = basis_eval(x, params, cfg)
    xv = np.asarray(be.x, dtype=float)
    one = np.ones_like(xv)
    R = _solve_2x2(be, be.phi2, be.dphi2)
    P1 = _solve_2x2(be, xv + params.K, one)
    P2 = _solve_2x2(be, xv - params.K, one)
    return R, P1, P2
