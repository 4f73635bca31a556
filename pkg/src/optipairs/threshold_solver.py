"""Smooth-fit threshold solver.

Thresholds are found from two reduced equations:

* x0 solves ``(phi1(M), phi2(M)) . P1(x0) = M - K``;
* (x1, x2) solve ``(R(x1) - R(x2)) A2(x2) = P2(x2) - P1(x1)`` with A2 eliminated
  through the stop-loss boundary condition.

After solving, the value-function coefficients are recovered and every
sufficient condition of the verification argument is checked on a grid.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .ou_kernel import DEFAULT_CONFIG, KernelConfig, ModelParams, basis_eval, structure_vectors

log = logging.getLogger(__name__)

SMOOTH_FIT_TOL = 1e-7
EQUATION_TOL = 1e-9


class SolverError(RuntimeError):
    """No admissible threshold policy could be produced."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


class NoRootError(SolverError):
    pass


class ConvergenceError(SolverError):
    pass


class BoundViolationError(SolverError):
    pass


@dataclass(frozen=True)
class VerificationReport:
    ordering_ok: bool
    x1_bound_ok: bool
    x2_bound_ok: bool
    obstacle_ok_Mx0: bool
    obstacle_margin_Mx0: float  # min over grid of K - |v1 - v0 - x|
    obstacle_ok_x1x2: bool
    obstacle_margin_x1x2: float
    v0_nonneg_ok: bool
    v0_min: float
    smoothfit_residuals: dict
    smoothfit_ok: bool
    equation_residuals: dict
    equations_ok: bool
    grid_n: int
    x_max: float

    @property
    def verified(self) -> bool:
        return all(
            (
                self.ordering_ok,
                self.x1_bound_ok,
                self.x2_bound_ok,
                self.obstacle_ok_Mx0,
                self.obstacle_ok_x1x2,
                self.v0_nonneg_ok,
                self.smoothfit_ok,
                self.equations_ok,
            )
        )

    def failures(self) -> list[str]:
        names = [
            "ordering_ok",
            "x1_bound_ok",
            "x2_bound_ok",
            "obstacle_ok_Mx0",
            "obstacle_ok_x1x2",
            "v0_nonneg_ok",
            "smoothfit_ok",
            "equations_ok",
        ]
        return [n for n in names if not getattr(self, n)]


@dataclass(frozen=True)
class ThresholdPolicy:
    params: ModelParams
    x0: float
    x1: float
    x2: float
    A2: float
    B1: float
    B2: float
    C1: float
    C2: float
    verification: VerificationReport | None = None
    # other roots found while bracketing, as (x0,) or (x1, x2) tuples
    alternatives: tuple = field(default_factory=tuple)

    @property
    def verified(self) -> bool:
        return self.verification is not None and self.verification.verified

    @property
    def triple(self) -> tuple[float, float, float]:
        return self.x0, self.x1, self.x2

    def shifted(self, **thresholds) -> "ThresholdPolicy":
        """Copy with some thresholds moved; coefficients and report untouched."""
        return replace(self, verification=None, **thresholds)


# ---------------------------------------------------------------------------
# x0


def _phi_row(x, params, cfg):
    be = basis_eval(x, params, cfg)
    return np.array([be.phi1, be.phi2])


def x0_residual(x0, params: ModelParams, cfg: KernelConfig = DEFAULT_CONFIG, phi_M=None):
    """g(x0) = (phi1(M), phi2(M)) . P1(x0) - (M - K)."""
    if phi_M is None:
        phi_M = _phi_row(params.M, params, cfg)
    _, P1, _ = structure_vectors(x0, params, cfg)
    return P1 @ phi_M - (params.M - params.K)


def _x0_residual_and_slope(x0, params, cfg, phi_M):
    be = basis_eval(x0, params, cfg)
    Phi = be.matrix()
    dPhi = np.array([[be.dphi1, be.dphi2], [be.d2phi1, be.d2phi2]])
    P1 = np.linalg.solve(Phi, [x0 + params.K, 1.0])
    # d/dx [Phi^-1 r(x)] = Phi^-1 (r' - Phi' Phi^-1 r), r' = (1, 0)
    dP1 = np.linalg.solve(Phi, np.array([1.0, 0.0]) - dPhi @ P1)
    return P1 @ phi_M - (params.M - params.K), dP1 @ phi_M


def _scan_grid(lo, hi, n_uniform=48, n_geometric=24):
    """Uniform grid over (lo, hi] plus geometric refinement towards lo."""
    span = hi - lo
    uniform = lo + span * np.linspace(0.0, 1.0, n_uniform + 1)[1:]
    geometric = lo + span * np.geomspace(1e-7, 1.0 / n_uniform, n_geometric)
    return np.unique(np.concatenate([geometric, uniform]))


def _bracket_roots(f_vals, grid):
    brackets = []
    for j in range(len(grid) - 1):
        fa, fb = f_vals[j], f_vals[j + 1]
        if fa == 0.0:
            brackets.append((grid[j], grid[j]))
        elif fa * fb < 0:
            brackets.append((grid[j], grid[j + 1]))
    if f_vals[-1] == 0.0:
        brackets.append((grid[-1], grid[-1]))
    return brackets


def solve_x0(params: ModelParams, cfg: KernelConfig = DEFAULT_CONFIG) -> float:
    """Lower buy threshold x0 in (M, buy_bound].

    Scans for sign changes, bisects each bracket and polishes with Newton steps
    using the analytic slope. With several roots the one closest to M is
    returned (see ``solve_x0_all``).
    """
    return solve_x0_all(params, cfg)[0]


def solve_x0_all(params: ModelParams, cfg: KernelConfig = DEFAULT_CONFIG) -> list[float]:
    lo, hi = params.M, params.buy_bound
    if not hi > lo:
        raise NoRootError(
            "stop-loss M must lie below (ab - rho K)/(rho + a) for a buy region to exist",
            bracket=(lo, hi),
        )
    phi_M = _phi_row(params.M, params, cfg)
    grid = _scan_grid(lo, hi)
    g = x0_residual(grid, params, cfg, phi_M)
    brackets = _bracket_roots(g, grid)
    if not brackets:
        raise NoRootError("x0 equation has no sign change", bracket=(lo, hi))

    scale = 1.0 + abs(params.M - params.K)
    roots = []
    for a_, b_ in brackets:
        if a_ == b_:
            roots.append(float(a_))
            continue
        root = brentq(
            lambda x: float(x0_residual(x, params, cfg, phi_M)), a_, b_, xtol=1e-12, rtol=1e-15
        )
        for _ in range(3):
            val, slope = _x0_residual_and_slope(root, params, cfg, phi_M)
            if abs(val) <= 1e-15 * scale or slope == 0.0:
                break
            cand = root - val / slope
            if not a_ <= cand <= b_:
                break
            cand_val = float(x0_residual(cand, params, cfg, phi_M))
            if abs(cand_val) >= abs(val):
                break
            root = cand
        final = float(x0_residual(root, params, cfg, phi_M))
        if abs(final) > 1e-10 * scale:
            raise ConvergenceError("x0 refinement did not converge", x0=root, residual=final)
        roots.append(float(root))
    return roots


# ---------------------------------------------------------------------------
# x1, x2


def a2_of(x2, params: ModelParams, cfg: KernelConfig = DEFAULT_CONFIG, phi_M=None):
    """A2 from the stop-loss condition on v1, as a function of x2."""
    if phi_M is None:
        phi_M = _phi_row(params.M, params, cfg)
    R, _, P2 = structure_vectors(x2, params, cfg)
    return (params.M - params.K - P2 @ phi_M) / (R @ phi_M)


def x1x2_residual(x1, x2, params: ModelParams, cfg: KernelConfig = DEFAULT_CONFIG, phi_M=None):
    """(R(x1) - R(x2)) A2(x2) - (P2(x2) - P1(x1)) as a 2-vector."""
    if phi_M is None:
        phi_M = _phi_row(params.M, params, cfg)
    be = basis_eval(np.array([x1, x2], dtype=float), params, cfg)
    R, P1, P2 = structure_vectors(None, params, cfg, be=be)
    A2 = (params.M - params.K - P2[1] @ phi_M) / (R[1] @ phi_M)
    return (R[0] - R[1]) * A2 - (P2[1] - P1[0])


def _newton_x1x2(params, cfg, phi_M, guess, max_iter=60):
    x = np.array(guess, dtype=float)
    F = x1x2_residual(*x, params, cfg, phi_M)
    for _ in range(max_iter):
        fnorm = np.max(np.abs(F))
        if fnorm <= 1e-15:
            break
        J = np.empty((2, 2))
        for j in range(2):
            h = 1e-6 * (1.0 + abs(x[j]))
            e = np.zeros(2)
            e[j] = h
            J[:, j] = (
                x1x2_residual(*(x + e), params, cfg, phi_M)
                - x1x2_residual(*(x - e), params, cfg, phi_M)
            ) / (2 * h)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        while lam > 1e-6:
            cand = x + lam * step
            if cand[0] > params.M and cand[0] < cand[1]:
                F_c = x1x2_residual(*cand, params, cfg, phi_M)
                if np.max(np.abs(F_c)) < fnorm:
                    break
            lam *= 0.5
        else:
            break
        x, F = cand, F_c
        if np.max(np.abs(lam * step)) <= 1e-15 * (1.0 + np.max(np.abs(x))):
            break
    if np.max(np.abs(F)) > EQUATION_TOL or not (x[0] < x[1]):
        return None
    return float(x[0]), float(x[1])


def _bisect_x1x2(params, cfg, phi_M, n_outer=40):
    """Outer scan over x2, inner bracketed root of the first component in x1."""
    lo2 = params.sell_bound
    hi2 = params.b + 6.0 * params.stationary_std
    lo1, hi1 = params.M, params.buy_bound

    def inner(x2):
        f = lambda x1: float(x1x2_residual(x1, x2, params, cfg, phi_M)[0])
        grid = np.linspace(lo1, hi1, 25)
        vals = np.array([f(v) for v in grid])
        brackets = _bracket_roots(vals, grid)
        if not brackets:
            return None
        a_, b_ = brackets[-1]
        return a_ if a_ == b_ else brentq(f, a_, b_, xtol=1e-14, rtol=1e-15)

    def outer(x2):
        x1 = inner(x2)
        if x1 is None:
            return np.nan, None
        return float(x1x2_residual(x1, x2, params, cfg, phi_M)[1]), x1

    grid2 = np.linspace(lo2, hi2, n_outer)
    vals = np.array([outer(v)[0] for v in grid2])
    roots = []
    for j in range(n_outer - 1):
        fa, fb = vals[j], vals[j + 1]
        if not (np.isfinite(fa) and np.isfinite(fb)) or fa * fb > 0:
            continue
        x2 = brentq(lambda v: outer(v)[0], grid2[j], grid2[j + 1], xtol=1e-14, rtol=1e-15)
        roots.append((outer(x2)[1], x2))
    return roots


def solve_x1x2(params: ModelParams, cfg: KernelConfig = DEFAULT_CONFIG) -> tuple[float, float]:
    """Upper buy level x1 and sell level x2.

    Damped Newton from a guess straddling the admissible bounds; if that fails,
    nested bisection. Raises BoundViolationError if the root found violates
    x1 <= buy_bound or x2 >= sell_bound.
    """
    x1, x2, _ = _solve_x1x2_detail(params, cfg)
    return x1, x2


def _solve_x1x2_detail(params, cfg, phi_M=None):
    if phi_M is None:
        phi_M = _phi_row(params.M, params, cfg)
    delta = params.stationary_std / 10.0
    guess = (params.buy_bound - delta, params.sell_bound + delta)
    alternatives: list = []
    root = _newton_x1x2(params, cfg, phi_M, guess)
    if root is None:
        log.info("Newton failed for %s; falling back to nested bisection", params)
        roots = _bisect_x1x2(params, cfg, phi_M)
        if not roots:
            final = x1x2_residual(*guess, params, cfg, phi_M)
            raise ConvergenceError(
                "no root of the (x1, x2) system found",
                residual=float(np.max(np.abs(final))),
            )
        if len(roots) > 1:
            # the optimal policy's value dominates: pick max v0(b) = A2 phi2(b)
            phi2_b = basis_eval(params.b, params, cfg).phi2
            scores = [a2_of(r[1], params, cfg, phi_M) * phi2_b for r in roots]
            best = int(np.argmax(scores))
            alternatives = [r for j, r in enumerate(roots) if j != best]
            root = roots[best]
        else:
            root = roots[0]
    x1, x2 = root
    res = x1x2_residual(x1, x2, params, cfg, phi_M)
    if np.max(np.abs(res)) > EQUATION_TOL:
        raise ConvergenceError("(x1, x2) residual too large", residual=float(np.max(np.abs(res))))
    if x1 > params.buy_bound or x2 < params.sell_bound or not x1 < x2:
        raise BoundViolationError(
            "(x1, x2) root violates the admissibility bounds",
            x1=x1,
            x2=x2,
            buy_bound=params.buy_bound,
            sell_bound=params.sell_bound,
        )
    return x1, x2, tuple(alternatives)


# ---------------------------------------------------------------------------
# coefficients and verification


def recover_coefficients(x0, x1, x2, params: ModelParams, cfg: KernelConfig = DEFAULT_CONFIG):
    """Return (A2, B1, B2, C1, C2) for the given thresholds."""
    phi_M = _phi_row(params.M, params, cfg)
    be = basis_eval(np.array([x0, x2], dtype=float), params, cfg)
    R, P1, P2 = structure_vectors(None, params, cfg, be=be)
    A2 = (params.M - params.K - P2[1] @ phi_M) / (R[1] @ phi_M)
    C = A2 * R[1] + P2[1]
    B = C - P1[0]
    return float(A2), float(B[0]), float(B[1]), float(C[0]), float(C[1])


def verify_policy(
    policy: ThresholdPolicy, grid_n: int = 2001, cfg: KernelConfig = DEFAULT_CONFIG
) -> VerificationReport:
    """Check every sufficient optimality condition; never raises on failure."""
    from .value_function import PiecewiseValue

    p = policy.params
    x0, x1, x2 = policy.triple
    pv = PiecewiseValue(policy, cfg)
    slack = p.K * 1e-6 + 1e-10

    ordering_ok = p.M < x0 <= x1 < x2
    x1_bound_ok = x1 <= p.buy_bound
    x2_bound_ok = x2 >= p.sell_bound

    def obstacle_margin(lo, hi):
        if not hi > lo:
            return math.inf
        # open interval: drop the endpoints
        xs = np.linspace(lo, hi, grid_n + 2)[1:-1]
        gap = pv.v(1, xs) - pv.v(0, xs) - xs
        return float(np.min(p.K - np.abs(gap)))

    m_Mx0 = obstacle_margin(p.M, x0)
    m_x1x2 = obstacle_margin(x1, x2)

    x_max = x2 + 5.0 * p.stationary_std
    xs = np.linspace(p.M, x_max, grid_n)
    v0_min = float(np.min(pv.v(0, xs)))

    smooth = {}
    for name, i, xb in (("x0", 0, x0), ("x1", 0, x1), ("x2", 1, x2)):
        left = pv.v(i, xb, side="left"), pv.v(i, xb, deriv=1, side="left")
        right = pv.v(i, xb, side="right"), pv.v(i, xb, deriv=1, side="right")
        smooth[name] = float(max(abs(left[0] - right[0]), abs(left[1] - right[1])))

    phi_M = _phi_row(p.M, p, cfg)
    eq = {
        "x0": float(abs(x0_residual(x0, p, cfg, phi_M))),
        "x1x2": float(np.max(np.abs(x1x2_residual(x1, x2, p, cfg, phi_M)))),
    }
    return VerificationReport(
        ordering_ok=bool(ordering_ok),
        x1_bound_ok=bool(x1_bound_ok),
        x2_bound_ok=bool(x2_bound_ok),
        obstacle_ok_Mx0=m_Mx0 >= -slack,
        obstacle_margin_Mx0=m_Mx0,
        obstacle_ok_x1x2=m_x1x2 >= -slack,
        obstacle_margin_x1x2=m_x1x2,
        v0_nonneg_ok=v0_min >= -slack,
        v0_min=v0_min,
        smoothfit_residuals=smooth,
        smoothfit_ok=max(smooth.values()) <= SMOOTH_FIT_TOL,
        equation_residuals=eq,
        equations_ok=eq["x0"] <= 1e-10 * (1.0 + abs(p.M - p.K)) and eq["x1x2"] <= EQUATION_TOL,
        grid_n=grid_n,
        x_max=float(x_max),
    )


def solve_policy(
    params: ModelParams, grid_n: int = 2001, cfg: KernelConfig = DEFAULT_CONFIG
) -> ThresholdPolicy:
    """Solve thresholds, recover coefficients and attach a verification report.

    Raises SolverError (with ``details``) when no admissible triple exists.
    """
    x0_roots = solve_x0_all(params, cfg)
    x1, x2, alt12 = _solve_x1x2_detail(params, cfg)
    x0 = x0_roots[0]
    if not x0 <= x1:
        raise BoundViolationError("x0 exceeds x1; buy region is empty", x0=x0, x1=x1, x2=x2)
    coeffs = recover_coefficients(x0, x1, x2, params, cfg)
    alternatives = tuple((r,) for r in x0_roots[1:]) + tuple(alt12)
    policy = ThresholdPolicy(params, x0, x1, x2, *coeffs, alternatives=alternatives)
    report = verify_policy(policy, grid_n, cfg)
    return replace(policy, verification=report)


@dataclass(frozen=True)
class SweepRow:
    value: float
    x0: float = math.nan
    x1: float = math.nan
    x2: float = math.nan
    verified: bool = False
    error: str | None = None


SWEEPABLE = ("a", "b", "sigma", "rho", "K", "M")


def sensitivity_sweep(
    base: ModelParams,
    vary: str,
    values: Sequence[float],
    grid_n: int = 2001,
    cfg: KernelConfig = DEFAULT_CONFIG,
) -> list[SweepRow]:
    """One row per value, in input order; failed rows carry the error text."""
    if vary not in SWEEPABLE:
        raise ValueError(f"cannot sweep {vary!r}; choose one of {SWEEPABLE}")
    if len(values) == 0:
        raise ValueError("sweep needs at least one value")
    rows = []
    for v in values:
        try:
            policy = solve_policy(base.replace(**{vary: float(v)}), grid_n, cfg)
        except (SolverError, ValueError, ArithmeticError) as exc:
            rows.append(SweepRow(float(v), error=f"{type(exc).__name__}: {exc}"))
            continue
        rows.append(SweepRow(float(v), *policy.triple, verified=policy.verified))
    return rows
