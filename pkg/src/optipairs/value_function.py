"""Piecewise closed-form value functions for the flat (0) and long (1) states.

    v0 = B.phi            on [M, x0)
         C.phi - x - K    on [x0, x1)
         A2 phi2          on [x1, inf)
    v1 = C.phi            on [M, x2)
         A2 phi2 + x - K  on [x2, inf)
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .ou_kernel import DEFAULT_CONFIG, KernelConfig, basis_eval

if TYPE_CHECKING:
    from .threshold_solver import ThresholdPolicy

PDE_TOL = 1e-8


class BoundaryPointError(ValueError):
    """HJB residual requested exactly at a piece boundary without a side."""


@dataclass
class PiecewiseValue:
    policy: "ThresholdPolicy"
    cfg: KernelConfig = DEFAULT_CONFIG

    @property
    def boundaries(self) -> tuple[float, float, float, float]:
        p = self.policy
        return p.params.M, p.x0, p.x1, p.x2

    def _piece_index(self, i: int, x: np.ndarray, side: str) -> np.ndarray:
        p = self.policy
        edges = [p.x0, p.x1] if i == 0 else [p.x2]
        # "right": boundary point belongs to the piece on its right
        return np.searchsorted(edges, x, side="right" if side == "right" else "left")

    def v(self, i: int, x, deriv: int = 0, side: str = "right"):
        """v_i or its first/second derivative; ``side`` picks the piece at a boundary."""
        if i not in (0, 1):
            raise ValueError("position index must be 0 or 1")
        if deriv not in (0, 1, 2):
            raise ValueError("deriv must be 0, 1 or 2")
        p = self.policy
        params = p.params
        x_arr = np.asarray(x, dtype=float)
        if np.any(x_arr < params.M):
            raise ValueError(f"value functions are defined for x >= M = {params.M}")
        xs = np.atleast_1d(x_arr).ravel()
        be = basis_eval(xs, params, self.cfg)
        f1 = (be.phi1, be.dphi1, be.d2phi1)[deriv]
        f2 = (be.phi2, be.dphi2, be.d2phi2)[deriv]
        lin = (xs, np.ones_like(xs), np.zeros_like(xs))[deriv]
        const = np.where(deriv == 0, 1.0, 0.0)

        b_part = p.B1 * f1 + p.B2 * f2
        c_part = p.C1 * f1 + p.C2 * f2
        a_part = p.A2 * f2
        piece = self._piece_index(i, xs, side)
        if i == 0:
            out = np.choose(piece, [b_part, c_part - lin - const * params.K, a_part])
        else:
            out = np.choose(piece, [c_part, a_part + lin - const * params.K])
        if x_arr.ndim == 0:
            return float(out[0])
        return out.reshape(x_arr.shape)

    def hjb_residual(self, i: int, x, side: str | None = None):
        """(pde_part, obstacle_part) of the quasi-variational inequality for v_i.

        pde_part = rho v_i - a(b - x) v_i' - sigma^2/2 v_i''. At a piece boundary
        a ``side`` ("left"/"right") must be given since v_i'' jumps there.
        """
        p = self.policy
        params = p.params
        x_arr = np.asarray(x, dtype=float)
        if np.any(x_arr <= params.M):
            raise ValueError("HJB residual is defined on (M, inf)")
        if side is None:
            edges = (p.x0, p.x1) if i == 0 else (p.x2,)
            if np.any(np.isin(x_arr, edges)):
                raise BoundaryPointError("x sits on a piece boundary; pass side='left'/'right'")
            side = "right"
        v = self.v(i, x_arr, 0, side)
        dv = self.v(i, x_arr, 1, side)
        d2v = self.v(i, x_arr, 2, side)
        pde = params.rho * v - params.a * (params.b - x_arr) * dv - 0.5 * params.sigma**2 * d2v
        other = self.v(1 - i, x_arr, 0, side)
        if i == 0:
            obstacle = v - other + x_arr + params.K
        else:
            obstacle = v - other - x_arr + params.K
        return pde, obstacle

    def value_bounds_ok(self, x) -> np.ndarray:
        """Pointwise check of 0 <= v0 <= C0 and x - K <= v1 <= x + K + C0."""
        params = self.policy.params
        x_arr = np.asarray(x, dtype=float)
        c0 = params.c0
        v0 = self.v(0, x_arr)
        v1 = self.v(1, x_arr)
        eps = 1e-12
        return (
            (v0 >= -eps)
            & (v0 <= c0 + eps)
            & (v1 >= x_arr - params.K - eps)
            & (v1 <= x_arr + params.K + c0 + eps)
        )

    def curve(self, xs) -> np.ndarray:
        """Records (x, v0, v1) as an (n, 3) array."""
        xs = np.asarray(xs, dtype=float)
        return np.column_stack([xs, self.v(0, xs), self.v(1, xs)])

    def write_curve(self, path, xs) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "v0", "v1"])
            for row in self.curve(xs):
                w.writerow([repr(float(c)) for c in row])


def eval_v(i: int, x, pv: PiecewiseValue):
    return pv.v(i, x)


def hjb_residual(i: int, x, pv: PiecewiseValue, side: str | None = None):
    return pv.hjb_residual(i, x, side)
