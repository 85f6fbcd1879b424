"""Closed-form bias densities and grid profiles.

The initial ensemble has q(y) = sqrt(xi / 2 pi) exp(-xi y^2 / 2).  Weighting
by the transition rate shifts the mass into two Gaussian bumps of the same
width centered at y = +1 and y = -1:

    Q_sign(y) = sqrt(xi / 2 pi) exp(-xi (y - sign)^2 / 2)
    Q(y)      = |psi_plus|^2 Q_plus(y) + |psi_minus|^2 Q_minus(y)
              = q(y) * w(y)

Grid profiles tabulate all four curves for CSV export; mode counting on the
grid decides unimodal versus bimodal (the equal-weight mixture splits at
xi = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import ndtr

from .transition import QubitState

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _check_xi(xi: float) -> None:
    if not (xi > 0.0 and math.isfinite(xi)):
        raise ValueError("xi must be positive and finite")


def initial_density(y, xi: float):
    """q(y): Gaussian bias density of the initial ensemble, variance 1/xi."""
    _check_xi(xi)
    y = np.asarray(y, dtype=float)
    out = math.sqrt(xi) / _SQRT_2PI * np.exp(-0.5 * xi * y * y)
    return out if out.ndim else float(out)

def channel_density(y, xi: float, sign: int):
    """Q_sign(y): final-state bias density of one channel (sign = +1 or -1)."""
    _check_xi(xi)
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    y = np.asarray(y, dtype=float)
    d = y - sign
    out = math.sqrt(xi) / _SQRT_2PI * np.exp(-0.5 * xi * d * d)
    return out if out.ndim else float(out)


def final_density(y, xi: float, qubit: QubitState):
    """Q(y): total final-state bias density, the rate-weighted q(y)."""
    out = qubit.prob_plus * channel_density(y, xi, +1) + qubit.prob_minus * channel_density(y, xi, -1)
    return out if np.ndim(out) else float(out)


def final_cdf(y, xi: float, qubit: QubitState):
    """Cumulative distribution of Q(y), from the two Gaussian channel CDFs."""
    _check_xi(xi)
    y = np.asarray(y, dtype=float)
    s = math.sqrt(xi)
    out = qubit.prob_plus * ndtr((y - 1.0) * s) + qubit.prob_minus * ndtr((y + 1.0) * s)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class DensityProfile:
    """Tabulated densities on an ascending y grid."""

    grid: np.ndarray
    q: np.ndarray
    Q: np.ndarray
    Q_plus: np.ndarray
    Q_minus: np.ndarray

    def integrals(self) -> dict[str, float]:
        """Trapezoid integrals of each tabulated density over the grid."""
        return {
            name: float(trapezoid(getattr(self, name), self.grid))
            for name in ("q", "Q", "Q_plus", "Q_minus")
        }


def default_grid(xi: float) -> tuple[float, float, float]:
    """(y_min, y_max, step) covering both bumps with ample Gaussian tail."""
    _check_xi(xi)
    half = 1.0 + 8.0 / math.sqrt(xi)
    return -half, half, 0.05 / math.sqrt(xi)


def grid_profile(
    xi: float,
    qubit: QubitState,
    y_min: float | None = None,
    y_max: float | None = None,
    step: float | None = None,
) -> DensityProfile:
    """Tabulate q, Q, Q_plus, Q_minus on a uniform grid."""
    if y_min is None or y_max is None or step is None:
        lo, hi, st = default_grid(xi)
        y_min = lo if y_min is None else y_min
        y_max = hi if y_max is None else y_max
        step = st if step is None else step
    if not (y_min < y_max and step > 0.0):
        raise ValueError("grid must satisfy y_min < y_max and step > 0")
    count = int(math.floor((y_max - y_min) / step)) + 1
    if count < 1:
        raise ValueError("empty grid")
    grid = y_min + step * np.arange(count)
    return DensityProfile(
        grid=grid,
        q=initial_density(grid, xi),
        Q=final_density(grid, xi, qubit),
        Q_plus=channel_density(grid, xi, +1),
        Q_minus=channel_density(grid, xi, -1),
    )


def mode_count(profile: DensityProfile) -> int:
    """Number of strict interior local maxima of Q on the grid."""
    q = profile.Q
    if len(q) < 3:
        raise ValueError("need at least 3 grid points")
    inner = q[1:-1]
    return int(np.sum((inner > q[:-2]) & (inner > q[2:])))
