"""Squared channel amplitudes, kept in log space.

The two channels of the measured system are enhanced or suppressed by each
apparatus step.  Exact form, per microstate:

    log|b_plus|^2  = sum_n log(1 + kappa_n)
    log|b_minus|^2 = sum_n log(1 - kappa_n)

Closed (second-order) form, per net bias y:

    log|b_plus|^2  = xi * (y - 1/2)
    log|b_minus|^2 = xi * (-y - 1/2)

In the asymmetric-detector variant one channel bypasses the detector, so
|b_minus|^2 == 1 identically.  Nothing here exponentiates a large argument;
downstream consumers combine the log values with log-sum-exp.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .ensemble import DetectorMode, Microstate, ModelParams


class AmplitudeForm(Enum):
    EXACT_PRODUCT = "exact"
    CLOSED_FORM = "closed"


@dataclass(frozen=True)
class AmplitudePair:
    log_b_plus_sq: float
    log_b_minus_sq: float
    origin: AmplitudeForm
    mode: DetectorMode

    def __post_init__(self) -> None:
        if not (np.isfinite(self.log_b_plus_sq) and np.isfinite(self.log_b_minus_sq)):
            raise ValueError("log squared amplitudes must be finite")
        if self.mode is DetectorMode.ASYMMETRIC_DETECTOR and self.log_b_minus_sq != 0.0:
            raise ValueError("asymmetric detector fixes log|b_minus|^2 == 0")


def amplitudes_exact(microstate: Microstate, params: ModelParams) -> AmplitudePair:
    """Exact product amplitudes of a microstate, summed in log space."""
    k = np.asarray(microstate.kappas, dtype=float)
    if np.any(np.abs(k) >= 1.0):
        raise ValueError("amplitude factor nonpositive")
    lbp = float(np.log1p(k).sum())
    if params.mode is DetectorMode.ASYMMETRIC_DETECTOR:
        return AmplitudePair(lbp, 0.0, AmplitudeForm.EXACT_PRODUCT, params.mode)
    lbm = float(np.log1p(-k).sum())
    return AmplitudePair(lbp, lbm, AmplitudeForm.EXACT_PRODUCT, params.mode)


def closed_log_sq(y, xi: float, mode: DetectorMode = DetectorMode.SYMMETRIC):
    """Vectorized closed-form (log|b_plus|^2, log|b_minus|^2) for bias y.

    The symmetric minus-channel value is defined as -xi - log|b_plus|^2 so the
    product identity b_plus^2 * b_minus^2 == exp(-xi) holds to within one
    rounding of the largest term.
    """
    if xi < 0.0:
        raise ValueError("xi must be nonnegative")
    lbp = xi * (np.asarray(y, dtype=float) - 0.5)
    if mode is DetectorMode.ASYMMETRIC_DETECTOR:
        return lbp, np.zeros_like(lbp)
    return lbp, -xi - lbp


def amplitudes_closed(
    y: float, xi: float, mode: DetectorMode = DetectorMode.SYMMETRIC
) -> AmplitudePair:
    """Closed-form amplitudes for a net bias y at interaction size xi."""
    lbp, lbm = closed_log_sq(float(y), xi, mode)
    return AmplitudePair(float(lbp), float(lbm), AmplitudeForm.CLOSED_FORM, mode)


def closed_vs_exact_gap(microstate: Microstate, params: ModelParams) -> float:
    """Largest per-channel gap between exact and closed log amplitudes.

    Only defined for the symmetric model.  For Rademacher steps the gap is the
    third-order Taylor remainder and obeys taylor_gap_bound(params).
    """
    if params.mode is not DetectorMode.SYMMETRIC:
        raise ValueError("gap is defined for the symmetric mode")
    exact = amplitudes_exact(microstate, params)
    y = float(np.sum(microstate.kappas)) / params.xi
    closed = amplitudes_closed(y, params.xi, params.mode)
    return max(
        abs(exact.log_b_plus_sq - closed.log_b_plus_sq),
        abs(exact.log_b_minus_sq - closed.log_b_minus_sq),
    )


def taylor_gap_bound(params: ModelParams) -> float:
    """Remainder bound n_steps * kappa^3 / (3 * (1 - kappa)) for |steps| <= kappa."""
    if not params.has_steps:
        raise ValueError("bound requires step-resolved parameters")
    k = params.kappa
    return params.n_steps * k**3 / (3.0 * (1.0 - k))
