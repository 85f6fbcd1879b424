"""All-orders source/sink bookkeeping for the no-change channel.

With a source of strength |J|^2 and two equal sinks of strength |F|^2, the
repeated emit-and-reabsorb corrections to the no-change amplitude form a
geometric series in g * W, where g = |J|^2 |F|^2 and

    W = |psi_plus|^2 exp(xi (y - 1/2)) + |psi_minus|^2 exp(xi (-y - 1/2)).

Summed to all orders the process splits as

    p_no_change = 1 / (1 + g W)
    p_sign      = g * |psi_sign|^2 exp(xi (sign y - 1/2)) / (1 + g W)

which is norm preserving by construction.  The three shares are evaluated as
one softmax over log numerators, so they remain exact and finite for huge xi.
A truncated partial sum of the series is kept as a comparator for the
convergent regime g W < 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .transition import QubitState


@dataclass(frozen=True)
class Couplings:
    """Source strength |J|^2, common sink strength |F|^2, and their product."""

    j_sq: float
    f_sq: float

    def __post_init__(self) -> None:
        if self.j_sq < 0.0 or self.f_sq < 0.0:
            raise ValueError("coupling strengths must be nonnegative")

    @property
    def g(self) -> float:
        return self.j_sq * self.f_sq


@dataclass(frozen=True)
class ProcessSplit:
    """No-change / plus / minus shares of the full process, with their logs."""

    p_no_change: float
    p_plus: float
    p_minus: float
    log_p_no_change: float
    log_p_plus: float
    log_p_minus: float

    def __post_init__(self) -> None:
        for p in (self.p_no_change, self.p_plus, self.p_minus):
            if not (0.0 <= p <= 1.0):
                raise ValueError("shares must lie in [0, 1]")


def _log_channel_rates(qubit: QubitState, xi: float, y: float) -> tuple[float, float]:
    lpp, lpm = qubit.log_probs()
    return lpp + xi * (y - 0.5), lpm + xi * (-y - 0.5)


def log_gw(qubit: QubitState, xi: float, y: float, couplings: Couplings) -> float:
    """log(g * W); -inf when the coupling vanishes."""
    lt_plus, lt_minus = _log_channel_rates(qubit, xi, y)
    if couplings.g == 0.0:
        return -math.inf
    return math.log(couplings.g) + float(np.logaddexp(lt_plus, lt_minus))


def full_split(qubit: QubitState, xi: float, y: float, couplings: Couplings) -> ProcessSplit:
    """All-orders split into no-change and the two marked channels."""
    lt_plus, lt_minus = _log_channel_rates(qubit, xi, y)
    lg = math.log(couplings.g) if couplings.g > 0.0 else -math.inf
    nums = np.array([0.0, lg + lt_plus, lg + lt_minus])
    m = np.max(nums)
    exps = np.exp(nums - m)
    total = exps.sum()
    shares = exps / total
    logs = nums - (m + math.log(total))
    return ProcessSplit(
        p_no_change=float(shares[0]),
        p_plus=float(shares[1]),
        p_minus=float(shares[2]),
        log_p_no_change=float(logs[0]),
        log_p_plus=float(logs[1]),
        log_p_minus=float(logs[2]),
    )


def truncated_no_change(
    qubit: QubitState, xi: float, y: float, couplings: Couplings, k_max: int
) -> tuple[float, bool]:
    """Partial sum of the no-change series, sum_{k=0..k_max} (-g W)^k.

    The second element reports convergence (g W < 1).  In the convergent
    regime the partial sum differs from the resummed 1 / (1 + g W) by at most
    geometric_tail_bound(g W, k_max); outside it the partial sum is returned
    as written but only the resummed value is meaningful.
    """
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    lgw = log_gw(qubit, xi, y, couplings)
    gw = math.exp(lgw)
    converged = gw < 1.0
    terms = []
    term = 1.0
    for _ in range(k_max + 1):
        terms.append(term)
        term *= -gw
    return math.fsum(terms), converged


def geometric_tail_bound(gw: float, k_max: int) -> float:
    """(g W)^(k_max + 1) / (1 - g W), valid for g W < 1."""
    if not (0.0 <= gw < 1.0):
        raise ValueError("bound requires 0 <= g W < 1")
    return gw ** (k_max + 1) / (1.0 - gw)


def log_limiting_channel_probs(qubit: QubitState, xi: float, y: float) -> tuple[float, float]:
    """(log p_plus, log p_minus) of the dominant-coupling channel split."""
    lpp, lpm = qubit.log_probs()
    a = lpp + xi * y
    b = lpm - xi * y
    lw = float(np.logaddexp(a, b))
    return a - lw, b - lw


def limiting_channel_probs(qubit: QubitState, xi: float, y: float) -> tuple[float, float]:
    """Channel probabilities once the no-change share is negligible.

    Equals the rate shares of the marked channels, so it matches
    transition.channel_probabilities on the same state, bias, and size.
    """
    lpp, lpm = qubit.log_probs()
    a = lpp + xi * y
    b = lpm - xi * y
    m = max(a, b)
    ea, eb = math.exp(a - m), math.exp(b - m)
    s = ea + eb
    return ea / s, eb / s
