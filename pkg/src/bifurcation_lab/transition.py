"""Transition-rate matrix, total rate, and final-state diagnostics.

For a two-level state psi and channel amplitudes b_j >= 0 the unnormalized
final-state matrix is R_jk = b_j b_k psi_j conj(psi_k).  Its trace is the
total transition rate

    w = |psi_plus|^2 |b_plus|^2 + |psi_minus|^2 |b_minus|^2

and R / w is the normalized (pure, rank-1) final state.  All ratios are
computed from log amplitudes with log-sum-exp, so channel probabilities and
normalized states stay finite for arbitrarily large interaction sizes; the
linear-space matrix entries themselves are exponentiated only at the end,
from the summed log magnitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .amplitudes import AmplitudePair
from .ensemble import DetectorMode

_HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class QubitState:
    """Unit-norm superposition (psi_plus, psi_minus) of the measured system."""

    psi_plus: complex
    psi_minus: complex

    def __post_init__(self) -> None:
        norm = abs(self.psi_plus) ** 2 + abs(self.psi_minus) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError("state must have unit norm")

    @classmethod
    def from_prob(cls, prob_plus: float, rel_phase: float = 0.0) -> "QubitState":
        """Build a state from |psi_plus|^2 and an optional relative phase."""
        if not (0.0 <= prob_plus <= 1.0):
            raise ValueError("prob_plus must lie in [0, 1]")
        amp = math.sqrt(prob_plus)
        return cls(complex(amp * math.cos(rel_phase), amp * math.sin(rel_phase)),
                   complex(math.sqrt(1.0 - prob_plus)))

    @property
    def prob_plus(self) -> float:
        return abs(self.psi_plus) ** 2

    @property
    def prob_minus(self) -> float:
        return abs(self.psi_minus) ** 2

    def log_probs(self) -> tuple[float, float]:
        """(log |psi_plus|^2, log |psi_minus|^2); -inf for an empty channel."""
        pp, pm = self.prob_plus, self.prob_minus
        return (math.log(pp) if pp > 0.0 else -math.inf,
                math.log(pm) if pm > 0.0 else -math.inf)


@dataclass(frozen=True)
class DensityMatrix2:
    """2x2 Hermitian matrix with nonnegative diagonal, indices (+, -)."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError("entries must be a 2x2 matrix")
        scale = max(float(np.max(np.abs(m))), 1.0)
        if np.max(np.abs(m - m.conj().T)) > _HERMITIAN_TOL * scale:
            raise ValueError("matrix must be Hermitian")
        if m[0, 0].real < 0.0 or m[1, 1].real < 0.0:
            raise ValueError("diagonal must be nonnegative")
        object.__setattr__(self, "entries", m)

    @property
    def trace(self) -> float:
        return float(self.entries[0, 0].real + self.entries[1, 1].real)


def _log_half_sums(amps: AmplitudePair) -> np.ndarray:
    half = 0.5 * np.array([amps.log_b_plus_sq, amps.log_b_minus_sq])
    return half[:, None] + half[None, :]


def rate_matrix(qubit: QubitState, amps: AmplitudePair) -> DensityMatrix2:
    """Unnormalized final-state matrix R_jk = b_j b_k psi_j conj(psi_k)."""
    psi = np.array([qubit.psi_plus, qubit.psi_minus])
    outer = psi[:, None] * psi.conj()[None, :]
    # exponentiate the summed logs so one tiny b_j cannot underflow an
    # otherwise representable entry
    return DensityMatrix2(np.exp(_log_half_sums(amps)) * outer)


def log_total_rate(qubit: QubitState, amps: AmplitudePair) -> float:
    """log of the total transition rate w, by log-sum-exp over channels."""
    lpp, lpm = qubit.log_probs()
    return float(np.logaddexp(lpp + amps.log_b_plus_sq, lpm + amps.log_b_minus_sq))


def total_rate(qubit: QubitState, amps: AmplitudePair) -> float:
    """Total transition rate w; equals the trace of rate_matrix."""
    return float(math.exp(log_total_rate(qubit, amps)))


def normalized_final_state(r: DensityMatrix2) -> DensityMatrix2:
    """R / Tr R.  Raises on a vanishing trace; see the log-space variant."""
    tr = r.trace
    if tr <= 0.0:
        raise ValueError("vanishing rate")
    return DensityMatrix2(r.entries / tr)


def normalized_final_state_from_amplitudes(
    qubit: QubitState, amps: AmplitudePair
) -> DensityMatrix2:
    """Normalized final state built directly in log space.

    Entries are exp(log(b_j b_k) - log w) * psi_j conj(psi_k), each bounded by
    one, so this never over- or underflows regardless of the interaction size.
    """
    psi = np.array([qubit.psi_plus, qubit.psi_minus])
    outer = psi[:, None] * psi.conj()[None, :]
    return DensityMatrix2(np.exp(_log_half_sums(amps) - log_total_rate(qubit, amps)) * outer)


def log_channel_probabilities(qubit: QubitState, amps: AmplitudePair) -> tuple[float, float]:
    """(log p_plus, log p_minus) for the per-channel shares of the rate."""
    lpp, lpm = qubit.log_probs()
    a = lpp + amps.log_b_plus_sq
    b = lpm + amps.log_b_minus_sq
    lw = np.logaddexp(a, b)
    return float(a - lw), float(b - lw)


def channel_probabilities(qubit: QubitState, amps: AmplitudePair) -> tuple[float, float]:
    """Channel shares (p_plus, p_minus) of the total rate; they sum to one.

    Computed as a two-way softmax of the log channel rates, so the pair is
    well defined even when both rates underflow linearly.
    """
    lpp, lpm = qubit.log_probs()
    a = lpp + amps.log_b_plus_sq
    b = lpm + amps.log_b_minus_sq
    m = max(a, b)
    ea, eb = math.exp(a - m), math.exp(b - m)
    s = ea + eb
    return ea / s, eb / s


def purity_defect(r: DensityMatrix2) -> float:
    """Max-norm of R @ R - (Tr R) R; zero exactly when R is rank one."""
    m = r.entries
    return float(np.max(np.abs(m @ m - r.trace * m)))


def _check_symmetric(amps: AmplitudePair) -> None:
    if amps.mode is not DetectorMode.SYMMETRIC:
        raise ValueError("defined for the symmetric mode")


def log_offdiagonal_suppression(qubit: QubitState, amps: AmplitudePair) -> float:
    """log |R_+-|; -inf when either state component vanishes."""
    _check_symmetric(amps)
    pp, pm = qubit.prob_plus, qubit.prob_minus
    if pp == 0.0 or pm == 0.0:
        return -math.inf
    return 0.5 * (amps.log_b_plus_sq + amps.log_b_minus_sq) + 0.5 * (
        math.log(pp) + math.log(pm)
    )


def offdiagonal_suppression(qubit: QubitState, amps: AmplitudePair) -> float:
    """Magnitude of the off-diagonal rate-matrix entry, b_+ b_- |psi_+ psi_-|."""
    lv = log_offdiagonal_suppression(qubit, amps)
    return 0.0 if lv == -math.inf else math.exp(lv)
