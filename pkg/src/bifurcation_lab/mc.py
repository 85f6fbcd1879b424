"""Monte Carlo engine for rate-selected transitions.

Target distribution.  A microstate with net bias y completes a transition at
rate w(y); the realized final states are therefore distributed as
Q(y) = q(y) w(y) over the initial ensemble q.  Outcomes within a record are
drawn with the per-channel shares p_plus, p_minus of its rate.

Selection mechanisms.  Two are provided and cross-validated:

* Importance weighting (default).  Records are drawn from an equal-weight
  mixture of exponentially tilted copies of the initial law, one tilt per
  channel (exp(+xi y) and exp(-xi y) for the symmetric detector; the
  asymmetric detector tilts one channel and leaves the other untouched).
  The mixture is channel-symmetric and independent of the measured state,
  and each record carries the exact density ratio

      weight = w(alpha) * q(alpha) / proposal(alpha)

  so weighted statistics are unbiased for Q while the weights stay bounded
  for any interaction size.  Drawing from the untilted ensemble instead
  would concentrate with probability one at |y| << 1 where Q has
  exponentially little mass, collapsing the effective sample size to O(1)
  already at moderate xi; the tilted mixture keeps it at O(n).  The tilts
  factorize over steps, so the same scheme covers the step-resolved laws
  (per-step Rademacher bias or shifted truncated Gaussians) and the exact
  product amplitudes.  By construction the weight reduces to the bare rate
  w when xi == 0 (where it is identically 1) and its expectation is the
  ensemble-mean rate, which is 1.

* Rejection sampling.  Microstates are drawn from the untilted ensemble and
  accepted with probability w / w_max, using a pilot-calibrated bound; it is
  practical only while typical rates are within a few orders of magnitude of
  the bound, and it errors out when nothing is accepted.

Everything is deterministic given the seed: records are generated in
fixed-size chunks, chunk i from substream i, and concatenated in chunk
order, so results do not depend on the worker-thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit, ndtr

from .amplitudes import AmplitudeForm, closed_log_sq
from .analytic import final_cdf
from .ensemble import (
    DetectorMode,
    KappaDistribution,
    ModelParams,
    RngSeed,
    _draw_truncated_normal,
    draw_y_samples,
)
from .transition import QubitState

_PILOT_KEY = 2**32
_PILOT_SIZE = 1000
_PILOT_MARGIN = 1.5
_CLAMP_LIMIT = 1e-4
_MATRIX_BUDGET = 2**21  # floats per step-resolved chunk


class SelectionScheme(Enum):
    IMPORTANCE_WEIGHTING = "importance"
    REJECTION_SAMPLING = "rejection"


@dataclass(frozen=True)
class SimConfig:
    params: ModelParams
    qubit: QubitState
    n_samples: int
    seed: RngSeed
    selection: SelectionScheme = SelectionScheme.IMPORTANCE_WEIGHTING
    amplitude_form: AmplitudeForm = AmplitudeForm.CLOSED_FORM
    histogram_bins: int = 60
    y_range: tuple[float, float] | None = None
    chunk_size: int = 16384
    threads: int = 1

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.histogram_bins < 1:
            raise ValueError("histogram_bins must be positive")
        if self.y_range is not None and not self.y_range[0] < self.y_range[1]:
            raise ValueError("y_range must be well ordered")
        if self.chunk_size < 1 or self.threads < 1:
            raise ValueError("chunk_size and threads must be positive")
        if self.amplitude_form is AmplitudeForm.EXACT_PRODUCT and not self.params.has_steps:
            raise ValueError("exact product amplitudes require step-resolved parameters")
        if (
            not self.params.has_steps
            and self.params.kappa_dist is KappaDistribution.RADEMACHER
        ):
            raise ValueError("Rademacher sampling requires step-resolved parameters")

    def resolved_y_range(self) -> tuple[float, float]:
        if self.y_range is not None:
            return self.y_range
        half = 1.0 + 8.0 / math.sqrt(self.params.xi) if self.params.xi > 0.0 else 8.0
        return (-half, half)


@dataclass(frozen=True)
class TransitionRecord:
    y: float
    outcome: int  # +1 or -1
    weight: float
    p_plus: float
    log_w: float  # log of the transition rate w(alpha)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    density: np.ndarray
    weighted_counts: np.ndarray
    total_weight: float
    ess: float


@dataclass
class SimResult:
    ys: np.ndarray
    outcomes: np.ndarray
    weights: np.ndarray
    p_plus: np.ndarray
    log_rates: np.ndarray
    accepted_count: int
    born_plus: float
    born_ci_halfwidth: float
    mean_w: float
    ess: float
    ks_stat: float | None
    chi2_stat: float | None
    chi2_dof: int | None
    clamped_count: int
    config: SimConfig

    @property
    def records(self) -> list[TransitionRecord]:
        return [
            TransitionRecord(float(y), int(o), float(w), float(p), float(lw))
            for y, o, w, p, lw in zip(
                self.ys, self.outcomes, self.weights, self.p_plus, self.log_rates
            )
        ]


# ---------------------------------------------------------------------------
# proposal machinery


def _tilt_channels(mode: DetectorMode) -> tuple[float, float]:
    if mode is DetectorMode.ASYMMETRIC_DETECTOR:
        return (1.0, 0.0)
    return (1.0, -1.0)


def _log_tilt_norm(params: ModelParams, s: float) -> float:
    """log of the tilt normalizer E[exp(s * xi * y)] under the initial law."""
    if s == 0.0:
        return 0.0
    if not params.has_steps:
        return s * s * params.xi / 2.0
    n, kappa = params.n_steps, params.kappa
    if params.kappa_dist is KappaDistribution.RADEMACHER:
        return n * math.log(math.cosh(s * kappa))
    num = ndtr((1.0 - s * kappa * kappa) / kappa) - ndtr((-1.0 - s * kappa * kappa) / kappa)
    den = ndtr(1.0 / kappa) - ndtr(-1.0 / kappa)
    return n * (s * s * kappa * kappa / 2.0 + math.log(num / den))


def _draw_biases(
    params: ModelParams,
    rng: np.random.Generator,
    s: np.ndarray,
    need_matrix: bool,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Draw net biases (and the step matrix if requested) under per-row tilts."""
    rows = len(s)
    if not params.has_steps:
        if params.xi > 0.0:
            return rng.normal(s, 1.0 / math.sqrt(params.xi), rows), None
        return rng.normal(0.0, 1.0, rows), None
    n, kappa = params.n_steps, params.kappa
    if params.kappa_dist is KappaDistribution.RADEMACHER:
        p_up = expit(2.0 * s * kappa)
        if need_matrix:
            signs = 2.0 * (rng.random((rows, n)) < p_up[:, None]) - 1.0
            k = kappa * signs
            return k.sum(axis=1) / params.xi, k
        ups = rng.binomial(n, p_up)
        return (2.0 * ups - n) * kappa / params.xi, None
    loc = np.broadcast_to((s * kappa * kappa)[:, None], (rows, n))
    k = _draw_truncated_normal(rng, loc, kappa, (rows, n))
    y = k.sum(axis=1) / params.xi
    return y, (k if need_matrix else None)


def _log_rate(
    plan: "_ChunkPlan", xi: float, lbp: np.ndarray, lbm: np.ndarray
) -> np.ndarray:
    """log w per record; identically zero at xi == 0 where w == 1 by unit norm."""
    if xi == 0.0:
        return np.zeros_like(lbp)
    lpp, lpm = plan.log_psi
    return np.logaddexp(lpp + lbp, lpm + lbm)


def _log_amplitudes(
    config: SimConfig, y: np.ndarray, k: np.ndarray | None
) -> tuple[np.ndarray, np.ndarray]:
    mode = config.params.mode
    if config.amplitude_form is AmplitudeForm.CLOSED_FORM:
        return closed_log_sq(y, config.params.xi, mode)
    lbp = np.log1p(k).sum(axis=1)
    if mode is DetectorMode.ASYMMETRIC_DETECTOR:
        return lbp, np.zeros_like(lbp)
    return lbp, np.log1p(-k).sum(axis=1)


@dataclass(frozen=True)
class _ChunkPlan:
    rows: list[int]
    need_matrix: bool
    log_norms: tuple[float, float]
    log_psi: tuple[float, float]
    log_wmax: float | None = None  # rejection bound


def _plan(config: SimConfig, log_wmax: float | None) -> _ChunkPlan:
    params = config.params
    need_matrix = config.amplitude_form is AmplitudeForm.EXACT_PRODUCT or (
        params.has_steps and params.kappa_dist is KappaDistribution.TRUNCATED_GAUSSIAN
    )
    chunk = config.chunk_size
    if need_matrix:
        chunk = min(chunk, max(64, _MATRIX_BUDGET // max(1, params.n_steps)))
    rows = [chunk] * (config.n_samples // chunk)
    if config.n_samples % chunk:
        rows.append(config.n_samples % chunk)
    s1, s2 = _tilt_channels(params.mode)
    return _ChunkPlan(
        rows=rows,
        need_matrix=need_matrix,
        log_norms=(_log_tilt_norm(params, s1), _log_tilt_norm(params, s2)),
        log_psi=config.qubit.log_probs(),
        log_wmax=log_wmax,
    )


def _chunk_importance(config: SimConfig, plan: _ChunkPlan, idx: int, rows: int):
    rng = config.seed.generator(idx)
    s1, s2 = _tilt_channels(config.params.mode)
    pick = rng.integers(0, 2, rows)
    s = np.where(pick == 0, s1, s2)
    y, k = _draw_biases(config.params, rng, s, plan.need_matrix)
    lbp, lbm = _log_amplitudes(config, y, k)
    lpp, lpm = plan.log_psi
    log_rate = _log_rate(plan, config.params.xi, lbp, lbm)
    p_plus = expit((lpp + lbp) - (lpm + lbm))
    x = config.params.xi * y
    log_t = np.logaddexp(s1 * x - plan.log_norms[0], s2 * x - plan.log_norms[1]) - math.log(2.0)
    log_weight = log_rate - log_t
    outcome = np.where(rng.random(rows) < p_plus, 1, -1)
    return y, outcome, np.exp(log_weight), p_plus, log_rate, 0, None


def _chunk_rejection(config: SimConfig, plan: _ChunkPlan, idx: int, rows: int):
    rng = config.seed.generator(idx)
    s = np.zeros(rows)
    y, k = _draw_biases(config.params, rng, s, plan.need_matrix)
    lbp, lbm = _log_amplitudes(config, y, k)
    lpp, lpm = plan.log_psi
    log_rate = _log_rate(plan, config.params.xi, lbp, lbm)
    p_plus = expit((lpp + lbp) - (lpm + lbm))
    with np.errstate(divide="ignore"):
        accept = np.log(rng.random(rows)) < log_rate - plan.log_wmax
    clamped = int(np.sum(log_rate > plan.log_wmax))
    outcome = np.where(rng.random(rows) < p_plus, 1, -1)
    keep = np.flatnonzero(accept)
    return (
        y[keep],
        outcome[keep],
        np.ones(len(keep)),
        p_plus[keep],
        log_rate[keep],
        clamped,
        np.exp(log_rate),  # raw rates, for the ensemble-mean diagnostic
    )


def _pilot_rate_bound(config: SimConfig) -> float:
    """log w_max from a pilot pass over the untilted ensemble."""
    rng = config.seed.generator(_PILOT_KEY)
    y = draw_y_samples(config.params, _PILOT_SIZE, rng)
    y_cap = max(1.0, float(np.max(np.abs(y)))) * _PILOT_MARGIN
    return config.params.xi * (y_cap - 0.5)


# ---------------------------------------------------------------------------
# driver and statistics


def run_simulation(config: SimConfig) -> SimResult:
    """Generate the record ensemble and its summary statistics."""
    rejection = config.selection is SelectionScheme.REJECTION_SAMPLING
    log_wmax = _pilot_rate_bound(config) if rejection else None
    plan = _plan(config, log_wmax)
    worker = _chunk_rejection if rejection else _chunk_importance

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            parts = list(pool.map(lambda i: worker(config, plan, i, plan.rows[i]),
                                  range(len(plan.rows))))
    else:
        parts = [worker(config, plan, i, plan.rows[i]) for i in range(len(plan.rows))]

    ys = np.concatenate([p[0] for p in parts])
    outcomes = np.concatenate([p[1] for p in parts])
    weights = np.concatenate([p[2] for p in parts])
    p_plus = np.concatenate([p[3] for p in parts])
    log_rates = np.concatenate([p[4] for p in parts])
    clamped = sum(p[5] for p in parts)

    if rejection:
        if len(ys) == 0:
            raise RuntimeError("no transitions at given parameters")
        if clamped > _CLAMP_LIMIT * config.n_samples:
            raise RuntimeError("rate bound clamped too often; rejection unsuitable here")
        raw_rates = np.concatenate([p[6] for p in parts])
        mean_w = float(raw_rates.mean())
    else:
        mean_w = float(weights.mean())

    born, ci = _born_from_arrays(outcomes, weights)
    ess = _effective_sample_size(weights)

    result = SimResult(
        ys=ys,
        outcomes=outcomes,
        weights=weights,
        p_plus=p_plus,
        log_rates=log_rates,
        accepted_count=len(ys),
        born_plus=born,
        born_ci_halfwidth=ci,
        mean_w=mean_w,
        ess=ess,
        ks_stat=None,
        chi2_stat=None,
        chi2_dof=None,
        clamped_count=clamped,
        config=config,
    )

    continuous = (
        config.params.kappa_dist is KappaDistribution.TRUNCATED_GAUSSIAN
        and config.amplitude_form is AmplitudeForm.CLOSED_FORM
    )
    # the analytic mixture only describes the symmetric detector
    if config.params.xi > 0.0 and config.params.mode is DetectorMode.SYMMETRIC:
        if continuous and len(ys) >= 100:
            result.ks_stat = ks_statistic(result, config.qubit, config.params.xi)
        elif not continuous:
            hist = accepted_y_histogram(result, config.histogram_bins, config.resolved_y_range())
            try:
                stat, dof = chi_square(hist, config.qubit, config.params.xi)
                result.chi2_stat, result.chi2_dof = stat, dof
            except ValueError:
                pass  # too little mass in range for a meaningful statistic
    return result


def _effective_sample_size(weights: np.ndarray) -> float:
    total = float(weights.sum())
    sq = float((weights * weights).sum())
    return total * total / sq if sq > 0.0 else 0.0


def _born_from_arrays(outcomes: np.ndarray, weights: np.ndarray) -> tuple[float, float]:
    total = float(weights.sum())
    if total <= 0.0:
        raise ValueError("no weight in record ensemble")
    freq = float(weights[outcomes == 1].sum()) / total
    ess = _effective_sample_size(weights)
    return freq, 3.0 * math.sqrt(max(freq * (1.0 - freq), 0.0) / ess)


def born_estimate(result: SimResult) -> tuple[float, float]:
    """Weighted frequency of the plus outcome with a 3-sigma half-width.

    The half-width uses the effective sample size (sum w)^2 / sum w^2, which
    reduces to the plain binomial error for unweighted records.
    """
    if result.accepted_count < 1:
        raise ValueError("empty result")
    return _born_from_arrays(result.outcomes, result.weights)


def accepted_y_histogram(
    result: SimResult, bins: int, y_range: tuple[float, float]
) -> Histogram:
    """Weighted, density-normalized histogram of record biases."""
    if result.accepted_count < 1:
        raise ValueError("empty result")
    counts, edges = np.histogram(
        result.ys, bins=bins, range=y_range, weights=result.weights
    )
    total = float(counts.sum())
    if total <= 0.0:
        raise ValueError("no weight inside histogram range")
    widths = np.diff(edges)
    in_range = (result.ys >= y_range[0]) & (result.ys <= y_range[1])
    return Histogram(
        edges=edges,
        density=counts / (total * widths),
        weighted_counts=counts,
        total_weight=total,
        ess=_effective_sample_size(result.weights[in_range]),
    )


def ks_statistic(result: SimResult, qubit: QubitState, xi: float) -> float:
    """Sup distance between the weighted record CDF and the analytic mixture.

    Defined only for continuous-bias configurations (truncated-Gaussian steps
    with closed-form amplitudes); lattice ensembles should use chi_square.
    """
    cfg = result.config
    if (
        cfg.params.kappa_dist is not KappaDistribution.TRUNCATED_GAUSSIAN
        or cfg.amplitude_form is not AmplitudeForm.CLOSED_FORM
    ):
        raise ValueError("KS undefined on lattice Y; use chi_square")
    if result.accepted_count < 100:
        raise ValueError("need at least 100 records")
    order = np.argsort(result.ys, kind="stable")
    ys = result.ys[order]
    w = result.weights[order]
    cum = np.cumsum(w) / w.sum()
    model = final_cdf(ys, xi, qubit)
    below = np.concatenate(([0.0], cum[:-1]))
    return float(np.max(np.maximum(cum - model, model - below)))


def chi_square(histogram: Histogram, qubit: QubitState, xi: float) -> tuple[float, int]:
    """Pearson statistic of a weighted histogram against bin-integrated Q.

    Observed counts are rescaled to the effective sample size and sparse bins
    are pooled left to right until every group expects at least 5 counts.
    Returns (statistic, degrees of freedom).
    """
    probs = np.diff(final_cdf(histogram.edges, xi, qubit))
    covered = float(probs.sum())
    if covered <= 0.0:
        raise ValueError("model places no mass inside the histogram range")
    ess = histogram.ess
    expected = ess * probs / covered
    observed = ess * histogram.weighted_counts / histogram.total_weight

    groups_obs: list[float] = []
    groups_exp: list[float] = []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += float(o)
        acc_e += float(e)
        if acc_e >= 5.0:
            groups_obs.append(acc_o)
            groups_exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0.0:
        if groups_exp:
            groups_obs[-1] += acc_o
            groups_exp[-1] += acc_e
        else:
            raise ValueError("expected counts too small in every bin")
    if len(groups_exp) < 2:
        raise ValueError("fewer than two usable bins after pooling")
    obs = np.array(groups_obs)
    exp = np.array(groups_exp)
    stat = float(np.sum((obs - exp) ** 2 / exp))
    return stat, len(exp) - 1
