"""Apparatus microstate ensembles.

A microstate is a vector of per-step enhancement factors kappa_n, each an
i.i.d. draw with mean zero and variance kappa**2.  The whole vector is
summarized by the net bias

    y = (1 / xi) * sum_n kappa_n,       xi = n_steps * kappa**2,

which is the only quantity the closed-form channel amplitudes depend on.
Two step distributions are provided: Rademacher (kappa_n = +/-kappa,
equiprobable, so y lives on a lattice) and a truncated Gaussian
(kappa_n ~ N(0, kappa**2) conditioned on |kappa_n| < 1, so y is continuous).

Parameters may also be given in "marginal" form (xi alone, no step vector);
in that case only y-level sampling is available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

MAX_KAPPA = 0.5  # keeps every factor 1 +/- kappa_n strictly positive
_REDRAW_CAP = 1000


class KappaDistribution(Enum):
    RADEMACHER = "rademacher"
    TRUNCATED_GAUSSIAN = "gaussian"


class DetectorMode(Enum):
    SYMMETRIC = "symmetric"
    ASYMMETRIC_DETECTOR = "asymmetric"


@dataclass(frozen=True)
class RngSeed:
    """Seed plus substream index; identical pairs give identical draws."""

    seed: int
    stream_index: int = 0

    def __post_init__(self) -> None:
        for name in ("seed", "stream_index"):
            v = getattr(self, name)
            if not (0 <= int(v) < 2**64):
                raise ValueError(f"{name} must be a 64-bit unsigned integer")

    def generator(self, *subkeys: int) -> np.random.Generator:
        """Return the generator for this (seed, stream) and optional subkeys."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_index, *subkeys))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class ModelParams:
    """Ensemble shape: step count, per-step scale, and the derived size xi.

    Step-resolved parameters always satisfy xi == n_steps * kappa * kappa as
    computed from the stored fields.  Marginal parameters (n_steps and kappa
    both None) carry xi directly and support only y-level sampling.
    """

    xi: float
    n_steps: int | None = None
    kappa: float | None = None
    kappa_dist: KappaDistribution = KappaDistribution.RADEMACHER
    mode: DetectorMode = DetectorMode.SYMMETRIC

    def __post_init__(self) -> None:
        if (self.n_steps is None) != (self.kappa is None):
            raise ValueError("n_steps and kappa must be given together")
        if self.n_steps is not None:
            if self.n_steps < 1:
                raise ValueError("n_steps must be a positive integer")
            if not (0.0 < self.kappa <= MAX_KAPPA):
                raise ValueError(f"kappa must lie in (0, {MAX_KAPPA}]")
            if self.xi != self.n_steps * self.kappa * self.kappa:
                raise ValueError("xi must equal n_steps * kappa**2 exactly")
        else:
            if not (self.xi >= 0.0 and math.isfinite(self.xi)):
                raise ValueError("xi must be finite and nonnegative")

    @classmethod
    def from_steps(
        cls,
        n_steps: int,
        kappa: float,
        kappa_dist: KappaDistribution = KappaDistribution.RADEMACHER,
        mode: DetectorMode = DetectorMode.SYMMETRIC,
    ) -> "ModelParams":
        return cls(n_steps * kappa * kappa, n_steps, kappa, kappa_dist, mode)

    @classmethod
    def from_xi(
        cls,
        xi: float,
        kappa_dist: KappaDistribution = KappaDistribution.TRUNCATED_GAUSSIAN,
        mode: DetectorMode = DetectorMode.SYMMETRIC,
    ) -> "ModelParams":
        """Marginal parameterization: y-level sampling only, no step vector."""
        return cls(xi, None, None, kappa_dist, mode)

    @property
    def has_steps(self) -> bool:
        return self.n_steps is not None


@dataclass(frozen=True)
class Microstate:
    """One apparatus initial condition: the kappa vector and its net bias y."""

    kappas: np.ndarray
    y: float

    def validate(self, params: ModelParams, rel_tol: float = 1e-12) -> None:
        if params.n_steps is None or len(self.kappas) != params.n_steps:
            raise ValueError("kappa vector length does not match n_steps")
        if np.any(np.abs(self.kappas) >= 1.0):
            raise ValueError("|kappa_n| must be < 1")
        expected = float(np.sum(self.kappas)) / params.xi
        scale = max(abs(expected), abs(self.y), 1.0)
        if abs(expected - self.y) > rel_tol * scale:
            raise ValueError("stored y does not match its kappa vector")


def _draw_truncated_normal(
    rng: np.random.Generator, loc, scale: float, size
) -> np.ndarray:
    """Normal draws conditioned on |x| < 1, by redraw."""
    out = rng.normal(loc, scale, size)
    bad = np.abs(out) >= 1.0
    attempts = 0
    loc_arr = np.broadcast_to(np.asarray(loc, dtype=float), out.shape)
    while bad.any():
        attempts += 1
        if attempts > _REDRAW_CAP:
            raise RuntimeError("degenerate kappa distribution")
        out[bad] = rng.normal(loc_arr[bad], scale)
        bad = np.abs(out) >= 1.0
    return out


def draw_microstate(params: ModelParams, rng: np.random.Generator) -> Microstate:
    """Draw one microstate: i.i.d. kappa_n, mean 0, variance kappa**2."""
    if not params.has_steps:
        raise ValueError("microstate vectors require step-resolved parameters")
    n, kappa = params.n_steps, params.kappa
    if params.kappa_dist is KappaDistribution.RADEMACHER:
        kappas = kappa * (2.0 * rng.integers(0, 2, n) - 1.0)
    else:
        kappas = _draw_truncated_normal(rng, 0.0, kappa, n)
    y = float(np.sum(kappas)) / params.xi
    return Microstate(kappas, y)


def aggregate_y(microstate: Microstate, params: ModelParams) -> float:
    """Net bias of a microstate: sum of its kappa_n divided by xi."""
    if params.n_steps is None or len(microstate.kappas) != params.n_steps:
        raise ValueError("kappa vector length does not match n_steps")
    return float(np.sum(microstate.kappas)) / params.xi


def draw_y_samples(params: ModelParams, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Draw net-bias values from the exact aggregate law, without vectors.

    Rademacher sums reduce to a binomial count of up-steps; truncated-Gaussian
    sums are accumulated step by step.  Marginal parameters use the Gaussian
    aggregate N(0, 1/xi) directly (unit variance when xi == 0, where the bias
    scale is immaterial).
    """
    if not params.has_steps:
        if params.xi > 0.0:
            return rng.normal(0.0, 1.0 / math.sqrt(params.xi), n_samples)
        return rng.normal(0.0, 1.0, n_samples)
    n, kappa = params.n_steps, params.kappa
    if params.kappa_dist is KappaDistribution.RADEMACHER:
        ups = rng.binomial(n, 0.5, n_samples)
        return (2.0 * ups - n) * kappa / params.xi
    total = np.zeros(n_samples)
    # step-chunked so n_samples x n_steps never materializes at once
    cols = max(1, min(n, 2**22 // max(1, n_samples)))
    done = 0
    while done < n:
        take = min(cols, n - done)
        total += _draw_truncated_normal(rng, 0.0, kappa, (n_samples, take)).sum(axis=1)
        done += take
    return total / params.xi


def ensemble_moments(samples: Sequence[Microstate | float]) -> tuple[float, float]:
    """Sample mean and unbiased variance of y over a batch of microstates."""
    if len(samples) < 2:
        raise ValueError("need at least 2 samples for moments")
    ys = np.array([s.y if isinstance(s, Microstate) else float(s) for s in samples])
    return float(ys.mean()), float(ys.var(ddof=1))
