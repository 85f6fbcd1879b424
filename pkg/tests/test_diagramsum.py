"""All-orders process split: unitarity, series comparator, limiting shares."""

import math
from fractions import Fraction

import numpy as np
import pytest

from bifurcation_lab import (
    Couplings,
    QubitState,
    amplitudes_closed,
    channel_probabilities,
    full_split,
    geometric_tail_bound,
    limiting_channel_probs,
    log_limiting_channel_probs,
    truncated_no_change,
)
from bifurcation_lab.diagramsum import log_gw


def random_state(rng) -> QubitState:
    return QubitState.from_prob(rng.uniform(0.0, 1.0), rng.uniform(0.0, 2 * math.pi))


def test_zero_coupling_never_scatters():
    split = full_split(QubitState.from_prob(0.4), 3.0, 0.2, Couplings(0.0, 5.0))
    assert (split.p_no_change, split.p_plus, split.p_minus) == (1.0, 0.0, 0.0)


def test_unit_coupling_no_interaction():
    split = full_split(QubitState.from_prob(0.7), 0.0, 0.0, Couplings(1.0, 1.0))
    assert split.p_no_change == pytest.approx(0.5, abs=1e-12)
    assert split.p_plus == pytest.approx(0.35, abs=1e-12)
    assert split.p_minus == pytest.approx(0.15, abs=1e-12)


def test_large_xi_log_space_values():
    # xi = 60, y = 1, |psi+|^2 = 0.7, g = 1:
    #   p_no_change ~ 1/(0.7 e^30), p_minus/p_plus = (0.3/0.7) e^-120
    split = full_split(QubitState.from_prob(0.7), 60.0, 1.0, Couplings(1.0, 1.0))
    assert split.log_p_no_change == pytest.approx(-(30.0 + math.log(0.7)), abs=1e-9)
    assert split.log_p_minus - split.log_p_plus == pytest.approx(
        math.log(0.3 / 0.7) - 120.0, abs=1e-9
    )


def test_unitarity_over_random_draws():
    rng = np.random.default_rng(11)
    for _ in range(10000):
        xi = float(np.exp(rng.uniform(math.log(1e-3), math.log(1e3))))
        y = float(rng.normal(0.0, 1.0 / math.sqrt(xi))) if rng.random() < 0.5 else float(
            rng.choice([-1.0, 1.0])
        )
        g = float(np.exp(rng.uniform(math.log(1e-8), math.log(1e8))))
        split = full_split(random_state(rng), xi, y, Couplings(g, 1.0))
        total = split.p_no_change + split.p_plus + split.p_minus
        assert abs(total - 1.0) <= 1e-12


def test_truncated_series_examples():
    q = QubitState.from_prob(0.5)
    partial, converged = truncated_no_change(q, 1.0, 0.3, Couplings(2.0, 1.5), 0)
    assert partial == 1.0 and isinstance(converged, bool)
    # g W = 0.5 via xi = 0 (W = 1) and g = 0.5
    partial, converged = truncated_no_change(q, 0.0, 0.0, Couplings(0.5, 1.0), 10)
    assert converged
    assert abs(partial - 2.0 / 3.0) <= geometric_tail_bound(0.5, 10)
    assert geometric_tail_bound(0.5, 10) == pytest.approx(2.0**-10)
    _, converged = truncated_no_change(q, 0.0, 0.0, Couplings(2.0, 1.0), 5)
    assert not converged
    with pytest.raises(ValueError):
        truncated_no_change(q, 0.0, 0.0, Couplings(0.5, 1.0), -1)


def test_truncated_series_tail_bound_exact_arithmetic():
    # the resummation claim, verified in exact rationals on the same g W
    # values the float path sees, plus a float-level check where the bound
    # is far above machine noise
    rng = np.random.default_rng(13)
    q_one = Fraction(1)
    for _ in range(300):
        qubit = random_state(rng)
        xi = float(rng.uniform(0.0, 5.0))
        y = float(rng.normal(0.0, 1.0))
        g = float(np.exp(rng.uniform(math.log(1e-4), 0.0)))
        couplings = Couplings(g, 1.0)
        gw = math.exp(log_gw(qubit, xi, y, couplings))
        if gw >= 1.0:
            continue
        k_max = int(rng.integers(0, 30))
        x = Fraction(gw)
        partial_exact = sum((-x) ** k for k in range(k_max + 1))
        closed_exact = q_one / (1 + x)
        bound_exact = x ** (k_max + 1) / (1 - x)
        assert abs(partial_exact - closed_exact) <= bound_exact
        # the float partial sum reproduces the exact one
        partial, converged = truncated_no_change(qubit, xi, y, couplings, k_max)
        assert converged
        assert partial == pytest.approx(float(partial_exact), rel=1e-13, abs=1e-300)


def test_truncated_series_tail_bound_float_regime():
    rng = np.random.default_rng(17)
    checked = 0
    while checked < 200:
        qubit = random_state(rng)
        xi = float(rng.uniform(0.0, 3.0))
        y = float(rng.normal(0.0, 1.0))
        g = float(np.exp(rng.uniform(math.log(1e-3), 0.0)))
        couplings = Couplings(g, 1.0)
        gw = math.exp(log_gw(qubit, xi, y, couplings))
        if not (1e-3 < gw < 0.97):
            continue
        k_max = max(0, min(20, int(-10.0 / math.log10(gw)) - 1))
        bound = geometric_tail_bound(gw, k_max)
        if bound < 1e-11:
            continue
        partial, converged = truncated_no_change(qubit, xi, y, couplings, k_max)
        assert converged
        closed = full_split(qubit, xi, y, couplings).p_no_change
        assert abs(partial - closed) <= bound
        checked += 1


def test_limiting_channel_examples():
    q = QubitState.from_prob(0.7)
    p_plus, p_minus = limiting_channel_probs(q, 1.0, 1.0)
    assert p_plus == pytest.approx(0.945178837561174, rel=1e-12)
    assert p_minus == pytest.approx(0.054821162438825934, rel=1e-10)
    half = QubitState.from_prob(0.5)
    assert limiting_channel_probs(half, 17.0, 0.0) == pytest.approx((0.5, 0.5))
    # plus channel takes everything at y = +1 and large xi
    _, log_p_minus = log_limiting_channel_probs(q, 60.0, 1.0)
    assert log_p_minus < math.log(1e-20)


def test_limiting_matches_transition_shares():
    rng = np.random.default_rng(19)
    for _ in range(200):
        q = random_state(rng)
        xi = float(rng.uniform(0.0, 100.0))
        y = float(rng.normal(0.0, 1.0))
        expected = channel_probabilities(q, amplitudes_closed(y, xi))
        got = limiting_channel_probs(q, xi, y)
        assert got[0] == pytest.approx(expected[0], abs=1e-12)
        assert got[1] == pytest.approx(expected[1], abs=1e-12)


def test_split_approaches_limit_at_strong_coupling():
    rng = np.random.default_rng(23)
    for _ in range(100):
        q = random_state(rng)
        xi = float(rng.uniform(0.0, 10.0))
        y = float(rng.normal(0.0, 1.0))
        couplings = Couplings(1e12, 1.0)  # g W >= 1e9 across these draws
        if math.exp(log_gw(q, xi, y, couplings)) < 1e9:
            continue
        split = full_split(q, xi, y, couplings)
        scattered = split.p_plus + split.p_minus
        lim = limiting_channel_probs(q, xi, y)
        assert split.p_plus / scattered == pytest.approx(lim[0], abs=1e-9)
        assert split.p_minus / scattered == pytest.approx(lim[1], abs=1e-9)


def test_mirror_symmetry():
    rng = np.random.default_rng(29)
    for _ in range(100):
        p = float(rng.uniform(0.0, 1.0))
        xi = float(rng.uniform(0.0, 30.0))
        y = float(rng.normal(0.0, 1.0))
        g = float(np.exp(rng.uniform(-3.0, 3.0)))
        a = full_split(QubitState.from_prob(p), xi, y, Couplings(g, 1.0))
        b = full_split(QubitState.from_prob(1.0 - p), xi, -y, Couplings(g, 1.0))
        assert a.p_plus == pytest.approx(b.p_minus, rel=1e-12, abs=1e-300)
        assert a.p_minus == pytest.approx(b.p_plus, rel=1e-12, abs=1e-300)
        assert a.p_no_change == pytest.approx(b.p_no_change, rel=1e-12)


def test_couplings_validation():
    with pytest.raises(ValueError):
        Couplings(-1.0, 1.0)
    assert Couplings(2.0, 3.0).g == 6.0
