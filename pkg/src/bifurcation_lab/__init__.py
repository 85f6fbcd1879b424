"""Rate-selected measurement bifurcation of a two-level system.

Simulation, analytic bias densities, and all-orders process splits, with a
CLI tying them together.  See README.md for usage.
"""

__version__ = "0.1.0"

from .amplitudes import (
    AmplitudeForm,
    AmplitudePair,
    amplitudes_closed,
    amplitudes_exact,
    closed_vs_exact_gap,
    taylor_gap_bound,
)
from .analytic import (
    DensityProfile,
    channel_density,
    default_grid,
    final_cdf,
    final_density,
    grid_profile,
    initial_density,
    mode_count,
)
from .diagramsum import (
    Couplings,
    ProcessSplit,
    full_split,
    geometric_tail_bound,
    limiting_channel_probs,
    log_limiting_channel_probs,
    truncated_no_change,
)
from .ensemble import (
    DetectorMode,
    KappaDistribution,
    Microstate,
    ModelParams,
    RngSeed,
    aggregate_y,
    draw_microstate,
    draw_y_samples,
    ensemble_moments,
)
from .mc import (
    Histogram,
    SelectionScheme,
    SimConfig,
    SimResult,
    TransitionRecord,
    accepted_y_histogram,
    born_estimate,
    chi_square,
    ks_statistic,
    run_simulation,
)
from .transition import (
    DensityMatrix2,
    QubitState,
    channel_probabilities,
    log_channel_probabilities,
    log_offdiagonal_suppression,
    log_total_rate,
    normalized_final_state,
    normalized_final_state_from_amplitudes,
    offdiagonal_suppression,
    purity_defect,
    rate_matrix,
    total_rate,
)
