"""Greedy sparse approximation for smooth convex objectives.

Weak Chebyshev / relaxed / free-relaxation greedy algorithms over symmetric
dictionaries (finite column dictionaries and the rank-one matrix dictionary),
with certified atom selection, convergence-theory helpers, and a
reproducible experiment harness.
"""

from .objectives import (
    DimensionMismatchError,
    NonFiniteEnergyError,
    Objective,
    SmoothnessParams,
    check_smoothness_inequality,
    empirical_modulus,
    l2_norm,
    lr_norm,
    make_least_squares,
    make_logistic,
    make_norm_power,
)
from .dictionaries import (
    Atom,
    FiniteDictionary,
    RankOneDictionary,
    SelectionCertificate,
    UnsupportedDictionaryError,
    WeaknessCertificationError,
    power_top_singular,
    select_e_greedy,
    select_e_greedy_fixed,
    select_gradient_greedy,
    synthesis_l1,
)
from .inner_solvers import (
    FreeRelaxationResult,
    LineSearchError,
    LineSearchResult,
    NonConvexityError,
    SubspaceResult,
    SubspaceToleranceError,
    UnboundedBelowError,
    line_search_ray,
    line_search_real,
    minimize_free_relaxation,
    minimize_subspace,
    minimize_unit_interval,
)
from .algorithms import (
    BestStep,
    Chebyshev,
    ConvexRelaxation,
    FixedRelaxation,
    FreeRelaxation,
    GreedyRunError,
    IterationRecord,
    MonotonicityError,
    Prescribed,
    ReducedStep,
    RunTrace,
    SparseApproximant,
    StopReason,
    StopRule,
    WeaknessSequence,
    run_generic,
    run_greedy,
    run_wcga_co,
    run_wgafr_co,
    run_wrga_co,
    stopping_reason,
)
from .theory import (
    EnvelopeKind,
    EnvelopeReport,
    InsufficientDataError,
    ModulusSpec,
    RateEnvelope,
    RecurrenceReport,
    a_q,
    calibrate_envelope,
    check_envelope,
    conjugate_exponent,
    fit_power_slope,
    fit_rate_slope,
    rate_envelope,
    solve_xi,
    solve_xi_flagged,
    t_power_sum,
    theta0,
    verify_recurrence,
    xi_closed_form,
    xi_weighted_sum,
)
from .instances import (
    SynthesisCertificate,
    gen_compressed_sensing,
    gen_low_rank,
    gen_lp_approx,
    verify_certificate,
)
from .experiment import (
    ConfigError,
    ExperimentResult,
    build_instance,
    config_hash,
    load_config,
    omp_reference,
    run_experiment,
    run_verification_suite,
    signal_coefficients,
    validate_config,
    write_trace_csv,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
