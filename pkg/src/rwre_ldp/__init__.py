"""Rate functions at the origin for random walks in random and periodic
lattice environments, with exact dynamic-programming, spectral, and
tilted Monte Carlo verification tools."""

__version__ = "0.1.0"

from .env_model import (
    Box,
    EnvironmentLaw,
    NestlingClass,
    PeriodicEnvironment,
    ProbVec,
    SampledEnvironment,
    TimePeriodicSchedule,
    classify_law,
    drift,
    mix,
    periodic_lookup,
    sample_environment,
)
from .rate_solver import (
    RateReport,
    SaddlePoint,
    log_mgf,
    minimizer_theta,
    pstar_boundary_check,
    rate_at_zero_closed,
    rate_at_zero_numeric,
    solve_saddle,
    tilt,
    time_periodic_rate0,
    variational_I0,
)
from .periodic_solver import (
    PeriodicRateReport,
    TorusOperator,
    exact_return_probability,
    invariant_measure,
    periodic_rate,
    periodic_rate0,
    return_probability_series,
    spectral_log_radius,
    torus_operator,
)
from .strip_builder import (
    StripBuildReport,
    StripSpec,
    build_strip_environment,
    effective_variance,
    make_strip_spec,
    optimal_strip_pipeline,
    strip_index,
    widths_for_frequencies,
)
from .simulate import (
    DominantEventReport,
    ScanReport,
    WalkRun,
    block_return_bound,
    decomposed_rwpe_run,
    dominant_event_bound,
    importance_sampling_return,
    occupation_check,
    quenched_rate_experiment,
    renormalized_chain_diagnostic,
    run_walk,
    scan_for_G,
)
