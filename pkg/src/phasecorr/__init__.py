"""Correlated exponential distributions built from phase-type representations."""

from .builders import (
    ChainSpec,
    Negative3Result,
    append_phase,
    chain_rho_from_inverse_rates,
    first_canonical_from_rates,
    harmonic_chain,
    harmonic_rho_minus,
    harmonic_rho_plus,
    min_phases_for_rho,
    negative3_special,
    negative_step_objective,
    negative_step_search,
    optimal_positive_chain,
    prepend_phase,
    reverse_transform,
    rho_gradient,
    rho_plus_sequence,
)
from .coupling import (
    Coupling,
    TransportProblem,
    monotone_coupling,
    solve_transport,
    target_coupling,
    to_transfer_matrix,
)
from .errors import (
    InfeasibleTargetError,
    InvalidModelError,
    MarginalMismatchError,
    NotCanonicalError,
    PhasecorrError,
)
from .expand import (
    ErlangExpansion,
    ErlangPath,
    HyperExp,
    erlang_expand_full,
    erlang_expand_in,
    erlang_expand_out,
    erlang_paths,
    expand_hyperexp,
    greedy_allocate,
    hyperexp_rho_max,
)
from .mapproc import (
    Map,
    PathExpansion,
    autocorr_bounds,
    autocorrelation,
    build_map,
    order2_impossibility_scan,
    path_expand,
    sample_intervals,
)
from .modelio import dump_model, parse_model
from .phase_type import (
    CanonicalForm,
    Descriptors,
    PhaseType,
    descriptors,
    is_exponential,
    laplace,
    laplace_generic,
    par_compose,
    recognize_canonical,
    scale,
    seq_compose,
    unit_exponential,
)
from .queueing import (
    CorrelatedMM1Model,
    CorrelatedTaskService,
    SimStats,
    build_correlated_mm1,
    correlated_task_service,
    mg1_pk,
    poisson_ph_model,
    simulate_correlated_mm1,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
