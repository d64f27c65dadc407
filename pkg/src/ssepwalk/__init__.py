"""Event-driven simulator and verification harness for a variable-speed
random walk driven by symmetric exclusion."""

from .model import (
    LatticeConfiguration,
    LatticeSpec,
    ModelParams,
    OutOfRange,
    SeedSpec,
    TheoreticalTargets,
    default_lattice,
    derive_stream,
    env_seed,
    theoretical_targets,
    validate,
    walk_seed,
)
from .ssep import (
    EnvironmentEventLog,
    MalformedLog,
    OutOfHorizon,
    SwapEvent,
    generate_log,
    generate_log_from_seed,
    init_stationary,
    read_log,
    state_at,
    stationarity_probe,
    write_log,
)
from .walk import (
    EnvironmentView,
    FunctionalAccumulator,
    WalkRealization,
    martingale_residual,
    recompute_accumulator,
    simulate_joint,
    simulate_walk,
)
from .oracle import (
    CorrectorSpec,
    EnumerationBudgetExceeded,
    InsufficientWindow,
    LocalFunction,
    WindowConfiguration,
    apply_generator,
    check_increment_bounds,
    check_phi_identity,
    check_psi_identity,
    corrector_value,
    make_corrector,
    sweep_identities,
)
from .estimators import (
    DecouplingResult,
    EstimateReport,
    ExperimentPlan,
    InvalidPlan,
    MomentProbeResult,
    QuenchedReport,
    RateProbeResult,
    ReplicaRow,
    decoupling_probe,
    rate_probe,
    run_annealed,
    run_quenched,
    run_replicas,
    sixth_moment_probe,
)
from .stats import (
    DegenerateWeights,
    SampleSummary,
    TooFewSamples,
    gaussian_tail_bound,
    hoeffding_bound,
    ks_normal,
    mean_ci,
    wilson_ci,
)

__version__ = "0.1.0"
