"""1D gas-disk interaction: deterministic solver, bound checks, and MC oracle."""

from .profiles import (
    DiskProfile,
    ExternalForce,
    InitialDistribution,
    average_velocity,
    average_velocity_derivatives,
    constant_profile,
    cosine_profile,
    profile_from_callable,
    ramp_profile,
    random_lipschitz_profile,
)
from .envelope import EnvelopeCache, EnvelopeField, build_envelope, envelope_time_lipschitz_check, precollision_window
from .kinetics import (
    GenerationStack,
    TruncationError,
    advance_generation,
    build_stack,
    choose_truncation,
    first_generation_density,
    generation_density,
    momentum_influx_bound,
    recollision_density,
)
from .drag import DragRecord, collision_kernel, drag_never_collided, drag_recollision, drag_series, net_drag
from .dynamics import (
    ContractionReport,
    ConvergenceError,
    Scenario,
    Trajectory,
    batch_drag_record,
    estimate_drag_lipschitz,
    integrate,
    picard_map,
    uniqueness_experiment,
)
from .oracle import MCReport, run_mc, sample_outgoing_speed
from .verify import CheckResult, Ledger, fit_recollision_sensitivity, reference_profile_family, run_suite

__version__ = "0.1.0"
