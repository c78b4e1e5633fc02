"""coalflow: a laboratory for coalescing stochastic flows on the line.

Simulates systems of diffusions with a common Lipschitz drift that move
independently until they meet and stick together afterwards, builds the
associated forward flow fields and their stationary points under strictly
monotone drift, demonstrates the non-existence of stationary points for the
driftless flow, and constructs the forward/backward dual pair by fractional
steps over an exactly self-dual arrow lattice.  Verified against closed-form
meeting-time laws and exact discrete invariants.
"""

from .drift import (
    DriftError,
    DriftSpec,
    format_drift,
    linear_drift,
    linsin_drift,
    parse_drift,
    tabulated_drift,
    zero_drift,
)
from .streams import NoiseStream
from .sde import (
    Path,
    TimeGrid,
    euler_ensemble,
    gaussian_increments,
    integrate_sde,
    ode_flow_h,
    ou_exact_step,
)
from .analysis import (
    AnalysisError,
    FitReport,
    KSResult,
    TailEstimate,
    brownian_min_mc,
    brownian_min_tail,
    escape_probability,
    escape_range_threshold,
    exp_fit,
    ks_test,
    meeting_cdf_from_density,
    ou_hitting_cdf,
    ou_hitting_density,
    ou_hitting_tail,
    wilson_interval,
)
from .flow import (
    FlowAudit,
    FlowError,
    FlowRealization,
    PullbackSequence,
    StationarityReport,
    StationaryPointEstimate,
    audit_realization,
    build_flow,
    disagreement_decay,
    disagreement_probability,
    pullback,
    stationarity_check,
    stationary_point,
    summary_dict,
    write_forest_csv,
    write_summary_json,
)
from .dual import (
    ArrowField,
    CovariationReport,
    DriftFit,
    DualError,
    DualSystem,
    MartingaleReport,
    NonexistenceReport,
    NonmeetingReport,
    backward_walk,
    build_arrow_field,
    crossing_audit,
    crossing_count,
    drift_recovery,
    forward_walk,
    fractional_step_dual,
    lattice_meeting_rows,
    martingale_diagnostic,
    nonexistence_demo,
    nonmeeting_check,
    quadratic_covariation,
    write_crossing_audit_json,
    write_dual_csv,
)
from .particles import (
    CoalescenceError,
    CoalescenceEvent,
    ParticleRecord,
    ParticleSystem,
    SecondMomentBound,
    SecondMomentEstimate,
    detect_meeting,
    meeting_time_ensemble,
    second_moment_diag,
    second_moment_table,
    simulate_n_point,
    write_events_csv,
    write_trajectories_csv,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
