"""fluxldp: reaction-flux simulation and large-deviation rate functionals."""

from .assumptions import AssumptionReport, validate_assumptions
from .errors import (
    ConvergenceError,
    FluxLdpError,
    IntegrationError,
    NetworkSyntaxError,
    OracleError,
    SimulationError,
    ValidationError,
)
from .fluid import LlnGapReport, lln_gap, solve_perturbed, solve_rre
from .girsanov import (
    AlwaysEvent,
    EndpointCountEvent,
    EndpointFluxEvent,
    EstimateReport,
    EventPredicate,
    GBallEvent,
    TransientDistribution,
    TubeEvent,
    event_from_spec,
    exact_transient,
    importance_estimate,
    log_likelihood_ratio,
    path_tilt_functional,
)
from .network import (
    Constant,
    Kinetics,
    MassAction,
    Reaction,
    ReactionNetwork,
    parse_network,
    render_network,
    simplex_contains,
)
from .paths import GridPath, JumpPath, TiltProtocol
from .rate import (
    ContractionResult,
    RateReport,
    contraction_I,
    contraction_cell,
    evaluate_G,
    evaluate_J,
    hamiltonian,
    optimal_tilt,
    rel_entropy,
)
from .regularize import (
    AdmissibilityReport,
    approx_cutoff,
    approx_floor,
    approx_lift,
    approx_mollify,
    assess_admissibility,
    regularize_to_admissible,
)
from .simulate import martingale_residual, philox_stream, simulate

__version__ = "0.1.0"
