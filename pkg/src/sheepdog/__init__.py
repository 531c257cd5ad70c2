"""Herding-based protected-zone defense: flock model, barrier rows, min-norm
QP controller, closed-loop simulator and Monte Carlo tables."""

from .barriers import (
    DEFAULT_GAMMA,
    DOUBLING_LADDER,
    GAIN_LADDER,
    BarrierGains,
    ConstraintSet,
    ProtectedZone,
    ZoneMode,
    build_constraints,
    collision_rows,
    h_derivatives,
    h_value,
    herding_row,
    tune_gains,
    validate_gains,
)
from .certificate import CertificateBounds, b_lower_bound, certify_1v1, lambda_max_bound
from .errors import (
    BoundsViolated,
    ConfigError,
    DegenerateDenominator,
    DegenerateOffset,
    IllConditioned,
    SamplerExhausted,
    SheepdogError,
    SingularSeparation,
)
from .flock import EPS_MIN, FlockParams, WorldState, jacobians, velocities
from .montecarlo import BatchSpec, SuccessTable, emit_table, parse_table, run_batch
from .qp import QpProblem, QpSolution, QpStatus, solve_min_norm, solve_relaxed, verify_kkt
from .sampling import SamplerSpec, sample_initial
from .sim import EventKind, ScenarioConfig, SimOutcome, TrajectoryLog, run, step, unicycle_map

__version__ = "0.1.0"
