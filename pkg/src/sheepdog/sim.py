"""Closed-loop simulation of the flock and the QP-driven dogs."""
from __future__ import annotations

import enum
import time as _time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .barriers import (
    DEFAULT_GAMMA,
    GAIN_LADDER,
    BarrierGains,
    ProtectedZone,
    collision_index,
    tune_gains,
    validate_gains,
)
from .errors import DegenerateDenominator, DegenerateOffset, SingularSeparation
from . import _kernels
from .flock import EPS_MIN, FlockParams, WorldState
from .qp import COND_LIMIT, FEAS_TOL, QpStatus
from .sampling import SamplerSpec, sample_initial


class EventKind(enum.Enum):
    BREACH = "breach"
    COLLISION = "collision"
    QP_INFEASIBLE = "qp_infeasible"
    GAIN_CONDITION_VIOLATED = "gain_condition_violated"
    SINGULAR = "singular"


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: EventKind
    payload: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioConfig:
    params: FlockParams = field(default_factory=FlockParams)
    zones: tuple = (ProtectedZone((0.0, 0.0), 1.0),)
    gains: BarrierGains | None = None  # None: auto-tune on gain_ladder
    gamma: float = DEFAULT_GAMMA
    gain_ladder: tuple = GAIN_LADDER
    sheep: np.ndarray | None = None
    dogs: np.ndarray | None = None
    n: int | None = None
    m: int | None = None
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    dt: float = 0.01
    horizon: float = 30.0
    collision_constraints: bool = False
    agent_model: str = "integrator"  # or "unicycle"
    offset: float = 0.05
    headings: np.ndarray | None = None
    seed: int = 0
    relax_penalty: float = 1e6
    speed_limit: float | None = None
    max_substeps: int = 4096
    stop_on_failure: bool = False  # end the run at the first breach or collision
    # a breach (collision) needs h below -tol * R_P^2 (b below -tol * R_S^2)
    breach_tolerance: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "zones", tuple(self.zones))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.agent_model not in ("integrator", "unicycle"):
            raise ValueError("agent_model must be 'integrator' or 'unicycle'")
        if self.agent_model == "unicycle" and not self.offset > 0:
            raise DegenerateOffset("unicycle offset d must be positive")
        if not self.zones:
            raise ValueError("at least one zone is required")
        if not 0 <= self.breach_tolerance < 1:
            raise ValueError("breach_tolerance must lie in [0, 1)")
        if self.max_substeps < 1:
            raise ValueError("max_substeps must be at least 1")
        if self.sheep is None and not (self.n and self.n >= 1):
            raise ValueError("give explicit sheep positions or n >= 1")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def initial_state(self) -> WorldState:
        if self.sheep is not None:
            dogs = self.dogs if self.dogs is not None else np.zeros((0, 2))
            return WorldState(self.sheep, dogs, 0.0)
        rng = np.random.default_rng(self.seed)
        min_sep = self.params.R_S if self.collision_constraints else 0.0
        m = self.m or 0
        return sample_initial(self.sampler, self.n, m, rng, self.zones, min_sep)


# ---------------------------------------------------------------- unicycle


def unicycle_map(u_cmd, theta: float, d: float):
    """(v, omega) such that the point at distance d ahead moves with u_cmd."""
    if d == 0:
        raise DegenerateOffset("offset distance d must be nonzero")
    ux, uy = np.asarray(u_cmd, dtype=np.float64)
    c, s = np.cos(theta), np.sin(theta)
    # M = R(theta) diag(1, d); M^-1 = diag(1, 1/d) R(-theta)
    return c * ux + s * uy, (-s * ux + c * uy) / d


def unicycle_matrix(theta: float, d: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]]) @ np.diag([1.0, d])


def unicycle_step(pose, v: float, omega: float, dt: float):
    x, y, th = pose
    return (x + dt * v * np.cos(th), y + dt * v * np.sin(th), th + dt * omega)


def offset_point(pose, d: float) -> np.ndarray:
    x, y, th = pose
    return np.array([x + d * np.cos(th), y + d * np.sin(th)])


def _unicycle_advance(points, headings, vel, d, dt):
    """Advance offset points (k, 2) with headings (k,) under commanded velocities."""
    c, s = np.cos(headings), np.sin(headings)
    v = c * vel[:, 0] + s * vel[:, 1]
    w = (-s * vel[:, 0] + c * vel[:, 1]) / d
    body = points - d * np.stack([c, s], axis=1)
    body = body + dt * v[:, None] * np.stack([c, s], axis=1)
    th = headings + dt * w
    return body + d * np.stack([np.cos(th), np.sin(th)], axis=1), th


# ---------------------------------------------------------------- control


@dataclass
class ControlResult:
    u: np.ndarray
    status: QpStatus
    f: np.ndarray
    h: np.ndarray  # (n, zones)
    hdot: np.ndarray  # (n, zones)
    violation: float = 0.0


def _zone_arrays(zones):
    centers = np.array([z.center for z in zones], dtype=np.float64).reshape(-1, 2)
    radii = np.array([z.radius for z in zones], dtype=np.float64)
    signs = np.array([z.sign for z in zones], dtype=np.float64)
    return centers, radii, signs


def _model_args(config: ScenarioConfig, gains: BarrierGains):
    """Positional arguments shared by the compiled control kernels."""
    p = config.params
    return (
        p.k_S,
        p.k_G,
        p.k_D,
        p.R_S,
        p.x_G,
        EPS_MIN,
        *_zone_arrays(config.zones),
    )


def _solver_args(config: ScenarioConfig, gains: BarrierGains):
    return (
        bool(config.collision_constraints),
        float(config.speed_limit or 0.0),
        float(config.relax_penalty),
        FEAS_TOL,
        COND_LIMIT,
    )


_STATUS = {_kernels.ST_OPTIMAL: QpStatus.OPTIMAL, _kernels.ST_INFEASIBLE: QpStatus.INFEASIBLE}


def control(state: WorldState, config: ScenarioConfig, gains: BarrierGains) -> ControlResult:
    """Evaluate the flock field and solve the dogs' QP at one state.

    An infeasible or numerically failed exact solve is replaced by the
    penalised slack solve and reported as INFEASIBLE when slack is needed.
    """
    u, code, f, h, hdot, viol = _kernels.control_eval(
        state.sheep,
        state.dogs,
        *_model_args(config, gains),
        gains.alpha,
        gains.beta,
        gains.gamma,
        *_solver_args(config, gains),
    )
    if code == _kernels.ST_SINGULAR:
        raise SingularSeparation("two agents are closer than EPS_MIN")
    return ControlResult(u, _STATUS[code], f, h, hdot, float(viol))


@dataclass
class StepResult:
    state: WorldState
    commands: np.ndarray  # command held at the start of the interval
    events: list
    control: ControlResult  # evaluated at the start of the interval
    next_control: ControlResult  # evaluated at the returned state
    headings: np.ndarray | None = None
    substeps: int = 1
    all_optimal: bool = True


# absolute slack (m^2/s^2 per second of substep) in the barrier decay test
DECAY_SLACK = 1e-3
# largest move per substep as a fraction of the closest sheep-dog distance
MOVE_FRACTION = 0.1


def _crossings(time, h_prev, h_next, b_prev, b_next, tol_h, tol_b):
    """Edge-triggered BREACH / COLLISION events between two grid samples."""
    events = []
    for i, z in zip(*np.nonzero((h_prev >= -tol_h) & (h_next < -tol_h))):
        events.append(SimEvent(time, EventKind.BREACH, {"sheep": int(i), "zone": int(z)}))
    if b_prev is not None:
        for i, k in zip(*np.nonzero((b_prev >= -tol_b) & (b_next < -tol_b))):
            events.append(SimEvent(time, EventKind.COLLISION, {"sheep": int(i), "dog": int(k)}))
    return events


def _tolerances(config):
    tol = config.breach_tolerance
    return tol * np.array([z.radius**2 for z in config.zones]), tol * config.params.R_S**2


def step(
    state: WorldState,
    config: ScenarioConfig,
    gains: BarrierGains | None = None,
    headings=None,
    ctl: ControlResult | None = None,
) -> StepResult:
    """Advance the closed loop by one control interval ``config.dt``.

    The interval is covered by explicit-Euler substeps with the QP re-solved
    at each. A substep is halved (down to ``dt / max_substeps``) when it would
    let a barrier decay faster than its continuous-time law, or move an agent
    too far relative to the sheep-dog spacing; in calm phases this is one
    Euler step of length ``dt``. Breach and collision events compare the
    two grid samples. Raises SingularSeparation if agents meet.
    """
    gains = gains or config.gains or BarrierGains(gamma=config.gamma)
    if ctl is None:
        ctl = control(state, config, gains)
    n, m = state.n, state.m
    unicycle = config.agent_model == "unicycle"
    if headings is None:
        headings = np.zeros(n + m)
    headings = np.asarray(headings, dtype=np.float64).reshape(n + m)
    out = _kernels.advance_interval(
        state.sheep,
        state.dogs,
        headings,
        ctl.u,
        ctl.f,
        ctl.h,
        ctl.hdot,
        *_model_args(config, gains),
        gains.p1,
        gains.p2,
        gains.gamma,
        *_solver_args(config, gains),
        config.dt,
        config.dt / config.max_substeps,
        unicycle,
        float(config.offset),
        DECAY_SLACK,
        MOVE_FRACTION,
    )
    sheep, dogs, new_headings, u, code, f, h, hdot, viol, count, bad, worst, singular = out
    if singular:
        raise SingularSeparation(f"agents closer than EPS_MIN near t = {state.time + config.dt:.6g}")
    t1 = state.time + config.dt
    nxt = WorldState._trusted(sheep, dogs, t1)
    nxt_ctl = ControlResult(u, _STATUS[code], f, h, hdot, float(viol))
    events = []
    if bad:
        events.append(SimEvent(state.time, EventKind.QP_INFEASIBLE, {"substeps": int(bad), "violation": float(worst)}))
    tol_h, tol_b = _tolerances(config)
    if config.collision_constraints and m:
        b0 = _kernels.collision_matrix(state.sheep, state.dogs, config.params.R_S)
        b1 = _kernels.collision_matrix(sheep, dogs, config.params.R_S)
    else:
        b0 = b1 = None
    events += _crossings(t1, ctl.h, h, b0, b1, tol_h[None, :], tol_b)
    return StepResult(
        nxt, ctl.u, events, ctl, nxt_ctl, new_headings if unicycle else None, int(count), bad == 0
    )


# ---------------------------------------------------------------- run


@dataclass
class TrajectoryLog:
    times: np.ndarray
    sheep: np.ndarray  # (T, n, 2)
    dogs: np.ndarray  # (T, m, 2)
    commands: np.ndarray  # (T, 2m), command applied from each sample time
    h: np.ndarray  # (T, n, zones)
    qp_status: list
    events: list

    def __len__(self):
        return len(self.times)


@dataclass
class SimOutcome:
    success: bool
    min_h: float
    min_collision: float
    events: dict
    relaxed_steps: int
    gains: BarrierGains
    gains_validated: bool
    terminated: bool
    wall_time: float
    substeps: int = 0

    @property
    def all_optimal(self) -> bool:
        return self.relaxed_steps == 0


def resolve_gains(config: ScenarioConfig, state0: WorldState):
    """Gains used for a run plus the initial-state validation report."""
    if config.gains is not None:
        try:
            report = validate_gains(config.gains, config.zones, state0, config.params)
        except DegenerateDenominator:
            report = None
        return config.gains, report
    return tune_gains(config.zones, state0, config.params, gamma=config.gamma, ladder=config.gain_ladder)


_FAILURES = (EventKind.BREACH, EventKind.COLLISION)


def _initial_events(state, config):
    tol_h, tol_b = _tolerances(config)
    events = []
    for z, zone in enumerate(config.zones):
        r = state.sheep - zone.center
        h0 = zone.sign * (np.einsum("ic,ic->i", r, r) - zone.radius**2)
        for i in np.flatnonzero(h0 < -tol_h[z]):
            events.append(SimEvent(0.0, EventKind.BREACH, {"sheep": int(i), "zone": z}))
    if config.collision_constraints and state.m:
        for i, k in zip(*np.nonzero(collision_index(state, config.params) < -tol_b)):
            events.append(SimEvent(0.0, EventKind.COLLISION, {"sheep": int(i), "dog": int(k)}))
    return events


def run(config: ScenarioConfig, state0: WorldState | None = None):
    """Simulate to the horizon. Returns ``(TrajectoryLog, SimOutcome)``.

    The log holds one record per grid time ``0, dt, ..., horizon``; a zero
    horizon yields an empty log and a vacuous success.
    """
    start = _time.perf_counter()
    state = state0 if state0 is not None else config.initial_state()
    n, m, Z = state.n, state.m, len(config.zones)
    gains, report = resolve_gains(config, state)
    validated = bool(report is not None and report.passed)
    K = config.steps
    events: list[SimEvent] = []
    times, sheep, dogs, cmds, hs, statuses = [], [], [], [], [], []
    headings = None
    if config.agent_model == "unicycle":
        headings = np.zeros(n + m) if config.headings is None else np.asarray(config.headings, dtype=np.float64)
        headings = headings.reshape(n + m)
    terminated = False
    min_col = np.inf
    substeps = 0
    if K > 0:
        if not validated:
            events.append(SimEvent(0.0, EventKind.GAIN_CONDITION_VIOLATED, {"stage": "initial"}))
        events.extend(_initial_events(state, config))
        v_prev = None
        ctl = None
        stopping = False
        for k in range(K + 1):
            try:
                if ctl is None:
                    ctl = control(state, config, gains)
                res = step(state, config, gains, headings, ctl) if k < K and not stopping else None
            except SingularSeparation as exc:
                events.append(SimEvent(state.time, EventKind.SINGULAR, {"message": str(exc)}))
                terminated = True
                break
            v = ctl.hdot + gains.p1 * ctl.h
            if v_prev is not None:
                for i, z in zip(*np.nonzero((v_prev >= 0) & (v < 0))):
                    events.append(
                        SimEvent(state.time, EventKind.GAIN_CONDITION_VIOLATED, {"sheep": int(i), "zone": int(z)})
                    )
            v_prev = v
            if m:
                min_col = min(min_col, float(collision_index(state, config.params).min()))
            times.append(state.time)
            sheep.append(state.sheep)
            dogs.append(state.dogs)
            cmds.append(ctl.u)
            hs.append(ctl.h)
            if res is None:
                statuses.append(ctl.status)
                if ctl.status is not QpStatus.OPTIMAL:
                    events.append(SimEvent(state.time, EventKind.QP_INFEASIBLE, {"violation": ctl.violation}))
                break
            statuses.append(QpStatus.OPTIMAL if res.all_optimal else QpStatus.RELAXED)
            events.extend(res.events)
            substeps += res.substeps
            state, headings, ctl = res.state, res.headings, res.next_control
            # record the failing sample, then stop
            stopping = config.stop_on_failure and any(e.kind in _FAILURES for e in events)
    log = TrajectoryLog(
        times=np.asarray(times, dtype=np.float64),
        sheep=np.asarray(sheep, dtype=np.float64).reshape(len(times), n, 2),
        dogs=np.asarray(dogs, dtype=np.float64).reshape(len(times), m, 2),
        commands=np.asarray(cmds, dtype=np.float64).reshape(len(times), 2 * m),
        h=np.asarray(hs, dtype=np.float64).reshape(len(times), n, Z),
        qp_status=statuses,
        events=events,
    )
    counts = Counter(e.kind.value for e in events)
    failed = counts[EventKind.BREACH.value] or counts[EventKind.COLLISION.value] or terminated
    outcome = SimOutcome(
        success=not failed,
        min_h=float(log.h.min()) if len(log) else np.inf,
        min_collision=float(min_col),
        events=dict(sorted(counts.items())),
        relaxed_steps=sum(s is not QpStatus.OPTIMAL for s in statuses),
        gains=gains,
        gains_validated=validated,
        terminated=terminated,
        wall_time=_time.perf_counter() - start,
        substeps=substeps,
    )
    return log, outcome
