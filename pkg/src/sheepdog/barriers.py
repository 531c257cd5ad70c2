"""Barrier-function rows on the stacked dog velocity vector.

Every row has the form ``a @ u <= b`` where ``u`` stacks the velocities of
all ``m`` dogs, so ``a`` has ``2m`` entries. Zone rows encode
``hdd + alpha * hd + beta * h >= 0`` divided by two; collision rows encode
``bd + gamma * b >= 0`` divided by two.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateDenominator
from .flock import FlockParams, WorldState, jacobians, velocities


class ZoneMode(enum.Enum):
    KEEP_OUT = "keep_out"
    KEEP_IN = "keep_in"


@dataclass(frozen=True)
class ProtectedZone:
    center: np.ndarray
    radius: float
    mode: ZoneMode = ZoneMode.KEEP_OUT

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(2))
        object.__setattr__(self, "mode", ZoneMode(self.mode))
        if not self.radius > 0:
            raise ValueError("zone radius must be positive")

    @property
    def sign(self) -> float:
        return 1.0 if self.mode is ZoneMode.KEEP_OUT else -1.0


# collision-row decay rate; large so dogs may close in quickly on far sheep
DEFAULT_GAMMA = 64.0


@dataclass(frozen=True)
class BarrierGains:
    """Pole locations p1, p2 of the cascaded zone barrier and collision rate gamma.

    Signs are not enforced here so that bad gains can still be reported by
    :func:`validate_gains`.
    """

    p1: float = 1.0
    p2: float = 1.0
    gamma: float = DEFAULT_GAMMA

    @property
    def alpha(self) -> float:
        return self.p1 + self.p2

    @property
    def beta(self) -> float:
        return self.p1 * self.p2


class RowTag(NamedTuple):
    kind: str  # "herd" or "collide"
    sheep: int
    index: int  # zone index for "herd", dog index for "collide"


@dataclass(frozen=True)
class ConstraintRow:
    a: np.ndarray
    b: float
    tag: RowTag


@dataclass
class ConstraintSet:
    """Stacked rows ``A @ u <= b`` over ``m`` dogs."""

    A: np.ndarray
    b: np.ndarray
    tags: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.A.shape[1] // 2

    def __len__(self):
        return len(self.b)

    @property
    def rows(self) -> list[ConstraintRow]:
        return [ConstraintRow(self.A[r], float(self.b[r]), t) for r, t in enumerate(self.tags)]

    @classmethod
    def from_rows(cls, rows, m: int) -> "ConstraintSet":
        rows = list(rows)
        A = np.array([r.a for r in rows], dtype=np.float64).reshape(len(rows), 2 * m)
        b = np.array([r.b for r in rows], dtype=np.float64)
        return cls(A, b, [r.tag for r in rows])

    def satisfied(self, u, tol=1e-8) -> np.ndarray:
        return self.A @ np.asarray(u, dtype=np.float64) <= self.b + tol


class HDerivatives(NamedTuple):
    h: float
    hdot: float
    hddot_drift: float
    hddot_control: np.ndarray  # coefficients on stacked dog velocities

    def hddot(self, u) -> float:
        return self.hddot_drift + float(self.hddot_control @ np.asarray(u, dtype=np.float64))


def h_value(zone: ProtectedZone, x_s) -> float:
    r = np.asarray(x_s, dtype=np.float64) - zone.center
    return zone.sign * (float(r @ r) - zone.radius**2)


def _zone_terms(zone, state, f, JS, JD):
    """Vectorized h, hdot, hddot drift and control coefficients for every sheep."""
    s = zone.sign
    r = state.sheep - zone.center
    h = s * (np.einsum("ic,ic->i", r, r) - zone.radius**2)
    hdot = 2.0 * s * np.einsum("ic,ic->i", r, f)
    fdot_drift = np.einsum("jiab,jb->ia", JS, f)
    drift = 2.0 * s * (np.einsum("ic,ic->i", f, f) + np.einsum("ic,ic->i", r, fdot_drift))
    control = 2.0 * s * np.einsum("ia,kiab->ikb", r, JD).reshape(state.n, 2 * state.m)
    return h, hdot, drift, control


def h_derivatives(zone: ProtectedZone, state: WorldState, params: FlockParams, i: int) -> HDerivatives:
    f = velocities(state, params)
    JS, JD = jacobians(state, params)
    h, hdot, drift, control = _zone_terms(zone, state, f, JS, JD)
    return HDerivatives(float(h[i]), float(hdot[i]), float(drift[i]), control[i])


def _herding_arrays(zone, state, gains, f, JS, JD):
    h, hdot, drift, control = _zone_terms(zone, state, f, JS, JD)
    a = -0.5 * control
    b = 0.5 * (drift + gains.alpha * hdot + gains.beta * h)
    return a, b


def herding_row(zone, state, params, gains, i) -> ConstraintRow:
    f = velocities(state, params)
    JS, JD = jacobians(state, params)
    a, b = _herding_arrays(zone, state, gains, f, JS, JD)
    return ConstraintRow(a[i], float(b[i]), RowTag("herd", i, 0))


def _collision_arrays(state, params, gains, f):
    n, m = state.n, state.m
    e = state.sheep[:, None, :] - state.dogs[None, :, :]  # (n, m, 2)
    bik = np.einsum("ikc,ikc->ik", e, e) - params.R_S**2
    A = np.zeros((n, m, 2 * m))
    A[:, np.arange(m), 2 * np.arange(m)] = e[..., 0]
    A[:, np.arange(m), 2 * np.arange(m) + 1] = e[..., 1]
    b = 0.5 * gains.gamma * bik + np.einsum("ikc,ic->ik", e, f)
    return A.reshape(n * m, 2 * m), b.reshape(n * m)


def collision_index(state: WorldState, params: FlockParams) -> np.ndarray:
    """Pairwise safety index |x_S_i - x_D_k|^2 - R_S^2, shape (n, m)."""
    e = state.sheep[:, None, :] - state.dogs[None, :, :]
    return np.einsum("ikc,ikc->ik", e, e) - params.R_S**2


def collision_rows(state, params, gains, i) -> list[ConstraintRow]:
    f = velocities(state, params)
    A, b = _collision_arrays(state, params, gains, f)
    m = state.m
    return [
        ConstraintRow(A[i * m + k], float(b[i * m + k]), RowTag("collide", i, k)) for k in range(m)
    ]


def build_constraints(zones, state, params, gains, include_collisions=False, box=None) -> ConstraintSet:
    """Stack zone rows for every (sheep, zone) pair, then collision rows.

    Row order: zone-major herding rows, then sheep-major collision rows,
    then optional box rows ``|u_c| <= box`` on every velocity component.
    """
    if not zones:
        raise ValueError("at least one protected zone is required")
    n, m = state.n, state.m
    f = velocities(state, params)
    JS, JD = jacobians(state, params)
    As, bs, tags = [], [], []
    for z, zone in enumerate(zones):
        a, b = _herding_arrays(zone, state, gains, f, JS, JD)
        As.append(a)
        bs.append(b)
        tags.extend(RowTag("herd", i, z) for i in range(n))
    if include_collisions and m:
        a, b = _collision_arrays(state, params, gains, f)
        As.append(a)
        bs.append(b)
        tags.extend(RowTag("collide", i, k) for i in range(n) for k in range(m))
    if box is not None and m:
        eye = np.eye(2 * m)
        As.append(np.vstack([eye, -eye]))
        bs.append(np.full(4 * m, float(box)))
        tags.extend(RowTag("box", -1, c) for c in range(4 * m))
    return ConstraintSet(np.vstack(As), np.concatenate(bs), tags)


@dataclass(frozen=True)
class GainCheck:
    sheep: int
    zone: int
    h: float
    hdot: float
    hddot: float
    p1_bound: float  # p1 must exceed max(0, p1_bound)
    p2_bound: float  # p2 must exceed max(0, p2_bound)
    passed: bool
    warning: str = ""


@dataclass
class GainReport:
    gains: BarrierGains
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks) and self.gains.p1 > 0 and self.gains.p2 > 0

    @property
    def warnings(self) -> list[str]:
        return [c.warning for c in self.checks if c.warning]

    def to_text(self) -> str:
        g = self.gains
        lines = [f"gains p1={g.p1:g} p2={g.p2:g} gamma={g.gamma:g}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            lines.append(
                f"  sheep {c.sheep} zone {c.zone}: h={c.h:.6g} hdot={c.hdot:.6g} hddot={c.hddot:.6g} "
                f"p1>{max(0.0, c.p1_bound):.6g} p2>{max(0.0, c.p2_bound):.6g} "
                f"{'ok' if c.passed else 'FAIL'}{'  [' + c.warning + ']' if c.warning else ''}"
            )
        return "\n".join(lines)


def validate_gains(gains: BarrierGains, zones, state0: WorldState, params: FlockParams) -> GainReport:
    """Check the initial-state pole conditions for every (sheep, zone) pair.

    hddot is evaluated with all dogs momentarily still. A pair that starts
    exactly on its boundary (h = 0) skips the ratio tests with a warning.
    """
    f = velocities(state0, params)
    JS, JD = jacobians(state0, params)
    checks = []
    p1, p2 = gains.p1, gains.p2
    for z, zone in enumerate(zones):
        h, hdot, drift, _ = _zone_terms(zone, state0, f, JS, JD)
        for i in range(state0.n):
            hi, hdi, hddi = float(h[i]), float(hdot[i]), float(drift[i])
            if hi == 0.0:
                msg = "starts on zone boundary; ratio conditions skipped"
                warnings.warn(f"sheep {i} zone {z}: {msg}", stacklevel=2)
                checks.append(GainCheck(i, z, hi, hdi, hddi, -np.inf, -np.inf, p1 > 0 and p2 > 0, msg))
                continue
            if hi < 0:
                checks.append(GainCheck(i, z, hi, hdi, hddi, np.nan, np.nan, False, "starts on the unsafe side"))
                continue
            p1_bound = -hdi / hi
            v0 = hdi + p1 * hi
            if v0 == 0.0:
                raise DegenerateDenominator(f"sheep {i} zone {z}: hdot + p1*h = 0 at t=0")
            p2_bound = -(hddi + p1 * hdi) / v0
            ok = p1 > 0 and p2 > 0 and p1 > p1_bound and p2 > p2_bound
            checks.append(GainCheck(i, z, hi, hdi, hddi, p1_bound, p2_bound, ok))
    return GainReport(gains, checks)


# geometric ladder from 1 to 64, four rungs per doubling
GAIN_LADDER = tuple(float(2.0 ** (q / 4)) for q in range(25))
DOUBLING_LADDER = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)


def tune_gains(zones, state0, params, gamma=DEFAULT_GAMMA, ladder=GAIN_LADDER):
    """Smallest (p1, p2) on the ladder that pass :func:`validate_gains`.

    Returns ``(gains, report)``; when nothing on the ladder passes, the
    largest rung is returned together with its failing report.
    """
    f = velocities(state0, params)
    JS, JD = jacobians(state0, params)
    terms = [_zone_terms(zone, state0, f, JS, JD)[:3] for zone in zones]
    h = np.concatenate([t[0] for t in terms])
    hdot = np.concatenate([t[1] for t in terms])
    hddot = np.concatenate([t[2] for t in terms])
    live = h != 0.0  # boundary starts skip the ratio tests
    if np.all(h >= 0):
        p1_min = np.max(-hdot[live] / h[live], initial=0.0)
        for p1 in ladder:
            if not (p1 > 0 and p1 > p1_min):
                continue
            v0 = hdot[live] + p1 * h[live]
            if np.any(v0 == 0.0):
                continue
            p2_min = np.max(-(hddot[live] + p1 * hdot[live]) / v0, initial=0.0)
            p2 = next((q for q in ladder if q > 0 and q > p2_min), None)
            if p2 is not None:
                gains = BarrierGains(p1, p2, gamma)
                return gains, _quiet_report(gains, zones, state0, params)
    gains = BarrierGains(ladder[-1], ladder[-1], gamma)
    return gains, _quiet_report(gains, zones, state0, params)


def _quiet_report(gains, zones, state0, params):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            return validate_gains(gains, zones, state0, params)
        except DegenerateDenominator:
            return GainReport(gains, [])
    gains = BarrierGains(ladder[-1], ladder[-1], gamma)
    if report is None or report.gains != gains:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                report = validate_gains(gains, zones, state0, params)
            except DegenerateDenominator:
                report = GainReport(gains, [])
    return gains, report
