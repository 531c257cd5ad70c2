"""Checkable feasibility quantities for one dog against one sheep.

With a single sheep and a single dog the herding row can only be
infeasible if its coefficient vector vanishes while ``b < 0``, or if ``b``
is unbounded below. The dog Jacobian is nonsingular for any finite
separation (its determinant is ``-2 k_D^2 / r^6``), which rules out the
first case; :func:`b_lower_bound` rules out the second under the bounds in
:class:`CertificateBounds`.

The Frobenius norm of the sheep self-Jacobian is exactly
``sqrt(2 k_G^2 + 5 k_D^2 / r^6 + 2 k_G k_D / r^3)`` at separation ``r``.
The closed-form bound uses ``M3^2`` in the cross term, so it dominates the
exact value only when ``M3 >= 1``; :func:`certify_1v1` reports this.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .barriers import BarrierGains, ProtectedZone, herding_row, h_value
from .errors import BoundsViolated
from .flock import FlockParams, WorldState, dog_jacobian_determinant, jacobians


@dataclass(frozen=True)
class CertificateBounds:
    M1: float  # max |x_S - x_G|
    M2: float  # max |x_S - x_P|
    M3: float  # min |x_S - x_D|

    def __post_init__(self):
        if not min(self.M1, self.M2, self.M3) > 0:
            raise ValueError("certificate bounds must be positive")


def lambda_max_bound(params: FlockParams, M3: float) -> float:
    if not M3 > 0:
        raise ValueError("M3 must be positive")
    kG, kD = params.k_G, params.k_D
    return math.sqrt(2 * kG**2 + 5 * kD**2 / M3**6 + 2 * kG * kD / M3**2)


def exact_self_jacobian_norm(params: FlockParams, separation: float) -> float:
    """Frobenius norm of d f / d x_S for one sheep, one dog, no cohesion."""
    kG, kD, r = params.k_G, params.k_D, separation
    return math.sqrt(2 * kG**2 + 5 * kD**2 / r**6 + 2 * kG * kD / r**3)


def b_lower_bound(params: FlockParams, gains: BarrierGains, bounds: CertificateBounds) -> float:
    lam = lambda_max_bound(params, bounds.M3)
    return -(lam + gains.alpha) * (params.k_G * bounds.M1 * bounds.M2 + params.k_D * bounds.M2 / bounds.M3**2)


@dataclass
class CertificateReport:
    row_norm: float
    dog_jacobian_det: float
    dog_jacobian_det_closed_form: float
    b_actual: float
    b_bound: float
    jacobian_frobenius: float
    lambda_M: float
    h: float
    notes: list

    @property
    def row_nonzero(self) -> bool:
        return self.row_norm > 0.0

    @property
    def verdict(self) -> bool:
        return self.row_nonzero and self.b_actual >= self.b_bound

    def to_text(self) -> str:
        lines = [
            f"verdict: {'PASS' if self.verdict else 'FAIL'}",
            f"h = {self.h:.9g}",
            f"|A^H| = {self.row_norm:.9g} ({'nonzero' if self.row_nonzero else 'ZERO'})",
            f"det(J_D) numeric = {self.dog_jacobian_det:.9g}",
            f"det(J_D) closed form -2 k_D^2 / r^6 = {self.dog_jacobian_det_closed_form:.9g}",
            f"b^H actual = {self.b_actual:.9g}",
            f"b^H lower bound = {self.b_bound:.9g}",
            f"|J_S|_F = {self.jacobian_frobenius:.9g}",
            f"lambda_M = {self.lambda_M:.9g}",
        ]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


def certify_1v1(
    state: WorldState,
    zone: ProtectedZone,
    params: FlockParams,
    gains: BarrierGains,
    bounds: CertificateBounds,
) -> CertificateReport:
    if state.n != 1 or state.m != 1:
        raise ValueError("certificate applies to exactly one sheep and one dog")
    xs, xd = state.sheep[0], state.dogs[0]
    d_goal = float(np.linalg.norm(xs - params.x_G))
    d_zone = float(np.linalg.norm(xs - zone.center))
    sep = float(np.linalg.norm(xs - xd))
    tol = 1e-12
    if d_goal > bounds.M1 + tol:
        raise BoundsViolated(f"|x_S - x_G| = {d_goal:.6g} exceeds M1 = {bounds.M1:g}")
    if d_zone > bounds.M2 + tol:
        raise BoundsViolated(f"|x_S - x_P| = {d_zone:.6g} exceeds M2 = {bounds.M2:g}")
    if sep < bounds.M3 - tol:
        raise BoundsViolated(f"|x_S - x_D| = {sep:.6g} below M3 = {bounds.M3:g}")

    row = herding_row(zone, state, params, gains, 0)
    JS, JD = jacobians(state, params)
    notes = []
    if bounds.M3 < 1.0:
        notes.append("M3 < 1: lambda_M may underestimate the Jacobian norm (cross term uses M3^2, exact is r^3)")
    h = h_value(zone, xs)
    if h < 0:
        notes.append("sheep is inside the zone; the bound assumes h >= 0")
    return CertificateReport(
        row_norm=float(np.linalg.norm(row.a)),
        dog_jacobian_det=float(np.linalg.det(JD[0, 0])),
        dog_jacobian_det_closed_form=dog_jacobian_determinant(params, sep),
        b_actual=row.b,
        b_bound=b_lower_bound(params, gains, bounds),
        jacobian_frobenius=float(np.linalg.norm(JS[0, 0])),
        lambda_M=lambda_max_bound(params, bounds.M3),
        h=h,
        notes=notes,
    )
