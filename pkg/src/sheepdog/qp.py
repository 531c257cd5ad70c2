"""Minimum-norm QP: nearest point to the origin in ``{u : A u <= b}``.

The exact solver is the dual active-set method of Goldfarb and Idnani
specialised to an identity Hessian. It starts from the unconstrained
minimiser ``u = 0`` and adds violated rows one at a time, dropping rows
whose multipliers would turn negative. Infeasibility is detected when a
violated row is linearly dependent on the active rows and no active
multiplier can absorb it.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import IllConditioned

log = logging.getLogger(__name__)

FEAS_TOL = 1e-8
COND_LIMIT = 1e12


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    RELAXED = "relaxed"


@dataclass
class QpProblem:
    A: np.ndarray
    b: np.ndarray
    tags: list = field(default_factory=list)

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        self.A = np.asarray(self.A, dtype=np.float64).reshape(len(self.b), -1)
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("QP rows must be finite")

    @classmethod
    def from_constraints(cls, cs) -> "QpProblem":
        return cls(cs.A.reshape(len(cs.b), 2 * cs.m), cs.b, list(cs.tags))

    @property
    def dimension(self) -> int:
        return self.A.shape[1]


@dataclass
class QpSolution:
    u: np.ndarray
    status: QpStatus
    multipliers: np.ndarray  # for the objective |u|^2, i.e. 2u + A^T lam = 0
    active: list = field(default_factory=list)  # row indices
    max_violation: float = 0.0
    slack: np.ndarray | None = None
    tags: list = field(default_factory=list)

    @property
    def active_set(self) -> list:
        return [self.tags[r] for r in self.active] if self.tags else list(self.active)


def _max_iter(A):
    return 10 * sum(A.shape) + 50


def _dual_active_set(A, b, max_iter=None):
    """Goldfarb-Idnani iterations. Returns (u, lam, active) or None if infeasible."""
    u, lam, mask, code = _kernels.gi_solve(
        np.ascontiguousarray(A, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
        FEAS_TOL * 1e-2,
        COND_LIMIT,
        max_iter or _max_iter(A),
    )
    _raise_on(code)
    if code == _kernels.GI_INFEASIBLE:
        return None
    return u, lam, list(np.flatnonzero(mask))


def _raise_on(code):
    if code == _kernels.GI_ILL_CONDITIONED:
        raise IllConditioned("active constraint matrix is near-singular")
    if code == _kernels.GI_ITERATIONS:
        raise IllConditioned("active-set iteration limit reached")


def min_norm_arrays(A, b):
    """Fast path used by the simulator: ``(u, status)`` or raises IllConditioned.

    Same algorithm as :func:`solve_min_norm` without the bookkeeping.
    """
    u, lam, mask, code, viol = _kernels.min_norm(A, b, FEAS_TOL * 1e-2, COND_LIMIT, _max_iter(A))
    _raise_on(code)
    if code == _kernels.GI_INFEASIBLE:
        return u, QpStatus.INFEASIBLE
    if viol > FEAS_TOL:
        raise IllConditioned(f"min-norm residual {viol:.3g} exceeds tolerance")
    return u, QpStatus.OPTIMAL


def solve_min_norm(problem: QpProblem, *, fallback_penalty: float = 1e6) -> QpSolution:
    """Exact minimiser of |u|^2 over the polyhedron, or INFEASIBLE.

    Numerical trouble in the active-set linear algebra is logged and the
    relaxed solve is returned instead.
    """
    A, b = problem.A, problem.b
    u, lam, mask, code, viol = _kernels.min_norm(
        np.ascontiguousarray(A), np.ascontiguousarray(b), FEAS_TOL * 1e-2, COND_LIMIT, _max_iter(A)
    )
    if code == _kernels.GI_INFEASIBLE:
        return QpSolution(
            np.zeros(problem.dimension), QpStatus.INFEASIBLE, np.zeros(len(b)), tags=problem.tags
        )
    if code != _kernels.GI_OK:
        log.warning("min-norm QP ill-conditioned (code %d); falling back to relaxed solve", code)
        return solve_penalized(problem, fallback_penalty)
    if viol > FEAS_TOL:
        log.warning("min-norm QP residual %.3g exceeds tolerance; falling back", viol)
        return solve_penalized(problem, fallback_penalty)
    return QpSolution(u, QpStatus.OPTIMAL, 2.0 * lam, list(np.flatnonzero(mask)), tags=problem.tags)


def solve_penalized(problem: QpProblem, penalty: float) -> QpSolution:
    """Minimise |u|^2 + penalty * |s|^2 subject to A u <= b + s, s >= 0.

    Rewritten with ``w = sqrt(penalty) * s`` as a min-norm problem in
    ``(u, w)``, which is always feasible.
    """
    if not penalty > 0:
        raise ValueError("penalty must be positive")
    A, b = problem.A, problem.b
    rows, dim = A.shape
    c = 1.0 / np.sqrt(penalty)
    big = np.block([[A, -c * np.eye(rows)], [np.zeros((rows, dim)), -np.eye(rows)]])
    res = _dual_active_set(big, np.concatenate([b, np.zeros(rows)]))
    if res is None:  # cannot happen for a consistent elastic problem
        raise IllConditioned("elastic problem reported infeasible")
    z, lam, active = res
    u, s = z[:dim], c * z[dim:]
    s = np.maximum(s, 0.0)
    viol = float(s.max(initial=0.0))
    status = QpStatus.RELAXED if viol > FEAS_TOL else QpStatus.OPTIMAL
    return QpSolution(
        u,
        status,
        2.0 * lam[:rows],
        sorted(j for j in active if j < rows),
        max_violation=viol if status is QpStatus.RELAXED else 0.0,
        slack=s,
        tags=problem.tags,
    )


def solve_relaxed(problem: QpProblem, penalty: float = 1e6) -> QpSolution:
    """Exact solve when feasible, otherwise the penalised slack solve."""
    if not penalty > 0:
        raise ValueError("penalty must be positive")
    sol = solve_min_norm(problem, fallback_penalty=penalty)
    if sol.status is QpStatus.INFEASIBLE:
        return solve_penalized(problem, penalty)
    if sol.slack is None:
        sol.slack = np.zeros(len(problem.b))
    return sol


@dataclass
class KktReport:
    stationarity: float
    dual_feasibility: float  # most negative multiplier (0 if none)
    complementarity: float
    primal_violation: float

    def ok(self, tol: float = FEAS_TOL) -> bool:
        return max(self.stationarity, -self.dual_feasibility, self.complementarity, self.primal_violation) <= tol


def verify_kkt(problem: QpProblem, solution: QpSolution) -> KktReport:
    """KKT residuals for min |u|^2 s.t. A u <= b.

    Stationarity ``2u + A^T lam = 0`` is measured relative to ``max(1, |2u|)``;
    complementarity uses the natural residual ``|min(lam_j, slack_j)|`` so that
    large multipliers on exactly active rows are not penalised for roundoff.
    """
    A, b = problem.A, problem.b
    u, lam = solution.u, solution.multipliers
    scale = max(1.0, float(np.max(np.abs(2.0 * u), initial=0.0)))
    stat = float(np.max(np.abs(2.0 * u + A.T @ lam), initial=0.0)) / scale
    slack = b - A @ u
    return KktReport(
        stationarity=stat,
        dual_feasibility=float(min(0.0, lam.min(initial=0.0))),
        complementarity=float(np.max(np.abs(np.minimum(lam, slack)), initial=0.0)),
        primal_violation=float(np.max(-slack, initial=0.0)),
    )


def box_rows(dimension: int, bound: float):
    """Rows ``-bound <= u_c <= bound`` for an optional actuator limit."""
    eye = np.eye(dimension)
    return np.vstack([eye, -eye]), np.full(2 * dimension, float(bound))

