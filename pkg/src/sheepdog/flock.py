"""Sheep flocking velocity field and its analytic Jacobians.

Each sheep follows

    f_i = k_S * sum_{j != i} (1 - R_S^3 / |x_j - x_i|^3) (x_j - x_i)
        + k_G * (x_G - x_i)
        + k_D * sum_k (x_i - x_k) / |x_i - x_k|^3

Jacobian blocks use the convention ``J[a, b] = d f_a / d x_b`` so that the
time derivative of f_i is ``sum_j JS[j, i] @ f_j + sum_k JD[k, i] @ u_k``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularSeparation

EPS_MIN = 1e-6
FD_STEP = 1e-6


def _as_points(points, name):
    arr = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} positions must be finite")
    return arr


@dataclass(frozen=True)
class WorldState:
    """Positions of all sheep (n, 2) and dogs (m, 2) at one instant."""

    sheep: np.ndarray
    dogs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    time: float = 0.0

    def __post_init__(self):
        sheep = _as_points(self.sheep, "sheep")
        if len(sheep) < 1:
            raise ValueError("at least one sheep is required")
        object.__setattr__(self, "sheep", sheep)
        object.__setattr__(self, "dogs", _as_points(self.dogs, "dog"))
        object.__setattr__(self, "time", float(self.time))

    @property
    def n(self) -> int:
        return len(self.sheep)

    @property
    def m(self) -> int:
        return len(self.dogs)

    @classmethod
    def _trusted(cls, sheep, dogs, time) -> "WorldState":
        """Skip validation for float64 (k, 2) arrays produced internally."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "sheep", sheep)
        object.__setattr__(obj, "dogs", dogs)
        object.__setattr__(obj, "time", float(time))
        return obj

    def replace(self, sheep=None, dogs=None, time=None) -> "WorldState":
        return WorldState(
            self.sheep if sheep is None else sheep,
            self.dogs if dogs is None else dogs,
            self.time if time is None else time,
        )


@dataclass(frozen=True)
class FlockParams:
    k_S: float = 0.3
    k_G: float = 1.0
    k_D: float = 0.08
    R_S: float = 0.2
    x_G: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        goal = np.asarray(self.x_G, dtype=np.float64).reshape(2)
        object.__setattr__(self, "x_G", goal)
        if min(self.k_S, self.k_G, self.k_D) < 0:
            raise ValueError("flock gains must be nonnegative")
        if not self.R_S > 0:
            raise ValueError("R_S must be positive")

    def scaled(self, c: float) -> "FlockParams":
        """Copy with all three gains multiplied by ``c``."""
        return FlockParams(c * self.k_S, c * self.k_G, c * self.k_D, self.R_S, self.x_G)


def _geometry(state: WorldState):
    xs, xd = state.sheep, state.dogs
    d = xs[None, :, :] - xs[:, None, :]  # d[i, j] = x_j - x_i
    r = np.linalg.norm(d, axis=-1)
    n = len(xs)
    off = ~np.eye(n, dtype=bool)
    if n > 1 and r[off].min() <= EPS_MIN:
        raise SingularSeparation("two sheep are closer than EPS_MIN")
    np.fill_diagonal(r, 1.0)
    e = xs[:, None, :] - xd[None, :, :]  # e[i, k] = x_i - x_k
    re = np.linalg.norm(e, axis=-1)
    if re.size and re.min() <= EPS_MIN:
        raise SingularSeparation("a dog is closer than EPS_MIN to a sheep")
    return d, r, e, re


def velocities(state: WorldState, params: FlockParams) -> np.ndarray:
    """Velocity field of every sheep, shape (n, 2)."""
    d, r, e, re = _geometry(state)
    coh = 1.0 - params.R_S**3 / r**3
    np.fill_diagonal(coh, 0.0)
    out = params.k_S * np.einsum("ij,ijc->ic", coh, d)
    out += params.k_G * (params.x_G - state.sheep)
    if state.m:
        out += params.k_D * np.einsum("ik,ikc->ic", 1.0 / re**3, e)
    return out


def jacobians(state: WorldState, params: FlockParams):
    """All Jacobian blocks at once.

    Returns ``(JS, JD)`` with ``JS[j, i] = d f_i / d x_{S_j}`` of shape
    (n, n, 2, 2) and ``JD[k, i] = d f_i / d x_{D_k}`` of shape (m, n, 2, 2).
    """
    d, r, e, re = _geometry(state)
    n, m = state.n, state.m
    eye = np.eye(2)
    R3 = params.R_S**3

    # d/dd of (1 - R^3/|d|^3) d
    G = (1.0 - R3 / r**3)[..., None, None] * eye + (3.0 * R3 / r**5)[..., None, None] * (
        d[..., :, None] * d[..., None, :]
    )
    G[np.arange(n), np.arange(n)] = 0.0
    JS = params.k_S * np.transpose(G, (1, 0, 2, 3)).copy()  # JS[j, i] = k_S G[i, j]
    diag = -params.k_S * G.sum(axis=1) - params.k_G * eye

    if m:
        # d/de of e / |e|^3
        Q = (1.0 / re**3)[..., None, None] * eye - (3.0 / re**5)[..., None, None] * (
            e[..., :, None] * e[..., None, :]
        )
        diag = diag + params.k_D * Q.sum(axis=1)
        JD = -params.k_D * np.transpose(Q, (1, 0, 2, 3))
    else:
        JD = np.zeros((0, n, 2, 2))
    JS[np.arange(n), np.arange(n)] = diag
    return JS, JD


def sheep_velocity(state: WorldState, params: FlockParams, i: int) -> np.ndarray:
    if not 0 <= i < state.n:
        raise IndexError(f"sheep index {i} out of range")
    return velocities(state, params)[i]


def sheep_jacobian_sheep(state: WorldState, params: FlockParams, j: int, i: int) -> np.ndarray:
    """d f_i / d x_{S_j} as a 2x2 matrix."""
    return jacobians(state, params)[0][j, i]


def sheep_jacobian_dog(state: WorldState, params: FlockParams, k: int, i: int) -> np.ndarray:
    """d f_i / d x_{D_k} as a 2x2 matrix."""
    return jacobians(state, params)[1][k, i]


def finite_diff_jacobian(state, params, target, i, step=FD_STEP) -> np.ndarray:
    """Central-difference estimate of one Jacobian block.

    ``target`` is ``("sheep", j)`` or ``("dog", k)``.
    """
    kind, idx = target
    if kind not in ("sheep", "dog"):
        raise ValueError(f"unknown target kind {kind!r}")
    if not step > 0:
        raise ValueError("finite-difference step must be positive")
    out = np.empty((2, 2))
    for c in range(2):
        cols = []
        for sgn in (1.0, -1.0):
            sheep, dogs = state.sheep.copy(), state.dogs.copy()
            arr = sheep if kind == "sheep" else dogs
            arr[idx, c] += sgn * step
            cols.append(sheep_velocity(state.replace(sheep=sheep, dogs=dogs), params, i))
        out[:, c] = (cols[0] - cols[1]) / (2.0 * step)
    return out


def dog_jacobian_determinant(params: FlockParams, separation: float) -> float:
    """Closed-form det(d f / d x_D) for one sheep and one dog.

    The dog block is ``-k_D (I/r^3 - 3 e e^T / r^5)`` with eigenvalues
    ``-k_D/r^3`` and ``2 k_D/r^3``, hence ``-2 k_D^2 / r^6``.
    """
    return -2.0 * params.k_D**2 / separation**6
