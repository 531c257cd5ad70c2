"""Random initial conditions for scenarios and Monte Carlo batches."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .barriers import h_value
from .errors import SamplerExhausted
from .flock import EPS_MIN, WorldState

MAX_REJECTIONS = 1000


@dataclass(frozen=True)
class SamplerSpec:
    """Flock centre uniform (by area) on an annulus around the origin, sheep
    uniform in a disc around that centre, dogs uniform in a square."""

    cluster_radius: float = 0.5
    annulus: tuple = (3.0, 5.0)
    dog_region: tuple = (-5.0, 5.0)

    def validate(self, zones=()):
        lo, hi = self.annulus
        if not self.cluster_radius > 10 * EPS_MIN:
            raise ValueError("cluster_radius must exceed 10 * EPS_MIN")
        if not 0 <= lo <= hi:
            raise ValueError("annulus must satisfy 0 <= r_lo <= r_hi")
        if self.dog_region[0] >= self.dog_region[1]:
            raise ValueError("dog_region must be (low, high) with low < high")
        for zone in zones:
            if zone.mode.value == "keep_out" and not lo > zone.radius:
                raise ValueError("annulus inner radius must exceed the zone radius")


def _disc(rng, center, radius, count):
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, count))
    th = rng.uniform(0.0, 2 * np.pi, count)
    return center + np.stack([r * np.cos(th), r * np.sin(th)], axis=1)


def sample_initial(spec: SamplerSpec, n: int, m: int, rng, zones=(), min_dog_distance=0.0) -> WorldState:
    """Draw a state with all separations above ``10 * EPS_MIN`` and every h > 0.

    ``min_dog_distance`` additionally rejects sheep-dog pairs closer than it
    (used to start collision-constrained runs with a nonnegative safety index).
    """
    spec.validate(zones)
    lo, hi = spec.annulus
    floor = 10 * EPS_MIN
    for _ in range(MAX_REJECTIONS):
        rc = np.sqrt(rng.uniform(lo**2, hi**2))
        th = rng.uniform(0.0, 2 * np.pi)
        center = rc * np.array([np.cos(th), np.sin(th)])
        sheep = _disc(rng, center, spec.cluster_radius, n)
        dogs = rng.uniform(spec.dog_region[0], spec.dog_region[1], size=(m, 2))
        if n > 1:
            dss = np.linalg.norm(sheep[:, None] - sheep[None], axis=-1)[np.triu_indices(n, 1)]
            if dss.min() <= floor:
                continue
        if m:
            dsd = np.linalg.norm(sheep[:, None] - dogs[None], axis=-1)
            if dsd.min() <= max(floor, min_dog_distance):
                continue
        if any(h_value(z, x) <= 0 for z in zones for x in sheep):
            continue
        return WorldState(sheep, dogs, 0.0)
    raise SamplerExhausted(f"no valid initial state after {MAX_REJECTIONS} draws")
