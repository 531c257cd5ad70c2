"""Batch execution of random scenarios and success-rate tables.

Each trial draws its own initial state from a seed derived from
``(base_seed, n, m, trial)``, auto-tunes its gains at that state, and runs
the closed loop. Cells aggregate by plain counting, so the table does not
depend on the order in which trials finish.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from statistics import NormalDist

import numpy as np

from .barriers import DEFAULT_GAMMA, GAIN_LADDER, BarrierGains, ProtectedZone
from .flock import FlockParams
from .sampling import SamplerSpec
from .sim import EventKind, ScenarioConfig, run

log = logging.getLogger(__name__)

TABLE_SIZES = (2, 4, 6, 8, 10)


def trial_seed(base_seed: int, n: int, m: int, trial: int) -> int:
    """Independent 63-bit seed for one trial of one cell."""
    ss = np.random.SeedSequence([base_seed, n, m, trial])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class BatchSpec:
    grid: tuple = tuple((n, m) for n in TABLE_SIZES for m in TABLE_SIZES)
    trials: int = 100
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    collision_constraints: bool = False
    base_seed: int = 0
    params: FlockParams = field(default_factory=FlockParams)
    zones: tuple = (ProtectedZone((0.0, 0.0), 1.0),)
    gains: BarrierGains | None = None  # None: tune per trial
    gamma: float = DEFAULT_GAMMA
    gain_ladder: tuple = GAIN_LADDER
    dt: float = 0.01
    horizon: float = 30.0
    max_substeps: int = 512
    breach_tolerance: float = 1e-3
    stop_on_failure: bool = True
    workers: int = 1

    def __post_init__(self):
        grid = tuple((int(n), int(m)) for n, m in self.grid)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "zones", tuple(self.zones))
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if len(set(grid)) != len(grid):
            raise ValueError("grid cells must be distinct")
        for n, m in grid:
            if n < 1 or m < 0:
                raise ValueError(f"invalid cell ({n}, {m})")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        self.sampler.validate(self.zones)

    def scenario(self, n: int, m: int, trial: int) -> ScenarioConfig:
        return ScenarioConfig(
            params=self.params,
            zones=self.zones,
            gains=self.gains,
            gamma=self.gamma,
            gain_ladder=self.gain_ladder,
            n=n,
            m=m,
            sampler=self.sampler,
            dt=self.dt,
            horizon=self.horizon,
            collision_constraints=self.collision_constraints,
            seed=trial_seed(self.base_seed, n, m, trial),
            max_substeps=self.max_substeps,
            breach_tolerance=self.breach_tolerance,
            stop_on_failure=self.stop_on_failure,
        )


@dataclass(frozen=True)
class TrialResult:
    n: int
    m: int
    trial: int
    seed: int
    success: bool
    breach: bool
    collision: bool
    relaxed: bool
    error: str = ""
    min_h: float = float("nan")
    wall_time: float = 0.0


def run_trial(spec: BatchSpec, n: int, m: int, trial: int) -> TrialResult:
    """One trial; any exception is recorded as a failed trial."""
    config = spec.scenario(n, m, trial)
    try:
        _, out = run(config)
    except Exception as exc:  # recorded, never aborts the batch
        log.warning("trial (%d, %d, %d) raised %r", n, m, trial, exc)
        return TrialResult(n, m, trial, config.seed, False, False, False, False, f"{type(exc).__name__}: {exc}")
    return TrialResult(
        n,
        m,
        trial,
        config.seed,
        out.success,
        bool(out.events.get(EventKind.BREACH.value)),
        bool(out.events.get(EventKind.COLLISION.value)),
        bool(out.relaxed_steps),
        "",
        out.min_h,
        out.wall_time,
    )


def _run_job(job):
    return run_trial(*job)


@dataclass
class CellStats:
    n: int
    m: int
    trials: int = 0
    successes: int = 0
    breaches: int = 0
    collisions: int = 0
    relaxed: int = 0
    errors: int = 0

    def add(self, r: TrialResult):
        self.trials += 1
        self.successes += r.success
        self.breaches += r.breach
        self.collisions += r.collision
        self.relaxed += r.relaxed
        self.errors += bool(r.error)

    @property
    def success_pct(self) -> float:
        return 100.0 * self.successes / self.trials if self.trials else 0.0

    def half_width(self, confidence: float = 0.95) -> float:
        """Wilson score interval half-width, in percentage points."""
        if not self.trials:
            return 0.0
        z = NormalDist().inv_cdf(0.5 + confidence / 2)
        k, t = self.successes, self.trials
        p = k / t
        return 100.0 * z * np.sqrt(p * (1 - p) / t + z * z / (4 * t * t)) / (1 + z * z / t)


@dataclass
class SuccessTable:
    cells: dict = field(default_factory=dict)  # (n, m) -> CellStats
    collision_constraints: bool = False
    results: list = field(default_factory=list)

    @property
    def sheep_counts(self) -> list[int]:
        return sorted({n for n, _ in self.cells})

    @property
    def dog_counts(self) -> list[int]:
        return sorted({m for _, m in self.cells})

    def percent(self, n: int, m: int) -> float:
        return self.cells[(n, m)].success_pct

    def __eq__(self, other):
        if not isinstance(other, SuccessTable):
            return NotImplemented
        return self.cells == other.cells and self.collision_constraints == other.collision_constraints


def aggregate(results, collision_constraints=False, grid=()) -> SuccessTable:
    """Commutative roll-up of trial results into a table."""
    cells = {(n, m): CellStats(n, m) for n, m in grid}
    for r in results:
        cells.setdefault((r.n, r.m), CellStats(r.n, r.m)).add(r)
    ordered = sorted(results, key=lambda r: (r.n, r.m, r.trial))
    return SuccessTable(dict(sorted(cells.items())), collision_constraints, ordered)


def run_batch(spec: BatchSpec, progress=None) -> SuccessTable:
    """Run every trial of every cell and aggregate.

    ``progress`` is an optional callable receiving each finished
    :class:`TrialResult`.
    """
    jobs = [(spec, n, m, t) for n, m in spec.grid for t in range(spec.trials)]
    start = time.perf_counter()
    results = []
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            for r in pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (8 * spec.workers))):
                results.append(r)
                if progress:
                    progress(r)
    else:
        for job in jobs:
            r = _run_job(job)
            results.append(r)
            if progress:
                progress(r)
    log.info("batch of %d trials finished in %.1f s", len(jobs), time.perf_counter() - start)
    return aggregate(results, spec.collision_constraints, spec.grid)


# ---------------------------------------------------------------- rendering

CSV_FIELDS = ("n", "m", "trials", "successes", "breaches", "collisions", "relaxed", "errors")


def emit_table(table: SuccessTable, fmt: str = "text") -> str:
    """Render as ``text`` (rows = sheep, columns = dogs), ``csv`` or ``json``."""
    if fmt == "text":
        return _emit_text(table)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS + ("success_pct", "ci95_half_width", "collision_constraints"))
        flag = int(table.collision_constraints)
        for c in table.cells.values():
            w.writerow(
                [getattr(c, k) for k in CSV_FIELDS] + [f"{c.success_pct:.2f}", f"{c.half_width():.2f}", flag]
            )
        return buf.getvalue()
    if fmt == "json":
        doc = {
            "collision_constraints": table.collision_constraints,
            "cells": [
                {**asdict(c), "success_pct": round(c.success_pct, 2), "ci95_half_width": round(c.half_width(), 2)}
                for c in table.cells.values()
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")


def _emit_text(table: SuccessTable) -> str:
    rows, cols = table.sheep_counts, table.dog_counts
    title = "success rate (%), rows = sheep, columns = dogs"
    if table.collision_constraints:
        title += ", collision constraints on"
    lines = [title, "n\\m " + "".join(f"{m:>8d}" for m in cols)]
    for n in rows:
        cells = []
        for m in cols:
            c = table.cells.get((n, m))
            cells.append(f"{c.success_pct:8.0f}" if c and c.trials else f"{'-':>8}")
        lines.append(f"{n:<4d}" + "".join(cells))
    return "\n".join(lines) + "\n"


def parse_table(text: str, fmt: str) -> SuccessTable:
    """Inverse of :func:`emit_table` for the structured formats."""
    if fmt == "json":
        doc = json.loads(text)
        cells = [CellStats(**{k: int(c[k]) for k in CSV_FIELDS}) for c in doc["cells"]]
        return SuccessTable({(c.n, c.m): c for c in cells}, bool(doc["collision_constraints"]))
    if fmt == "csv":
        rows = list(csv.DictReader(io.StringIO(text)))
        cells = [CellStats(**{k: int(row[k]) for k in CSV_FIELDS}) for row in rows]
        flag = bool(rows and int(rows[0]["collision_constraints"]))
        return SuccessTable({(c.n, c.m): c for c in cells}, flag)
    raise ValueError(f"cannot parse table format {fmt!r}")
