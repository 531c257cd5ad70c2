import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from sheepdog.flock import WorldState  # noqa: E402

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_state(rng, n, m, spread=3.0, min_sep=0.15):
    """Positions in a box with every pairwise distance above ``min_sep``."""
    while True:
        pts = rng.uniform(-spread, spread, size=(n + m, 2))
        dist = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        if n + m < 2 or dist[np.triu_indices(n + m, 1)].min() > min_sep:
            return WorldState(pts[:n], pts[n:], 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    def _record(number: int, passed: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
