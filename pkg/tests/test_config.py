import numpy as np
import pytest

from sheepdog import config
from sheepdog.barriers import ZoneMode
from sheepdog.errors import ConfigError

BASIC = """\
[scenario]
dt = 0.02
horizon = 4.0
seed = 3

[flock]
k_S = 0.3
x_G = [0.5, 0.0]

[[zones]]
center = [0.0, 0.0]
radius = 1.0

[[zones]]
center = [4.0, 4.0]
radius = 2.0
mode = "keep_in"

[initial]
sheep = [[3.0, 0.5], [3.2, 0.1]]
dogs = [[2.0, -1.0]]
"""


def test_scenario_round_trip():
    sc = config.scenario(config.parse_text(BASIC))
    assert sc.dt == 0.02 and sc.horizon == 4.0 and sc.seed == 3
    assert np.array_equal(sc.params.x_G, [0.5, 0.0])
    assert len(sc.zones) == 2 and sc.zones[1].mode is ZoneMode.KEEP_IN
    assert sc.sheep.shape == (2, 2) and sc.dogs.shape == (1, 2)
    assert sc.gains is None


def test_unknown_key_names_line():
    with pytest.raises(ConfigError) as exc:
        config.parse_text(BASIC.replace("seed = 3", "sead = 3"))
    assert exc.value.key == "scenario.sead" and exc.value.line == 4


def test_bad_dt_names_key_and_line():
    with pytest.raises(ConfigError) as exc:
        config.scenario(config.parse_text(BASIC.replace("dt = 0.02", "dt = -1.0")))
    assert exc.value.key == "scenario.dt" and exc.value.line == 2
    assert "dt" in str(exc.value)


def test_type_errors_are_anchored():
    with pytest.raises(ConfigError) as exc:
        config.scenario(config.parse_text(BASIC.replace("k_S = 0.3", 'k_S = "lots"')))
    assert exc.value.key == "flock.k_S" and exc.value.line == 7


def test_syntax_error_has_line():
    with pytest.raises(ConfigError) as exc:
        config.parse_text("[scenario]\ndt = = 3\n")
    assert exc.value.line == 2


def test_overrides_apply_and_reject_unknown():
    doc = config.apply_overrides(config.parse_text(BASIC), ["scenario.horizon=9", "scenario.agent_model=unicycle"])
    sc = config.scenario(doc)
    assert sc.horizon == 9.0 and sc.agent_model == "unicycle"
    with pytest.raises(ConfigError):
        config.apply_overrides(config.parse_text(BASIC), ["scenario.nope=1"])
    with pytest.raises(ConfigError):
        config.apply_overrides(config.parse_text(BASIC), ["horizon=1"])


def test_fixed_gains_need_both_poles():
    with pytest.raises(ConfigError):
        config.scenario(config.parse_text(BASIC + "\n[gains]\np1 = 2.0\n"))
    sc = config.scenario(config.parse_text(BASIC + "\n[gains]\np1 = 2.0\np2 = 3.0\ngamma = 5.0\n"))
    assert (sc.gains.p1, sc.gains.p2, sc.gains.gamma) == (2.0, 3.0, 5.0)


def test_counts_must_agree_with_positions():
    with pytest.raises(ConfigError) as exc:
        config.scenario(config.parse_text(BASIC.replace("seed = 3", "seed = 3\nn = 5")))
    assert exc.value.key == "scenario.n"


def test_batch_grid_forms():
    doc = config.parse_text("[batch]\nsheep = [2, 4]\ndogs = [1]\ntrials = 3\n[scenario]\ncollision_constraints = true\n")
    spec = config.batch(doc)
    assert spec.grid == ((2, 1), (4, 1)) and spec.trials == 3 and spec.collision_constraints
    spec = config.batch(config.parse_text("[batch]\ngrid = [[2, 2]]\n"))
    assert spec.grid == ((2, 2),) and spec.trials == 100
    with pytest.raises(ConfigError):
        config.batch(config.parse_text("[batch]\ngrid = [[2, 2]]\nsheep = [1]\n"))
    with pytest.raises(ConfigError) as exc:
        config.batch(config.parse_text("[batch]\ntrials = 0\n"))
    assert exc.value.key == "batch.trials"


def test_certificate_bounds_required():
    with pytest.raises(ConfigError):
        config.certificate_bounds(config.parse_text("[certificate]\nM1 = 1.0\n"))
    b = config.certificate_bounds(config.parse_text("[certificate]\nM1 = 1.0\nM2 = 2\nM3 = 1\n"))
    assert (b.M1, b.M2, b.M3) == (1.0, 2.0, 1.0)
