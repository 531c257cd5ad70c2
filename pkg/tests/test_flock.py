import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_state
from sheepdog import _kernels
from sheepdog.errors import SingularSeparation
from sheepdog.flock import (
    EPS_MIN,
    FlockParams,
    WorldState,
    dog_jacobian_determinant,
    finite_diff_jacobian,
    jacobians,
    sheep_jacobian_dog,
    sheep_jacobian_sheep,
    sheep_velocity,
    velocities,
)

P = FlockParams()


def test_sheep_at_goal_is_still():
    s = WorldState([[0.0, 0.0]], np.zeros((0, 2)))
    assert np.allclose(sheep_velocity(s, FlockParams(k_S=2, k_G=3, k_D=1), 0), 0)


def test_cohesion_vanishes_at_safety_spacing():
    p = FlockParams(k_G=0.0, R_S=0.7)
    s = WorldState([[0.0, 0.0], [0.7, 0.0]], np.zeros((0, 2)))
    assert np.allclose(velocities(s, p), 0.0, atol=1e-15)


def test_dog_repulsion_unit_distance():
    p = FlockParams(k_S=0.0, k_G=0.0, k_D=0.08)
    s = WorldState([[0.0, 0.0]], [[1.0, 0.0]])
    assert np.allclose(sheep_velocity(s, p, 0), [-0.08, 0.0])


def test_pure_goal_attraction_is_linear(rng):
    p = FlockParams(k_S=0.0, k_G=1.7, x_G=(0.3, -0.2))
    s = random_state(rng, 4, 0)
    assert np.allclose(velocities(s, p), 1.7 * (p.x_G - s.sheep))


def test_lone_sheep_jacobian_is_goal_gain():
    s = WorldState([[1.0, 2.0]], np.zeros((0, 2)))
    assert np.allclose(sheep_jacobian_sheep(s, FlockParams(k_G=2.5), 0, 0), -2.5 * np.eye(2))


def test_no_cross_coupling_without_cohesion(rng):
    s = random_state(rng, 3, 2)
    assert np.allclose(sheep_jacobian_sheep(s, FlockParams(k_S=0.0), 1, 0), 0.0)


def test_zero_repulsion_gives_zero_dog_block(rng):
    s = random_state(rng, 2, 2)
    assert np.allclose(sheep_jacobian_dog(s, FlockParams(k_D=0.0), 1, 0), 0.0)


def test_zero_gains_finite_difference_is_zero(rng):
    s = random_state(rng, 2, 1)
    p = FlockParams(0.0, 0.0, 0.0)
    assert np.allclose(finite_diff_jacobian(s, p, ("sheep", 1), 0), 0.0)


def test_swapped_roles_symmetry():
    s = WorldState([[-0.4, 0.0], [0.4, 0.0]], np.zeros((0, 2)))
    swapped = WorldState([[0.4, 0.0], [-0.4, 0.0]], np.zeros((0, 2)))
    assert np.allclose(sheep_jacobian_sheep(s, P, 1, 0), sheep_jacobian_sheep(swapped, P, 0, 1))


def test_random_state_matches_finite_differences(rng):
    s = random_state(rng, 3, 2)
    for j in range(3):
        for i in range(3):
            exact = sheep_jacobian_sheep(s, P, j, i)
            approx = finite_diff_jacobian(s, P, ("sheep", j), i)
            assert np.allclose(exact, approx, rtol=1e-6, atol=1e-6 * np.abs(exact).max())
    for k in range(2):
        exact = sheep_jacobian_dog(s, P, k, 0)
        approx = finite_diff_jacobian(s, P, ("dog", k), 0)
        assert np.allclose(exact, approx, rtol=1e-6, atol=1e-6 * np.abs(exact).max())


def test_one_on_one_unit_distance_dog_block():
    s = WorldState([[0.0, 0.0]], [[0.6, 0.8]])
    exact = sheep_jacobian_dog(s, P, 0, 0)
    assert np.allclose(exact, finite_diff_jacobian(s, P, ("dog", 0), 0), rtol=1e-6)


@given(st.floats(0.01, 20.0), st.floats(0.0, 2 * np.pi))
def test_dog_block_determinant_closed_form(r, th):
    s = WorldState([[0.0, 0.0]], [[r * np.cos(th), r * np.sin(th)]])
    det = np.linalg.det(sheep_jacobian_dog(s, P, 0, 0))
    closed = dog_jacobian_determinant(P, r)
    assert det < 0
    assert det == pytest.approx(closed, rel=1e-9)


def test_singular_separation_raises():
    s = WorldState([[0.0, 0.0]], [[EPS_MIN / 2, 0.0]])
    with pytest.raises(SingularSeparation):
        velocities(s, P)
    two = WorldState([[0.0, 0.0], [0.0, EPS_MIN / 3]], np.zeros((0, 2)))
    with pytest.raises(SingularSeparation):
        jacobians(two, P)


def test_state_rejects_non_finite():
    with pytest.raises(ValueError):
        WorldState([[np.nan, 0.0]], np.zeros((0, 2)))


def _rot(th):
    c, s = np.cos(th), np.sin(th)
    return np.array([[c, -s], [s, c]])


@given(st.integers(0, 10_000), st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 2 * np.pi))
def test_translation_and_rotation_equivariance(seed, tx, ty, th):
    rng = np.random.default_rng(seed)
    s = random_state(rng, 3, 2)
    goal = rng.uniform(-1, 1, 2)
    f = velocities(s, FlockParams(x_G=goal))
    t = np.array([tx, ty])
    moved = WorldState(s.sheep + t, s.dogs + t)
    assert np.allclose(velocities(moved, FlockParams(x_G=goal + t)), f, atol=1e-9)
    R = _rot(th)
    turned = WorldState(s.sheep @ R.T, s.dogs @ R.T)
    assert np.allclose(velocities(turned, FlockParams(x_G=R @ goal)), f @ R.T, atol=1e-9)


@given(st.integers(0, 10_000), st.integers(1, 5), st.integers(0, 5))
def test_compiled_kernel_matches_reference(seed, n, m):
    rng = np.random.default_rng(seed)
    s = random_state(rng, n, m)
    p = FlockParams(x_G=rng.uniform(-1, 1, 2))
    f, JS, JD, ok = _kernels.field_and_jacobians(s.sheep, s.dogs, p.k_S, p.k_G, p.k_D, p.R_S, p.x_G, EPS_MIN)
    assert ok
    ref_JS, ref_JD = jacobians(s, p)
    assert np.allclose(f, velocities(s, p), rtol=1e-12, atol=1e-12)
    assert np.allclose(JS, ref_JS, rtol=1e-10, atol=1e-10)
    assert np.allclose(JD, ref_JD, rtol=1e-10, atol=1e-10)


def test_params_validation():
    with pytest.raises(ValueError):
        FlockParams(k_S=-1.0)
    with pytest.raises(ValueError):
        FlockParams(R_S=0.0)
    scaled = P.scaled(2.0)
    assert (scaled.k_S, scaled.k_G, scaled.k_D) == (0.6, 2.0, 0.16)
