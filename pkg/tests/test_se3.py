import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from poseforge.errors import DegenerateMean
from poseforge.se3 import (
    RigidTransform,
    chordal_cost,
    compose,
    geodesic_angle,
    invert,
    is_rotation,
    matrix_to_rodrigues,
    project_to_rotation,
    random_rotation,
    rodrigues_to_matrix,
    skew,
    weighted_rotation_mean,
)

from conftest import random_transform

finite = st.floats(-3.0, 3.0, allow_nan=False)
vec3 = arrays(np.float64, 3, elements=finite)


def rotz(deg):
    return rodrigues_to_matrix([0.0, 0.0, math.radians(deg)])


def test_skew_is_cross_product():
    a, b = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.7, -1.1])
    np.testing.assert_allclose(skew(a) @ b, np.cross(a, b))


def test_rodrigues_zero_is_identity():
    np.testing.assert_array_equal(rodrigues_to_matrix([0, 0, 0]), np.eye(3))


def test_quarter_turn_about_x():
    R = rodrigues_to_matrix([math.pi / 2, 0, 0])
    np.testing.assert_allclose(R @ [0, 1, 0], [0, 0, 1], atol=1e-15)


def test_small_angle_first_order():
    r = np.array([1e-10, -2e-10, 3e-10])
    np.testing.assert_allclose(rodrigues_to_matrix(r), np.eye(3) + skew(r), atol=1e-25)


def test_half_turn_about_z():
    R = np.diag([-1.0, -1.0, 1.0])
    np.testing.assert_allclose(matrix_to_rodrigues(R), [0, 0, math.pi], atol=1e-15)


def test_half_turn_sign_tiebreak():
    # both axis signs describe the same rotation; the first nonzero component is made positive
    u = np.array([-1.0, 2.0, 2.0]) / 3.0
    r = matrix_to_rodrigues(rodrigues_to_matrix(math.pi * u))
    np.testing.assert_allclose(r, -math.pi * u, atol=1e-12)


def test_matrix_to_rodrigues_identity():
    np.testing.assert_array_equal(matrix_to_rodrigues(np.eye(3)), np.zeros(3))


@settings(max_examples=200, deadline=None)
@given(vec3)
def test_rodrigues_round_trip(r):
    theta = np.linalg.norm(r)
    if not 1e-6 < theta < math.pi - 1e-6:
        r = r * 0 + np.array([0.3, -0.2, 0.1])
    np.testing.assert_allclose(matrix_to_rodrigues(rodrigues_to_matrix(r)), r, atol=1e-10)


def test_round_trip_random_matrices(rng):
    for _ in range(100):
        R = random_rotation(rng)
        np.testing.assert_allclose(rodrigues_to_matrix(matrix_to_rodrigues(R)), R, atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(vec3)
def test_rodrigues_is_rotation(r):
    assert is_rotation(rodrigues_to_matrix(r), tol=1e-12)


def test_compose_matches_4x4(rng):
    for _ in range(20):
        a, b = random_transform(rng), random_transform(rng)
        np.testing.assert_allclose(compose(a, b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-14)
        np.testing.assert_allclose((a @ b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-14)


def test_compose_identity_and_inverse(rng):
    T = random_transform(rng, 5.0)
    assert compose(T, RigidTransform.identity()).allclose(T)
    assert compose(T, invert(T)).allclose(RigidTransform.identity(), atol=1e-12)
    assert compose(invert(T), T).allclose(RigidTransform.identity(), atol=1e-12)


def test_invert_pure_translation():
    T = RigidTransform(np.eye(3), [0.0, 0.0, 1.0])
    np.testing.assert_array_equal(invert(T).translation, [0.0, 0.0, -1.0])
    assert invert(RigidTransform.identity()).allclose(RigidTransform.identity(), atol=0.0)


def test_apply_matches_homogeneous(rng):
    T = random_transform(rng)
    p = rng.normal(size=(5, 3))
    hom = (T.as_matrix() @ np.c_[p, np.ones(5)].T).T[:, :3]
    np.testing.assert_allclose(T.apply(p), hom, atol=1e-14)


def test_is_rotation_rejects_reflection():
    assert not is_rotation(np.diag([1.0, 1.0, -1.0]))
    assert not is_rotation(np.eye(3) * 1.001)
    assert is_rotation(np.eye(3))


def test_rigid_transform_is_immutable(rng):
    T = random_transform(rng)
    with pytest.raises(ValueError):
        T.rotation[0, 0] = 2.0


def test_geodesic_trivial():
    assert geodesic_angle(np.eye(3), np.eye(3)) == 0.0
    for axis in ([1, 0, 0], [0, 1, 0], [1, 1, 1]):
        u = np.array(axis, float) / np.linalg.norm(axis)
        assert geodesic_angle(np.eye(3), rodrigues_to_matrix(math.pi * u)) == pytest.approx(math.pi, abs=1e-7)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, math.pi - 1e-3), vec3)
def test_geodesic_recovers_angle(theta, axis):
    if np.linalg.norm(axis) < 1e-3:
        axis = np.array([0.0, 0.0, 1.0])
    u = axis / np.linalg.norm(axis)
    assert geodesic_angle(np.eye(3), rodrigues_to_matrix(theta * u)) == pytest.approx(theta, abs=1e-7)


def test_geodesic_symmetric_and_invariant(rng):
    for _ in range(50):
        a, b, c = (random_rotation(rng) for _ in range(3))
        d = geodesic_angle(a, b)
        assert d == pytest.approx(geodesic_angle(b, a), abs=1e-12)
        assert d == pytest.approx(geodesic_angle(c @ a, c @ b), abs=1e-7)
        assert 0.0 <= d <= math.pi


def test_project_to_rotation(rng):
    R = random_rotation(rng)
    noisy = R + 1e-4 * rng.normal(size=(3, 3))
    P = project_to_rotation(noisy)
    assert is_rotation(P)
    assert geodesic_angle(P, R) < 1e-3


def test_mean_single_and_equal():
    R = rotz(37)
    np.testing.assert_allclose(weighted_rotation_mean([R], [1.0]), R, atol=1e-14)
    np.testing.assert_allclose(weighted_rotation_mean([R, R], [0.2, 5.0]), R, atol=1e-14)


def test_mean_ten_degrees_grid_oracle():
    a, b = np.eye(3), rotz(10)
    M = weighted_rotation_mean([a, b], [0.5, 0.5])
    # 0.001 deg grid over rotations about z
    grid = np.arange(0.0, 10.0 + 1e-9, 0.001)
    costs = [chordal_cost(rotz(g), [a, b], [0.5, 0.5]) for g in grid]
    best = grid[int(np.argmin(costs))]
    assert best == pytest.approx(5.0, abs=1e-9)
    assert math.degrees(geodesic_angle(M, rotz(best))) < 1e-3


def test_mean_minimizes_chordal_cost(rng):
    for _ in range(20):
        Rs = [random_rotation(rng) for _ in range(4)]
        w = rng.uniform(0.1, 1.0, 4)
        M = weighted_rotation_mean(Rs, w)
        c0 = chordal_cost(M, Rs, w)
        for _ in range(20):
            P = rodrigues_to_matrix(rng.normal(scale=0.05, size=3)) @ M
            assert chordal_cost(P, Rs, w) >= c0 - 1e-12


def test_mean_degenerate():
    # two half-turns about orthogonal axes plus identity with weights summing to a rank-1 matrix
    Rs = [np.eye(3), np.diag([1.0, -1.0, -1.0])]
    with pytest.raises(DegenerateMean):
        weighted_rotation_mean(Rs, [1.0, 1.0])


def test_mean_rejects_bad_weights():
    with pytest.raises(ValueError):
        weighted_rotation_mean([np.eye(3)], [0.0])
    with pytest.raises(ValueError):
        weighted_rotation_mean([np.eye(3), np.eye(3)], [1.0])


def test_geodesic_exact_zero_and_small_angles(rng):
    for _ in range(100):
        R = random_rotation(rng)
        assert geodesic_angle(R, R) == 0.0
        assert geodesic_angle(R, rodrigues_to_matrix([1e-9, 0, 0]) @ R) == pytest.approx(1e-9, rel=1e-6)


def test_geodesic_forms_agree(rng):
    for _ in range(500):
        a, b = random_rotation(rng), random_rotation(rng)
        arccos = math.acos(max(-1.0, min(1.0, (np.trace(a.T @ b) - 1.0) / 2.0)))
        assert geodesic_angle(a, b) == pytest.approx(arccos, abs=1e-7)


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_compose_associative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_transform(rng, 3.0) for _ in range(3))
    assert compose(compose(a, b), c).allclose(compose(a, compose(b, c)), atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_geodesic_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_rotation(rng) for _ in range(3))
    assert geodesic_angle(a, c) <= geodesic_angle(a, b) + geodesic_angle(b, c) + 1e-9


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(1, 6), st.floats(1e-3, 1e3))
def test_mean_properties(seed, n, scale):
    rng = np.random.default_rng(seed)
    center = random_rotation(rng)
    Rs = [rodrigues_to_matrix(rng.normal(scale=0.5, size=3)) @ center for _ in range(n)]
    w = rng.uniform(0.01, 1.0, n)
    M = weighted_rotation_mean(Rs, w)
    assert np.max(np.abs(M @ M.T - np.eye(3))) < 1e-10 and abs(np.linalg.det(M) - 1) < 1e-10
    c = chordal_cost(M, Rs, w)
    assert all(c <= chordal_cost(R, Rs, w) + 1e-12 for R in Rs)
    np.testing.assert_allclose(weighted_rotation_mean(Rs, w * scale), M, atol=1e-12)
