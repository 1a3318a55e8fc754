import math

import numpy as np
import pytest

from align.errors import DegenerateInput, InvalidPoints
from align.geometry import (
    Pose2D,
    RigidTransform2D,
    apply_transform,
    as_point_set,
    compose,
    fit_residuals,
    inverse,
    normalize_angle,
    relative_pose,
    rigid_fit,
    transform_error,
)


def transforms_close(a, b, tol):
    planar, angular = transform_error(a, b)
    return planar <= tol and angular <= tol


def random_transform(rng):
    return RigidTransform2D(rng.uniform(-math.pi, math.pi), tuple(rng.uniform(-50, 50, size=2)))


@pytest.mark.parametrize("theta, expected", [
    (0.0, 0.0),
    (math.pi, math.pi),
    (-math.pi, math.pi),
    (3 * math.pi, math.pi),
    (2 * math.pi + 0.5, 0.5),
    (-0.5, -0.5),
])
def test_normalize_angle(theta, expected):
    assert normalize_angle(theta) == pytest.approx(expected)


def test_pose_and_transform_normalize_rotation():
    assert Pose2D(0, 0, 4 * math.pi + 1.0).theta == pytest.approx(1.0)
    assert RigidTransform2D(-3 * math.pi, (0, 0)).rotation == pytest.approx(math.pi)


def test_compose_matches_homogeneous_matrices():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a, b = random_transform(rng), random_transform(rng)
        np.testing.assert_allclose(compose(a, b).matrix(), a.matrix() @ b.matrix(), atol=1e-9)


def test_compose_with_inverse_is_identity():
    rng = np.random.default_rng(2)
    for _ in range(50):
        t = random_transform(rng)
        assert transforms_close(compose(t, inverse(t)), RigidTransform2D.identity(), tol=1e-9)
        assert transforms_close(t.compose(t.inverse()), RigidTransform2D.identity(), tol=1e-9)


def test_relative_pose_maps_other_frame_into_ego_frame():
    ego = Pose2D(10.0, 5.0, 0.3)
    other = Pose2D(-4.0, 2.0, -1.1)
    world = np.array([[1.0, 2.0], [30.0, -7.0]])
    in_ego = apply_transform(inverse(ego.as_transform()), world)
    in_other = apply_transform(inverse(other.as_transform()), world)
    np.testing.assert_allclose(apply_transform(relative_pose(ego, other), in_other), in_ego, atol=1e-9)


def test_to_list_round_trip():
    t = RigidTransform2D(0.25, (1.5, -2.0))
    assert t.to_list() == [1.5, -2.0, 0.25]
    assert RigidTransform2D.from_list(t.to_list()) == t


def test_rigid_fit_recovers_exact_transform():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        truth = random_transform(rng)
        src = rng.uniform(-40, 40, size=(int(rng.integers(2, 12)), 2))
        est = rigid_fit(src, apply_transform(truth, src))
        planar, angular = transform_error(est, truth)
        assert planar < 1e-9
        assert angular < 1e-9


def test_rigid_fit_two_points():
    truth = RigidTransform2D(1.0, (3.0, 4.0))
    src = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert transforms_close(rigid_fit(src, apply_transform(truth, src)), truth, tol=1e-12)


def test_rigid_fit_never_returns_reflection():
    src = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.5]])
    mirrored = src * np.array([1.0, -1.0])
    est = rigid_fit(src, mirrored)
    np.testing.assert_allclose(np.linalg.det(est.rotation_matrix()), 1.0)


def test_rigid_fit_noisy_residuals_are_small():
    rng = np.random.default_rng(5)
    truth = RigidTransform2D(0.7, (12.0, -3.0))
    src = rng.uniform(-30, 30, size=(40, 2))
    dst = apply_transform(truth, src) + rng.normal(0, 0.05, size=src.shape)
    est = rigid_fit(src, dst)
    assert fit_residuals(est, src, dst).mean() < 0.1
    planar, angular = transform_error(est, truth)
    assert planar < 0.1
    assert angular < 0.01


@pytest.mark.parametrize("src", [
    np.zeros((1, 2)),
    np.zeros((0, 2)),
    np.array([[2.0, 3.0], [2.0, 3.0], [2.0, 3.0]]),
])
def test_rigid_fit_degenerate(src):
    with pytest.raises(DegenerateInput):
        rigid_fit(src, src)


def test_rigid_fit_shape_mismatch():
    with pytest.raises(DegenerateInput):
        rigid_fit(np.zeros((3, 2)), np.zeros((4, 2)))


def test_as_point_set_rejects_non_finite():
    with pytest.raises(InvalidPoints):
        as_point_set([[0.0, np.nan]])
    with pytest.raises(InvalidPoints):
        as_point_set([[0.0, 1.0, 2.0]])
    assert as_point_set([]).shape == (0, 2)


def test_transform_error_wraps_angle():
    a = RigidTransform2D(math.pi - 0.01, (0.0, 0.0))
    b = RigidTransform2D(-math.pi + 0.01, (3.0, 4.0))
    planar, angular = transform_error(a, b)
    assert planar == pytest.approx(5.0)
    assert angular == pytest.approx(0.02)
