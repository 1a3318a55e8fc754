import math

import numpy as np
import pytest

from align.errors import BadCorrespondence, EmptyFrame, InvalidPoints
from align.frames import Box, DetectionFrame
from align.geometry import RigidTransform2D, apply_transform
from align.graph import build_graph, distance_profile, graph_invariance_check


def make_frame(points, agent="a", t=0, scores=None):
    scores = scores if scores is not None else [1.0] * len(points)
    boxes = tuple(Box(float(x), float(y), 0.0, i, s) for i, ((x, y), s) in enumerate(zip(points, scores)))
    return DetectionFrame(agent, t, boxes)


def test_build_graph_distances():
    g = build_graph(make_frame([[0, 0], [3, 4], [0, 4]]))
    assert g.n == 3
    assert g.feature_dim == 1
    np.testing.assert_allclose(np.diag(g.distance_matrix), 0.0)
    np.testing.assert_allclose(g.distance_matrix, g.distance_matrix.T)
    assert sorted(g.distance_matrix[np.triu_indices(3, 1)]) == pytest.approx([3.0, 4.0, 5.0])
    np.testing.assert_array_equal(g.edge_features[..., 0], g.distance_matrix)


def test_nodes_sorted_by_position_independent_of_input_order():
    pts = np.array([[5.0, 1.0], [-2.0, 3.0], [0.0, 0.0], [5.0, -1.0]])
    g1 = build_graph(make_frame(pts))
    g2 = build_graph(make_frame(pts[::-1]))
    np.testing.assert_array_equal(g1.centers(), g2.centers())
    np.testing.assert_array_equal(g1.distance_matrix, g2.distance_matrix)
    assert [nd.x for nd in g1.nodes] == sorted(nd.x for nd in g1.nodes)


def test_single_box_graph():
    g = build_graph(make_frame([[1.0, 2.0]]))
    assert g.n == 1
    assert g.distance_matrix.shape == (1, 1)


def test_empty_frame():
    with pytest.raises(EmptyFrame):
        build_graph(DetectionFrame("a", 0, ()))


def test_non_finite_center():
    with pytest.raises(InvalidPoints):
        build_graph(make_frame([[0.0, 0.0], [np.inf, 1.0]]))


def test_min_confidence_filters_boxes():
    frame = make_frame([[0, 0], [1, 0], [2, 0]], scores=[0.9, 0.2, 0.6])
    assert build_graph(frame, min_confidence=0.5).n == 2
    assert build_graph(frame).n == 3
    with pytest.raises(EmptyFrame):
        build_graph(frame, min_confidence=0.95)


def test_graph_is_invariant_to_rigid_motion():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-20, 20, size=(10, 2))
    t = RigidTransform2D(1.3, (40.0, -12.0))
    ga = build_graph(make_frame(pts))
    gb = build_graph(make_frame(apply_transform(t, pts)))
    ids_b = {nd.truth_id: q for q, nd in enumerate(gb.nodes)}
    corr = [(p, ids_b[nd.truth_id]) for p, nd in enumerate(ga.nodes)]
    assert graph_invariance_check(ga, gb, corr) < 1e-9


def test_invariance_check_bad_index():
    g = build_graph(make_frame([[0, 0], [1, 1]]))
    with pytest.raises(BadCorrespondence):
        graph_invariance_check(g, g, [(0, 0), (2, 1)])


def test_invariance_check_needs_two_pairs():
    g = build_graph(make_frame([[0, 0], [1, 1]]))
    assert graph_invariance_check(g, g, [(0, 0)]) == 0.0


def test_distance_profile_shape_and_order():
    g = build_graph(make_frame([[0, 0], [1, 0], [3, 0], [7, 0]]))
    prof = distance_profile(g.distance_matrix, length=8)
    assert prof.shape == (4, 8)
    assert np.all(np.diff(prof, axis=1) >= 0)
    assert distance_profile(np.zeros((1, 1)), 8).shape == (1, 8)


def test_distance_profile_rotation_invariant():
    pts = np.array([[0.0, 0.0], [4.0, 1.0], [-2.0, 5.0], [3.0, -3.0]])
    rotated = apply_transform(RigidTransform2D(math.pi / 3, (1.0, 1.0)), pts)
    a = distance_profile(build_graph(make_frame(pts)).distance_matrix)
    b = distance_profile(build_graph(make_frame(rotated)).distance_matrix)
    np.testing.assert_allclose(np.sort(a, axis=0), np.sort(b, axis=0), atol=1e-9)
