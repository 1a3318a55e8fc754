import math

import cv2
import numpy as np
import pytest

from align.errors import FrameIoError
from align.frames import Box, DetectionFrame
from align.geometry import RigidTransform2D, apply_transform, inverse
from align.graph import build_graph
from align.pipeline import AlignmentResult, GraphBuffer, PipelineConfig, free_align
from align.utils import EGO_COLOR, rad_to_deg, render_alignment

POSE = RigidTransform2D(0.4, (6.0, 2.0))


def aligned_case():
    pts = np.random.default_rng(0).uniform(-15, 15, size=(8, 2))
    ego = DetectionFrame("agent_0", 0, tuple(Box(float(x), float(y), 0.0, i) for i, (x, y) in enumerate(pts)))
    local = apply_transform(inverse(POSE), pts)
    collab = DetectionFrame("agent_1", 0, tuple(Box(float(x), float(y), 0.0, i) for i, (x, y) in enumerate(local)))
    buffer = GraphBuffer(PipelineConfig(buffer_length=0))
    buffer.push_frame(ego)
    return build_graph(ego), build_graph(collab), free_align(buffer, collab)


def test_rad_to_deg():
    assert rad_to_deg(math.pi) == pytest.approx(180.0)


def test_render_aligned(tmp_path):
    ego_graph, collab_graph, result = aligned_case()
    assert result.aligned
    path = render_alignment(ego_graph, collab_graph, result, tmp_path / "out" / "bev.png", size=200)
    img = cv2.imread(str(path))
    assert img.shape == (200, 200, 3)
    assert np.any(np.all(img == EGO_COLOR, axis=2))


def test_render_rejected(tmp_path):
    ego_graph, collab_graph, _ = aligned_case()
    path = render_alignment(ego_graph, collab_graph, AlignmentResult.rejected("no common subgraph"),
                            tmp_path / "rejected.png", size=120)
    assert cv2.imread(str(path)).shape == (120, 120, 3)


def test_render_unwritable_path(tmp_path):
    ego_graph, collab_graph, result = aligned_case()
    with pytest.raises(FrameIoError):
        render_alignment(ego_graph, collab_graph, result, tmp_path / "bev.unknownext")
