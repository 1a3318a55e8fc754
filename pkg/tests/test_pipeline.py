import math

import numpy as np
import pytest

from align.embedding import EmbeddingHyperParams, init_params
from align.errors import InvalidConfig, OutOfOrderFrame
from align.frames import Box, DetectionFrame
from align.geometry import RigidTransform2D, apply_transform, inverse, transform_error
from align.graph import build_graph
from align.mass import MassConfig
from align.pipeline import (
    AlignmentResult,
    AlignmentStatus,
    EdgeEncoder,
    GraphBuffer,
    PipelineConfig,
    free_align,
    make_encoder,
    temporal_align,
)
from align.robust import PoseConfig

TAU = 100
COLLAB_POSE = RigidTransform2D(0.6, (8.0, -3.0))


class MovingWorld:
    """등속으로 움직이는 객체들 (자기 에이전트는 원점에 고정)"""

    def __init__(self, seed=0, count=12, speed=6.0):
        rng = np.random.default_rng(seed)
        self.start = rng.uniform(-20, 20, size=(count, 2))
        heading = rng.uniform(-np.pi, np.pi, size=count)
        self.velocity = speed * np.stack([np.cos(heading), np.sin(heading)], axis=1)

    def positions(self, k):
        return self.start + self.velocity * (k * TAU / 1000.0)

    def frame(self, agent, k, to_local=RigidTransform2D.identity(), time_offset=0, ids=None):
        pts = apply_transform(to_local, self.positions(k))
        ids = ids if ids is not None else range(len(pts))
        boxes = tuple(Box(float(pts[i, 0]), float(pts[i, 1]), 0.0, i) for i in ids)
        return DetectionFrame(agent, k * TAU + time_offset, boxes)

    def collab_frame(self, k, time_offset=37):
        return self.frame("agent_1", k, inverse(COLLAB_POSE), time_offset)


def filled_buffer(world, frames=6, cfg=None):
    buffer = GraphBuffer(cfg or PipelineConfig(buffer_length=4))
    for k in range(frames):
        buffer.push_frame(world.frame("agent_0", k))
    return buffer


def test_pipeline_config_validation():
    PipelineConfig().validate()
    with pytest.raises(InvalidConfig):
        PipelineConfig(edge_mode="gnn").validate()
    with pytest.raises(InvalidConfig):
        PipelineConfig(tau_ms=0).validate()
    with pytest.raises(InvalidConfig):
        PipelineConfig(mass=MassConfig(min_subgraph_size=2)).validate()


def test_learned_mode_needs_params():
    with pytest.raises(InvalidConfig):
        make_encoder(PipelineConfig(edge_mode="learned"))
    params = init_params(EmbeddingHyperParams(hidden=4, rounds=1, out_dim=3, profile_len=4))
    encoder = make_encoder(PipelineConfig(edge_mode="learned"), params)
    assert encoder.mode == "learned"
    assert make_encoder(PipelineConfig()).mode == "handcrafted"


def test_learned_encoder_single_node_frame():
    params = init_params(EmbeddingHyperParams(hidden=4, rounds=1, out_dim=3, profile_len=4))
    g = EdgeEncoder(params).encode(DetectionFrame("a", 0, (Box(1.0, 2.0, 0.0),)))
    assert g.edge_features.shape == (1, 1, 3)


def test_buffer_keeps_newest_first_and_capacity():
    world = MovingWorld()
    buffer = filled_buffer(world, frames=8)
    entries = buffer.snapshot()
    assert len(buffer) == 5
    assert [e.local_time for e in entries] == [700, 600, 500, 400, 300]
    assert buffer.newest_time == 700


def test_buffer_rejects_out_of_order_frames():
    world = MovingWorld()
    buffer = filled_buffer(world, frames=3)
    with pytest.raises(OutOfOrderFrame):
        buffer.push_frame(world.frame("agent_0", 2))
    with pytest.raises(OutOfOrderFrame):
        buffer.push_frame(DetectionFrame("agent_0", 250, ()))


def test_buffer_accepts_dropped_frames():
    world = MovingWorld()
    buffer = filled_buffer(world, frames=2)
    buffer.push_frame(world.frame("agent_0", 4))
    assert [e.local_time for e in buffer.snapshot()] == [400, 100, 0]


def test_buffer_stores_empty_frame_without_graph():
    world = MovingWorld()
    buffer = filled_buffer(world, frames=2)
    buffer.push_frame(DetectionFrame("agent_0", 200, ()))
    assert buffer.snapshot()[0].graph is None
    assert buffer.snapshot()[1].graph is not None


def test_buffer_composes_odometry():
    world = MovingWorld()
    buffer = GraphBuffer(PipelineConfig(buffer_length=3))
    step = RigidTransform2D(0.1, (1.0, 0.0))
    for k in range(4):
        buffer.push_frame(world.frame("agent_0", k), step)
    entries = buffer.snapshot()
    assert entries[0].to_current == RigidTransform2D.identity()
    expected = step.compose(step).compose(step)
    planar, angular = transform_error(entries[3].to_current, expected)
    assert planar < 1e-12 and angular < 1e-12


@pytest.mark.parametrize("capture", [5, 4, 2, 1])
def test_temporal_align_selects_capture_time(capture):
    world = MovingWorld(seed=1)
    buffer = filled_buffer(world)
    collab_graph = build_graph(world.collab_frame(capture))
    match = temporal_align(buffer, collab_graph, MassConfig())
    assert match is not None
    assert match.index == 5 - capture
    assert not match.ambiguous


def test_temporal_align_static_scene_prefers_most_recent():
    world = MovingWorld(seed=2, speed=0.0)
    buffer = filled_buffer(world)
    match = temporal_align(buffer, build_graph(world.collab_frame(3)), MassConfig())
    assert match.index == 0
    assert match.ambiguous


def test_free_align_recovers_pose_and_latency():
    world = MovingWorld(seed=3)
    buffer = filled_buffer(world)
    collab = world.collab_frame(3, time_offset=37)
    # 송신 시계 기준 지연: 자기 시계 500 - 송신 시계 337
    result = free_align(buffer, collab, advertised_latency=500 - 337)
    assert result.status is AlignmentStatus.ALIGNED
    assert result.aligned
    planar, angular = transform_error(result.relative_pose, COLLAB_POSE)
    assert planar < 1e-6 and angular < 1e-6
    assert result.buffer_index == 2
    assert result.matched_ego_time == 300
    assert result.latency_estimate == 200
    assert result.clock_deviation_estimate == 200 - 163
    assert result.subgraph.size >= 10
    assert result.confidence == pytest.approx(result.subgraph.epsilon)


def test_free_align_uses_odometry():
    world = MovingWorld(seed=4)
    buffer = GraphBuffer(PipelineConfig(buffer_length=4))
    step = RigidTransform2D(0.02, (0.8, 0.1))
    ego_pose = RigidTransform2D.identity()
    for k in range(6):
        if k > 0:
            ego_pose = ego_pose.compose(step)
        frame = world.frame("agent_0", k, inverse(ego_pose))
        # 직전 자기 좌표계 → 새 자기 좌표계
        buffer.push_frame(frame, inverse(step) if k > 0 else None)
    result = free_align(buffer, world.collab_frame(3))
    assert result.buffer_index == 2
    # 정답: 현재 자기 좌표계 ← 협력 좌표계
    truth = inverse(ego_pose).compose(COLLAB_POSE)
    planar, angular = transform_error(result.relative_pose, truth)
    assert planar < 1e-6 and angular < 1e-6
    assert result.clock_deviation_estimate is None


def test_free_align_rejections():
    world = MovingWorld(seed=5)
    assert free_align(GraphBuffer(), world.collab_frame(0)).reason == "empty buffer"

    buffer = filled_buffer(world)
    empty = DetectionFrame("agent_1", 0, ())
    assert free_align(buffer, empty).reason == "invalid collaborator frame"

    # 자기 에이전트가 볼 수 없는 먼 거리의 객체들
    far = DetectionFrame("agent_1", 300, tuple(Box(1000.0 + 100.0 * i, 0.0, 0.0, i) for i in range(6)))
    result = free_align(buffer, far)
    assert result.status is AlignmentStatus.REJECTED
    assert result.reason == "no common subgraph"
    assert result.relative_pose is None
    assert result.latency_estimate is None


def test_free_align_rejects_too_few_shared_objects():
    world = MovingWorld(seed=6)
    buffer = filled_buffer(world)
    collab = world.frame("agent_1", 3, inverse(COLLAB_POSE), ids=[0, 1, 2])
    result = free_align(buffer, collab)
    assert result.status is AlignmentStatus.REJECTED
    assert result.reason == "no common subgraph"


def test_free_align_with_learned_features():
    world = MovingWorld(seed=7)
    params = init_params(EmbeddingHyperParams(hidden=8, rounds=1, out_dim=4, profile_len=8), seed=1)
    cfg = PipelineConfig(buffer_length=4, edge_mode="learned", mass=MassConfig(edge_threshold=1e-3))
    buffer = GraphBuffer(cfg, make_encoder(cfg, params))
    for k in range(6):
        buffer.push_frame(world.frame("agent_0", k))
    result = free_align(buffer, world.collab_frame(5), cfg=cfg)
    assert result.aligned
    assert result.buffer_index == 0
    planar, _ = transform_error(result.relative_pose, COLLAB_POSE)
    assert planar < 1e-6


def test_alignment_result_to_dict():
    rejected = AlignmentResult.rejected("no common subgraph").to_dict()
    assert rejected["status"] == "REJECTED"
    assert rejected["relative_pose"] is None
    assert rejected["correspondences"] == []

    world = MovingWorld(seed=8)
    result = free_align(filled_buffer(world), world.collab_frame(5)).to_dict()
    assert result["status"] == "ALIGNED"
    assert len(result["relative_pose"]) == 3
    assert result["buffer_index"] == 0


def low_overlap_frames(rng, shared=3, distractors=8, jitter=0.1, half=20.0):
    """공유 객체가 적고 나머지는 서로 무관한 두 프레임, 협력 → 자기 정답 변환"""
    truth = RigidTransform2D(rng.uniform(-math.pi, math.pi), tuple(rng.uniform(-30, 30, size=2)))
    common = rng.uniform(-half, half, size=(shared, 2))
    ego_pts = np.vstack([common, rng.uniform(-half, half, size=(distractors, 2))])
    collab_world = np.vstack([common, rng.uniform(-half, half, size=(distractors, 2))])
    collab_pts = apply_transform(inverse(truth), collab_world)
    ego_pts = ego_pts + rng.normal(0.0, jitter, size=ego_pts.shape)
    collab_pts = collab_pts + rng.normal(0.0, jitter, size=collab_pts.shape)
    ego = DetectionFrame("agent_0", 0, tuple(Box(float(x), float(y), 0.0) for x, y in ego_pts))
    collab = DetectionFrame("agent_1", 0, tuple(Box(float(x), float(y), 0.0) for x, y in collab_pts))
    return ego, collab, truth


def align_single_frame(ego, collab, cfg=None):
    cfg = cfg or PipelineConfig(buffer_length=0)
    buffer = GraphBuffer(cfg)
    buffer.push_frame(ego)
    return free_align(buffer, collab, cfg=cfg)


def test_free_align_rejects_insignificant_match():
    rng = np.random.default_rng(31)
    ego, collab, truth = low_overlap_frames(rng, shared=4, jitter=0.0)
    result = align_single_frame(ego, collab)
    assert result.status is AlignmentStatus.REJECTED
    assert result.reason == "not significant"

    ungated = PipelineConfig(buffer_length=0, pose=PoseConfig(max_false_alarms=None))
    result = align_single_frame(ego, collab, ungated)
    assert result.aligned
    assert result.false_alarms > 1.0
    planar, _ = transform_error(result.relative_pose, truth)
    assert planar < 1e-6


def test_free_align_reports_false_alarms():
    world = MovingWorld(seed=9)
    result = free_align(filled_buffer(world), world.collab_frame(5))
    assert result.aligned
    assert result.false_alarms < PoseConfig().max_false_alarms
    assert result.to_dict()["false_alarms"] == result.false_alarms


@pytest.mark.slow
def test_low_overlap_messages_are_rejected():
    rng = np.random.default_rng(500)
    trials = 200
    rejected = wrong = 0
    for _ in range(trials):
        ego, collab, truth = low_overlap_frames(rng)
        result = align_single_frame(ego, collab)
        if not result.aligned:
            rejected += 1
            continue
        planar, _ = transform_error(result.relative_pose, truth)
        wrong += planar > 3.0
    assert rejected >= 0.99 * trials
    assert wrong == 0
