"""
시공간 정렬 파이프라인 (FreeAlign)
자기 에이전트의 과거 그래프 버퍼와 협력 에이전트 프레임을 맞춰
상대 자세, 지연 시간, 시계 편차를 추정하거나 안전을 위해 메시지를 거부합니다.
"""
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .embedding import EmbeddingParams, embed_edges
from .errors import DegenerateGeometry, EmptyFrame, InvalidConfig, InvalidPoints, OutOfOrderFrame
from .frames import DetectionFrame
from .geometry import RigidTransform2D, compose
from .graph import SalientObjectGraph, build_graph
from .mass import CommonSubgraph, MassConfig, mass
from .robust import PoseConfig, PoseMethod, estimate_pose, false_alarms, scene_area

logger = logging.getLogger(__name__)

EDGE_MODES = ("handcrafted", "learned")


class AlignmentStatus(Enum):
    """정렬 결과 상태"""
    ALIGNED = "ALIGNED"
    REJECTED = "REJECTED"


@dataclass(frozen=True)
class PipelineConfig:
    """
    파이프라인 설정

    Attributes:
        tau_ms: 표본 간격 τ (ms)
        buffer_length: 버퍼 길이 l (버퍼에는 l+1 개 그래프 보관)
        mass: MASS 설정
        pose: 강건 자세 추정 설정
        edge_mode: "handcrafted" (거리) 또는 "learned" (임베딩)
        tie_tolerance: 이 범위 안의 ε 는 동률로 보고 가장 최근 시각 선택
        min_confidence: 박스 점수 하한 (None 이면 사용 안 함)
    """
    tau_ms: int = 100
    buffer_length: int = 10
    mass: MassConfig = field(default_factory=MassConfig)
    pose: PoseConfig = field(default_factory=PoseConfig)
    edge_mode: str = "handcrafted"
    tie_tolerance: float = 1e-6
    min_confidence: Optional[float] = None

    def validate(self):
        if self.tau_ms <= 0:
            raise InvalidConfig(f"tau_ms 는 양수여야 합니다: {self.tau_ms}")
        if self.buffer_length < 0:
            raise InvalidConfig(f"buffer_length 는 0 이상이어야 합니다: {self.buffer_length}")
        if self.edge_mode not in EDGE_MODES:
            raise InvalidConfig(f"알 수 없는 edge_mode: {self.edge_mode}")
        if self.tie_tolerance < 0:
            raise InvalidConfig(f"tie_tolerance 는 0 이상이어야 합니다: {self.tie_tolerance}")
        self.mass.validate()
        self.pose.validate()


class EdgeEncoder:
    """프레임 → 엣지 특징이 채워진 그래프 (수작업 거리 또는 학습된 임베딩)"""

    def __init__(self, params: Optional[EmbeddingParams] = None, min_confidence: Optional[float] = None):
        self.params = params
        self.min_confidence = min_confidence

    @property
    def mode(self) -> str:
        return "handcrafted" if self.params is None else "learned"

    def encode(self, frame: DetectionFrame) -> SalientObjectGraph:
        graph = build_graph(frame, self.min_confidence)
        if self.params is None:
            return graph
        if graph.n < 2:
            k = self.params.hyper.out_dim
            return graph.with_edge_features(np.zeros((graph.n, graph.n, k)))
        return graph.with_edge_features(embed_edges(self.params, graph))


def make_encoder(cfg: PipelineConfig, params: Optional[EmbeddingParams] = None) -> EdgeEncoder:
    """
    설정에 맞는 인코더를 만듭니다.

    Raises:
        InvalidConfig: learned 모드인데 파라미터가 없음
    """
    if cfg.edge_mode == "learned":
        if params is None:
            raise InvalidConfig("learned 모드에는 학습된 임베딩 체크포인트가 필요합니다")
        return EdgeEncoder(params, cfg.min_confidence)
    return EdgeEncoder(None, cfg.min_confidence)


@dataclass(frozen=True)
class BufferEntry:
    """
    버퍼 항목

    Attributes:
        local_time: 자기 에이전트 시계 기준 시각 (ms)
        graph: 그 시각의 그래프 (검출이 없었으면 None)
        to_current: 이 프레임 → 가장 최근 프레임 변환 (오도메트리 누적)
    """
    local_time: int
    graph: Optional[SalientObjectGraph]
    to_current: RigidTransform2D


class GraphBuffer:
    """
    시간적 현저 객체 그래프 버퍼
    최근 항목이 앞(인덱스 0)에 오며, 용량 l+1 을 넘으면 가장 오래된 항목을 버립니다.
    소유자 한 명이 push 하고, 정렬은 snapshot() 으로 얻은 읽기 전용 사본에서 수행합니다.
    """

    def __init__(self, cfg: Optional[PipelineConfig] = None, encoder: Optional[EdgeEncoder] = None):
        self.cfg = cfg or PipelineConfig()
        self.cfg.validate()
        self.encoder = encoder or EdgeEncoder(None, self.cfg.min_confidence)
        self.capacity = self.cfg.buffer_length + 1
        self._entries: deque[BufferEntry] = deque()

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def newest_time(self) -> Optional[int]:
        return self._entries[0].local_time if self._entries else None

    def push_frame(self, frame: DetectionFrame, odom_increment: Optional[RigidTransform2D] = None) -> "GraphBuffer":
        """
        새 프레임을 버퍼 앞에 추가합니다.

        Args:
            frame: 자기 에이전트의 새 검출 프레임
            odom_increment: 직전 프레임 → 새 프레임 좌표 변환

        Returns:
            GraphBuffer: self

        Raises:
            OutOfOrderFrame: 시각이 직전 항목보다 τ 의 양의 정수배(±τ/10) 만큼 늦지 않음
        """
        tau = self.cfg.tau_ms
        newest = self.newest_time
        if newest is not None:
            step = frame.local_time - newest
            k = round(step / tau)
            if k < 1 or abs(step - k * tau) > tau / 10.0:
                raise OutOfOrderFrame(
                    f"시각 순서 오류: 직전 {newest} ms, 새 프레임 {frame.local_time} ms (τ={tau} ms)"
                )

        try:
            graph = self.encoder.encode(frame)
        except (EmptyFrame, InvalidPoints) as e:
            logger.warning(f"버퍼 프레임 그래프 생성 실패 (t={frame.local_time}): {e}")
            graph = None

        inc = odom_increment or RigidTransform2D.identity()
        moved = deque(
            BufferEntry(e.local_time, e.graph, compose(inc, e.to_current)) for e in self._entries
        )
        moved.appendleft(BufferEntry(frame.local_time, graph, RigidTransform2D.identity()))
        while len(moved) > self.capacity:
            moved.pop()
        self._entries = moved
        return self

    def snapshot(self) -> tuple[BufferEntry, ...]:
        return tuple(self._entries)


@dataclass(frozen=True)
class TemporalMatch:
    """
    시간 정렬 결과

    Attributes:
        index: 선택된 버퍼 인덱스 (0 = 가장 최근)
        subgraph: 선택된 공통 부분그래프
        ambiguous: 여러 시각이 ε 동률
        candidates: (인덱스, ε) 목록
    """
    index: int
    subgraph: CommonSubgraph
    ambiguous: bool = False
    candidates: tuple[tuple[int, float], ...] = ()


def temporal_align(
    buffer,
    collab_graph: SalientObjectGraph,
    cfg: Optional[MassConfig] = None,
    tie_tolerance: float = 1e-6,
) -> Optional[TemporalMatch]:
    """
    모든 버퍼 그래프에 대해 MASS 를 실행하고 ε 가 가장 작은 시각을 고릅니다.

    Args:
        buffer: GraphBuffer 또는 snapshot() 결과
        collab_graph: 협력 에이전트 그래프
        cfg: MASS 설정
        tie_tolerance: ε 동률 범위

    Returns:
        TemporalMatch: 어떤 항목도 최소 크기를 넘지 못하면 None (거부)
    """
    cfg = cfg or MassConfig()
    entries: Sequence[BufferEntry] = buffer.snapshot() if isinstance(buffer, GraphBuffer) else tuple(buffer)

    results: list[tuple[int, CommonSubgraph]] = []
    for index, entry in enumerate(entries):
        if entry.graph is None:
            continue
        sub = mass(entry.graph, None, collab_graph, None, cfg)
        if sub is not None:
            results.append((index, sub))

    if not results:
        return None

    best_eps = min(sub.epsilon for _, sub in results)
    tied = [(index, sub) for index, sub in results if sub.epsilon <= best_eps + tie_tolerance]
    index, sub = tied[0]
    ambiguous = len(tied) > 1
    if ambiguous:
        logger.warning(f"시각 모호: 버퍼 인덱스 {[i for i, _ in tied]} 가 ε 동률, 가장 최근({index}) 선택")
    candidates = tuple((i, s.epsilon) for i, s in results)
    return TemporalMatch(index, sub, ambiguous, candidates)


@dataclass(frozen=True)
class AlignmentResult:
    """
    정렬 결과
    REJECTED 이면 자세/시간 필드는 모두 None 입니다.
    """
    status: AlignmentStatus
    relative_pose: Optional[RigidTransform2D] = None
    matched_ego_time: Optional[int] = None
    latency_estimate: Optional[int] = None
    clock_deviation_estimate: Optional[int] = None
    subgraph: Optional[CommonSubgraph] = None
    confidence: Optional[float] = None
    buffer_index: Optional[int] = None
    inliers: tuple[int, ...] = ()
    ambiguous_time: bool = False
    false_alarms: Optional[float] = None
    reason: str = ""

    @property
    def aligned(self) -> bool:
        return self.status is AlignmentStatus.ALIGNED

    @staticmethod
    def rejected(reason: str) -> "AlignmentResult":
        return AlignmentResult(AlignmentStatus.REJECTED, reason=reason)

    def to_dict(self) -> dict:
        """JSON 직렬화용 딕셔너리"""
        return {
            "status": self.status.value,
            "relative_pose": self.relative_pose.to_list() if self.relative_pose else None,
            "matched_ego_time": self.matched_ego_time,
            "latency_estimate": self.latency_estimate,
            "clock_deviation_estimate": self.clock_deviation_estimate,
            "correspondences": [list(c) for c in self.subgraph.correspondences] if self.subgraph else [],
            "confidence": self.confidence,
            "buffer_index": self.buffer_index,
            "inliers": list(self.inliers),
            "ambiguous_time": self.ambiguous_time,
            "false_alarms": self.false_alarms,
            "reason": self.reason,
        }


def free_align(
    buffer: GraphBuffer,
    collab_frame: DetectionFrame,
    advertised_latency: Optional[int] = None,
    cfg: Optional[PipelineConfig] = None,
) -> AlignmentResult:
    """
    협력 프레임을 자기 에이전트의 현재 좌표계와 시각에 맞춥니다.
    인라이어 수가 우연 일치로 설명되는 정렬(기대 오경보 > pose.max_false_alarms)은 "not significant" 로 거부합니다.

    Args:
        buffer: 자기 에이전트 그래프 버퍼
        collab_frame: 협력 에이전트 메시지의 검출 프레임
        advertised_latency: 양쪽 로컬 시계로 계산된 광고 지연 (ms, 선택)
        cfg: 파이프라인 설정 (None 이면 버퍼의 설정)

    Returns:
        AlignmentResult: 정렬 불가한 모든 경우는 REJECTED
    """
    cfg = cfg or buffer.cfg
    entries = buffer.snapshot()
    if not entries:
        return AlignmentResult.rejected("empty buffer")

    try:
        collab_graph = buffer.encoder.encode(collab_frame)
    except (EmptyFrame, InvalidPoints) as e:
        logger.warning(f"협력 프레임 거부 ({collab_frame.agent_id}): {e}")
        return AlignmentResult.rejected("invalid collaborator frame")

    match = temporal_align(entries, collab_graph, cfg.mass, cfg.tie_tolerance)
    if match is None:
        logger.warning(f"메시지 거부 ({collab_frame.agent_id}, t={collab_frame.local_time}): 공통 부분그래프 없음")
        return AlignmentResult.rejected("no common subgraph")

    entry = entries[match.index]
    try:
        estimate = estimate_pose(match.subgraph, entry.graph, collab_graph, PoseMethod(cfg.pose.method), cfg.pose)
    except DegenerateGeometry as e:
        logger.warning(f"메시지 거부 ({collab_frame.agent_id}): {e}")
        return AlignmentResult.rejected("degenerate geometry")

    if estimate.num_inliers < cfg.mass.min_subgraph_size:
        logger.warning(
            f"메시지 거부 ({collab_frame.agent_id}): 인라이어 {estimate.num_inliers} < {cfg.mass.min_subgraph_size}"
        )
        return AlignmentResult.rejected("too few inliers")

    frames = sum(1 for e in entries if e.graph is not None)
    area = scene_area(entry.graph.centers(), cfg.pose.inlier_radius)
    nfa = false_alarms(estimate.num_inliers, entry.graph.n, collab_graph.n, area, cfg.pose.inlier_radius, frames)
    if cfg.pose.max_false_alarms is not None and nfa > cfg.pose.max_false_alarms:
        logger.warning(
            f"메시지 거부 ({collab_frame.agent_id}): 인라이어 {estimate.num_inliers} 개, "
            f"우연 일치 기대 {nfa:.3g} > {cfg.pose.max_false_alarms}"
        )
        return AlignmentResult.rejected("not significant")

    newest = entries[0].local_time
    latency = newest - entry.local_time
    deviation = None if advertised_latency is None else latency - int(advertised_latency)
    pose = compose(entry.to_current, estimate.transform)

    logger.debug(
        f"정렬 ({collab_frame.agent_id}): 인덱스 {match.index}, ψ={match.subgraph.size}, "
        f"ε={match.subgraph.epsilon:.4f}, 지연 {latency} ms"
    )
    return AlignmentResult(
        status=AlignmentStatus.ALIGNED,
        relative_pose=pose,
        matched_ego_time=entry.local_time,
        latency_estimate=latency,
        clock_deviation_estimate=deviation,
        subgraph=match.subgraph,
        confidence=match.subgraph.epsilon,
        buffer_index=match.index,
        inliers=estimate.inliers,
        ambiguous_time=match.ambiguous,
        false_alarms=nfa,
    )
