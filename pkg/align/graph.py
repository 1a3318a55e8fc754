"""
현저 객체 그래프 (salient-object graph)
검출 박스 하나가 노드 하나이며, 모든 노드 쌍이 엣지로 연결됩니다.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import BadCorrespondence, EmptyFrame, InvalidPoints
from .frames import DetectionFrame

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GraphNode:
    """그래프 노드 (원본 프레임의 box_index 를 참조)"""
    x: float
    y: float
    box_index: int
    truth_id: Optional[int] = None


@dataclass(frozen=True, eq=False)
class SalientObjectGraph:
    """
    완전 연결 현저 객체 그래프

    Attributes:
        nodes: (x, y, 삽입 순서) 로 정렬된 노드
        distance_matrix: R, (n, n) 대칭, 대각 0
        edge_features: W, (n, n, k)
        agent_id / local_time: 원본 프레임 참조
    """
    nodes: tuple[GraphNode, ...]
    distance_matrix: np.ndarray
    edge_features: np.ndarray
    agent_id: str = ""
    local_time: int = 0

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def feature_dim(self) -> int:
        return int(self.edge_features.shape[2])

    def centers(self) -> np.ndarray:
        if not self.nodes:
            return np.zeros((0, 2))
        return np.array([[nd.x, nd.y] for nd in self.nodes], dtype=np.float64)

    def with_edge_features(self, features: np.ndarray) -> "SalientObjectGraph":
        """엣지 특징만 교체한 새 그래프"""
        return SalientObjectGraph(self.nodes, self.distance_matrix, features, self.agent_id, self.local_time)


def pairwise_distances(centers: np.ndarray) -> np.ndarray:
    """모든 점 쌍의 유클리드 거리 (n, n)"""
    diff = centers[:, None, :] - centers[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def handcrafted_features(distance_matrix: np.ndarray) -> np.ndarray:
    """거리만으로 된 k=1 엣지 특징 W[p][q] = [R[p][q]]"""
    return distance_matrix[..., None].copy()


def build_graph(frame: DetectionFrame, min_confidence: Optional[float] = None) -> SalientObjectGraph:
    """
    검출 프레임으로 현저 객체 그래프를 만듭니다.

    Args:
        frame: 검출 프레임
        min_confidence: 이 점수 미만의 박스는 제외 (None 이면 사용 안 함)

    Returns:
        SalientObjectGraph: 거리 행렬과 수작업(거리) 엣지 특징이 채워진 그래프

    Raises:
        EmptyFrame: 사용할 박스가 없음
        InvalidPoints: 중심 좌표가 유한하지 않음
    """
    indexed = [
        (i, b) for i, b in enumerate(frame.boxes)
        if min_confidence is None or b.score >= min_confidence
    ]
    if not indexed:
        raise EmptyFrame(f"박스가 없는 프레임입니다 (agent={frame.agent_id}, t={frame.local_time})")

    for _, b in indexed:
        if not (np.isfinite(b.x) and np.isfinite(b.y)):
            raise InvalidPoints(f"유한하지 않은 박스 중심: ({b.x}, {b.y})")

    # 검출기 출력 순서는 에이전트마다 달라서 좌표 기준으로 정렬
    indexed.sort(key=lambda item: (item[1].x, item[1].y, item[0]))
    nodes = tuple(GraphNode(float(b.x), float(b.y), i, b.truth_id) for i, b in indexed)

    centers = np.array([[nd.x, nd.y] for nd in nodes], dtype=np.float64)
    dist = pairwise_distances(centers)
    return SalientObjectGraph(nodes, dist, handcrafted_features(dist), frame.agent_id, frame.local_time)


def graph_invariance_check(
    g_a: SalientObjectGraph,
    g_b: SalientObjectGraph,
    correspondence: Sequence[tuple[int, int]],
) -> float:
    """
    대응되는 엣지들의 거리 차이 최댓값 max |R_a - R_b|

    Args:
        g_a, g_b: 비교할 두 그래프
        correspondence: (g_a 노드, g_b 노드) 쌍 목록

    Returns:
        float: 최대 엣지 불일치 (m), 대응이 2개 미만이면 0.0

    Raises:
        BadCorrespondence: 인덱스가 범위를 벗어남
    """
    pairs = list(correspondence)
    for p, q in pairs:
        if not (0 <= p < g_a.n and 0 <= q < g_b.n):
            raise BadCorrespondence(f"대응 인덱스 범위 초과: ({p}, {q}) / n={g_a.n}, m={g_b.n}")
    if len(pairs) < 2:
        return 0.0

    ps = np.array([p for p, _ in pairs])
    qs = np.array([q for _, q in pairs])
    diff = np.abs(g_a.distance_matrix[np.ix_(ps, ps)] - g_b.distance_matrix[np.ix_(qs, qs)])
    return float(diff.max())


def distance_profile(distance_matrix: np.ndarray, length: int = 16) -> np.ndarray:
    """
    각 노드의 정렬된 거리 프로파일 (자기 자신 제외)을 고정 길이로 재표본화합니다.

    Returns:
        np.ndarray: (n, length)
    """
    n = distance_matrix.shape[0]
    if n < 2:
        return np.zeros((n, length))
    mask = ~np.eye(n, dtype=bool)
    rows = np.sort(distance_matrix[mask].reshape(n, n - 1), axis=1)
    if n == 2:
        return np.repeat(rows, length, axis=1)
    src = np.arange(n - 1, dtype=np.float64)
    dst = np.linspace(0.0, n - 2, length)
    return np.stack([np.interp(dst, src, row) for row in rows])
