"""
정렬 유틸리티
공통 상수와 OpenCV 기반 조감도(BEV) 렌더링
"""
import logging
import math
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from .errors import FrameIoError
from .geometry import RigidTransform2D, apply_transform
from .graph import SalientObjectGraph

logger = logging.getLogger(__name__)

# 이 값보다 큰 평면 오차는 오류 사례로 집계 (m)
POSE_ERROR_THRESHOLD_M = 3.0

# 렌더링 색상 (BGR)
EGO_COLOR = (60, 180, 60)
COLLAB_COLOR = (40, 40, 220)
MATCH_COLOR = (200, 140, 0)
TEXT_COLOR = (30, 30, 30)


def rad_to_deg(value: float) -> float:
    return value * 180.0 / math.pi


def _to_pixel(points: np.ndarray, center: np.ndarray, scale: float, size: int) -> np.ndarray:
    px = size / 2.0 + (points[:, 0] - center[0]) * scale
    py = size / 2.0 - (points[:, 1] - center[1]) * scale
    return np.stack([px, py], axis=1).round().astype(np.int32)


def render_alignment(
    ego_graph: SalientObjectGraph,
    collab_graph: SalientObjectGraph,
    result,
    path,
    ego_to_current: Optional[RigidTransform2D] = None,
    size: int = 800,
    scale: Optional[float] = None,
) -> Path:
    """
    정렬 결과를 자기 에이전트 현재 좌표계 조감도로 그립니다.

    Args:
        ego_graph: 매칭된 버퍼 항목의 그래프
        collab_graph: 협력 에이전트 그래프
        result: AlignmentResult (REJECTED 이면 협력 노드를 그리지 않음)
        path: 출력 PNG 경로
        ego_to_current: 버퍼 항목 → 현재 프레임 변환 (None 이면 항등)
        size: 이미지 한 변 (px)
        scale: px/m (None 이면 점들이 들어가도록 자동 결정)

    Returns:
        Path: 저장된 파일 경로

    Raises:
        FrameIoError: 이미지 저장 실패
    """
    path = Path(path)
    ego_pts = apply_transform(ego_to_current or RigidTransform2D.identity(), ego_graph.centers())
    collab_pts = np.zeros((0, 2))
    if result.aligned:
        collab_pts = apply_transform(result.relative_pose, collab_graph.centers())

    all_pts = np.vstack([ego_pts, collab_pts]) if len(collab_pts) else ego_pts
    center = all_pts.mean(axis=0) if len(all_pts) else np.zeros(2)
    if scale is None:
        extent = float(np.max(np.abs(all_pts - center))) if len(all_pts) else 1.0
        scale = 0.45 * size / max(extent, 1.0)

    img = np.full((size, size, 3), 255, dtype=np.uint8)
    ego_px = _to_pixel(ego_pts, center, scale, size)
    collab_px = _to_pixel(collab_pts, center, scale, size)

    if result.aligned and result.subgraph is not None:
        for p, q in result.subgraph.correspondences:
            cv2.line(img, tuple(int(v) for v in ego_px[p]), tuple(int(v) for v in collab_px[q]), MATCH_COLOR, 1)

    for x, y in ego_px:
        cv2.circle(img, (int(x), int(y)), 5, EGO_COLOR, -1)
    for x, y in collab_px:
        cv2.circle(img, (int(x), int(y)), 5, COLLAB_COLOR, 2)

    if result.aligned:
        label = (
            f"ALIGNED psi={result.subgraph.size} eps={result.confidence:.3f} "
            f"latency={result.latency_estimate}ms"
        )
    else:
        label = f"REJECTED ({result.reason})"
    cv2.putText(img, label, (10, 24), cv2.FONT_HERSHEY_SIMPLEX, 0.55, TEXT_COLOR, 1, cv2.LINE_AA)

    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        ok = cv2.imwrite(str(path), img)
    except cv2.error as e:
        raise FrameIoError(f"이미지 저장 실패: {path}: {e}") from e
    if not ok:
        raise FrameIoError(f"이미지 저장 실패: {path}")
    logger.info(f"정렬 결과 이미지 저장: {path}")
    return path
