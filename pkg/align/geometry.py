"""
평면 강체 기하
Pose2D / RigidTransform2D, 좌표 변환, 최소제곱 강체 정합 (rigid_fit)
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, InvalidPoints

logger = logging.getLogger(__name__)

# (N, 2) float64 배열, 단위 m
PointSet2D = np.ndarray

# 한 점에 모두 겹쳤다고 판단하는 거리 (m)
COINCIDENT_TOL = 1e-12


def normalize_angle(theta: float) -> float:
    """
    각도를 (-π, π] 범위로 정규화합니다.

    Args:
        theta: 라디안

    Returns:
        float: 정규화된 각도
    """
    a = math.remainder(float(theta), 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


def as_point_set(pts) -> PointSet2D:
    """
    입력을 (N, 2) float64 배열로 변환하고 유한성을 검사합니다.

    Raises:
        InvalidPoints: 형태가 맞지 않거나 NaN/Inf 포함
    """
    arr = np.asarray(pts, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidPoints(f"(N, 2) 형태가 필요합니다: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidPoints("유한하지 않은 좌표가 포함되어 있습니다")
    return arr


@dataclass(frozen=True)
class Pose2D:
    """전역 좌표계에서의 에이전트 자세 (x, y: m, theta: rad)"""
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    def as_transform(self) -> "RigidTransform2D":
        """자기 좌표계 → 전역 좌표계 변환"""
        return RigidTransform2D(self.theta, (self.x, self.y))


@dataclass(frozen=True)
class RigidTransform2D:
    """
    평면 강체 변환: p' = R(rotation) p + translation
    """
    rotation: float
    translation: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "rotation", normalize_angle(self.rotation))
        tx, ty = self.translation
        object.__setattr__(self, "translation", (float(tx), float(ty)))

    @staticmethod
    def identity() -> "RigidTransform2D":
        return RigidTransform2D(0.0, (0.0, 0.0))

    @property
    def tx(self) -> float:
        return self.translation[0]

    @property
    def ty(self) -> float:
        return self.translation[1]

    def rotation_matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return np.array([[c, -s], [s, c]])

    def matrix(self) -> np.ndarray:
        """3x3 동차 행렬"""
        m = np.eye(3)
        m[:2, :2] = self.rotation_matrix()
        m[:2, 2] = self.translation
        return m

    def compose(self, other: "RigidTransform2D") -> "RigidTransform2D":
        """self ∘ other: other 를 먼저 적용한 뒤 self 를 적용"""
        return compose(self, other)

    def inverse(self) -> "RigidTransform2D":
        return inverse(self)

    def as_pose(self) -> Pose2D:
        return Pose2D(self.tx, self.ty, self.rotation)

    def to_list(self) -> list[float]:
        return [self.tx, self.ty, self.rotation]

    @staticmethod
    def from_list(values) -> "RigidTransform2D":
        tx, ty, rot = values
        return RigidTransform2D(float(rot), (float(tx), float(ty)))


def compose(a: RigidTransform2D, b: RigidTransform2D) -> RigidTransform2D:
    """
    두 변환을 합성합니다 (b 먼저, 그 다음 a).

    Returns:
        RigidTransform2D: a ∘ b
    """
    c, s = math.cos(a.rotation), math.sin(a.rotation)
    tx = c * b.tx - s * b.ty + a.tx
    ty = s * b.tx + c * b.ty + a.ty
    return RigidTransform2D(a.rotation + b.rotation, (tx, ty))


def inverse(t: RigidTransform2D) -> RigidTransform2D:
    """역변환: -R^T t"""
    c, s = math.cos(t.rotation), math.sin(t.rotation)
    tx = -(c * t.tx + s * t.ty)
    ty = -(-s * t.tx + c * t.ty)
    return RigidTransform2D(-t.rotation, (tx, ty))


def relative_pose(ego: Pose2D, other: Pose2D) -> RigidTransform2D:
    """
    other 좌표계의 점을 ego 좌표계로 옮기는 상대 자세를 계산합니다.

    Args:
        ego: 기준 에이전트 자세
        other: 상대 에이전트 자세

    Returns:
        RigidTransform2D: inverse(ego) ∘ other
    """
    return compose(inverse(ego.as_transform()), other.as_transform())


def apply_transform(t: RigidTransform2D, pts) -> PointSet2D:
    """
    점 집합에 변환을 적용합니다 (회전 후 평행이동).

    Args:
        t: 강체 변환
        pts: (N, 2) 점 집합

    Returns:
        np.ndarray: 변환된 (N, 2) 점 집합
    """
    arr = as_point_set(pts)
    return arr @ t.rotation_matrix().T + np.asarray(t.translation)


def fit_residuals(t: RigidTransform2D, src, dst) -> np.ndarray:
    """각 대응점의 잔차 거리 ‖T(src) - dst‖ (m)"""
    return np.linalg.norm(apply_transform(t, src) - as_point_set(dst), axis=1)


def rigid_fit(src, dst) -> RigidTransform2D:
    """
    src 를 dst 에 맞추는 최소제곱 강체 변환 (반사 제외)
    중심 제거 → 2x2 교차공분산 → 회전각 추출

    Args:
        src: (N, 2) 원본 점
        dst: (N, 2) 대상 점

    Returns:
        RigidTransform2D: Σ‖R src + t - dst‖² 를 최소화하는 변환

    Raises:
        DegenerateInput: 점이 2개 미만이거나 src 가 모두 한 점에 겹침
    """
    src = as_point_set(src)
    dst = as_point_set(dst)
    if src.shape != dst.shape:
        raise DegenerateInput(f"점 개수 불일치: {src.shape} vs {dst.shape}")
    if src.shape[0] < 2:
        raise DegenerateInput(f"점이 최소 2개 필요합니다 (현재 {src.shape[0]}개)")

    src_c = src.mean(axis=0)
    dst_c = dst.mean(axis=0)
    a = src - src_c
    b = dst - dst_c
    if np.max(np.abs(a)) <= COINCIDENT_TOL:
        raise DegenerateInput("모든 원본 점이 한 점에 겹쳐 회전을 결정할 수 없습니다")

    h = a.T @ b
    theta = math.atan2(h[0, 1] - h[1, 0], h[0, 0] + h[1, 1])
    c, s = math.cos(theta), math.sin(theta)
    tx = dst_c[0] - (c * src_c[0] - s * src_c[1])
    ty = dst_c[1] - (s * src_c[0] + c * src_c[1])
    return RigidTransform2D(theta, (tx, ty))


def transform_error(estimate: RigidTransform2D, truth: RigidTransform2D) -> tuple[float, float]:
    """
    추정 변환의 오차

    Returns:
        tuple: (평면 오차 √(δx²+δy²) m, 회전 오차 |δθ| rad)
    """
    planar = math.hypot(estimate.tx - truth.tx, estimate.ty - truth.ty)
    angular = abs(normalize_angle(estimate.rotation - truth.rotation))
    return planar, angular

