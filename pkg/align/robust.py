"""
강건 상대 자세 추정
공통 부분그래프의 노드 대응으로 RANSAC / LMedS 강체 정합을 수행합니다.
비교용 ICP 기준선도 포함합니다.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Optional

import numpy as np

from .errors import DegenerateGeometry, DegenerateInput, InvalidConfig
from .geometry import RigidTransform2D, apply_transform, compose, fit_residuals, rigid_fit
from .graph import SalientObjectGraph
from .mass import CommonSubgraph

logger = logging.getLogger(__name__)

# 중심화된 점들의 최소 특이값이 이보다 작으면 일직선으로 판단 (m)
COLLINEAR_TOL = 1e-6

# LMedS 강건 척도 상수
MAD_SCALE = 1.4826


class PoseMethod(Enum):
    """강건 추정 방법"""
    RANSAC = "ransac"
    LMEDS = "lmeds"


@dataclass(frozen=True)
class PoseConfig:
    """
    강건 자세 추정 설정

    Attributes:
        iterations: 최소 표본(2점) 가설 수
        inlier_radius: RANSAC 인라이어 반경 (m)
        seed: 표본 추출 시드
        mad_factor: LMedS 인라이어 판정 배수 (척도화된 MAD 기준)
        method: "ransac" 또는 "lmeds"
        max_false_alarms: 우연 일치 기대 횟수(NFA) 상한, None 이면 유의성 검사를 끔
    """
    iterations: int = 200
    inlier_radius: float = 0.5
    seed: int = 0
    mad_factor: float = 2.5
    method: str = PoseMethod.RANSAC.value
    max_false_alarms: Optional[float] = 1.0

    def validate(self):
        if self.iterations < 1:
            raise InvalidConfig(f"iterations 는 1 이상이어야 합니다: {self.iterations}")
        if not self.inlier_radius > 0 or not self.mad_factor > 0:
            raise InvalidConfig("inlier_radius, mad_factor 는 양수여야 합니다")
        try:
            PoseMethod(self.method)
        except ValueError:
            raise InvalidConfig(f"알 수 없는 추정 방법: {self.method}")
        if self.max_false_alarms is not None and not self.max_false_alarms > 0:
            raise InvalidConfig(f"max_false_alarms 는 양수 또는 null 이어야 합니다: {self.max_false_alarms}")


@dataclass(frozen=True)
class PoseEstimate:
    """
    강건 추정 결과

    Attributes:
        transform: 협력 에이전트 좌표 → 자기 에이전트 좌표
        inliers: 부분그래프 대응 중 인라이어 인덱스
        residuals: 최종 변환 기준 모든 대응의 잔차 (m)
        method: 사용한 방법
    """
    transform: RigidTransform2D
    inliers: tuple[int, ...]
    residuals: np.ndarray = field(repr=False)
    method: PoseMethod = PoseMethod.RANSAC

    @property
    def num_inliers(self) -> int:
        return len(self.inliers)


def _correspondence_points(
    subgraph: CommonSubgraph,
    ego_graph: SalientObjectGraph,
    collab_graph: SalientObjectGraph,
) -> tuple[np.ndarray, np.ndarray]:
    """(src: 협력 좌표, dst: 자기 좌표)"""
    ego = ego_graph.centers()
    collab = collab_graph.centers()
    src = np.array([collab[q] for _, q in subgraph.correspondences], dtype=np.float64)
    dst = np.array([ego[p] for p, _ in subgraph.correspondences], dtype=np.float64)
    return src, dst


def _minimal_samples(psi: int, iterations: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """2점 최소 표본 목록: 조합 수가 적으면 전부, 아니면 무작위 추출"""
    if math.comb(psi, 2) <= iterations:
        return list(combinations(range(psi), 2))
    samples = []
    for _ in range(iterations):
        i, j = rng.choice(psi, size=2, replace=False)
        samples.append((int(i), int(j)))
    return samples


def _refit(src: np.ndarray, dst: np.ndarray, mask: np.ndarray, fallback: RigidTransform2D) -> RigidTransform2D:
    if int(mask.sum()) < 2:
        return fallback
    try:
        return rigid_fit(src[mask], dst[mask])
    except DegenerateInput:
        return fallback


def _poisson_log_tail(lam: float, k: int) -> float:
    """log P(X ≥ k), X ~ Poisson(lam)"""
    if k <= 0:
        return 0.0
    if lam <= 0:
        return -math.inf
    log_lam = math.log(lam)
    terms = []
    stop = k + int(lam + 10.0 * math.sqrt(lam)) + 50
    for i in range(k, stop):
        terms.append(-lam + i * log_lam - math.lgamma(i + 1))
    top = max(terms)
    return min(0.0, top + math.log(sum(math.exp(t - top) for t in terms)))


def scene_area(points: np.ndarray, min_radius: float) -> float:
    """중심에서 가장 먼 점까지를 반지름으로 하는 원 넓이 (m²)"""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        return math.pi * min_radius ** 2
    radius = float(np.max(np.linalg.norm(pts - pts.mean(axis=0), axis=1)))
    return math.pi * max(radius, min_radius) ** 2


def false_alarms(
    num_inliers: int,
    n: int,
    m: int,
    area: float,
    radius: float,
    num_frames: int = 1,
) -> float:
    """
    우연 일치 기대 횟수 (a-contrario NFA)
    2점 가설이 정해진 뒤 나머지 (n-2)(m-2) 쌍이 반경 안에 우연히 들어오는 수를
    Poisson 으로 근사하고, 가능한 가설 수와 버퍼 프레임 수를 곱합니다.

    Args:
        num_inliers: 인라이어 대응 수
        n, m: 자기/협력 그래프 노드 수
        area: 자기 프레임 관측 영역 넓이 (m²)
        radius: 인라이어 반경 (m)
        num_frames: 비교한 버퍼 프레임 수

    Returns:
        float: 기대 오경보 수, 1 보다 작을수록 유의
    """
    if n < 2 or m < 2:
        return math.inf
    alpha = min(1.0, math.pi * radius ** 2 / max(area, 1e-12))
    lam = (n - 2) * (m - 2) * alpha
    tests = max(num_frames, 1) * n * m * (n - 1) * (m - 1) / 2.0
    return tests * math.exp(_poisson_log_tail(lam, num_inliers - 2))


def estimate_pose(
    subgraph: CommonSubgraph,
    ego_graph: SalientObjectGraph,
    collab_graph: SalientObjectGraph,
    method: Optional[PoseMethod] = None,
    cfg: Optional[PoseConfig] = None,
) -> PoseEstimate:
    """
    부분그래프 대응으로 협력 에이전트 → 자기 에이전트 상대 자세를 추정합니다.

    Args:
        subgraph: 공통 부분그래프 (ψ ≥ 3)
        ego_graph: 자기 에이전트 그래프 (대응의 첫 번째 인덱스)
        collab_graph: 협력 에이전트 그래프 (대응의 두 번째 인덱스)
        method: RANSAC 또는 LMedS (None 이면 cfg.method)
        cfg: 추정 설정

    Returns:
        PoseEstimate: 변환, 인라이어, 잔차

    Raises:
        DegenerateGeometry: ψ < 3, 대응 점들이 일직선, 또는 유효한 최소 표본이 없음
    """
    cfg = cfg or PoseConfig()
    cfg.validate()
    method = method or PoseMethod(cfg.method)

    psi = subgraph.size
    if psi < 3:
        raise DegenerateGeometry(f"대응이 3개 이상 필요합니다 (ψ={psi})")

    src, dst = _correspondence_points(subgraph, ego_graph, collab_graph)
    centered = src - src.mean(axis=0)
    if np.linalg.svd(centered, compute_uv=False)[-1] < COLLINEAR_TOL:
        raise DegenerateGeometry(f"대응 점들이 일직선에 있습니다 (ψ={psi})")

    rng = np.random.default_rng(cfg.seed)
    best_t: Optional[RigidTransform2D] = None
    best_key = None

    for i, j in _minimal_samples(psi, cfg.iterations, rng):
        try:
            hypothesis = rigid_fit(src[[i, j]], dst[[i, j]])
        except DegenerateInput:
            continue
        res = fit_residuals(hypothesis, src, dst)

        if method is PoseMethod.RANSAC:
            mask = res <= cfg.inlier_radius
            key = (-int(mask.sum()), float(np.sum(res[mask] ** 2)))
        else:
            key = (float(np.median(res ** 2)),)

        if best_key is None or key < best_key:
            best_key, best_t = key, hypothesis

    if best_t is None:
        raise DegenerateGeometry("모든 최소 표본이 한 점에 겹쳐 있습니다")

    res = fit_residuals(best_t, src, dst)
    if method is PoseMethod.RANSAC:
        threshold = cfg.inlier_radius
    else:
        sigma = MAD_SCALE * (1.0 + 5.0 / (psi - 2)) * math.sqrt(float(np.median(res ** 2)))
        threshold = max(cfg.mad_factor * sigma, 1e-6)

    transform = _refit(src, dst, res <= threshold, best_t)
    final_res = fit_residuals(transform, src, dst)
    inliers = tuple(int(k) for k in np.flatnonzero(final_res <= threshold))
    if len(inliers) < 2:
        # 재적합이 인라이어를 잃으면 가설 그대로 사용
        transform, final_res = best_t, res
        inliers = tuple(int(k) for k in np.flatnonzero(res <= threshold))

    logger.debug(f"{method.value}: 인라이어 {len(inliers)}/{psi}")
    return PoseEstimate(transform, inliers, final_res, method)


# ----------------------------------------------------------------------
# ICP 기준선
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform2D
    rmse: float
    iterations: int
    converged: bool


def icp_align(
    src,
    dst,
    iterations: int = 30,
    tolerance: float = 1e-6,
    max_distance: Optional[float] = None,
    initial: Optional[RigidTransform2D] = None,
) -> IcpResult:
    """
    최근접점 기반 점대점 ICP
    대응 없이 src 를 dst 에 맞추며, 초기값(기본 항등)에서 멀면 국소해에 빠집니다.

    Args:
        src: 협력 에이전트 박스 중심 (N, 2)
        dst: 자기 에이전트 박스 중심 (M, 2)
        iterations: 최대 반복 횟수
        tolerance: RMSE 변화가 이보다 작으면 수렴
        max_distance: 이보다 먼 최근접 쌍은 제외 (None 이면 제한 없음)
        initial: 초기 변환

    Returns:
        IcpResult
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    current = initial or RigidTransform2D.identity()
    if len(src) < 2 or len(dst) < 1:
        return IcpResult(current, math.inf, 0, False)

    prev_err = math.inf
    err = math.inf
    done = 0
    converged = False
    for it in range(iterations):
        moved = apply_transform(current, src)
        dist = np.linalg.norm(moved[:, None, :] - dst[None, :, :], axis=2)
        nearest = np.argmin(dist, axis=1)
        gap = dist[np.arange(len(src)), nearest]
        keep = gap <= max_distance if max_distance is not None else np.ones(len(src), dtype=bool)
        if int(keep.sum()) < 2:
            break
        try:
            step = rigid_fit(moved[keep], dst[nearest[keep]])
        except DegenerateInput:
            break
        current = compose(step, current)
        err = float(np.sqrt(np.mean(fit_residuals(step, moved[keep], dst[nearest[keep]]) ** 2)))
        done = it + 1
        if abs(prev_err - err) < tolerance:
            converged = True
            break
        prev_err = err

    return IcpResult(current, err, done, converged)
