"""
다중 앵커 기반 부분그래프 탐색 (MASS)
두 현저 객체 그래프 사이의 근사 최대 공통 부분그래프를 찾습니다.
1) 초기화: n×m 후보 노드 쌍
2) 앵커 목록 확장
3) 부분그래프 성장
4) 선택: ε = (1/r^p) Σ ε_e 최소
작은 그래프용 전수 탐색 오라클도 포함합니다.
"""
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import DimensionMismatch, InvalidConfig, TooLarge
from .graph import SalientObjectGraph, distance_profile

logger = logging.getLogger(__name__)

# 오라클이 허용하는 최대 노드 수
ORACLE_MAX_NODES = 9

# ε 의 합은 ψ(ψ-1)/2 개 엣지에 걸치므로 p=3 이어야 큰 부분그래프가 유리
DEFAULT_P_EXP = 3.0

NodePair = tuple[int, int]


@dataclass(frozen=True)
class MassConfig:
    """
    MASS 설정

    Attributes:
        edge_threshold: 엣지 특징 불일치 임계값 (수작업 모드에서는 m)
        max_anchors: 앵커 목록 최대 길이 γ_anchors
        p_exp: 선택 점수의 지수 p
        min_subgraph_size: 이보다 작은 공통 부분그래프는 인정하지 않음
        max_seeds: 초기 후보 수 상한 (None 이면 n×m 전부)
        multi_anchor: False 이면 앵커 확장 없이 초기 쌍 하나만 사용 (단일 앵커 비교 실험)
    """
    edge_threshold: float = 0.5
    max_anchors: int = 4
    p_exp: float = DEFAULT_P_EXP
    min_subgraph_size: int = 4
    max_seeds: Optional[int] = None
    multi_anchor: bool = True

    def validate(self):
        if not self.edge_threshold > 0:
            raise InvalidConfig(f"edge_threshold 는 양수여야 합니다: {self.edge_threshold}")
        if self.max_anchors < 2:
            raise InvalidConfig(f"max_anchors(γ) 는 2 이상이어야 합니다: {self.max_anchors}")
        if self.min_subgraph_size < 3:
            raise InvalidConfig(f"min_subgraph_size 는 3 이상이어야 합니다: {self.min_subgraph_size}")
        if self.max_seeds is not None and self.max_seeds < 1:
            raise InvalidConfig(f"max_seeds 는 1 이상이어야 합니다: {self.max_seeds}")


@dataclass(frozen=True)
class AnchorList:
    """서로 일관된 앵커 노드 쌍 목록 (길이 ≤ capacity)"""
    pairs: tuple[NodePair, ...]
    capacity: int

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class CommonSubgraph:
    """
    공통 부분그래프

    Attributes:
        correspondences: (a 노드, b 노드) 쌍, (p, q) 순으로 정렬된 부분 단사 대응
        epsilon: 불일치 점수 ε ≥ 0
        edge_discrepancies: 대응 i < j 순서의 내부 엣지 불일치 ε_e
        anchors: 성장에 사용한 앵커
        p_exp: ε 계산에 쓴 지수
    """
    correspondences: tuple[NodePair, ...]
    epsilon: float
    edge_discrepancies: tuple[float, ...] = ()
    anchors: tuple[NodePair, ...] = ()
    p_exp: float = DEFAULT_P_EXP

    @property
    def size(self) -> int:
        """ψ"""
        return len(self.correspondences)

    def recompute_epsilon(self) -> float:
        """저장된 엣지 불일치로 ε 재계산"""
        if self.size == 0:
            return 0.0
        return float(sum(self.edge_discrepancies)) / (self.size ** self.p_exp)


def edge_discrepancy(wa, wb) -> float:
    """
    두 엣지 특징의 L2 거리 (k=1 이면 절댓값 차)

    Raises:
        DimensionMismatch: 차원 불일치
    """
    a = np.atleast_1d(np.asarray(wa, dtype=np.float64))
    b = np.atleast_1d(np.asarray(wb, dtype=np.float64))
    if a.shape != b.shape:
        raise DimensionMismatch(f"엣지 특징 차원 불일치: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def discrepancy_tensor(wa: np.ndarray, wb: np.ndarray) -> np.ndarray:
    """
    D[p, q, u, v] = ‖W_a(p, u) − W_b(q, v)‖

    Returns:
        np.ndarray: (n, m, n, m)
    """
    if wa.ndim != 3 or wb.ndim != 3 or wa.shape[2] != wb.shape[2]:
        raise DimensionMismatch(f"엣지 특징 차원 불일치: {wa.shape} vs {wb.shape}")
    n, m = wa.shape[0], wb.shape[0]
    if wa.shape[2] == 1:
        return np.abs(wa[:, None, :, None, 0] - wb[None, :, None, :, 0])
    out = np.empty((n, m, n, m))
    for p in range(n):
        diff = wa[p][None, :, None, :] - wb[:, None, :, :]
        out[p] = np.linalg.norm(diff, axis=-1)
    return out


class _SearchContext:
    """한 그래프 쌍에 대한 불일치 텐서와 일관성 마스크"""

    def __init__(self, wa: np.ndarray, wb: np.ndarray, cfg: MassConfig):
        self.cfg = cfg
        self.n, self.m = wa.shape[0], wb.shape[0]
        self.disc = discrepancy_tensor(wa, wb)
        ok = self.disc < cfg.edge_threshold
        # 같은 노드를 두 번 쓰는 후보는 제외
        ia = np.arange(self.n)
        ib = np.arange(self.m)
        ok[ia, :, ia, :] = False
        ok[:, ib, :, ib] = False
        self.ok = ok

    def candidates(self, p: int, q: int) -> tuple[np.ndarray, np.ndarray]:
        flat = np.flatnonzero(self.ok[p, q])
        return flat // self.m, flat % self.m

    def expand(self, seed: NodePair) -> AnchorList:
        p, q = seed
        pairs = [seed]
        u, v = self.candidates(p, q)
        order = np.lexsort((v, u, self.disc[p, q, u, v]))
        used_a, used_b = {p}, {q}
        for idx in order:
            if len(pairs) >= self.cfg.max_anchors:
                break
            uu, vv = int(u[idx]), int(v[idx])
            if uu in used_a or vv in used_b:
                continue
            if all(self.ok[ap, aq, uu, vv] for ap, aq in pairs[1:]):
                pairs.append((uu, vv))
                used_a.add(uu)
                used_b.add(vv)
        return AnchorList(tuple(pairs), self.cfg.max_anchors)

    def grow(self, anchors: AnchorList) -> CommonSubgraph:
        pairs = list(anchors.pairs)
        ap = np.array([a[0] for a in pairs])
        aq = np.array([a[1] for a in pairs])
        u, v = self.candidates(pairs[0][0], pairs[0][1])
        if len(pairs) > 1 and u.size:
            keep = self.ok[ap[1:], aq[1:]][:, u, v].all(axis=0)
            u, v = u[keep], v[keep]

        members = list(pairs)
        if u.size:
            mean = self.disc[ap, aq][:, u, v].mean(axis=0)
            used_a = set(int(x) for x in ap)
            used_b = set(int(x) for x in aq)
            for idx in np.lexsort((v, u, mean)):
                uu, vv = int(u[idx]), int(v[idx])
                if uu in used_a or vv in used_b:
                    continue
                members.append((uu, vv))
                used_a.add(uu)
                used_b.add(vv)
        return self.score(members, anchors.pairs)

    def score(self, members: Iterable[NodePair], anchors: tuple[NodePair, ...] = ()) -> CommonSubgraph:
        corr = tuple(sorted(members))
        r = len(corr)
        if r < 2:
            return CommonSubgraph(corr, 0.0, (), tuple(anchors), self.cfg.p_exp)
        ps = np.array([c[0] for c in corr])
        qs = np.array([c[1] for c in corr])
        i, j = np.triu_indices(r, 1)
        values = self.disc[ps[i], qs[i], ps[j], qs[j]]
        eps = float(values.sum()) / (r ** self.cfg.p_exp)
        return CommonSubgraph(corr, eps, tuple(float(x) for x in values), tuple(anchors), self.cfg.p_exp)

    def feasible_seeds(self, min_size: int) -> np.ndarray:
        """성장해도 min_size 에 도달할 수 없는 초기 쌍을 걸러낼 마스크 (n, m)"""
        rows = self.ok.any(axis=3).sum(axis=2)
        cols = self.ok.any(axis=2).sum(axis=2)
        return np.minimum(rows, cols) >= (min_size - 1)


def _features(graph: SalientObjectGraph, w: Optional[np.ndarray]) -> np.ndarray:
    return graph.edge_features if w is None else w


def init_seeds(
    ga: SalientObjectGraph,
    gb: SalientObjectGraph,
    cfg: Optional[MassConfig] = None,
) -> list[NodePair]:
    """
    초기 앵커 후보 쌍을 만듭니다.

    Returns:
        list: max_seeds 가 없으면 행 우선 순서의 n×m 쌍 전부,
              있으면 정렬 거리 프로파일 차이가 작은 순서의 앞부분
    """
    cfg = cfg or MassConfig()
    n, m = ga.n, gb.n
    if cfg.max_seeds is None or cfg.max_seeds >= n * m:
        return [(p, q) for p in range(n) for q in range(m)]

    prof_a = distance_profile(ga.distance_matrix)
    prof_b = distance_profile(gb.distance_matrix)
    mismatch = np.abs(prof_a[:, None, :] - prof_b[None, :, :]).mean(axis=2)
    order = np.argsort(mismatch.ravel(), kind="stable")[:cfg.max_seeds]
    return [(int(i) // m, int(i) % m) for i in order]


def expand_anchors(
    ga: SalientObjectGraph,
    wa: Optional[np.ndarray],
    gb: SalientObjectGraph,
    wb: Optional[np.ndarray],
    seed: NodePair,
    cfg: Optional[MassConfig] = None,
) -> AnchorList:
    """
    초기 쌍에서 시작해 모든 기존 앵커와 엣지 불일치가 임계값 미만인 후보를 앵커로 추가합니다.
    후보는 초기 쌍과의 불일치 오름차순(동률이면 인덱스 순)으로 훑습니다.
    """
    cfg = cfg or MassConfig()
    ctx = _SearchContext(_features(ga, wa), _features(gb, wb), cfg)
    return ctx.expand(seed)


def grow_subgraph(
    ga: SalientObjectGraph,
    wa: Optional[np.ndarray],
    gb: SalientObjectGraph,
    wb: Optional[np.ndarray],
    anchors: AnchorList,
    cfg: Optional[MassConfig] = None,
) -> CommonSubgraph:
    """
    모든 앵커와 일관된 후보를 평균 불일치가 작은 순으로 탐욕적으로 추가합니다.
    더 이상 조건을 만족하는 후보가 없으면 멈춥니다.
    """
    cfg = cfg or MassConfig()
    ctx = _SearchContext(_features(ga, wa), _features(gb, wb), cfg)
    return ctx.grow(anchors)


def mass(
    ga: SalientObjectGraph,
    wa: Optional[np.ndarray],
    gb: SalientObjectGraph,
    wb: Optional[np.ndarray],
    cfg: Optional[MassConfig] = None,
) -> Optional[CommonSubgraph]:
    """
    다중 앵커 부분그래프 탐색으로 두 그래프의 근사 최대 공통 부분그래프를 찾습니다.

    Args:
        ga, gb: 두 현저 객체 그래프
        wa, wb: 엣지 특징 (None 이면 그래프에 저장된 특징)
        cfg: MASS 설정

    Returns:
        CommonSubgraph: min_subgraph_size 이상인 후보 중 ε 최소,
                        없으면 None (NoMatch: 메시지를 버려야 함)
    """
    cfg = cfg or MassConfig()
    cfg.validate()
    if ga.n == 0 or gb.n == 0:
        return None

    ctx = _SearchContext(_features(ga, wa), _features(gb, wb), cfg)
    feasible = ctx.feasible_seeds(cfg.min_subgraph_size)
    seen: set[frozenset] = set()
    best: Optional[CommonSubgraph] = None

    for seed in init_seeds(ga, gb, cfg):
        if not feasible[seed]:
            continue
        if cfg.multi_anchor:
            anchors = ctx.expand(seed)
        else:
            anchors = AnchorList((seed,), cfg.max_anchors)
        key = frozenset(anchors.pairs)
        if key in seen:
            continue
        seen.add(key)

        sub = ctx.grow(anchors)
        if sub.size < cfg.min_subgraph_size:
            continue
        if best is None or sub.epsilon < best.epsilon:
            best = sub

    if best is None:
        logger.debug(f"MASS: 공통 부분그래프 없음 (n={ga.n}, m={gb.n})")
    else:
        logger.debug(f"MASS: ψ={best.size}, ε={best.epsilon:.5f} (후보 {len(seen)}개)")
    return best


def oracle_max_common_subgraph(
    ga: SalientObjectGraph,
    wa: Optional[np.ndarray],
    gb: SalientObjectGraph,
    wb: Optional[np.ndarray],
    cfg: Optional[MassConfig] = None,
) -> CommonSubgraph:
    """
    전수 탐색 오라클
    모든 내부 엣지 쌍의 불일치가 임계값 미만인 최대 크기 대응 집합 (동률이면 ε 최소)

    Raises:
        TooLarge: n 또는 m 이 ORACLE_MAX_NODES 초과
    """
    cfg = cfg or MassConfig()
    if ga.n > ORACLE_MAX_NODES or gb.n > ORACLE_MAX_NODES:
        raise TooLarge(f"오라클은 노드 {ORACLE_MAX_NODES}개 이하만 지원합니다 (n={ga.n}, m={gb.n})")

    ctx = _SearchContext(_features(ga, wa), _features(gb, wb), cfg)
    n, m = ctx.n, ctx.m
    best = {"size": -1, "eps": math.inf, "members": ()}

    def recurse(i: int, members: list[NodePair], used_b: set[int]):
        if len(members) + (n - i) < best["size"]:
            return
        if i == n:
            sub = ctx.score(members)
            if sub.size > best["size"] or (sub.size == best["size"] and sub.epsilon < best["eps"]):
                best.update(size=sub.size, eps=sub.epsilon, members=tuple(members))
            return
        for v in range(m):
            if v in used_b:
                continue
            if all(ctx.ok[p, q, i, v] for p, q in members):
                members.append((i, v))
                used_b.add(v)
                recurse(i + 1, members, used_b)
                used_b.discard(v)
                members.pop()
        recurse(i + 1, members, used_b)

    recurse(0, [], set())
    return ctx.score(best["members"])
