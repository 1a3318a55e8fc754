"""
엣지 임베딩 네트워크
거리 행렬 R 만을 입력으로 받는 소형 엣지 인지 어텐션 GNN
- 순전파/역전파/옵티마이저를 numpy 로 직접 구현
- 대조 손실(contrastive loss)로 학습
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DivergenceDetected, EmptySets, InvalidConfig, ShapeMismatch
from .graph import SalientObjectGraph, distance_profile
from .workers import run_parallel

logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.2

# (p, q) 엣지 쌍: ((a 그래프 엣지), (b 그래프 엣지))
EdgePair = tuple[tuple[int, int], tuple[int, int]]


@dataclass(frozen=True)
class EmbeddingHyperParams:
    """
    임베딩 하이퍼파라미터

    Attributes:
        hidden: 은닉 폭 h
        rounds: 메시지 전달 라운드 수 L
        out_dim: 엣지 특징 차원 k
        profile_len: 노드 초기 특징(거리 프로파일) 길이
        distance_scale: 거리 입력 정규화 스케일 (m)
        margin: 대조 손실 마진 γ_loss
    """
    hidden: int = 32
    rounds: int = 2
    out_dim: int = 8
    profile_len: int = 16
    distance_scale: float = 50.0
    margin: float = 1.0

    def validate(self):
        if self.hidden < 1 or self.rounds < 0 or self.out_dim < 1 or self.profile_len < 1:
            raise InvalidConfig(f"임베딩 차원이 잘못되었습니다: {self}")
        if self.distance_scale <= 0 or self.margin <= 0:
            raise InvalidConfig("distance_scale, margin 은 양수여야 합니다")


def param_shapes(hp: EmbeddingHyperParams) -> dict[str, tuple[int, ...]]:
    """파라미터 이름별 형태"""
    h = hp.hidden
    shapes: dict[str, tuple[int, ...]] = {
        "node_in.weight": (h, hp.profile_len),
        "node_in.bias": (h,),
        "edge_in.weight": (h,),
        "edge_in.bias": (h,),
    }
    for r in range(hp.rounds):
        pre = f"round{r}."
        shapes[pre + "att_src"] = (h,)
        shapes[pre + "att_dst"] = (h,)
        shapes[pre + "att_edge"] = (h,)
        shapes[pre + "msg_node"] = (h, h)
        shapes[pre + "msg_edge"] = (h, h)
        shapes[pre + "node_self"] = (h, h)
        shapes[pre + "node_bias"] = (h,)
        shapes[pre + "edge_self"] = (h, h)
        shapes[pre + "edge_node"] = (h, h)
        shapes[pre + "edge_bias"] = (h,)
    shapes["head.weight"] = (hp.out_dim, h)
    shapes["head.bias"] = (hp.out_dim,)
    return shapes


@dataclass
class EmbeddingParams:
    """하이퍼파라미터 + 이름별 가중치 배열"""
    hyper: EmbeddingHyperParams
    weights: dict[str, np.ndarray] = field(default_factory=dict)

    def validate(self):
        """
        형태 일관성과 유한성을 확인합니다.

        Raises:
            ShapeMismatch: 누락/초과/형태 불일치/비유한 값
        """
        expected = param_shapes(self.hyper)
        if set(expected) != set(self.weights):
            missing = sorted(set(expected) - set(self.weights))
            extra = sorted(set(self.weights) - set(expected))
            raise ShapeMismatch(f"파라미터 이름 불일치 (누락={missing}, 초과={extra})")
        for name, shape in expected.items():
            arr = self.weights[name]
            if tuple(arr.shape) != shape:
                raise ShapeMismatch(f"{name}: 형태 {arr.shape} != {shape}")
            if not np.all(np.isfinite(arr)):
                raise ShapeMismatch(f"{name}: 유한하지 않은 값")

    def copy(self) -> "EmbeddingParams":
        return EmbeddingParams(self.hyper, {k: v.copy() for k, v in self.weights.items()})

    def zeros_like(self) -> "EmbeddingParams":
        return EmbeddingParams(self.hyper, {k: np.zeros_like(v) for k, v in self.weights.items()})

    def names(self) -> list[str]:
        return list(param_shapes(self.hyper))


def init_params(hyper: Optional[EmbeddingHyperParams] = None, seed: int = 0, scale: float = 1.0) -> EmbeddingParams:
    """
    가중치를 초기화합니다 (fan-in 기반 정규분포).

    Args:
        hyper: 하이퍼파라미터 (None 이면 기본값)
        seed: 난수 시드
        scale: 표준편차 배율 (0 이면 모두 0)
    """
    hyper = hyper or EmbeddingHyperParams()
    hyper.validate()
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in param_shapes(hyper).items():
        if name.endswith("bias"):
            weights[name] = np.zeros(shape)
            continue
        fan_in = shape[-1] if len(shape) == 2 else (hyper.hidden if ".att_" in name else 1)
        weights[name] = rng.normal(0.0, scale / np.sqrt(fan_in), size=shape)
    params = EmbeddingParams(hyper, weights)
    params.validate()
    return params


@dataclass
class TrainingPair:
    """
    대조 학습용 그래프 쌍

    Attributes:
        graph_a, graph_b: 같은 장면을 본 두 에이전트의 그래프
        matched: M, ((p,q),(e,f)) 엣지 쌍
        unmatched: U, ((p,q),(u,v)) 엣지 쌍
    """
    graph_a: SalientObjectGraph
    graph_b: SalientObjectGraph
    matched: list[EdgePair]
    unmatched: list[EdgePair]


# ----------------------------------------------------------------------
# 순전파
# ----------------------------------------------------------------------

@dataclass
class _RoundCache:
    x: np.ndarray
    e: np.ndarray
    z: np.ndarray
    alpha: np.ndarray
    msg: np.ndarray
    x_new: np.ndarray
    s: np.ndarray
    e_new: np.ndarray


@dataclass
class _ForwardCache:
    r: np.ndarray
    profile: np.ndarray
    x0: np.ndarray
    e0: np.ndarray
    rounds: list[_RoundCache]
    e_last: np.ndarray
    out: np.ndarray


def _leaky(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, LEAKY_SLOPE * z)


def _forward(params: EmbeddingParams, distance_matrix: np.ndarray) -> _ForwardCache:
    hp = params.hyper
    w = params.weights
    n = distance_matrix.shape[0]
    diag = np.eye(n, dtype=bool)

    r = distance_matrix / hp.distance_scale
    profile = distance_profile(distance_matrix, hp.profile_len) / hp.distance_scale
    x = np.tanh(profile @ w["node_in.weight"].T + w["node_in.bias"])
    e = np.tanh(r[..., None] * w["edge_in.weight"] + w["edge_in.bias"])
    x0, e0 = x, e

    rounds = []
    for i in range(hp.rounds):
        pre = f"round{i}."
        z = (x @ w[pre + "att_src"])[:, None] + (x @ w[pre + "att_dst"])[None, :] + e @ w[pre + "att_edge"]
        # 자기 자신으로의 어텐션은 제외
        y = np.where(diag, -np.inf, _leaky(z))
        ex = np.exp(y - y.max(axis=1, keepdims=True))
        alpha = ex / ex.sum(axis=1, keepdims=True)
        msg = (x @ w[pre + "msg_node"].T)[None, :, :] + e @ w[pre + "msg_edge"].T
        agg = np.einsum("ij,ijh->ih", alpha, msg)
        x_new = np.tanh(agg + x @ w[pre + "node_self"].T + w[pre + "node_bias"])
        s = x_new[:, None, :] + x_new[None, :, :]
        e_new = np.tanh(e @ w[pre + "edge_self"].T + s @ w[pre + "edge_node"].T + w[pre + "edge_bias"])
        rounds.append(_RoundCache(x, e, z, alpha, msg, x_new, s, e_new))
        x, e = x_new, e_new

    out = np.tanh(e @ w["head.weight"].T + w["head.bias"])
    out[diag] = 0.0
    return _ForwardCache(r, profile, x0, e0, rounds, e, out)


def _backward(params: EmbeddingParams, cache: _ForwardCache, grad_out: np.ndarray) -> dict[str, np.ndarray]:
    """출력 W 에 대한 기울기를 파라미터 기울기로 역전파합니다."""
    hp = params.hyper
    w = params.weights
    n = grad_out.shape[0]
    diag = np.eye(n, dtype=bool)
    grads: dict[str, np.ndarray] = {}

    g_out = grad_out.copy()
    g_out[diag] = 0.0
    g_pre = g_out * (1.0 - cache.out ** 2)
    grads["head.weight"] = np.einsum("ijk,ijh->kh", g_pre, cache.e_last)
    grads["head.bias"] = g_pre.sum(axis=(0, 1))
    g_e = g_pre @ w["head.weight"]
    g_x = np.zeros_like(cache.x0)

    for i in reversed(range(hp.rounds)):
        pre = f"round{i}."
        rc = cache.rounds[i]
        g_x_new = g_x

        # 엣지 갱신
        g_epre = g_e * (1.0 - rc.e_new ** 2)
        grads[pre + "edge_self"] = np.einsum("ijh,ijg->hg", g_epre, rc.e)
        grads[pre + "edge_node"] = np.einsum("ijh,ijg->hg", g_epre, rc.s)
        grads[pre + "edge_bias"] = g_epre.sum(axis=(0, 1))
        g_e = g_epre @ w[pre + "edge_self"]
        g_s = g_epre @ w[pre + "edge_node"]
        g_x_new = g_x_new + g_s.sum(axis=1) + g_s.sum(axis=0)

        # 노드 갱신
        g_xpre = g_x_new * (1.0 - rc.x_new ** 2)
        grads[pre + "node_self"] = g_xpre.T @ rc.x
        grads[pre + "node_bias"] = g_xpre.sum(axis=0)
        g_x = g_xpre @ w[pre + "node_self"]

        # 집계: agg_i = Σ_j α_ij m_ij
        g_alpha = np.einsum("ih,ijh->ij", g_xpre, rc.msg)
        g_msg = rc.alpha[..., None] * g_xpre[:, None, :]
        grads[pre + "msg_node"] = np.einsum("ijh,jg->hg", g_msg, rc.x)
        grads[pre + "msg_edge"] = np.einsum("ijh,ijg->hg", g_msg, rc.e)
        g_x = g_x + g_msg.sum(axis=0) @ w[pre + "msg_node"]
        g_e = g_e + g_msg @ w[pre + "msg_edge"]

        # softmax + leaky relu
        g_y = rc.alpha * (g_alpha - (rc.alpha * g_alpha).sum(axis=1, keepdims=True))
        g_z = g_y * np.where(rc.z > 0, 1.0, LEAKY_SLOPE)
        g_z[diag] = 0.0
        g_src = g_z.sum(axis=1)
        g_dst = g_z.sum(axis=0)
        grads[pre + "att_src"] = rc.x.T @ g_src
        grads[pre + "att_dst"] = rc.x.T @ g_dst
        grads[pre + "att_edge"] = np.einsum("ij,ijh->h", g_z, rc.e)
        g_x = g_x + np.outer(g_src, w[pre + "att_src"]) + np.outer(g_dst, w[pre + "att_dst"])
        g_e = g_e + g_z[..., None] * w[pre + "att_edge"]

    g_e0 = g_e * (1.0 - cache.e0 ** 2)
    grads["edge_in.weight"] = np.einsum("ijh,ij->h", g_e0, cache.r)
    grads["edge_in.bias"] = g_e0.sum(axis=(0, 1))
    g_x0 = g_x * (1.0 - cache.x0 ** 2)
    grads["node_in.weight"] = g_x0.T @ cache.profile
    grads["node_in.bias"] = g_x0.sum(axis=0)
    return grads


def embed_edges(params: EmbeddingParams, graph: SalientObjectGraph) -> np.ndarray:
    """
    학습된 엣지 특징 W = f(G, R) 를 계산합니다.
    입력은 거리 행렬 R 뿐이므로 강체 변환에 불변이고 노드 순서에 등변입니다.

    Args:
        params: 임베딩 파라미터
        graph: n ≥ 2 인 그래프

    Returns:
        np.ndarray: (n, n, k), 대각은 0

    Raises:
        ShapeMismatch: n < 2 이거나 파라미터 형태 불일치
    """
    params.validate()
    dist = graph.distance_matrix
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1] or dist.shape[0] < 2:
        raise ShapeMismatch(f"n ≥ 2 인 정방 거리 행렬이 필요합니다: {dist.shape}")
    return _forward(params, dist).out


# ----------------------------------------------------------------------
# 대조 손실
# ----------------------------------------------------------------------

def _loss_with_grads(
    w_a: np.ndarray,
    w_b: np.ndarray,
    matched: Sequence[EdgePair],
    unmatched: Sequence[EdgePair],
    margin: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    if not matched and not unmatched:
        raise EmptySets("매칭/비매칭 엣지 집합이 모두 비어 있습니다")
    g_a = np.zeros_like(w_a)
    g_b = np.zeros_like(w_b)
    loss = 0.0

    if matched:
        scale = 1.0 / len(matched)
        for (p, q), (e, f) in matched:
            d = w_a[p, q] - w_b[e, f]
            dist = float(np.linalg.norm(d))
            loss += scale * dist
            if dist > 0.0:
                g = scale * d / dist
                g_a[p, q] += g
                g_b[e, f] -= g

    if unmatched:
        scale = 1.0 / len(unmatched)
        for (p, q), (u, v) in unmatched:
            d = w_a[p, q] - w_b[u, v]
            dist = float(np.linalg.norm(d))
            gap = margin - dist
            if gap > 0.0:
                loss += scale * gap
                # 꺾이는 점(gap == 0)과 dist == 0 에서는 부분기울기 0
                if dist > 0.0:
                    g = scale * d / dist
                    g_a[p, q] -= g
                    g_b[u, v] += g
    return loss, g_a, g_b


def contrastive_loss(
    w_a: np.ndarray,
    w_b: np.ndarray,
    pair: TrainingPair,
    margin: float,
) -> float:
    """
    L = (1/|M|) Σ ‖W_a(p,q) − W_b(e,f)‖ + (1/|U|) Σ max(γ − ‖W_a(p,q) − W_b(u,v)‖, 0)

    Raises:
        EmptySets: M, U 가 모두 비어 있음
    """
    loss, _, _ = _loss_with_grads(w_a, w_b, pair.matched, pair.unmatched, margin)
    return loss


def _pair_loss_and_grad(params: EmbeddingParams, pair: TrainingPair) -> tuple[float, dict[str, np.ndarray]]:
    cache_a = _forward(params, pair.graph_a.distance_matrix)
    cache_b = _forward(params, pair.graph_b.distance_matrix)
    loss, g_wa, g_wb = _loss_with_grads(
        cache_a.out, cache_b.out, pair.matched, pair.unmatched, params.hyper.margin
    )
    grads_a = _backward(params, cache_a, g_wa)
    grads_b = _backward(params, cache_b, g_wb)
    return loss, {k: grads_a[k] + grads_b[k] for k in grads_a}


def loss_and_gradient(
    params: EmbeddingParams,
    batch: Sequence[TrainingPair],
    workers: int = 1,
) -> tuple[float, EmbeddingParams]:
    """
    배치 평균 손실과 해석적 기울기

    Args:
        params: 임베딩 파라미터
        batch: 학습 쌍 목록
        workers: 병렬 작업 스레드 수 (합산 순서는 고정)

    Returns:
        tuple: (평균 손실, 같은 형태의 기울기 EmbeddingParams)
    """
    if not batch:
        raise EmptySets("빈 배치입니다")
    params.validate()
    results = run_parallel(lambda pair: _pair_loss_and_grad(params, pair), list(batch), workers)
    total = params.zeros_like()
    loss = 0.0
    for pair_loss, grads in results:
        loss += pair_loss
        for name, g in grads.items():
            total.weights[name] += g
    scale = 1.0 / len(batch)
    for name in total.weights:
        total.weights[name] *= scale
    return loss * scale, total


def loss_gradient(params: EmbeddingParams, batch: Sequence[TrainingPair]) -> EmbeddingParams:
    """배치 손실의 해석적 기울기 (params 와 같은 형태)"""
    _, grad = loss_and_gradient(params, batch)
    return grad


def batch_loss(params: EmbeddingParams, batch: Sequence[TrainingPair]) -> float:
    """배치 평균 대조 손실"""
    if not batch:
        raise EmptySets("빈 배치입니다")
    total = 0.0
    for pair in batch:
        w_a = _forward(params, pair.graph_a.distance_matrix).out
        w_b = _forward(params, pair.graph_b.distance_matrix).out
        total += contrastive_loss(w_a, w_b, pair, params.hyper.margin)
    return total / len(batch)


# ----------------------------------------------------------------------
# 학습
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """경사하강 학습 설정 (모멘텀 SGD)"""
    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 8
    epochs: int = 200
    seed: int = 0
    max_grad_norm: float = 5.0
    workers: int = 1
    log_every: int = 20

    def validate(self):
        if self.learning_rate <= 0 or not (0.0 <= self.momentum < 1.0):
            raise InvalidConfig("learning_rate > 0, 0 ≤ momentum < 1 이어야 합니다")
        if self.batch_size < 1 or self.epochs < 0 or self.workers < 1:
            raise InvalidConfig("batch_size ≥ 1, epochs ≥ 0, workers ≥ 1 이어야 합니다")


def train(
    corpus: Sequence[TrainingPair],
    config: Optional[TrainConfig] = None,
    initial: Optional[EmbeddingParams] = None,
    hyper: Optional[EmbeddingHyperParams] = None,
    on_epoch: Optional[Callable[[int, float], None]] = None,
) -> tuple[EmbeddingParams, list[float]]:
    """
    대조 손실로 임베딩을 학습합니다.

    Args:
        corpus: 학습 쌍 목록 (비어 있으면 안 됨)
        config: 학습 설정
        initial: 시작 파라미터 (None 이면 config.seed 로 초기화)
        hyper: initial 이 없을 때 사용할 하이퍼파라미터
        on_epoch: (epoch, 평균 손실) 콜백

    Returns:
        tuple: (학습된 파라미터, 에폭별 평균 손실)

    Raises:
        EmptySets: 빈 코퍼스
        DivergenceDetected: 손실/기울기가 유한하지 않음
    """
    config = config or TrainConfig()
    config.validate()
    if not corpus:
        raise EmptySets("학습 코퍼스가 비어 있습니다")

    params = initial.copy() if initial is not None else init_params(hyper, seed=config.seed)
    params.validate()
    velocity = params.zeros_like()
    rng = np.random.default_rng(config.seed)
    history: list[float] = []

    for epoch in range(config.epochs):
        order = rng.permutation(len(corpus))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [corpus[i] for i in order[start:start + config.batch_size]]
            loss, grad = loss_and_gradient(params, batch, workers=config.workers)
            if not np.isfinite(loss):
                raise DivergenceDetected(f"epoch {epoch}: 손실이 유한하지 않습니다 ({loss})")

            norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grad.weights.values())))
            if not np.isfinite(norm):
                raise DivergenceDetected(f"epoch {epoch}: 기울기가 유한하지 않습니다")
            clip = min(1.0, config.max_grad_norm / norm) if norm > 0 else 1.0

            for name in params.weights:
                v = velocity.weights[name]
                v *= config.momentum
                v -= config.learning_rate * clip * grad.weights[name]
                params.weights[name] += v
            losses.append(loss)

        mean_loss = float(np.mean(losses))
        history.append(mean_loss)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)
        if config.log_every and (epoch + 1) % config.log_every == 0:
            logger.info(f"epoch {epoch + 1}/{config.epochs}: 평균 손실 {mean_loss:.4f}")

    return params, history


# ----------------------------------------------------------------------
# 학습 쌍 구성 / 임계값 보정
# ----------------------------------------------------------------------

def build_training_pair(
    graph_a: SalientObjectGraph,
    graph_b: SalientObjectGraph,
    correspondences: Sequence[tuple[int, int]],
    rng: np.random.Generator,
    negatives_per_match: int = 1,
) -> Optional[TrainingPair]:
    """
    정답 노드 대응으로 M, U 를 만듭니다.
    U 는 매칭되지 않는 b 그래프 엣지를 |M| 개 (negatives_per_match 배) 무작위 추출합니다.

    Returns:
        TrainingPair: 대응이 2개 미만이거나 b 그래프가 너무 작으면 None
    """
    corr = sorted(correspondences)
    if len(corr) < 2 or graph_b.n < 3:
        return None

    matched: list[EdgePair] = []
    for i in range(len(corr)):
        for j in range(i + 1, len(corr)):
            (p_i, q_i), (p_j, q_j) = corr[i], corr[j]
            matched.append(((p_i, p_j), (q_i, q_j)))

    unmatched: list[EdgePair] = []
    m = graph_b.n
    for edge_a, edge_b in matched:
        for _ in range(negatives_per_match):
            while True:
                u, v = (int(x) for x in rng.choice(m, size=2, replace=False))
                if {u, v} != set(edge_b):
                    break
            unmatched.append((edge_a, (u, v)))
    return TrainingPair(graph_a, graph_b, matched, unmatched)


def edge_distances(params: EmbeddingParams, pairs: Sequence[TrainingPair]) -> tuple[np.ndarray, np.ndarray]:
    """학습 쌍들의 매칭/비매칭 엣지 특징 거리"""
    pos, neg = [], []
    for pair in pairs:
        w_a = embed_edges(params, pair.graph_a)
        w_b = embed_edges(params, pair.graph_b)
        pos.extend(float(np.linalg.norm(w_a[a] - w_b[b])) for a, b in pair.matched)
        neg.extend(float(np.linalg.norm(w_a[a] - w_b[b])) for a, b in pair.unmatched)
    return np.array(pos), np.array(neg)


def calibrate_threshold(params: EmbeddingParams, pairs: Sequence[TrainingPair]) -> float:
    """
    엣지 매칭 분류 F1 을 최대화하는 특징 공간 임계값을 찾습니다.
    거리 < 임계값 이면 매칭으로 판정합니다.

    Returns:
        float: 보정된 edge_threshold
    """
    pos, neg = edge_distances(params, pairs)
    if pos.size == 0:
        raise EmptySets("보정에 쓸 매칭 엣지가 없습니다")
    values = np.unique(np.concatenate([pos, neg]))
    candidates = np.concatenate([(values[:-1] + values[1:]) / 2.0, [values[-1] + 1e-6]])

    best_f1, best_thr = -1.0, float(candidates[-1])
    for thr in candidates:
        tp = int(np.sum(pos < thr))
        fp = int(np.sum(neg < thr))
        fn = pos.size - tp
        f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
        if f1 > best_f1:
            best_f1, best_thr = f1, float(thr)
    logger.info(f"엣지 임계값 보정: {best_thr:.4f} (F1={best_f1:.3f})")
    return best_thr

