"""
다중 에이전트 합성 시나리오 생성기
움직이는 객체, 에이전트 궤적과 오도메트리, 잡음 섞인 검출, 시계 오프셋, 메시지 지연을
정답과 함께 생성합니다.

난수는 용도별 하위 스트림으로 나누어, 한 옵션(공격/드리프트 등)을 켜도
다른 스트림의 결과는 바뀌지 않습니다.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from align.embedding import TrainingPair, build_training_pair
from align.errors import EmptyFrame, EmptySets, InvalidConfig
from align.frames import Box, DetectionFrame
from align.geometry import Pose2D, RigidTransform2D, apply_transform, compose, inverse, normalize_angle, relative_pose
from align.graph import SalientObjectGraph, build_graph

logger = logging.getLogger(__name__)

EGO_ID = "agent_0"

# 하위 난수 스트림
STREAM_OBJECTS = 0
STREAM_AGENTS = 1
STREAM_CLOCKS = 2
STREAM_DETECTIONS = 3
STREAM_ODOMETRY = 4
STREAM_MESSAGES = 5
STREAM_ATTACK = 6
STREAM_POSE_NOISE = 7
STREAM_CORPUS = 8

# 에이전트 진행 방향이 공통 방향에서 벗어날 수 있는 최대 각도
HEADING_SPREAD = math.pi / 12


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def agent_id(index: int) -> str:
    return f"agent_{index}"


@dataclass(frozen=True)
class ScenarioConfig:
    """
    시나리오 설정

    Attributes:
        seed: 난수 시드 (0 이상)
        num_agents: 에이전트 수 (agent_0 이 자기 에이전트)
        num_objects: 객체 수
        world_extent: 월드 한 변 길이 (m), 원점 중심 정사각형
        object_speed_range: 객체 속력 범위 (m/s)
        sample_interval_tau: 표본 간격 τ (ms, ≤ 100)
        duration: 프레임 수
        fov_radius: 에이전트 인지 반경 (m)
        detection_jitter_sigma: 박스 중심 가우시안 잡음 σ (m)
        miss_rate: 미검출 확률
        false_positive_rate: 프레임당 오검출 기대 개수 (포아송)
        clock_offset_range: 에이전트 시계 오프셋 범위 (ms)
        latency_range: 메시지 지연 범위 (ms), τ 배수로 반올림
        pose_attack: 광고 자세 공격 적용 여부
        attack_magnitude: 공격 변위 상한 (m)
        agent_spacing: 협력 에이전트 시작 위치의 자기 에이전트로부터 최대 거리 (m)
        agent_speed_range: 에이전트 속력 범위 (m/s)
        max_yaw_rate: 에이전트 회전 속도 상한 (rad/s)
        velocity_change_prob: 프레임마다 객체 속도를 다시 뽑을 확률
        odometry_drift_sigma: 오도메트리 증분 평행이동 잡음 σ (m)
        odometry_yaw_drift_sigma: 오도메트리 증분 회전 잡음 σ (rad)
        message_stride: 협력 에이전트가 메시지를 보내는 프레임 간격
        pose_noise_sigma: 광고 자세 (x, y) 가우시안 잡음 σ (m)
        pose_noise_yaw_sigma: 광고 자세 θ 가우시안 잡음 σ (rad)
    """
    seed: int = 0
    num_agents: int = 2
    num_objects: int = 40
    world_extent: float = 100.0
    object_speed_range: tuple[float, float] = (2.0, 8.0)
    sample_interval_tau: int = 100
    duration: int = 30
    fov_radius: float = 40.0
    detection_jitter_sigma: float = 0.1
    miss_rate: float = 0.05
    false_positive_rate: float = 1.0
    clock_offset_range: tuple[int, int] = (-200, 200)
    latency_range: tuple[int, int] = (0, 500)
    pose_attack: bool = False
    attack_magnitude: float = 10.0
    agent_spacing: float = 15.0
    agent_speed_range: tuple[float, float] = (6.0, 9.0)
    max_yaw_rate: float = 0.05
    velocity_change_prob: float = 0.02
    odometry_drift_sigma: float = 0.0
    odometry_yaw_drift_sigma: float = 0.0
    message_stride: int = 5
    pose_noise_sigma: float = 0.0
    pose_noise_yaw_sigma: float = 0.0

    def __post_init__(self):
        # JSON 에서 읽은 리스트도 튜플로 맞춤
        for name in ("object_speed_range", "clock_offset_range", "latency_range", "agent_speed_range"):
            value = getattr(self, name)
            if not isinstance(value, tuple):
                object.__setattr__(self, name, tuple(value))

    def validate(self):
        """
        Raises:
            InvalidConfig: 불변 조건 위반
        """
        if self.seed < 0:
            raise InvalidConfig(f"seed 는 0 이상이어야 합니다: {self.seed}")
        if self.num_agents < 2:
            raise InvalidConfig(f"num_agents 는 2 이상이어야 합니다: {self.num_agents}")
        if self.num_objects < 0 or self.duration < 1 or self.message_stride < 1:
            raise InvalidConfig("num_objects ≥ 0, duration ≥ 1, message_stride ≥ 1 이어야 합니다")
        if not (0 < self.sample_interval_tau <= 100):
            raise InvalidConfig(f"sample_interval_tau 는 (0, 100] ms 여야 합니다: {self.sample_interval_tau}")
        if self.world_extent <= 0 or self.fov_radius <= 0:
            raise InvalidConfig("world_extent, fov_radius 는 양수여야 합니다")
        for name in ("miss_rate", "velocity_change_prob"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise InvalidConfig(f"{name} 는 [0, 1] 범위여야 합니다: {value}")
        for name in ("false_positive_rate", "detection_jitter_sigma", "agent_spacing", "max_yaw_rate",
                     "odometry_drift_sigma", "odometry_yaw_drift_sigma", "pose_noise_sigma",
                     "pose_noise_yaw_sigma"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} 는 0 이상이어야 합니다: {getattr(self, name)}")
        for name in ("object_speed_range", "clock_offset_range", "latency_range", "agent_speed_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise InvalidConfig(f"{name} 의 최솟값이 최댓값보다 큽니다: {(lo, hi)}")
        if self.object_speed_range[0] < 0 or self.agent_speed_range[0] < 0 or self.latency_range[0] < 0:
            raise InvalidConfig("속력과 지연 범위는 0 이상이어야 합니다")
        if self.pose_attack and self.attack_magnitude <= 0:
            raise InvalidConfig(f"attack_magnitude 는 양수여야 합니다: {self.attack_magnitude}")

    @property
    def dt(self) -> float:
        """표본 간격 (s)"""
        return self.sample_interval_tau / 1000.0


@dataclass(frozen=True)
class OdometryTrack:
    """
    에이전트 오도메트리
    increments[k] 는 프레임 k-1 좌표를 프레임 k 좌표로 옮기는 변환이며 increments[0] 은 항등입니다.
    """
    agent_id: str
    increments: tuple[RigidTransform2D, ...]

    def between(self, start: int, end: int) -> RigidTransform2D:
        """프레임 start 좌표 → 프레임 end 좌표 (start ≤ end)"""
        if start > end:
            raise ValueError(f"start({start}) 는 end({end}) 이하여야 합니다")
        t = RigidTransform2D.identity()
        for k in range(start + 1, end + 1):
            t = compose(self.increments[k], t)
        return t


@dataclass(frozen=True)
class MessageTruth:
    """
    협력 메시지 하나의 정답

    Attributes:
        sender / receiver: 에이전트 id
        ego_frame: 수신 시점 자기 에이전트 프레임 인덱스
        capture_frame: 송신 에이전트가 프레임을 찍은 인덱스
        sender_local_time: 송신 에이전트 시계의 캡처 시각 (ms)
        ego_local_time: 자기 에이전트 시계의 현재 시각 (ms)
        true_latency: Δt = (ego_frame - capture_frame)·τ
        advertised_latency: Δt̃ = ego_local_time - sender_local_time
        clock_deviation: δt = Δt - Δt̃
        relative_pose: 송신 프레임 좌표 → 자기 에이전트 현재 좌표
    """
    sender: str
    receiver: str
    ego_frame: int
    capture_frame: int
    sender_local_time: int
    ego_local_time: int
    true_latency: int
    advertised_latency: int
    clock_deviation: int
    relative_pose: RigidTransform2D


@dataclass(frozen=True)
class GroundTruth:
    """
    시나리오 정답

    Attributes:
        poses: 에이전트별 프레임별 전역 자세 ξ
        advertised_poses: 에이전트가 메시지에 싣는 자세 (공격/잡음 대상, FreeAlign 은 읽지 않음)
        clock_offsets: 에이전트별 시계 오프셋 (ms)
        messages: 메시지별 정답
        object_positions: (duration, num_objects, 2) 객체 전역 위치
        tau_ms: 표본 간격
    """
    poses: dict[str, tuple[Pose2D, ...]]
    advertised_poses: dict[str, tuple[Pose2D, ...]]
    clock_offsets: dict[str, int]
    messages: tuple[MessageTruth, ...]
    object_positions: np.ndarray = field(repr=False, compare=False)
    tau_ms: int = 100

    def relative_pose(self, ego: str, ego_frame: int, other: str, other_frame: int) -> RigidTransform2D:
        return relative_pose(self.poses[ego][ego_frame], self.poses[other][other_frame])

    def advertised_relative_pose(self, message: MessageTruth) -> RigidTransform2D:
        """광고 자세만 믿는 기준선의 상대 자세"""
        return relative_pose(
            self.advertised_poses[message.receiver][message.ego_frame],
            self.advertised_poses[message.sender][message.capture_frame],
        )


@dataclass(frozen=True)
class Scenario:
    cfg: ScenarioConfig
    streams: dict[str, tuple[DetectionFrame, ...]]
    odometry: dict[str, OdometryTrack]
    truth: GroundTruth

    @property
    def agent_ids(self) -> list[str]:
        return list(self.streams)


# ----------------------------------------------------------------------
# 생성 단계
# ----------------------------------------------------------------------

def _simulate_objects(cfg: ScenarioConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """구간별 등속 운동 + 월드 경계 반사"""
    half = cfg.world_extent / 2.0
    n = cfg.num_objects
    lo, hi = cfg.object_speed_range

    def draw_velocity(count: int) -> np.ndarray:
        speed = rng.uniform(lo, hi, count)
        heading = rng.uniform(-math.pi, math.pi, count)
        return np.stack([speed * np.cos(heading), speed * np.sin(heading)], axis=1)

    pos = rng.uniform(-half, half, size=(n, 2))
    vel = draw_velocity(n)
    positions = np.zeros((cfg.duration, n, 2))
    yaws = np.zeros((cfg.duration, n))

    for k in range(cfg.duration):
        positions[k] = pos
        yaws[k] = np.arctan2(vel[:, 1], vel[:, 0])

        change = rng.random(n) < cfg.velocity_change_prob
        if change.any():
            vel[change] = draw_velocity(int(change.sum()))
        pos = pos + vel * cfg.dt

        over = pos > half
        pos[over] = 2.0 * half - pos[over]
        vel[over] *= -1.0
        under = pos < -half
        pos[under] = -2.0 * half - pos[under]
        vel[under] *= -1.0

    return positions, yaws


def _simulate_agents(cfg: ScenarioConfig, rng: np.random.Generator) -> dict[str, tuple[Pose2D, ...]]:
    """공통 진행 방향 주변으로 달리는 에이전트들 (시작 위치가 가까워 인지 범위가 겹침)"""
    half = cfg.world_extent / 2.0
    base_heading = rng.uniform(-math.pi, math.pi)
    # 주행 구간의 중점이 월드 중심 근처에 오도록 시작점을 뒤로 당김
    travel = 0.5 * sum(cfg.agent_speed_range) * cfg.dt * max(cfg.duration - 1, 0)
    center = rng.uniform(-half / 4.0, half / 4.0, size=2)
    start = center - 0.5 * travel * np.array([math.cos(base_heading), math.sin(base_heading)])

    poses: dict[str, tuple[Pose2D, ...]] = {}
    for i in range(cfg.num_agents):
        radius = cfg.agent_spacing * math.sqrt(rng.random())
        angle = rng.uniform(-math.pi, math.pi)
        heading = base_heading + rng.uniform(-HEADING_SPREAD, HEADING_SPREAD)
        speed = rng.uniform(*cfg.agent_speed_range)
        yaw_rate = rng.uniform(-cfg.max_yaw_rate, cfg.max_yaw_rate)
        if i == 0:
            radius = 0.0

        x = start[0] + radius * math.cos(angle)
        y = start[1] + radius * math.sin(angle)
        track = []
        for _ in range(cfg.duration):
            track.append(Pose2D(x, y, heading))
            x += speed * math.cos(heading) * cfg.dt
            y += speed * math.sin(heading) * cfg.dt
            heading += yaw_rate * cfg.dt
        poses[agent_id(i)] = tuple(track)
    return poses


def _detect(
    cfg: ScenarioConfig,
    rng: np.random.Generator,
    agent: str,
    pose: Pose2D,
    local_time: int,
    obj_pos: np.ndarray,
    obj_yaw: np.ndarray,
) -> DetectionFrame:
    """인지 반경 안 객체 검출 (미검출, 중심 잡음, 오검출 포함)"""
    if len(obj_pos):
        dist = np.hypot(obj_pos[:, 0] - pose.x, obj_pos[:, 1] - pose.y)
        visible = np.flatnonzero(dist <= cfg.fov_radius)
    else:
        visible = np.zeros(0, dtype=int)
    kept = visible[rng.random(visible.size) >= cfg.miss_rate]

    local = apply_transform(inverse(pose.as_transform()), obj_pos[kept]) if kept.size else np.zeros((0, 2))
    local = local + rng.normal(0.0, cfg.detection_jitter_sigma, size=local.shape)
    scores = rng.uniform(0.5, 1.0, size=kept.size)

    boxes = [
        Box(float(local[i, 0]), float(local[i, 1]), normalize_angle(obj_yaw[obj] - pose.theta), int(obj), float(scores[i]))
        for i, obj in enumerate(kept)
    ]

    for _ in range(int(rng.poisson(cfg.false_positive_rate))):
        r = cfg.fov_radius * math.sqrt(rng.random())
        a = rng.uniform(-math.pi, math.pi)
        yaw = rng.uniform(-math.pi, math.pi)
        boxes.append(Box(r * math.cos(a), r * math.sin(a), yaw, None, float(rng.uniform(0.05, 0.6))))

    # 검출기 출력 순서는 객체 id 와 무관
    order = rng.permutation(len(boxes))
    return DetectionFrame(agent, int(local_time), tuple(boxes[i] for i in order))


def _odometry(cfg: ScenarioConfig, rng: np.random.Generator, agent: str, poses: tuple[Pose2D, ...]) -> OdometryTrack:
    increments = [RigidTransform2D.identity()]
    for k in range(1, len(poses)):
        true = relative_pose(poses[k], poses[k - 1])
        dx, dy = rng.normal(0.0, cfg.odometry_drift_sigma, size=2)
        dtheta = rng.normal(0.0, cfg.odometry_yaw_drift_sigma)
        increments.append(RigidTransform2D(true.rotation + dtheta, (true.tx + dx, true.ty + dy)))
    return OdometryTrack(agent, tuple(increments))


def _latency_steps(latency_ms: float, tau: int) -> int:
    return int(np.rint(latency_ms / tau))


def _messages(
    cfg: ScenarioConfig,
    rng: np.random.Generator,
    poses: dict[str, tuple[Pose2D, ...]],
    offsets: dict[str, int],
) -> tuple[MessageTruth, ...]:
    """협력 에이전트 → 자기 에이전트 메시지 (지연은 τ 배수)"""
    tau = cfg.sample_interval_tau
    first = _latency_steps(cfg.latency_range[1], tau)
    messages = []
    for j in range(1, cfg.num_agents):
        sender = agent_id(j)
        for k in range(first, cfg.duration, cfg.message_stride):
            steps = _latency_steps(rng.uniform(*cfg.latency_range), tau)
            capture = k - steps
            latency = steps * tau
            sender_time = capture * tau + offsets[sender]
            ego_time = k * tau + offsets[EGO_ID]
            advertised = ego_time - sender_time
            messages.append(MessageTruth(
                sender=sender,
                receiver=EGO_ID,
                ego_frame=k,
                capture_frame=capture,
                sender_local_time=sender_time,
                ego_local_time=ego_time,
                true_latency=latency,
                advertised_latency=advertised,
                clock_deviation=latency - advertised,
                relative_pose=relative_pose(poses[EGO_ID][k], poses[sender][capture]),
            ))
    return tuple(messages)


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    """
    시나리오를 생성합니다. 같은 설정(시드 포함)이면 항상 같은 결과를 냅니다.

    Args:
        cfg: 시나리오 설정

    Returns:
        Scenario: 에이전트별 검출 프레임, 오도메트리, 정답

    Raises:
        InvalidConfig: 설정 불변 조건 위반
    """
    cfg.validate()

    obj_pos, obj_yaw = _simulate_objects(cfg, _rng(cfg.seed, STREAM_OBJECTS))
    poses = _simulate_agents(cfg, _rng(cfg.seed, STREAM_AGENTS))

    clock_rng = _rng(cfg.seed, STREAM_CLOCKS)
    lo, hi = cfg.clock_offset_range
    offsets = {a: int(clock_rng.integers(lo, hi + 1)) for a in poses}

    det_rng = _rng(cfg.seed, STREAM_DETECTIONS)
    streams: dict[str, tuple[DetectionFrame, ...]] = {}
    for a, track in poses.items():
        streams[a] = tuple(
            _detect(cfg, det_rng, a, track[k], k * cfg.sample_interval_tau + offsets[a], obj_pos[k], obj_yaw[k])
            for k in range(cfg.duration)
        )

    odom_rng = _rng(cfg.seed, STREAM_ODOMETRY)
    odometry = {a: _odometry(cfg, odom_rng, a, track) for a, track in poses.items()}

    messages = _messages(cfg, _rng(cfg.seed, STREAM_MESSAGES), poses, offsets)
    truth = GroundTruth(poses, dict(poses), offsets, messages, obj_pos, cfg.sample_interval_tau)

    if cfg.pose_attack:
        truth = inject_pose_attack(truth, cfg.attack_magnitude, seed=cfg.seed)
    if cfg.pose_noise_sigma > 0 or cfg.pose_noise_yaw_sigma > 0:
        truth = inject_pose_noise(truth, cfg.pose_noise_sigma, cfg.pose_noise_yaw_sigma, seed=cfg.seed)

    logger.debug(
        f"시나리오 생성: seed={cfg.seed}, 에이전트 {cfg.num_agents}, 객체 {cfg.num_objects}, "
        f"프레임 {cfg.duration}, 메시지 {len(messages)}"
    )
    return Scenario(cfg, streams, odometry, truth)


# ----------------------------------------------------------------------
# 광고 자세 교란
# ----------------------------------------------------------------------

def _collaborators(truth: GroundTruth, agents: Optional[Iterable[str]]) -> list[str]:
    if agents is None:
        return [a for a in truth.poses if a != EGO_ID]
    targets = list(agents)
    unknown = [a for a in targets if a not in truth.poses]
    if unknown:
        raise InvalidConfig(f"알 수 없는 에이전트: {unknown}")
    return targets


def inject_pose_attack(
    truth: GroundTruth,
    magnitude: float,
    seed: int = 0,
    agents: Optional[Iterable[str]] = None,
) -> GroundTruth:
    """
    광고 자세 채널을 악의적으로 변위시킵니다. 정답 자세는 그대로입니다.
    각 자세는 임의 방향으로 [0.5, 1]·magnitude 만큼 이동합니다.

    Args:
        truth: 정답
        magnitude: 최대 변위 (m, > 0)
        seed: 공격 난수 시드
        agents: 공격 대상 (None 이면 자기 에이전트를 제외한 전부)

    Returns:
        GroundTruth: advertised_poses 만 바뀐 사본

    Raises:
        InvalidConfig: magnitude ≤ 0
    """
    if not magnitude > 0:
        raise InvalidConfig(f"공격 크기는 양수여야 합니다: {magnitude}")
    rng = _rng(seed, STREAM_ATTACK)
    advertised = dict(truth.advertised_poses)
    for a in _collaborators(truth, agents):
        shifted = []
        for pose in advertised[a]:
            length = magnitude * rng.uniform(0.5, 1.0)
            angle = rng.uniform(-math.pi, math.pi)
            shifted.append(Pose2D(pose.x + length * math.cos(angle), pose.y + length * math.sin(angle), pose.theta))
        advertised[a] = tuple(shifted)
    return dataclasses.replace(truth, advertised_poses=advertised)


def inject_pose_noise(
    truth: GroundTruth,
    sigma_xy: float,
    sigma_theta: float = 0.0,
    seed: int = 0,
    agents: Optional[Iterable[str]] = None,
) -> GroundTruth:
    """광고 자세 (x, y, θ) 에 N(0, σ) 잡음을 더합니다."""
    if sigma_xy < 0 or sigma_theta < 0:
        raise InvalidConfig("잡음 σ 는 0 이상이어야 합니다")
    rng = _rng(seed, STREAM_POSE_NOISE)
    advertised = dict(truth.advertised_poses)
    for a in _collaborators(truth, agents):
        noisy = []
        for pose in advertised[a]:
            dx, dy = rng.normal(0.0, sigma_xy, size=2)
            noisy.append(Pose2D(pose.x + dx, pose.y + dy, pose.theta + rng.normal(0.0, sigma_theta)))
        advertised[a] = tuple(noisy)
    return dataclasses.replace(truth, advertised_poses=advertised)


# ----------------------------------------------------------------------
# 정답 대응 / 학습 코퍼스
# ----------------------------------------------------------------------

def shared_truth_pairs(graph_a: SalientObjectGraph, graph_b: SalientObjectGraph) -> list[tuple[int, int]]:
    """같은 truth_id 를 가진 노드 쌍 (정답 평가/학습 전용)"""
    index_b = {nd.truth_id: q for q, nd in enumerate(graph_b.nodes) if nd.truth_id is not None}
    return [
        (p, index_b[nd.truth_id])
        for p, nd in enumerate(graph_a.nodes)
        if nd.truth_id is not None and nd.truth_id in index_b
    ]


def make_training_corpus(cfg: ScenarioConfig, num_pairs: int, seed: int = 0) -> list[TrainingPair]:
    """
    같은 시각 두 에이전트 프레임으로 대조 학습 쌍을 만듭니다.

    Args:
        cfg: 기본 시나리오 설정 (seed 는 seed, seed+1, ... 로 바뀜)
        num_pairs: 만들 쌍 개수
        seed: 시작 시드

    Returns:
        list: TrainingPair 목록

    Raises:
        EmptySets: 여러 시나리오를 돌려도 쓸 만한 쌍이 나오지 않음
    """
    rng = _rng(seed, STREAM_CORPUS)
    corpus: list[TrainingPair] = []
    attempts = 0
    scenario_seed = seed
    while len(corpus) < num_pairs:
        scenario = generate_scenario(dataclasses.replace(cfg, seed=scenario_seed, pose_attack=False))
        scenario_seed += 1
        ego = scenario.streams[EGO_ID]
        other = scenario.streams[agent_id(1)]
        for k in range(0, cfg.duration, cfg.message_stride):
            try:
                ga, gb = build_graph(ego[k]), build_graph(other[k])
            except EmptyFrame:
                continue
            pair = build_training_pair(ga, gb, shared_truth_pairs(ga, gb), rng)
            attempts += 1
            if pair is None:
                logger.warning(f"학습 쌍 건너뜀 (seed={scenario.cfg.seed}, k={k}): 공유 객체 부족")
                continue
            corpus.append(pair)
            if len(corpus) >= num_pairs:
                break
        if not corpus and scenario_seed - seed >= 10:
            raise EmptySets("학습 쌍을 만들 수 없습니다 (공유 객체가 없음)")

    logger.info(f"학습 코퍼스 생성: {len(corpus)}쌍 (시도 {attempts}회)")
    return corpus
