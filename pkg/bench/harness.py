"""
벤치마크 하네스
시드 고정 시나리오 묶음을 생성해 FreeAlign 과 기준선들을 실행하고 정답과 비교합니다.
- run_benchmark: FreeAlign (다중 앵커 / 학습 특징 비교 실험 포함)
- compare_baseline_trusted_pose: 광고 자세를 믿는 기준선 vs FreeAlign (공격)
- sweep_pose_noise: 자세 잡음 크기별 기준선
- run_icp_baseline: ICP 기준선
- run_oracle_check: MASS vs 전수 탐색 오라클
"""
import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from align.checkpoint import Checkpoint
from align.embedding import EmbeddingParams
from align.errors import InvalidConfig
from align.frames import Box, DetectionFrame
from align.geometry import Pose2D, RigidTransform2D, apply_transform, compose, inverse, transform_error
from align.graph import build_graph
from align.mass import MassConfig, mass, oracle_max_common_subgraph
from align.pipeline import AlignmentResult, BufferEntry, GraphBuffer, PipelineConfig, free_align, make_encoder
from align.robust import icp_align
from align.utils import rad_to_deg
from align.workers import run_parallel
from sim.scenario import (
    EGO_ID,
    MessageTruth,
    Scenario,
    ScenarioConfig,
    generate_scenario,
    inject_pose_attack,
    inject_pose_noise,
)

from .metrics import MetricsReport, TrialRecord, aggregate, breakdown_by_sender

logger = logging.getLogger(__name__)

METHOD_FREEALIGN = "freealign"
METHOD_TRUSTED_POSE = "trusted_pose"
METHOD_ICP = "icp"


@dataclass(frozen=True)
class AblationFlags:
    """
    비교 실험 스위치

    Attributes:
        anchor_based: False 이면 앵커 확장 없이 초기 쌍만 사용
        gnn_feature: True 이면 학습된 엣지 특징 사용 (체크포인트 필요)
    """
    anchor_based: bool = True
    gnn_feature: bool = False

    @property
    def label(self) -> str:
        return f"{METHOD_FREEALIGN}[anchor={'on' if self.anchor_based else 'off'},gnn={'on' if self.gnn_feature else 'off'}]"


@dataclass(frozen=True)
class _ScenarioJob:
    index: int
    scenario: ScenarioConfig
    pipeline: PipelineConfig
    method: str
    label: str
    params: Optional[EmbeddingParams] = None
    attack_magnitude: float = 0.0
    attack_agents: Optional[tuple[str, ...]] = None
    pose_noise: float = 0.0
    icp_max_distance: Optional[float] = None


# ----------------------------------------------------------------------
# 시행 채점
# ----------------------------------------------------------------------

def _base_fields(job: _ScenarioJob, message_index: int, msg: MessageTruth, shared_objects: Optional[int] = None) -> dict:
    tau = job.pipeline.tau_ms
    true_index = msg.true_latency // tau
    return dict(
        scenario_index=job.index,
        message_index=message_index,
        seed=job.scenario.seed,
        sender=msg.sender,
        method=job.label,
        true_buffer_index=int(true_index),
        in_buffer_range=bool(true_index <= job.pipeline.buffer_length),
        true_latency_ms=int(msg.true_latency),
        true_clock_dev_ms=int(msg.clock_deviation),
        true_dx=float(msg.relative_pose.tx),
        true_dy=float(msg.relative_pose.ty),
        true_dtheta_deg=rad_to_deg(msg.relative_pose.rotation),
        shared_objects=shared_objects,
    )


def count_shared_objects(scenario: Scenario, msg: MessageTruth) -> int:
    """캡처 시각에 자기/송신 에이전트가 함께 검출한 실제 객체 수 (truth_id 기준, 평가 전용)"""
    def ids(agent: str) -> set:
        return {b.truth_id for b in scenario.streams[agent][msg.capture_frame].boxes if b.truth_id is not None}
    return len(ids(EGO_ID) & ids(msg.sender))


def _pose_fields(estimate: RigidTransform2D, msg: MessageTruth) -> dict:
    planar, angular = transform_error(estimate, msg.relative_pose)
    return dict(
        est_dx=float(estimate.tx),
        est_dy=float(estimate.ty),
        est_dtheta_deg=rad_to_deg(estimate.rotation),
        planar_error_m=float(planar),
        rotation_error_deg=rad_to_deg(angular),
    )


def score_alignment(job: _ScenarioJob, message_index: int, msg: MessageTruth, result: AlignmentResult,
                    shared_objects: Optional[int] = None) -> TrialRecord:
    """FreeAlign 결과 한 건을 정답과 비교합니다."""
    fields = _base_fields(job, message_index, msg, shared_objects)
    fields["status"] = result.status.value
    if result.aligned:
        fields.update(_pose_fields(result.relative_pose, msg))
        fields.update(
            est_buffer_index=result.buffer_index,
            est_latency_ms=result.latency_estimate,
            est_clock_dev_ms=result.clock_deviation_estimate,
            psi=result.subgraph.size,
            epsilon=float(result.confidence),
            ambiguous_time=result.ambiguous_time,
        )
    return TrialRecord(**fields)


def _score_baseline(job: _ScenarioJob, message_index: int, msg: MessageTruth,
                    estimate: Optional[RigidTransform2D], shared_objects: Optional[int] = None) -> TrialRecord:
    fields = _base_fields(job, message_index, msg, shared_objects)
    if estimate is None:
        fields["status"] = "REJECTED"
        return TrialRecord(**fields)
    fields["status"] = "ALIGNED"
    fields.update(_pose_fields(estimate, msg))
    # 기준선은 올바른 시각을 안다고 가정
    fields.update(est_buffer_index=fields["true_buffer_index"], est_latency_ms=fields["true_latency_ms"])
    return TrialRecord(**fields)


# ----------------------------------------------------------------------
# 시나리오 단위 실행
# ----------------------------------------------------------------------

def _prepare_scenario(job: _ScenarioJob) -> Scenario:
    scenario = generate_scenario(job.scenario)
    truth = scenario.truth
    if job.attack_magnitude > 0:
        truth = inject_pose_attack(truth, job.attack_magnitude, seed=job.scenario.seed, agents=job.attack_agents)
    if job.pose_noise > 0:
        truth = inject_pose_noise(truth, job.pose_noise, math.radians(job.pose_noise), seed=job.scenario.seed)
    return dataclasses.replace(scenario, truth=truth)


@dataclass(frozen=True)
class AlignmentOutcome:
    """
    메시지 한 건의 정렬 결과

    Attributes:
        message_index: truth.messages 안의 인덱스
        message: 정답
        result: 정렬 결과
        ego_entry: 결과가 선택한 버퍼 항목 (거부면 None, keep_entries 일 때만)
    """
    message_index: int
    message: MessageTruth
    result: AlignmentResult
    ego_entry: Optional[BufferEntry] = None


def align_messages(
    scenario: Scenario,
    pipeline_cfg: PipelineConfig,
    params: Optional[EmbeddingParams] = None,
    keep_entries: bool = False,
) -> list[AlignmentOutcome]:
    """
    자기 에이전트 프레임을 차례로 버퍼에 넣으면서, 각 시점에 도착한 협력 메시지를 정렬합니다.

    Args:
        scenario: 시나리오 (생성 또는 파일에서 읽은 것)
        pipeline_cfg: 파이프라인 설정
        params: learned 모드 임베딩 파라미터
        keep_entries: 선택된 버퍼 항목을 결과에 보관 (렌더링용)
    """
    buffer = GraphBuffer(pipeline_cfg, make_encoder(pipeline_cfg, params))
    by_frame: dict[int, list[tuple[int, MessageTruth]]] = {}
    for i, msg in enumerate(scenario.truth.messages):
        by_frame.setdefault(msg.ego_frame, []).append((i, msg))

    odometry = scenario.odometry[EGO_ID]
    outcomes = []
    for k, frame in enumerate(scenario.streams[EGO_ID]):
        buffer.push_frame(frame, odometry.increments[k])
        for i, msg in by_frame.get(k, []):
            collab = scenario.streams[msg.sender][msg.capture_frame]
            result = free_align(buffer, collab, msg.advertised_latency, pipeline_cfg)
            entry = None
            if keep_entries and result.aligned:
                entry = buffer.snapshot()[result.buffer_index]
            outcomes.append(AlignmentOutcome(i, msg, result, entry))
    return outcomes


def _freealign_trials(job: _ScenarioJob, scenario: Scenario) -> list[TrialRecord]:
    return [
        score_alignment(job, o.message_index, o.message, o.result, count_shared_objects(scenario, o.message))
        for o in align_messages(scenario, job.pipeline, job.params)
    ]


def score_outcomes(
    outcomes: Sequence[AlignmentOutcome],
    scenario_cfg: ScenarioConfig,
    pipeline_cfg: PipelineConfig,
    label: str = METHOD_FREEALIGN,
    scenario_index: int = 0,
    scenario: Optional[Scenario] = None,
) -> list[TrialRecord]:
    """align_messages 결과를 시행 기록으로 채점합니다. scenario 가 있으면 공유 객체 수도 기록합니다."""
    job = _ScenarioJob(scenario_index, scenario_cfg, pipeline_cfg, METHOD_FREEALIGN, label)
    return [
        score_alignment(job, o.message_index, o.message, o.result,
                        count_shared_objects(scenario, o.message) if scenario is not None else None)
        for o in outcomes
    ]


def _trusted_pose_trials(job: _ScenarioJob, scenario: Scenario) -> list[TrialRecord]:
    return [
        _score_baseline(job, i, msg, scenario.truth.advertised_relative_pose(msg), count_shared_objects(scenario, msg))
        for i, msg in enumerate(scenario.truth.messages)
    ]


def _icp_trials(job: _ScenarioJob, scenario: Scenario) -> list[TrialRecord]:
    ego_stream = scenario.streams[EGO_ID]
    odometry = scenario.odometry[EGO_ID]
    records = []
    for i, msg in enumerate(scenario.truth.messages):
        ego_then = ego_stream[msg.capture_frame].centers()
        collab = scenario.streams[msg.sender][msg.capture_frame].centers()
        fit = icp_align(collab, ego_then, max_distance=job.icp_max_distance)
        estimate = None
        if math.isfinite(fit.rmse):
            estimate = compose(odometry.between(msg.capture_frame, msg.ego_frame), fit.transform)
        records.append(_score_baseline(job, i, msg, estimate, count_shared_objects(scenario, msg)))
    return records


_RUNNERS = {
    METHOD_FREEALIGN: _freealign_trials,
    METHOD_TRUSTED_POSE: _trusted_pose_trials,
    METHOD_ICP: _icp_trials,
}


def run_scenario_trials(job: _ScenarioJob) -> list[TrialRecord]:
    """시나리오 하나를 생성하고 해당 방법의 모든 메시지 시행을 채점합니다."""
    scenario = _prepare_scenario(job)
    return _RUNNERS[job.method](job, scenario)


def _run_jobs(jobs: Sequence[_ScenarioJob], workers: int) -> list[TrialRecord]:
    results = run_parallel(run_scenario_trials, jobs, workers)
    return [record for records in results for record in records]


def _jobs(
    scenario_cfg: ScenarioConfig,
    pipeline_cfg: PipelineConfig,
    method: str,
    label: str,
    trials: int,
    **kwargs,
) -> list[_ScenarioJob]:
    scenario_cfg.validate()
    pipeline_cfg.validate()
    if pipeline_cfg.tau_ms != scenario_cfg.sample_interval_tau:
        raise InvalidConfig("파이프라인 τ 와 시나리오 τ 가 다릅니다")
    base = dataclasses.replace(scenario_cfg, pose_attack=False)
    return [
        _ScenarioJob(i, dataclasses.replace(base, seed=scenario_cfg.seed + i), pipeline_cfg, method, label, **kwargs)
        for i in range(trials)
    ]


# ----------------------------------------------------------------------
# 공개 실험
# ----------------------------------------------------------------------

def ablation_pipeline(
    pipeline_cfg: PipelineConfig,
    flags: AblationFlags,
    checkpoint: Optional[Checkpoint] = None,
) -> tuple[PipelineConfig, Optional[EmbeddingParams]]:
    """
    비교 실험 스위치를 파이프라인 설정에 반영합니다.

    Raises:
        InvalidConfig: 학습 특징을 켰는데 체크포인트가 없음
    """
    mass_cfg = dataclasses.replace(pipeline_cfg.mass, multi_anchor=flags.anchor_based)
    if not flags.gnn_feature:
        return dataclasses.replace(pipeline_cfg, mass=mass_cfg, edge_mode="handcrafted"), None
    if checkpoint is None:
        raise InvalidConfig("학습 엣지 특징 실험에는 체크포인트가 필요합니다")
    mass_cfg = dataclasses.replace(mass_cfg, edge_threshold=checkpoint.edge_threshold)
    return dataclasses.replace(pipeline_cfg, mass=mass_cfg, edge_mode="learned"), checkpoint.params


def run_benchmark(
    scenario_cfg: ScenarioConfig,
    pipeline_cfg: PipelineConfig,
    flags: Optional[AblationFlags] = None,
    trials: int = 20,
    workers: int = 1,
    checkpoint: Optional[Checkpoint] = None,
    count_rejected_as_error: bool = False,
) -> MetricsReport:
    """
    시드 scenario_cfg.seed, seed+1, ... 의 시나리오에서 FreeAlign 을 실행하고 채점합니다.

    Args:
        scenario_cfg: 시나리오 설정 (pose_attack 은 무시, 공격 실험은 compare_baseline_trusted_pose)
        pipeline_cfg: 파이프라인 설정
        flags: 비교 실험 스위치
        trials: 시나리오 수
        workers: 병렬 스레드 수
        checkpoint: 학습 특징 실험용 체크포인트
        count_rejected_as_error: 거부를 오류로 집계

    Returns:
        MetricsReport: 집계 + 시행별 기록
    """
    flags = flags or AblationFlags()
    pipeline, params = ablation_pipeline(pipeline_cfg, flags, checkpoint)
    records = _run_jobs(_jobs(scenario_cfg, pipeline, METHOD_FREEALIGN, flags.label, trials, params=params), workers)
    report = aggregate(records, flags.label, count_rejected_as_error)
    logger.info(
        f"{report.label}: 시행 {report.num_trials}, 오류율 {report.error_rate}, "
        f"거부율 {report.rejection_rate}, 시각 정확도 {report.sync_accuracy_all}"
    )
    return report


@dataclass(frozen=True)
class PairedReport:
    """같은 시드에서 실행한 기준선과 FreeAlign"""
    baseline: MetricsReport
    freealign: MetricsReport

    def to_dict(self) -> dict:
        return {
            "baseline": self.baseline.to_dict(),
            "freealign": self.freealign.to_dict(),
            "baseline_by_sender": {k: v.to_dict() for k, v in breakdown_by_sender(self.baseline).items()},
            "freealign_by_sender": {k: v.to_dict() for k, v in breakdown_by_sender(self.freealign).items()},
        }


def compare_baseline_trusted_pose(
    scenario_cfg: ScenarioConfig,
    pipeline_cfg: PipelineConfig,
    magnitude: float,
    trials: int = 20,
    workers: int = 1,
    attacked_agents: Optional[Sequence[str]] = None,
    count_rejected_as_error: bool = False,
) -> PairedReport:
    """
    광고 자세를 그대로 믿는 기준선과 FreeAlign 을 같은 시드에서 비교합니다.

    Args:
        magnitude: 공격 크기 (m, 0 이면 공격 없음)
        attacked_agents: 공격 대상 (None 이면 자기 에이전트를 제외한 전부)
    """
    if magnitude < 0:
        raise InvalidConfig(f"공격 크기는 0 이상이어야 합니다: {magnitude}")
    agents = tuple(attacked_agents) if attacked_agents is not None else None
    common = dict(attack_magnitude=magnitude, attack_agents=agents)
    label = f"attack={magnitude:g}m"
    baseline_label = f"{METHOD_TRUSTED_POSE}[{label}]"
    freealign_label = f"{METHOD_FREEALIGN}[{label}]"

    baseline_records = _run_jobs(_jobs(scenario_cfg, pipeline_cfg, METHOD_TRUSTED_POSE, baseline_label, trials, **common), workers)
    freealign_records = _run_jobs(_jobs(scenario_cfg, pipeline_cfg, METHOD_FREEALIGN, freealign_label, trials, **common), workers)

    paired = PairedReport(
        aggregate(baseline_records, baseline_label, count_rejected_as_error),
        aggregate(freealign_records, freealign_label, count_rejected_as_error),
    )
    logger.info(
        f"공격 비교 ({label}): 기준선 오류율 {paired.baseline.error_rate}, FreeAlign 오류율 {paired.freealign.error_rate}"
    )
    return paired


def sweep_pose_noise(
    scenario_cfg: ScenarioConfig,
    pipeline_cfg: PipelineConfig,
    sigmas: Sequence[float],
    trials: int = 20,
    workers: int = 1,
) -> dict[str, MetricsReport]:
    """
    광고 자세에 N(0, σ) 잡음 (x, y 는 m, θ 는 도) 을 넣어 기준선을 σ 별로 채점합니다.
    FreeAlign 은 광고 자세를 쓰지 않으므로 한 번만 실행합니다.

    Returns:
        dict: "freealign" 과 "trusted_pose[sigma=σ]" 별 보고서
    """
    reports = {
        METHOD_FREEALIGN: aggregate(
            _run_jobs(_jobs(scenario_cfg, pipeline_cfg, METHOD_FREEALIGN, METHOD_FREEALIGN, trials), workers), METHOD_FREEALIGN
        )
    }
    for sigma in sigmas:
        if sigma < 0:
            raise InvalidConfig(f"잡음 σ 는 0 이상이어야 합니다: {sigma}")
        label = f"{METHOD_TRUSTED_POSE}[sigma={sigma:g}]"
        records = _run_jobs(_jobs(scenario_cfg, pipeline_cfg, METHOD_TRUSTED_POSE, label, trials, pose_noise=float(sigma)), workers)
        reports[label] = aggregate(records, label)
        logger.info(f"{label}: 평균 평면 오차 {reports[label].mean_planar_error_m}, 오류율 {reports[label].error_rate}")
    return reports


def run_icp_baseline(
    scenario_cfg: ScenarioConfig,
    pipeline_cfg: PipelineConfig,
    trials: int = 20,
    workers: int = 1,
    max_distance: Optional[float] = None,
) -> MetricsReport:
    """
    항등 변환에서 시작하는 ICP 기준선 (올바른 시각의 자기 프레임을 제공받음)
    """
    records = _run_jobs(
        _jobs(scenario_cfg, pipeline_cfg, METHOD_ICP, METHOD_ICP, trials, icp_max_distance=max_distance), workers
    )
    report = aggregate(records, METHOD_ICP)
    logger.info(f"ICP 기준선: 오류율 {report.error_rate}, 평균 평면 오차 {report.mean_planar_error_m}")
    return report


# ----------------------------------------------------------------------
# 오라클 비교
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class OracleReport:
    """
    MASS vs 전수 탐색 오라클

    Attributes:
        instances: 인스턴스 수
        size_ok_rate: MASS 크기 ≥ 오라클 크기 − 1 비율
        exact_rate: 대응이 오라클과 정확히 같은 비율
        mean_mass_size / mean_oracle_size: 평균 부분그래프 크기
    """
    instances: int
    size_ok_rate: float
    exact_rate: float
    mean_mass_size: float
    mean_oracle_size: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def make_oracle_instance(rng: np.random.Generator, max_nodes: int = 8, jitter: float = 0.02, extent: float = 40.0):
    """
    공유 객체 4개 이상을 포함한 작은 그래프 쌍을 만듭니다.

    Returns:
        tuple: (graph_a, graph_b)
    """
    shared = int(rng.integers(4, max_nodes + 1))
    extra_a = int(rng.integers(0, max_nodes - shared + 1))
    extra_b = int(rng.integers(0, max_nodes - shared + 1))
    half = extent / 2.0
    world_shared = rng.uniform(-half, half, size=(shared, 2))

    graphs = []
    for agent, extra in (("a", extra_a), ("b", extra_b)):
        pose = Pose2D(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-math.pi, math.pi))
        world = np.vstack([world_shared, rng.uniform(-half, half, size=(extra, 2))])
        local = apply_transform(inverse(pose.as_transform()), world) + rng.normal(0.0, jitter, size=world.shape)
        ids = list(range(shared)) + [None] * extra
        boxes = tuple(Box(float(x), float(y), 0.0, tid) for (x, y), tid in zip(local, ids))
        graphs.append(build_graph(DetectionFrame(agent, 0, boxes)))
    return graphs[0], graphs[1]


def _oracle_instance(args: tuple[int, int, int, MassConfig]) -> tuple[int, int, bool]:
    seed, index, max_nodes, cfg = args
    ga, gb = make_oracle_instance(np.random.default_rng([seed, index]), max_nodes)
    found = mass(ga, None, gb, None, cfg)
    best = oracle_max_common_subgraph(ga, None, gb, None, cfg)
    mass_size = found.size if found is not None else 0
    exact = found is not None and set(found.correspondences) == set(best.correspondences)
    return mass_size, best.size, exact


def run_oracle_check(
    instances: int = 200,
    max_nodes: int = 8,
    seed: int = 0,
    cfg: Optional[MassConfig] = None,
    workers: int = 1,
) -> OracleReport:
    """무작위 소형 인스턴스에서 MASS 와 오라클 결과를 비교합니다."""
    cfg = cfg or MassConfig()
    cfg.validate()
    jobs = [(seed, i, max_nodes, cfg) for i in range(instances)]
    outcomes = run_parallel(_oracle_instance, jobs, workers)

    size_ok = sum(1 for m, o, _ in outcomes if m >= o - 1)
    exact = sum(1 for _, _, e in outcomes if e)
    report = OracleReport(
        instances=instances,
        size_ok_rate=size_ok / instances,
        exact_rate=exact / instances,
        mean_mass_size=float(np.mean([m for m, _, _ in outcomes])),
        mean_oracle_size=float(np.mean([o for _, o, _ in outcomes])),
    )
    logger.info(f"오라클 비교: 크기 조건 {report.size_ok_rate:.3f}, 정확 일치 {report.exact_rate:.3f}")
    return report
