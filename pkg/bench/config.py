"""
통합 설정
JSON 파일 하나에 섹션별(scenario, mass, pose, pipeline, embedding, train, bench) 설정을 담고,
`--set section.field=value` 로 덮어씁니다.
"""
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Union

from align.embedding import EmbeddingHyperParams, TrainConfig
from align.errors import FrameIoError, InvalidConfig
from align.mass import MassConfig
from align.pipeline import PipelineConfig
from align.robust import PoseConfig
from sim.scenario import ScenarioConfig

logger = logging.getLogger(__name__)

SECTIONS = ("scenario", "mass", "pose", "pipeline", "embedding", "train", "bench")

# pipeline 섹션에서 직접 지정하지 않는 필드 (별도 섹션)
_PIPELINE_NESTED = ("mass", "pose")


@dataclass(frozen=True)
class BenchConfig:
    """
    벤치마크 설정

    Attributes:
        trials: 시나리오 수
        workers: 시나리오 병렬 처리 스레드 수
        count_rejected_as_error: 거부를 오류로 집계할지 여부
        noise_sweep: 광고 자세 잡음 σ 목록 (m, θ 는 같은 값의 도)
        train_pairs: train-embedding 코퍼스 크기
        models_dir: 체크포인트 디렉토리
        checkpoint: learned 모드에서 쓸 체크포인트 이름
        oracle_instances: oracle-check 인스턴스 수
        oracle_max_nodes: oracle-check 그래프 최대 노드 수
    """
    trials: int = 20
    workers: int = 1
    count_rejected_as_error: bool = False
    noise_sweep: tuple[float, ...] = (0.0, 1.0, 2.0, 4.0, 8.0)
    train_pairs: int = 200
    models_dir: str = "data/models"
    checkpoint: Optional[str] = None
    oracle_instances: int = 200
    oracle_max_nodes: int = 8

    def __post_init__(self):
        if not isinstance(self.noise_sweep, tuple):
            object.__setattr__(self, "noise_sweep", tuple(self.noise_sweep))

    def validate(self):
        if self.trials < 1 or self.workers < 1 or self.train_pairs < 1 or self.oracle_instances < 1:
            raise InvalidConfig("trials, workers, train_pairs, oracle_instances 는 1 이상이어야 합니다")
        if not (4 <= self.oracle_max_nodes <= 9):
            raise InvalidConfig(f"oracle_max_nodes 는 4..9 범위여야 합니다: {self.oracle_max_nodes}")
        if any(s < 0 for s in self.noise_sweep):
            raise InvalidConfig(f"noise_sweep 값은 0 이상이어야 합니다: {self.noise_sweep}")


@dataclass(frozen=True)
class AppConfig:
    """모든 섹션을 모은 설정"""
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    mass: MassConfig = field(default_factory=MassConfig)
    pose: PoseConfig = field(default_factory=PoseConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    embedding: EmbeddingHyperParams = field(default_factory=EmbeddingHyperParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)

    def validate(self):
        try:
            self.scenario.validate()
            self.pipeline.validate()
            self.embedding.validate()
            self.train.validate()
            self.bench.validate()
        except TypeError as e:
            raise InvalidConfig(f"설정 값의 형식이 잘못되었습니다: {e}") from e
        if self.pipeline.tau_ms != self.scenario.sample_interval_tau:
            raise InvalidConfig(
                f"pipeline.tau_ms({self.pipeline.tau_ms}) 와 "
                f"scenario.sample_interval_tau({self.scenario.sample_interval_tau}) 가 다릅니다"
            )

    def to_dict(self) -> dict:
        """섹션별 딕셔너리 (pipeline 의 중첩 mass/pose 는 제외)"""
        pipeline = dataclasses.asdict(self.pipeline)
        for key in _PIPELINE_NESTED:
            pipeline.pop(key)
        return {
            "scenario": dataclasses.asdict(self.scenario),
            "mass": dataclasses.asdict(self.mass),
            "pose": dataclasses.asdict(self.pose),
            "pipeline": pipeline,
            "embedding": dataclasses.asdict(self.embedding),
            "train": dataclasses.asdict(self.train),
            "bench": dataclasses.asdict(self.bench),
        }


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _build(cls, section: str, values: dict):
    unknown = sorted(set(values) - _field_names(cls))
    if unknown:
        raise InvalidConfig(f"[{section}] 알 수 없는 키: {unknown}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise InvalidConfig(f"[{section}] 설정 오류: {e}") from e


def parse_override(text: str) -> tuple[str, str, Any]:
    """
    "section.field=value" 를 분해합니다. 값은 JSON 으로 해석하고 실패하면 문자열로 둡니다.

    Raises:
        InvalidConfig: 형식 오류
    """
    if "=" not in text:
        raise InvalidConfig(f"--set 형식은 section.field=value 입니다: {text}")
    key, raw = text.split("=", 1)
    if key.count(".") != 1:
        raise InvalidConfig(f"--set 키는 section.field 형식이어야 합니다: {key}")
    section, name = key.split(".")
    if section not in SECTIONS:
        raise InvalidConfig(f"알 수 없는 섹션: {section}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return section, name, value


def config_from_dict(data: dict, overrides: Iterable[str] = ()) -> AppConfig:
    """
    섹션 딕셔너리 + 덮어쓰기로 AppConfig 를 만듭니다.
    pipeline.tau_ms 가 없으면 scenario.sample_interval_tau 를 따릅니다.

    Raises:
        InvalidConfig: 알 수 없는 섹션/키, 형식 오류, 불변 조건 위반
    """
    if not isinstance(data, dict):
        raise InvalidConfig("설정 파일의 최상위는 객체여야 합니다")
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise InvalidConfig(f"알 수 없는 섹션: {unknown}")

    sections = {name: dict(data.get(name) or {}) for name in SECTIONS}
    for text in overrides:
        section, name, value = parse_override(text)
        sections[section][name] = value

    scenario = _build(ScenarioConfig, "scenario", sections["scenario"])
    mass = _build(MassConfig, "mass", sections["mass"])
    pose = _build(PoseConfig, "pose", sections["pose"])
    pipeline_values = dict(sections["pipeline"])
    nested = sorted(set(pipeline_values) & set(_PIPELINE_NESTED))
    if nested:
        raise InvalidConfig(f"[pipeline] 알 수 없는 키: {nested}")
    pipeline_values.setdefault("tau_ms", scenario.sample_interval_tau)
    pipeline = _build(PipelineConfig, "pipeline", {**pipeline_values, "mass": mass, "pose": pose})

    cfg = AppConfig(
        scenario=scenario,
        mass=mass,
        pose=pose,
        pipeline=pipeline,
        embedding=_build(EmbeddingHyperParams, "embedding", sections["embedding"]),
        train=_build(TrainConfig, "train", sections["train"]),
        bench=_build(BenchConfig, "bench", sections["bench"]),
    )
    cfg.validate()
    return cfg


def load_config(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()) -> AppConfig:
    """
    JSON 설정 파일을 읽습니다. path 가 None 이면 기본값에서 시작합니다.

    Raises:
        FrameIoError: 파일 없음/읽기 실패
        InvalidConfig: 파싱 실패 또는 설정 오류
    """
    data: dict = {}
    if path is not None:
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except OSError as e:
            raise FrameIoError(f"설정 파일을 읽을 수 없습니다: {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise InvalidConfig(f"설정 파일 JSON 파싱 실패: {path}: {e}") from e
        logger.debug(f"설정 파일 로드: {path}")
    return config_from_dict(data, overrides)

