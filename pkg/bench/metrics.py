"""
벤치마크 지표
시행(trial) 단위 기록과 집계, CSV/JSON 출력
모든 집계값은 trials.csv 만으로 다시 계산할 수 있습니다.
"""
import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from align.errors import FrameIoError, MalformedRecord
from align.utils import POSE_ERROR_THRESHOLD_M

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrialRecord:
    """
    (시나리오, 메시지) 한 건의 정답과 추정

    각도는 도, 거리는 m, 시간은 ms 입니다. 거부된 시행의 추정 필드는 None 입니다.
    shared_objects 는 캡처 시각에 두 에이전트가 함께 검출한 실제 객체 수입니다.
    """
    scenario_index: int
    message_index: int
    seed: int
    sender: str
    method: str
    status: str
    true_buffer_index: int
    in_buffer_range: bool
    true_latency_ms: int
    true_clock_dev_ms: int
    true_dx: float
    true_dy: float
    true_dtheta_deg: float
    est_buffer_index: Optional[int] = None
    est_latency_ms: Optional[int] = None
    est_clock_dev_ms: Optional[int] = None
    est_dx: Optional[float] = None
    est_dy: Optional[float] = None
    est_dtheta_deg: Optional[float] = None
    planar_error_m: Optional[float] = None
    rotation_error_deg: Optional[float] = None
    psi: Optional[int] = None
    epsilon: Optional[float] = None
    ambiguous_time: bool = False
    shared_objects: Optional[int] = None

    @property
    def aligned(self) -> bool:
        return self.status == "ALIGNED"

    @property
    def time_correct(self) -> bool:
        """범위 안이면 정확한 버퍼 시각, 범위 밖이면 거부가 정답"""
        if not self.in_buffer_range:
            return not self.aligned
        return self.aligned and self.est_buffer_index == self.true_buffer_index

    @property
    def pose_error_event(self) -> bool:
        return self.aligned and self.planar_error_m is not None and self.planar_error_m > POSE_ERROR_THRESHOLD_M


TRIAL_FIELDS = [f.name for f in dataclasses.fields(TrialRecord)]


@dataclass(frozen=True)
class MetricsReport:
    """
    집계 지표

    Attributes:
        label: 실험 이름
        num_trials / num_aligned / num_rejected: 시행 수
        rejection_rate: 거부 비율
        mean_rotation_error_deg: 정렬 성공 시행의 평균 |δθ|
        mean_planar_error_m: 정렬 성공 시행의 평균 √(δx²+δy²)
        error_rate: 평면 오차 > 3 m 비율 (count_rejected_as_error 이면 거부도 오류)
        sync_accuracy_all: 전체 시행 중 시각 판정이 맞은 비율
        sync_accuracy_aligned: 정렬 성공 시행 중 시각 판정이 맞은 비율
        mean_abs_dt_error_ms: 추정 δt 와 실제 δt 차이의 평균 절댓값
        records: 시행별 기록
    """
    label: str
    num_trials: int
    num_aligned: int
    num_rejected: int
    rejection_rate: Optional[float]
    mean_rotation_error_deg: Optional[float]
    mean_planar_error_m: Optional[float]
    error_rate: Optional[float]
    sync_accuracy_all: Optional[float]
    sync_accuracy_aligned: Optional[float]
    mean_abs_dt_error_ms: Optional[float]
    count_rejected_as_error: bool = False
    records: tuple[TrialRecord, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data.pop("records")
        return data


def _mean(values: Sequence[float]) -> Optional[float]:
    return float(math.fsum(values) / len(values)) if values else None


def _rate(count: int, total: int) -> Optional[float]:
    return count / total if total else None


def aggregate(
    records: Iterable[TrialRecord],
    label: str = "",
    count_rejected_as_error: bool = False,
) -> MetricsReport:
    """
    시행 기록을 집계합니다.

    Args:
        records: 시행 기록
        label: 실험 이름
        count_rejected_as_error: 거부를 오류 사례로 셀지 여부 (기본은 따로 보고)
    """
    records = sorted(records, key=lambda r: (r.scenario_index, r.message_index))
    aligned = [r for r in records if r.aligned]
    rejected = len(records) - len(aligned)

    errors = sum(1 for r in aligned if r.pose_error_event)
    if count_rejected_as_error:
        error_rate = _rate(errors + rejected, len(records))
    else:
        error_rate = _rate(errors, len(aligned))

    dt_errors = [
        abs(r.est_clock_dev_ms - r.true_clock_dev_ms)
        for r in aligned
        if r.est_clock_dev_ms is not None and r.in_buffer_range
    ]
    return MetricsReport(
        label=label,
        num_trials=len(records),
        num_aligned=len(aligned),
        num_rejected=rejected,
        rejection_rate=_rate(rejected, len(records)),
        mean_rotation_error_deg=_mean([r.rotation_error_deg for r in aligned if r.rotation_error_deg is not None]),
        mean_planar_error_m=_mean([r.planar_error_m for r in aligned if r.planar_error_m is not None]),
        error_rate=error_rate,
        sync_accuracy_all=_rate(sum(1 for r in records if r.time_correct), len(records)),
        sync_accuracy_aligned=_rate(sum(1 for r in aligned if r.time_correct), len(aligned)),
        mean_abs_dt_error_ms=_mean(dt_errors),
        count_rejected_as_error=count_rejected_as_error,
        records=tuple(records),
    )


def breakdown_by_sender(report: MetricsReport) -> dict[str, MetricsReport]:
    """송신 에이전트별 집계"""
    senders = sorted({r.sender for r in report.records})
    return {
        s: aggregate(
            [r for r in report.records if r.sender == s],
            f"{report.label}/{s}",
            report.count_rejected_as_error,
        )
        for s in senders
    }


# ----------------------------------------------------------------------
# 파일 출력
# ----------------------------------------------------------------------

def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_trials_csv(records: Iterable[TrialRecord], path) -> Path:
    """
    시행 기록을 CSV 로 저장합니다 ((scenario_index, message_index) 순).

    Raises:
        FrameIoError: 파일 쓰기 실패
    """
    path = Path(path)
    rows = sorted(records, key=lambda r: (r.scenario_index, r.message_index, r.method))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(TRIAL_FIELDS)
            for r in rows:
                writer.writerow([_format(getattr(r, name)) for name in TRIAL_FIELDS])
    except OSError as e:
        raise FrameIoError(f"CSV 저장 실패: {path}: {e}") from e
    return path


_INT_FIELDS = {
    "scenario_index", "message_index", "seed", "true_buffer_index", "true_latency_ms", "true_clock_dev_ms",
    "est_buffer_index", "est_latency_ms", "est_clock_dev_ms", "psi", "shared_objects",
}
_FLOAT_FIELDS = {
    "true_dx", "true_dy", "true_dtheta_deg", "est_dx", "est_dy", "est_dtheta_deg",
    "planar_error_m", "rotation_error_deg", "epsilon",
}
_BOOL_FIELDS = {"in_buffer_range", "ambiguous_time"}


def _parse(name: str, text: str):
    if name in _BOOL_FIELDS:
        return text == "true"
    if text == "":
        return None
    if name in _INT_FIELDS:
        return int(text)
    if name in _FLOAT_FIELDS:
        return float(text)
    return text


def read_trials_csv(path) -> list[TrialRecord]:
    """
    write_trials_csv 로 저장한 파일을 읽습니다.

    Raises:
        FrameIoError: 파일 읽기 실패
        MalformedRecord: 헤더/값 형식 오류
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != TRIAL_FIELDS:
                raise MalformedRecord(1, "trials.csv 헤더가 다릅니다")
            records = []
            for line_no, row in enumerate(reader, start=2):
                try:
                    records.append(TrialRecord(**{k: _parse(k, v) for k, v in row.items()}))
                except (TypeError, ValueError) as e:
                    raise MalformedRecord(line_no, str(e)) from e
            return records
    except OSError as e:
        raise FrameIoError(f"CSV 읽기 실패: {path}: {e}") from e


def write_report_json(reports: dict, path) -> Path:
    """
    여러 보고서를 이름별로 묶어 JSON 으로 저장합니다.

    Args:
        reports: 이름 → to_dict() 가 있는 보고서 또는 JSON 직렬화 가능한 값
    """
    path = Path(path)
    data = {k: (v.to_dict() if hasattr(v, "to_dict") else v) for k, v in reports.items()}
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, ensure_ascii=False, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise FrameIoError(f"보고서 저장 실패: {path}: {e}") from e
    logger.info(f"보고서 저장: {path}")
    return path


def write_loss_csv(history: Sequence[float], path) -> Path:
    """에폭별 평균 손실 (epoch, loss)"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["epoch", "loss"])
            for epoch, loss in enumerate(history):
                writer.writerow([epoch, repr(float(loss))])
    except OSError as e:
        raise FrameIoError(f"손실 기록 저장 실패: {path}: {e}") from e
    return path
