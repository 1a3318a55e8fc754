"""
시나리오 입출력
- frames.jsonl: 한 줄에 DetectionFrame 하나
- truth.json / odometry.json / config.json: 정답, 오도메트리, 시나리오 설정
"""
import dataclasses
import json
import logging
import math
from pathlib import Path
from typing import Union

import numpy as np

from align.errors import FrameIoError, MalformedRecord
from align.frames import Box, DetectionFrame
from align.geometry import Pose2D, RigidTransform2D

from .scenario import GroundTruth, MessageTruth, OdometryTrack, Scenario, ScenarioConfig

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Streams = dict[str, tuple[DetectionFrame, ...]]

FRAMES_FILE = "frames.jsonl"
TRUTH_FILE = "truth.json"
ODOMETRY_FILE = "odometry.json"
CONFIG_FILE = "config.json"


def _frame_record(frame: DetectionFrame, include_truth: bool) -> dict:
    record = {
        "agent": frame.agent_id,
        "t": frame.local_time,
        "boxes": [[b.x, b.y, b.yaw] for b in frame.boxes],
        "scores": [b.score for b in frame.boxes],
    }
    if include_truth:
        record["truth_ids"] = [b.truth_id for b in frame.boxes]
    return record


def export_frames(streams: Streams, path: PathLike, include_truth: bool = True):
    """
    검출 프레임을 JSON-lines 로 저장합니다.

    Args:
        streams: 에이전트별 프레임 목록
        path: 출력 파일
        include_truth: truth_ids 포함 여부 (정답 내보내기 전용)

    Raises:
        FrameIoError: 파일 쓰기 실패
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for frames in streams.values():
                for frame in frames:
                    f.write(json.dumps(_frame_record(frame, include_truth), ensure_ascii=False))
                    f.write("\n")
    except OSError as e:
        raise FrameIoError(f"프레임 저장 실패: {path}: {e}") from e
    logger.info(f"프레임 저장: {path} ({sum(len(v) for v in streams.values())}개)")


def _parse_frame(line_no: int, text: str) -> DetectionFrame:
    try:
        record = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedRecord(line_no, f"JSON 파싱 실패 ({e.msg})") from e
    if not isinstance(record, dict):
        raise MalformedRecord(line_no, "객체가 아닌 레코드")

    try:
        agent = record["agent"]
        t = record["t"]
        raw_boxes = record["boxes"]
    except KeyError as e:
        raise MalformedRecord(line_no, f"필수 키 누락: {e.args[0]}") from e
    if not isinstance(agent, str) or not isinstance(t, int) or isinstance(t, bool):
        raise MalformedRecord(line_no, "agent 는 문자열, t 는 정수여야 합니다")
    if not isinstance(raw_boxes, list):
        raise MalformedRecord(line_no, "boxes 는 목록이어야 합니다")

    truth_ids = record.get("truth_ids", [None] * len(raw_boxes))
    scores = record.get("scores", [1.0] * len(raw_boxes))
    if len(truth_ids) != len(raw_boxes) or len(scores) != len(raw_boxes):
        raise MalformedRecord(line_no, "truth_ids/scores 길이가 boxes 와 다릅니다")

    boxes = []
    for i, raw in enumerate(raw_boxes):
        if not isinstance(raw, list) or len(raw) != 3:
            raise MalformedRecord(line_no, f"box {i}: [x, y, yaw] 형태가 아닙니다")
        try:
            x, y, yaw = (float(v) for v in raw)
            score = float(scores[i])
        except (TypeError, ValueError) as e:
            raise MalformedRecord(line_no, f"box {i}: 숫자가 아닌 값") from e
        if not all(math.isfinite(v) for v in (x, y, yaw, score)):
            raise MalformedRecord(line_no, f"box {i}: 유한하지 않은 값")
        tid = truth_ids[i]
        if tid is not None and (not isinstance(tid, int) or isinstance(tid, bool)):
            raise MalformedRecord(line_no, f"box {i}: truth_id 는 정수 또는 null 이어야 합니다")
        boxes.append(Box(x, y, yaw, tid, score))
    return DetectionFrame(agent, t, tuple(boxes))


def import_frames(path: PathLike) -> Streams:
    """
    JSON-lines 파일에서 프레임을 읽습니다.

    Returns:
        dict: 에이전트별 프레임 (파일에 나온 순서)

    Raises:
        FrameIoError: 파일 읽기 실패
        MalformedRecord: 파싱 실패 (줄 번호 포함)
    """
    path = Path(path)
    streams: dict[str, list[DetectionFrame]] = {}
    try:
        with open(path, "rb") as f:
            for line_no, raw in enumerate(f, start=1):
                try:
                    line = raw.decode("utf-8")
                except UnicodeDecodeError as e:
                    raise MalformedRecord(line_no, f"UTF-8 디코딩 실패: {e}") from e
                if not line.strip():
                    continue
                frame = _parse_frame(line_no, line)
                streams.setdefault(frame.agent_id, []).append(frame)
    except OSError as e:
        raise FrameIoError(f"프레임 읽기 실패: {path}: {e}") from e
    return {a: tuple(frames) for a, frames in streams.items()}


# ----------------------------------------------------------------------
# 정답 / 오도메트리 / 설정
# ----------------------------------------------------------------------

def _poses_to_json(poses: dict[str, tuple[Pose2D, ...]]) -> dict:
    return {a: [[p.x, p.y, p.theta] for p in track] for a, track in poses.items()}


def _poses_from_json(data: dict) -> dict[str, tuple[Pose2D, ...]]:
    return {a: tuple(Pose2D(*values) for values in track) for a, track in data.items()}


def truth_to_dict(truth: GroundTruth) -> dict:
    return {
        "tau_ms": truth.tau_ms,
        "clock_offsets": dict(truth.clock_offsets),
        "poses": _poses_to_json(truth.poses),
        "advertised_poses": _poses_to_json(truth.advertised_poses),
        "messages": [
            {**dataclasses.asdict(m), "relative_pose": m.relative_pose.to_list()}
            for m in truth.messages
        ],
        "object_positions": truth.object_positions.tolist(),
    }


def truth_from_dict(data: dict) -> GroundTruth:
    messages = tuple(
        MessageTruth(**{**m, "relative_pose": RigidTransform2D.from_list(m["relative_pose"])})
        for m in data["messages"]
    )
    positions = np.asarray(data.get("object_positions", []), dtype=np.float64)
    return GroundTruth(
        poses=_poses_from_json(data["poses"]),
        advertised_poses=_poses_from_json(data["advertised_poses"]),
        clock_offsets={a: int(c) for a, c in data["clock_offsets"].items()},
        messages=messages,
        object_positions=positions,
        tau_ms=int(data["tau_ms"]),
    )


def _write_json(path: Path, data: dict):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, ensure_ascii=False)
    except OSError as e:
        raise FrameIoError(f"저장 실패: {path}: {e}") from e


def _read_json(path: Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise FrameIoError(f"읽기 실패: {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise MalformedRecord(e.lineno, f"{path.name}: JSON 파싱 실패 ({e.msg})") from e


def export_truth(truth: GroundTruth, path: PathLike):
    _write_json(Path(path), truth_to_dict(truth))


def import_truth(path: PathLike) -> GroundTruth:
    data = _read_json(Path(path))
    try:
        return truth_from_dict(data)
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedRecord(1, f"정답 파일 형식 오류: {e}") from e


def export_odometry(odometry: dict[str, OdometryTrack], path: PathLike):
    _write_json(Path(path), {a: [t.to_list() for t in track.increments] for a, track in odometry.items()})


def import_odometry(path: PathLike) -> dict[str, OdometryTrack]:
    data = _read_json(Path(path))
    try:
        return {
            a: OdometryTrack(a, tuple(RigidTransform2D.from_list(v) for v in values))
            for a, values in data.items()
        }
    except (TypeError, ValueError) as e:
        raise MalformedRecord(1, f"오도메트리 파일 형식 오류: {e}") from e


def save_scenario(scenario: Scenario, out_dir: PathLike) -> Path:
    """
    시나리오 전체를 디렉토리에 저장합니다.

    Returns:
        Path: 출력 디렉토리
    """
    out_dir = Path(out_dir)
    export_frames(scenario.streams, out_dir / FRAMES_FILE)
    export_truth(scenario.truth, out_dir / TRUTH_FILE)
    export_odometry(scenario.odometry, out_dir / ODOMETRY_FILE)
    _write_json(out_dir / CONFIG_FILE, dataclasses.asdict(scenario.cfg))
    logger.info(f"시나리오 저장 완료: {out_dir}")
    return out_dir


def load_scenario(in_dir: PathLike) -> Scenario:
    """
    save_scenario 로 저장한 디렉토리를 읽습니다.

    Raises:
        FrameIoError: 파일 없음/읽기 실패
        MalformedRecord: 형식 오류
    """
    in_dir = Path(in_dir)
    cfg_data = _read_json(in_dir / CONFIG_FILE)
    try:
        cfg = ScenarioConfig(**cfg_data)
    except TypeError as e:
        raise MalformedRecord(1, f"{CONFIG_FILE}: {e}") from e
    return Scenario(
        cfg=cfg,
        streams=import_frames(in_dir / FRAMES_FILE),
        odometry=import_odometry(in_dir / ODOMETRY_FILE),
        truth=import_truth(in_dir / TRUTH_FILE),
    )
