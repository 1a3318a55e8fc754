"""
검출 프레임 데이터 모델
에이전트 간 메시지 교환 단위
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class Box:
    """
    에이전트 자기 좌표계 기준 검출 박스

    truth_id 는 정답 내보내기에만 존재하며 정렬 과정에서는 읽지 않습니다.
    오검출(false positive)은 truth_id 가 None 입니다.
    """
    x: float
    y: float
    yaw: float
    truth_id: Optional[int] = None
    score: float = 1.0


@dataclass(frozen=True)
class DetectionFrame:
    """한 에이전트가 자기 로컬 시계 시각 local_time(ms)에 검출한 박스 목록"""
    agent_id: str
    local_time: int
    boxes: tuple[Box, ...]

    def centers(self) -> np.ndarray:
        """박스 중심 (N, 2)"""
        if not self.boxes:
            return np.zeros((0, 2))
        return np.array([[b.x, b.y] for b in self.boxes], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.boxes)
