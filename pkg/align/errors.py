"""
정렬 엔진 예외 정의
각 예외는 대응되는 내장 예외도 함께 상속하므로 호출자는 어느 쪽으로도 잡을 수 있습니다.
"""


class AlignError(Exception):
    """정렬 엔진 공통 예외"""


class InvalidConfig(AlignError, ValueError):
    """설정값이 불변 조건을 위반함"""


class InvalidPoints(AlignError, ValueError):
    """좌표에 NaN/Inf 가 있거나 형태가 (N, 2) 가 아님"""


class DegenerateInput(AlignError, ValueError):
    """점이 2개 미만이거나 모두 한 점에 겹쳐 회전을 결정할 수 없음"""


class DegenerateGeometry(AlignError, ValueError):
    """강건 추정에 쓸 수 있는 최소 표본이 없음 (일직선/한 점)"""


class EmptyFrame(AlignError, ValueError):
    """박스가 하나도 없는 프레임"""


class BadCorrespondence(AlignError, IndexError):
    """대응 인덱스가 그래프 범위를 벗어남"""


class ShapeMismatch(AlignError, ValueError):
    """파라미터/텐서 형태 불일치"""


class DimensionMismatch(AlignError, ValueError):
    """엣지 특징 차원 불일치"""


class EmptySets(AlignError, ValueError):
    """매칭/비매칭 엣지 집합이 모두 비어 있음"""


class DivergenceDetected(AlignError, RuntimeError):
    """학습 손실이 유한하지 않음"""


class TooLarge(AlignError, ValueError):
    """전수 탐색 오라클의 크기 제한 초과"""


class OutOfOrderFrame(AlignError, ValueError):
    """버퍼에 시간 순서가 맞지 않는 프레임을 넣으려 함"""


class FrameIoError(AlignError, OSError):
    """프레임/정답 파일 입출력 실패"""


class MalformedRecord(AlignError, ValueError):
    """
    JSON-lines 레코드 파싱 실패

    Attributes:
        line_no: 문제가 된 줄 번호 (1부터 시작)
        reason: 실패 사유
    """

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason
