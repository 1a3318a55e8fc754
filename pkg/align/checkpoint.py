"""
임베딩 체크포인트 관리
metadata.json (하이퍼파라미터, 보정 임계값, 손실 기록) + weights/*.npy
"""
import dataclasses
import json
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import EmbeddingHyperParams, EmbeddingParams
from .errors import FrameIoError, ShapeMismatch

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
METADATA_FILE = "metadata.json"
WEIGHTS_DIR = "weights"


@dataclass
class Checkpoint:
    """
    학습된 엣지 임베딩

    Attributes:
        name: 체크포인트 이름 (디렉토리 이름)
        params: 임베딩 파라미터
        edge_threshold: 학습 특징 공간의 보정된 엣지 임계값
        loss_history: 에폭별 평균 손실
        notes: 메모
    """
    name: str
    params: EmbeddingParams
    edge_threshold: float
    loss_history: list[float] = field(default_factory=list)
    notes: str = ""


class CheckpointManager:
    """체크포인트 저장/로드 관리자"""

    def __init__(self, models_dir: str = "data/models"):
        """
        Args:
            models_dir: 체크포인트 저장 디렉토리
        """
        self.models_dir = Path(models_dir)
        self.models_dir.mkdir(parents=True, exist_ok=True)
        logger.debug(f"체크포인트 디렉토리: {self.models_dir.absolute()}")

    def save(self, checkpoint: Checkpoint) -> bool:
        """
        체크포인트를 저장합니다. 같은 이름이 있으면 덮어씁니다.

        Returns:
            bool: 성공 여부
        """
        try:
            checkpoint.params.validate()
            model_dir = self.models_dir / checkpoint.name
            weights_dir = model_dir / WEIGHTS_DIR
            if weights_dir.exists():
                shutil.rmtree(weights_dir)
            weights_dir.mkdir(parents=True, exist_ok=True)

            meta = {
                "format_version": FORMAT_VERSION,
                "name": checkpoint.name,
                "hyper": dataclasses.asdict(checkpoint.params.hyper),
                "edge_threshold": checkpoint.edge_threshold,
                "loss_history": list(checkpoint.loss_history),
                "notes": checkpoint.notes,
            }
            with open(model_dir / METADATA_FILE, "w", encoding="utf-8") as f:
                json.dump(meta, f, indent=2, ensure_ascii=False)

            for name, arr in checkpoint.params.weights.items():
                np.save(str(weights_dir / f"{name}.npy"), arr)

            logger.info(f"체크포인트 저장 완료: {checkpoint.name} (임계값 {checkpoint.edge_threshold:.4f})")
            return True

        except Exception as e:
            logger.error(f"체크포인트 저장 실패: {e}")
            return False

    def load(self, name: str) -> Checkpoint:
        """
        체크포인트를 읽습니다.

        Raises:
            FrameIoError: 디렉토리/파일 없음 또는 읽기 실패
            ShapeMismatch: 형식 버전이나 가중치 형태가 맞지 않음
        """
        model_dir = self.models_dir / name
        if not (model_dir / METADATA_FILE).exists():
            raise FrameIoError(f"체크포인트가 없습니다: {model_dir}")

        try:
            with open(model_dir / METADATA_FILE, "r", encoding="utf-8") as f:
                meta = json.load(f)
            if meta.get("format_version") != FORMAT_VERSION:
                raise ShapeMismatch(f"지원하지 않는 체크포인트 형식: {meta.get('format_version')}")

            hyper = EmbeddingHyperParams(**meta["hyper"])
            weights = {}
            for path in sorted((model_dir / WEIGHTS_DIR).glob("*.npy")):
                weights[path.stem] = np.load(str(path))
        except (OSError, json.JSONDecodeError) as e:
            raise FrameIoError(f"체크포인트 읽기 실패: {model_dir}: {e}") from e
        except (KeyError, TypeError) as e:
            raise ShapeMismatch(f"체크포인트 메타데이터 오류: {e}") from e

        params = EmbeddingParams(hyper, weights)
        params.validate()
        logger.info(f"체크포인트 로드 완료: {name}")
        return Checkpoint(
            name=meta.get("name", name),
            params=params,
            edge_threshold=float(meta["edge_threshold"]),
            loss_history=[float(v) for v in meta.get("loss_history", [])],
            notes=meta.get("notes", ""),
        )

    def list_models(self) -> list[str]:
        """저장된 체크포인트 이름 목록"""
        try:
            return sorted(
                item.name for item in self.models_dir.iterdir()
                if item.is_dir() and (item / METADATA_FILE).exists()
            )
        except Exception as e:
            logger.error(f"체크포인트 목록 조회 실패: {e}")
            return []
