"""
작업 스레드 풀
큐에서 (인덱스, 항목)을 꺼내 처리하고, 결과는 인덱스 순서로 모아 결정성을 유지합니다.
"""
import logging
from queue import Queue, Empty
from threading import Thread, Event, Lock
from typing import Any, Callable, Optional, Sequence

logger = logging.getLogger(__name__)

# 작업 종료 신호
_SENTINEL = None


class TaskWorker(Thread):
    """
    작업 처리 전용 스레드
    종료 신호를 받거나 stop_event 가 설정되면 멈춥니다.
    """

    def __init__(
        self,
        func: Callable[[Any], Any],
        task_queue: Queue,
        results: dict,
        results_lock: Lock,
        stop_event: Event,
        name: str = "",
    ):
        super().__init__(daemon=True, name=name or None)
        self.func = func
        self.task_queue = task_queue
        self.results = results
        self.results_lock = results_lock
        self.stop_event = stop_event
        self.processed = 0

    def run(self):
        """스레드 메인 루프"""
        logger.debug(f"작업 스레드 시작 ({self.name})")

        while not self.stop_event.is_set():
            try:
                task = self.task_queue.get(timeout=0.1)
            except Empty:
                continue

            if task is _SENTINEL:
                break

            index, item = task
            try:
                outcome = (True, self.func(item))
            except Exception as e:
                # 예외는 호출 스레드에서 다시 발생시킴
                outcome = (False, e)
                self.stop_event.set()

            with self.results_lock:
                self.results[index] = outcome
            self.processed += 1

        logger.debug(f"작업 스레드 종료 ({self.name}, 처리 {self.processed}건)")


def run_parallel(
    func: Callable[[Any], Any],
    items: Sequence[Any],
    num_workers: int = 1,
    stop_event: Optional[Event] = None,
) -> list[Any]:
    """
    items 각각에 func 를 적용하고 입력 순서대로 결과를 돌려줍니다.

    Args:
        func: 항목 하나를 처리하는 함수
        items: 입력 목록
        num_workers: 스레드 수 (1 이하이면 현재 스레드에서 순차 처리)
        stop_event: 외부 중단 신호

    Returns:
        list: items 와 같은 순서의 결과

    Raises:
        Exception: 처리 중 발생한 첫 번째(인덱스 기준) 예외
    """
    items = list(items)
    if num_workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    stop_event = stop_event or Event()
    task_queue: Queue = Queue()
    results: dict[int, tuple[bool, Any]] = {}
    lock = Lock()

    for index, item in enumerate(items):
        task_queue.put((index, item))

    worker_count = min(num_workers, len(items))
    for _ in range(worker_count):
        task_queue.put(_SENTINEL)

    workers = [
        TaskWorker(func, task_queue, results, lock, stop_event, name=f"worker-{i}")
        for i in range(worker_count)
    ]
    for w in workers:
        w.start()
    for w in workers:
        w.join()

    for index in range(len(items)):
        if index not in results:
            continue
        ok, value = results[index]
        if not ok:
            raise value
    missing = [i for i in range(len(items)) if i not in results]
    if missing:
        raise RuntimeError(f"작업이 중단되어 {len(missing)}건이 처리되지 않았습니다")
    return [results[i][1] for i in range(len(items))]
