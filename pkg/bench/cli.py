"""
명령줄 인터페이스
simulate / train-embedding / align / bench / oracle-check

종료 코드: 0 성공, 1 설정/인자 오류, 2 입출력 오류
"""
import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from align.checkpoint import Checkpoint, CheckpointManager
from align.embedding import EmbeddingParams, calibrate_threshold, train
from align.errors import AlignError, FrameIoError, InvalidConfig, MalformedRecord, ShapeMismatch
from align.pipeline import PipelineConfig, make_encoder
from align.utils import render_alignment
from sim.frames_io import load_scenario, save_scenario
from sim.scenario import Scenario, generate_scenario, make_training_corpus

from .config import AppConfig, load_config
from .harness import (
    METHOD_FREEALIGN,
    METHOD_ICP,
    AblationFlags,
    ablation_pipeline,
    align_messages,
    compare_baseline_trusted_pose,
    run_benchmark,
    run_icp_baseline,
    run_oracle_check,
    score_outcomes,
    sweep_pose_noise,
)
from .metrics import aggregate, write_loss_csv, write_report_json, write_trials_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2

DEFAULT_MODEL_NAME = "edge_gnn"

# 보정용 코퍼스는 학습 코퍼스와 겹치지 않는 시드에서 만듦
CALIBRATION_SEED_OFFSET = 100000

REPORT_FILE = "report.json"
TRIALS_FILE = "trials.csv"
LOSS_FILE = "loss.csv"
ALIGNMENTS_FILE = "alignments.json"


class UsageError(Exception):
    """잘못된 명령줄 인자 (사용법 포함)"""


class _ArgumentParser(argparse.ArgumentParser):
    """인자 오류 시 종료하지 않고 UsageError 를 던지는 파서"""

    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _common_parser() -> argparse.ArgumentParser:
    common = _ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON 설정 파일 (없으면 기본값)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.FIELD=VALUE",
                        help="설정 덮어쓰기 (여러 번 사용 가능)")
    common.add_argument("--seed", type=int, help="scenario.seed 덮어쓰기")
    common.add_argument("--out", help="출력 디렉토리")
    common.add_argument("--verbose", action="store_true", help="DEBUG 로그 출력")
    return common


def build_parser() -> argparse.ArgumentParser:
    """서브커맨드 파서를 만듭니다."""
    parser = _ArgumentParser(prog="freealign", description="FreeAlign 시공간 정렬 실험 도구")
    common = _common_parser()
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="시나리오 생성 후 파일로 저장")
    p.set_defaults(handler=cmd_simulate, default_out="results/scenario")

    p = sub.add_parser("train-embedding", parents=[common], help="엣지 임베딩 학습")
    p.add_argument("--pairs", type=int, help="학습 쌍 개수 (bench.train_pairs)")
    p.add_argument("--epochs", type=int, help="에폭 수 (train.epochs)")
    p.add_argument("--name", default=DEFAULT_MODEL_NAME, help="체크포인트 이름")
    p.add_argument("--models-dir", help="체크포인트 디렉토리 (bench.models_dir)")
    p.set_defaults(handler=cmd_train_embedding, default_out="results/train")

    p = sub.add_parser("align", parents=[common], help="시나리오 한 개의 모든 메시지 정렬")
    p.add_argument("--scenario", help="simulate 로 저장한 디렉토리 (없으면 설정으로 생성)")
    p.add_argument("--checkpoint", help="learned 모드 체크포인트 이름")
    p.add_argument("--models-dir", help="체크포인트 디렉토리 (bench.models_dir)")
    p.add_argument("--render", metavar="PNG", help="첫 번째 정렬 성공 메시지를 조감도로 저장")
    p.set_defaults(handler=cmd_align, default_out="results/align")

    p = sub.add_parser("bench", parents=[common], help="시드 고정 벤치마크")
    p.add_argument("--trials", type=int, help="시나리오 수 (bench.trials)")
    p.add_argument("--workers", type=int, help="병렬 스레드 수 (bench.workers)")
    p.add_argument("--method", choices=(METHOD_FREEALIGN, METHOD_ICP), default=METHOD_FREEALIGN)
    p.add_argument("--no-anchor", action="store_true", help="다중 앵커 확장 끄기")
    p.add_argument("--gnn", action="store_true", help="학습된 엣지 특징 사용 (--checkpoint 필요)")
    p.add_argument("--checkpoint", help="learned 모드 체크포인트 이름")
    p.add_argument("--models-dir", help="체크포인트 디렉토리 (bench.models_dir)")
    p.add_argument("--ablation", action="store_true", help="앵커/학습 특징 조합 비교")
    p.add_argument("--attack", type=float, metavar="MAG", help="광고 자세 공격 크기 (m), 신뢰 기준선과 비교")
    p.add_argument("--attack-agents", help="공격 대상 에이전트 (쉼표 구분)")
    p.add_argument("--noise-sweep", nargs="?", const="", metavar="SIGMAS",
                   help="광고 자세 잡음 σ 목록 (쉼표 구분, 값이 없으면 bench.noise_sweep)")
    p.add_argument("--count-rejected", action="store_true", help="거부를 오류로 집계")
    p.set_defaults(handler=cmd_bench, default_out="results/bench")

    p = sub.add_parser("oracle-check", parents=[common], help="MASS 와 전수 탐색 비교")
    p.add_argument("--instances", type=int, help="인스턴스 수 (bench.oracle_instances)")
    p.add_argument("--max-nodes", type=int, help="그래프 최대 노드 수 (bench.oracle_max_nodes)")
    p.add_argument("--workers", type=int, help="병렬 스레드 수 (bench.workers)")
    p.set_defaults(handler=cmd_oracle_check, default_out="results/oracle")

    return parser


# ----------------------------------------------------------------------
# 공통
# ----------------------------------------------------------------------

def _flag_overrides(args: argparse.Namespace) -> list[str]:
    """전용 플래그를 --set 형식으로 바꿉니다. --set 보다 나중에 적용됩니다."""
    overrides = []
    if args.seed is not None:
        overrides.append(f"scenario.seed={args.seed}")
    mapping = {
        "trials": "bench.trials",
        "workers": "bench.workers",
        "pairs": "bench.train_pairs",
        "epochs": "train.epochs",
        "instances": "bench.oracle_instances",
        "max_nodes": "bench.oracle_max_nodes",
    }
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    if getattr(args, "count_rejected", False):
        overrides.append("bench.count_rejected_as_error=true")
    return overrides


def _load(args: argparse.Namespace) -> AppConfig:
    return load_config(args.config, list(args.overrides) + _flag_overrides(args))


def _out_dir(args: argparse.Namespace) -> Path:
    return Path(args.out or args.default_out)


def _models_dir(args: argparse.Namespace, cfg: AppConfig) -> str:
    return getattr(args, "models_dir", None) or cfg.bench.models_dir


def _load_checkpoint(args: argparse.Namespace, cfg: AppConfig) -> Optional[Checkpoint]:
    name = getattr(args, "checkpoint", None) or cfg.bench.checkpoint
    if name is None:
        return None
    manager = CheckpointManager(_models_dir(args, cfg))
    available = manager.list_models()
    if name not in available:
        raise FrameIoError(f"체크포인트가 없습니다: {name} (사용 가능: {available or '없음'})")
    return manager.load(name)


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as e:
        raise InvalidConfig(f"숫자 목록 형식 오류: {text}") from e


# ----------------------------------------------------------------------
# 서브커맨드
# ----------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    scenario = generate_scenario(cfg.scenario)
    out = save_scenario(scenario, _out_dir(args))
    logger.info(f"시나리오 저장: {out} (메시지 {len(scenario.truth.messages)}건)")
    return EXIT_OK


def cmd_train_embedding(args: argparse.Namespace) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    pairs = cfg.bench.train_pairs

    corpus = make_training_corpus(cfg.scenario, pairs, seed=cfg.scenario.seed)
    calibration = make_training_corpus(
        cfg.scenario, max(pairs // 4, 10), seed=cfg.scenario.seed + CALIBRATION_SEED_OFFSET
    )
    logger.info(f"학습 코퍼스 {len(corpus)}쌍, 보정 코퍼스 {len(calibration)}쌍")

    params, history = train(corpus, cfg.train, hyper=cfg.embedding)
    threshold = calibrate_threshold(params, calibration)

    checkpoint = Checkpoint(
        name=args.name,
        params=params,
        edge_threshold=threshold,
        loss_history=history,
        notes=f"pairs={len(corpus)}, seed={cfg.scenario.seed}",
    )
    manager = CheckpointManager(_models_dir(args, cfg))
    if not manager.save(checkpoint):
        raise FrameIoError(f"체크포인트 저장 실패: {manager.models_dir / args.name}")

    write_loss_csv(history, out / LOSS_FILE)
    write_report_json(
        {
            "train": {
                "checkpoint": args.name,
                "pairs": len(corpus),
                "calibration_pairs": len(calibration),
                "edge_threshold": threshold,
                "initial_loss": history[0] if history else None,
                "final_loss": history[-1] if history else None,
            },
            "config": cfg.to_dict(),
        },
        out / REPORT_FILE,
    )
    return EXIT_OK


def _align_pipeline(cfg: AppConfig, checkpoint: Optional[Checkpoint]) -> tuple[PipelineConfig, Optional[EmbeddingParams]]:
    if checkpoint is None:
        if cfg.pipeline.edge_mode == "learned":
            raise InvalidConfig("learned 모드에는 --checkpoint 또는 bench.checkpoint 가 필요합니다")
        return cfg.pipeline, None
    flags = AblationFlags(anchor_based=cfg.pipeline.mass.multi_anchor, gnn_feature=True)
    return ablation_pipeline(cfg.pipeline, flags, checkpoint)


def _read_scenario(path: str) -> Scenario:
    try:
        return load_scenario(path)
    except MalformedRecord as e:
        raise FrameIoError(f"{path}: {e}") from e


def cmd_align(args: argparse.Namespace) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    scenario = _read_scenario(args.scenario) if args.scenario else generate_scenario(cfg.scenario)
    if scenario.cfg.sample_interval_tau != cfg.pipeline.tau_ms:
        raise InvalidConfig(
            f"시나리오 τ({scenario.cfg.sample_interval_tau}) 와 pipeline.tau_ms({cfg.pipeline.tau_ms}) 가 다릅니다"
        )

    pipeline, params = _align_pipeline(cfg, _load_checkpoint(args, cfg))
    outcomes = align_messages(scenario, pipeline, params, keep_entries=args.render is not None)

    alignments = [
        {
            "message_index": o.message_index,
            "sender": o.message.sender,
            "sender_local_time": o.message.sender_local_time,
            "ego_local_time": o.message.ego_local_time,
            "result": o.result.to_dict(),
        }
        for o in outcomes
    ]
    write_report_json({"alignments": alignments}, out / ALIGNMENTS_FILE)

    label = f"{METHOD_FREEALIGN}[{pipeline.edge_mode}]"
    records = score_outcomes(outcomes, scenario.cfg, pipeline, label, scenario=scenario)
    write_trials_csv(records, out / TRIALS_FILE)
    write_report_json({label: aggregate(records, label, cfg.bench.count_rejected_as_error)}, out / REPORT_FILE)

    if args.render:
        shown = next((o for o in outcomes if o.result.aligned), None)
        if shown is None:
            logger.warning("정렬에 성공한 메시지가 없어 조감도를 그리지 않습니다")
        else:
            collab = scenario.streams[shown.message.sender][shown.message.capture_frame]
            collab_graph = make_encoder(pipeline, params).encode(collab)
            render_alignment(
                shown.ego_entry.graph, collab_graph, shown.result, args.render,
                ego_to_current=shown.ego_entry.to_current,
            )

    aligned = sum(1 for o in outcomes if o.result.aligned)
    logger.info(f"정렬 완료: 메시지 {len(outcomes)}건 중 {aligned}건 성공")
    return EXIT_OK


def _bench_reports(args: argparse.Namespace, cfg: AppConfig) -> dict:
    bench = cfg.bench
    scenario_cfg = cfg.scenario
    count_rejected = bench.count_rejected_as_error

    if args.method == METHOD_ICP:
        return {METHOD_ICP: run_icp_baseline(scenario_cfg, cfg.pipeline, bench.trials, bench.workers)}

    if args.noise_sweep is not None:
        sigmas = _parse_floats(args.noise_sweep) if args.noise_sweep else bench.noise_sweep
        return dict(sweep_pose_noise(scenario_cfg, cfg.pipeline, sigmas, bench.trials, bench.workers))

    if args.attack is not None or scenario_cfg.pose_attack:
        magnitude = args.attack if args.attack is not None else scenario_cfg.attack_magnitude
        agents = [a.strip() for a in args.attack_agents.split(",")] if args.attack_agents else None
        paired = compare_baseline_trusted_pose(
            scenario_cfg, cfg.pipeline, magnitude, bench.trials, bench.workers, agents, count_rejected
        )
        return {"attack": paired}

    checkpoint = _load_checkpoint(args, cfg)
    if args.ablation:
        gnn_options = (False, True) if checkpoint is not None else (False,)
        if checkpoint is None:
            logger.warning("체크포인트가 없어 학습 특징 비교는 건너뜁니다")
        reports = {}
        for gnn in gnn_options:
            for anchor in (True, False):
                flags = AblationFlags(anchor_based=anchor, gnn_feature=gnn)
                reports[flags.label] = run_benchmark(
                    scenario_cfg, cfg.pipeline, flags, bench.trials, bench.workers, checkpoint, count_rejected
                )
        return reports

    gnn = args.gnn or cfg.pipeline.edge_mode == "learned"
    flags = AblationFlags(anchor_based=not args.no_anchor and cfg.pipeline.mass.multi_anchor, gnn_feature=gnn)
    report = run_benchmark(scenario_cfg, cfg.pipeline, flags, bench.trials, bench.workers, checkpoint, count_rejected)
    return {flags.label: report}


def _records_of(reports: dict) -> list:
    records = []
    for value in reports.values():
        if hasattr(value, "records"):
            records.extend(value.records)
        else:
            records.extend(value.baseline.records)
            records.extend(value.freealign.records)
    return records


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    reports = _bench_reports(args, cfg)

    write_trials_csv(_records_of(reports), out / TRIALS_FILE)
    write_report_json({**reports, "config": cfg.to_dict()}, out / REPORT_FILE)
    return EXIT_OK


def cmd_oracle_check(args: argparse.Namespace) -> int:
    cfg = _load(args)
    report = run_oracle_check(
        cfg.bench.oracle_instances,
        cfg.bench.oracle_max_nodes,
        seed=cfg.scenario.seed,
        cfg=cfg.mass,
        workers=cfg.bench.workers,
    )
    write_report_json(
        {"oracle": report.to_dict(), "mass": dataclasses.asdict(cfg.mass), "seed": cfg.scenario.seed},
        _out_dir(args) / REPORT_FILE,
    )
    return EXIT_OK


# ----------------------------------------------------------------------
# 진입점
# ----------------------------------------------------------------------

def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """
    명령줄 진입점

    Args:
        argv: 인자 목록 (None 이면 sys.argv[1:])

    Returns:
        int: 종료 코드
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else EXIT_OK

    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        return args.handler(args)
    except (MalformedRecord, OSError) as e:
        print(f"입출력 오류: {e}", file=sys.stderr)
        logger.error(f"입출력 오류: {e}")
        return EXIT_IO
    except (InvalidConfig, ShapeMismatch) as e:
        print(f"설정 오류: {e}", file=sys.stderr)
        print(parser.format_usage(), end="", file=sys.stderr)
        return EXIT_CONFIG
    except AlignError as e:
        print(f"실행 오류: {e}", file=sys.stderr)
        logger.error(f"실행 오류: {e}")
        return EXIT_CONFIG
    except Exception as e:
        logger.critical(f"치명적 오류 발생: {e}", exc_info=True)
        print(f"치명적 오류: {e}", file=sys.stderr)
        return EXIT_CONFIG
