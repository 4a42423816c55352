"""
Command-line entry point for query-driven trajectory simplification
"""

import argparse
import logging
import sys
from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from checkpoint_handler import load_checkpoint, save_checkpoint
from config import CHECKPOINT_DIR, RESULTS_DB, load_config_file, resolve_settings
from data_handler import (
    RESULT_COLUMNS,
    load_kept,
    load_results,
    load_trajectories,
    load_workload,
    save_kept,
    save_results,
    save_trajectories,
    save_workload,
)
from error_measures import ErrorMeasure
from errors import ConfigError, InsufficientCandidates, QdtsError
from experiment_manager import (
    SWEEP_COLUMNS,
    ExperimentManager,
    ExperimentSpec,
    QuerySpec,
    SweepSpec,
    budget_for_ratio,
    parse_algorithms,
    query_window,
    run_sweep,
    sample_query_trajectories,
    select_skyline,
    simplify,
    sweep_report,
)
from query_engine import deformation, f1, knn_f1, knn_query, range_query, similarity_query
from rl4qdts import DriverConfig, Policies
from results_store import ResultsStore
from rl_agents import DqnConfig
from synthetic_data import generate_synthetic_database
from training_manager import TrainingManager, sample_training_databases
from utils import make_rng, setup_logging
from workload_generator import WorkloadSpec, generate

logger = logging.getLogger(__name__)


def _split(raw: Optional[str]) -> List[str]:
    return [item.strip() for item in raw.split(",") if item.strip()] if raw else []


def _floats(raw: Optional[str], name: str) -> List[float]:
    try:
        return [float(item) for item in _split(raw)]
    except ValueError:
        raise ConfigError(f"--{name} expects comma-separated numbers, got {raw!r}")


class Settings:
    """Settings groups after applying an optional key=value file and CLI flags"""

    def __init__(self, args: argparse.Namespace):
        overrides = load_config_file(args.config) if args.config else {}
        groups = resolve_settings(overrides)
        self.driver: Dict[str, Any] = groups["driver"]
        self.dqn: Dict[str, Any] = groups["dqn"]
        self.query: Dict[str, Any] = groups["query"]
        self.workload: Dict[str, Any] = groups["workload"]
        self.bench: Dict[str, Any] = groups["bench"]
        if getattr(args, "seed", None) is not None:
            self.bench["seed"] = args.seed
        if getattr(args, "distribution", None):
            self.workload["distribution"] = args.distribution

    @property
    def seed(self) -> int:
        return int(self.bench["seed"])

    def driver_config(self) -> DriverConfig:
        return DriverConfig.from_settings(self.driver)

    def dqn_config(self) -> DqnConfig:
        return DqnConfig.from_settings(self.dqn)

    def workload_spec(self, count: int, centers_path: Optional[str] = None) -> WorkloadSpec:
        return WorkloadSpec(
            count=count,
            distribution=self.workload["distribution"],
            spatial_extent=self.workload["spatial_extent"],
            temporal_extent=self.workload["temporal_extent"],
            mu=self.workload["mu"],
            sigma=self.workload["sigma"],
            zipf_a=self.workload["zipf_a"],
            zipf_grid=self.workload["zipf_grid"],
            seed=self.seed,
            centers_path=centers_path,
        )

    def query_spec(self) -> QuerySpec:
        return QuerySpec(range_queries=self.bench["range_queries"], **self.query)


def _load_policies(path: Optional[str], required: bool) -> Optional[Policies]:
    if not path:
        if required:
            raise ConfigError("This algorithm needs --checkpoint")
        return None
    checkpoint = load_checkpoint(path)
    return Policies(checkpoint.cube, checkpoint.point)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args: argparse.Namespace, settings: Settings) -> int:
    db = load_trajectories(args.input, sort_rows=args.sort)
    save_trajectories(db, args.output)
    print(f"{db.M} trajectories, {db.N} points -> {args.output}")
    return 0


def cmd_synth(args: argparse.Namespace, settings: Settings) -> int:
    db = generate_synthetic_database(args.count, (args.min_points, args.max_points), settings.seed, args.extent)
    save_trajectories(db, args.output)
    print(f"{db.M} synthetic trajectories, {db.N} points -> {args.output}")
    return 0


def cmd_train(args: argparse.Namespace, settings: Settings) -> int:
    db = load_trajectories(args.data)
    driver = settings.driver_config()
    if args.databases > 1 or (args.size and args.size < db.M):
        databases = sample_training_databases(db, args.databases, args.size or db.M, settings.seed)
    else:
        databases = [db]
    policies, resumed = None, 0
    if args.checkpoint:
        checkpoint = load_checkpoint(args.checkpoint)
        policies = Policies(checkpoint.cube, checkpoint.point)
        resumed = int(checkpoint.training.get("episodes", 0))
    manager = TrainingManager(
        driver,
        settings.dqn_config(),
        settings.workload_spec(driver.reward_queries, args.centers),
        settings.seed,
        settings.driver["train_budget_ratio"],
        args.episodes if args.episodes is not None else settings.driver["episodes_per_database"],
        policies=policies,
        resumed_episodes=resumed,
    )
    result = manager.train(databases)
    save_checkpoint(result.checkpoint, args.out)
    print(f"Best training F1 {result.best_f1:.4f} over {len(result.history)} episode(s) -> {args.out}")
    return 0


def _algorithm_name(algo: str, measure: str) -> str:
    """Join "topdown-e" and "sed" into "topdown-e-sed"; other names pass through"""
    if algo.count("-") == 1 and algo.split("-")[0] in ("topdown", "bottomup"):
        return f"{algo}-{ErrorMeasure.parse(measure).value}"
    return algo


def cmd_simplify(args: argparse.Namespace, settings: Settings) -> int:
    db = load_trajectories(args.data)
    algorithm = parse_algorithms([_algorithm_name(args.algo, args.measure)])[0]
    if not 0 < args.budget <= 1:
        raise ConfigError(f"--budget must be a ratio in (0, 1], got {args.budget}")
    policies = _load_policies(args.checkpoint, algorithm.is_learned)
    driver = settings.driver_config()
    if policies is not None:
        driver = replace(driver, k=policies.point.n_outputs)
    state_workload = generate(db, settings.workload_spec(driver.reward_queries, args.centers))
    budget = budget_for_ratio(db, args.budget)
    view = simplify(db, algorithm, budget, make_rng(settings.seed, algorithm.name, args.budget, 0),
                    policies, driver, state_workload)
    save_kept(view, args.out)
    print(f"{algorithm.name}: kept {view.total} of {db.N} points (budget {budget}) -> {args.out}")
    return 0


def _print_metrics(task: str, rows: List[Sequence[float]], extra: str = "") -> None:
    if not rows:
        print(f"{task}: no evaluable query")
        return
    precision, recall, score = np.mean(np.array(rows, dtype=float), axis=0)
    print(f"{task}: {len(rows)} queries  P={precision:.4f}  R={recall:.4f}  F1={score:.4f}{extra}")


def cmd_query(args: argparse.Namespace, settings: Settings) -> int:
    db = load_trajectories(args.data)
    view = load_kept(db, args.kept)
    queries = settings.query_spec()

    if args.task == "range":
        if args.workload:
            workload = load_workload(args.workload)
        else:
            workload = generate(db, settings.workload_spec(queries.range_queries, args.centers))
        rows = [f1(range_query(db, q), range_query(view, q)) for q in workload]
        error = deformation(db, view, workload, ErrorMeasure.parse(args.measure))
        _print_metrics("range", rows, f"  deformation({args.measure})={error:.4f}")
        return 0

    if args.query_id:
        if args.query_id not in db.ids:
            raise ConfigError(f"Unknown trajectory id: {args.query_id}")
        query_trajs = [db.get(args.query_id)]
    else:
        count = queries.knn_queries if args.task == "knn" else queries.similarity_queries
        query_trajs = sample_query_trajectories(db, count, make_rng(settings.seed, "query", args.task))
    rows = []
    for tq in query_trajs:
        window = query_window(tq, queries.window_seconds)
        if args.task == "knn":
            try:
                original = knn_query(db, tq, window, queries.knn_k, queries.edr_eps, exclude=tq.id)
                simplified = knn_query(view, tq, window, queries.knn_k, queries.edr_eps, exclude=tq.id)
            except InsufficientCandidates as e:
                logger.warning(f"Skipping kNN query {tq.id}: {e}")
                continue
            score = knn_f1(original, simplified)
            rows.append((score, score, score))
        else:
            original = similarity_query(db, tq, window, queries.similarity_delta, exclude=tq.id)
            simplified = similarity_query(view, tq, window, queries.similarity_delta, exclude=tq.id)
            rows.append(f1(original, simplified))
    _print_metrics(args.task, rows)
    return 0


def _results_store() -> Optional[ResultsStore]:
    return ResultsStore(RESULTS_DB) if RESULTS_DB else None


def cmd_bench(args: argparse.Namespace, settings: Settings) -> int:
    db = load_trajectories(args.data)
    algorithms = _split(args.algos)
    budgets = _floats(args.budgets, "budgets") or list(settings.bench["budget_ratios"])
    tasks = _split(args.tasks) or list(settings.bench["tasks"])
    needs_policies = any(a.is_learned for a in parse_algorithms(algorithms)) if algorithms else False
    policies = _load_policies(args.checkpoint, needs_policies)
    driver = settings.driver_config()
    spec = ExperimentSpec(
        dataset=args.data,
        algorithms=tuple(algorithms),
        budget_ratios=tuple(budgets),
        tasks=tuple(tasks),
        workload=settings.workload_spec(settings.bench["range_queries"], args.centers),
        repetitions=args.repetitions or settings.bench["repetitions"],
        seed=settings.seed,
        workers=args.workers or settings.bench["workers"],
        checkpoint=args.checkpoint,
        queries=settings.query_spec(),
        driver=driver,
    )
    rows = ExperimentManager(spec, db, policies).run()
    save_results(rows, args.out)

    store = _results_store()
    if store is not None:
        run_id = store.start_run("bench", {"dataset": args.data, "algorithms": algorithms, "budgets": budgets,
                                           "tasks": tasks, "seed": settings.seed})
        store.append_rows(run_id, rows)

    skyline = select_skyline(rows)
    if not skyline.empty:
        print("Skyline baselines:")
        print(skyline[["task", "budget_ratio", "name", "f1_mean"]].to_string(index=False))
    print(f"{len(rows)} result rows -> {args.out}")
    return 0


def cmd_sweep(args: argparse.Namespace, settings: Settings) -> int:
    db = load_trajectories(args.data)
    values = _floats(args.values, "values")
    policies = _load_policies(args.checkpoint, False)
    spec = SweepSpec(
        param=args.param,
        values=tuple(values),
        budget_ratio=args.budget,
        repetitions=args.repetitions or settings.bench["repetitions"],
        seed=settings.seed,
        train_databases=args.databases,
        train_size=args.size,
        episodes_per_database=args.episodes if args.episodes is not None else settings.driver["episodes_per_database"],
        train_budget_ratio=settings.driver["train_budget_ratio"],
        workload=settings.workload_spec(settings.driver["reward_queries"], args.centers),
        queries=settings.query_spec(),
        driver=settings.driver_config(),
        dqn=settings.dqn_config(),
    )
    rows = run_sweep(db, spec, policies)
    save_results(rows, args.out, SWEEP_COLUMNS)

    store = _results_store()
    if store is not None:
        run_id = store.start_run("sweep", {"dataset": args.data, "param": args.param, "values": values})
        store.append_rows(run_id, rows)
    print(sweep_report(args.out).to_string(index=False))
    return 0


def cmd_report(args: argparse.Namespace, settings: Settings) -> int:
    if args.skyline:
        frame = load_results(args.results, RESULT_COLUMNS)
        print(select_skyline(frame)[["task", "budget_ratio", "name", "f1_mean", "f1_std"]].to_string(index=False))
    else:
        print(sweep_report(args.results).to_string(index=False))
    return 0


def cmd_workload(args: argparse.Namespace, settings: Settings) -> int:
    db = load_trajectories(args.data)
    workload = generate(db, settings.workload_spec(args.count, args.centers))
    save_workload(workload, args.out)
    print(f"{len(workload)} {settings.workload['distribution']} range queries -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

class QdtsArgumentParser(argparse.ArgumentParser):
    """Argument parser whose usage errors raise ConfigError instead of exiting"""

    def error(self, message: str) -> None:
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = QdtsArgumentParser(prog="qdts", description="Query-driven trajectory simplification")
    parser.add_argument("--config", help="key=value settings file")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--log-file", default=None, help="Rotating log file ('' disables)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, data: bool = True) -> None:
        if data:
            p.add_argument("--data", required=True, help="Trajectory CSV")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--distribution", choices=["data", "gaussian", "zipf", "real"], default=None)
        p.add_argument("--centers", default=None, help="Query centers CSV for the real distribution")

    p = sub.add_parser("ingest", help="Validate and normalize a dataset")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--sort", action="store_true", help="Sort each trajectory by time")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("synth", help="Generate a synthetic random-walk dataset")
    p.add_argument("output")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--min-points", type=int, default=200)
    p.add_argument("--max-points", type=int, default=460)
    p.add_argument("--extent", type=float, default=20000.0)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("workload", help="Generate and save a range-query workload")
    common(p)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_workload)

    p = sub.add_parser("train", help="Train Agent-Cube and Agent-Point")
    common(p)
    p.add_argument("--out", default=f"{CHECKPOINT_DIR}/policy.json")
    p.add_argument("--databases", type=int, default=1, help="Training databases sampled from the data")
    p.add_argument("--size", type=int, default=0, help="Trajectories per training database (0: all)")
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--checkpoint", default=None, help="Resume training from these policies")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("simplify", help="Simplify a dataset to a budget ratio")
    common(p)
    p.add_argument("--algo", required=True, help="rl4qdts[-nocube|-nopoint|-none], random, topdown-e, ...")
    p.add_argument("--measure", default="sed")
    p.add_argument("--budget", type=float, required=True, help="Budget ratio W/N")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_simplify)

    p = sub.add_parser("query", help="Compare query answers on original and simplified data")
    common(p)
    p.add_argument("--kept", required=True, help="Kept-index CSV")
    p.add_argument("--task", choices=["range", "knn", "similarity"], required=True)
    p.add_argument("--workload", default=None, help="Range workload CSV")
    p.add_argument("--query-id", default=None, help="Query trajectory id (knn, similarity)")
    p.add_argument("--measure", default="sed", help="Error measure for the deformation score")
    p.set_defaults(handler=cmd_query)

    p = sub.add_parser("bench", help="Run an experiment grid and write a results CSV")
    common(p)
    p.add_argument("--algos", required=True, help="Comma-separated algorithm names or 'baselines'")
    p.add_argument("--budgets", default=None, help="Comma-separated budget ratios")
    p.add_argument("--tasks", default=None, help="Comma-separated subset of range,knn,similarity")
    p.add_argument("--repetitions", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("sweep", help="Parameter study over S, E, K, training size or workload shape")
    common(p)
    p.add_argument("--param", required=True, choices=["S", "E", "K", "train_size", "mu", "sigma", "zipf_a"])
    p.add_argument("--values", required=True, help="Comma-separated values")
    p.add_argument("--budget", type=float, default=0.01)
    p.add_argument("--repetitions", type=int, default=None)
    p.add_argument("--databases", type=int, default=5)
    p.add_argument("--size", type=int, default=100)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("report", help="Summarize a sweep CSV or the skyline of a bench CSV")
    p.add_argument("results")
    p.add_argument("--skyline", action="store_true")
    p.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main function"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as e:
        parser.print_usage(sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return 1
    setup_logging(args.log_level, args.log_file)
    try:
        settings = Settings(args)
        return args.handler(args, settings)
    except FileNotFoundError as e:
        logger.error(f"File not found: {e.filename or e}")
        return 2
    except QdtsError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1
    except ValueError as e:
        logger.error(f"Invalid argument: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
