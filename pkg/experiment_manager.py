"""
Experiment manager: benchmark cells, skyline selection and parameter sweeps
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from baselines import BaselineSpec, all_baselines
from config import BENCH_SETTINGS, DRIVER_SETTINGS, QUERY_SETTINGS
from data_handler import RESULT_COLUMNS, load_results
from errors import ConfigError, InsufficientCandidates, MalformedResults
from octree import Octree
from query_engine import QueryWorkload, f1, knn_f1, knn_query, similarity_query, workload_f1
from rl4qdts import DriverConfig, Policies, random_simplify, rl4qdts_simplify
from rl_agents import DqnConfig
from training_manager import TrainingManager, sample_training_databases
from trajectory import SimplifiedDatabase, Trajectory, TrajectoryDatabase
from utils import derive_seed, make_rng, mean_std
from workload_generator import WorkloadSpec, generate

logger = logging.getLogger(__name__)

TASKS = ("range", "knn", "similarity")
RL_VARIANTS = {
    "rl4qdts": ("learned", "learned"),
    "rl4qdts-nocube": ("random", "learned"),
    "rl4qdts-nopoint": ("learned", "max"),
    "rl4qdts-none": ("random", "max"),
}
SWEEP_PARAMS = ("S", "E", "K", "train_size", "mu", "sigma", "zipf_a")
SWEEP_COLUMNS = ["param", "value", "f1_mean", "f1_std", "wallclock_s", "wallclock_std"]


@dataclass(frozen=True)
class AlgorithmSpec:
    """A named simplifier: an RL4QDTS variant, random insertion or a baseline"""
    name: str
    baseline: Optional[BaselineSpec] = None

    @property
    def is_learned(self) -> bool:
        return self.name in RL_VARIANTS and RL_VARIANTS[self.name] != ("random", "max")

    def row_fields(self) -> Dict[str, str]:
        if self.baseline is None:
            return {"algorithm": self.name, "measure": "", "adaptation": ""}
        return {"algorithm": self.baseline.algorithm.value, "measure": self.baseline.measure.value,
                "adaptation": self.baseline.adaptation.value}


def parse_algorithms(names: Sequence[str]) -> List[AlgorithmSpec]:
    """
    Resolve algorithm names

    Accepts the RL4QDTS variants, "random", "baselines" (all 16 combinations)
    and baseline names such as "topdown-e-sed".
    """
    specs: List[AlgorithmSpec] = []
    for raw in names:
        name = raw.strip().lower()
        if name in RL_VARIANTS or name == "random":
            specs.append(AlgorithmSpec(name))
        elif name == "baselines":
            specs.extend(AlgorithmSpec(b.name, b) for b in all_baselines())
        else:
            parts = name.split("-")
            if len(parts) != 3:
                raise ConfigError(f"Unknown algorithm {raw!r}")
            try:
                baseline = BaselineSpec.parse(f"{parts[0]}-{parts[1]}", parts[2])
            except ValueError as e:
                raise ConfigError(str(e))
            specs.append(AlgorithmSpec(baseline.name, baseline))
    seen = set()
    unique = []
    for spec in specs:
        if spec.name not in seen:
            seen.add(spec.name)
            unique.append(spec)
    return unique


@dataclass(frozen=True)
class QuerySpec:
    """Evaluation-query settings for the kNN and similarity tasks"""
    range_queries: int = BENCH_SETTINGS["range_queries"]
    knn_queries: int = QUERY_SETTINGS["knn_queries"]
    similarity_queries: int = QUERY_SETTINGS["similarity_queries"]
    knn_k: int = QUERY_SETTINGS["knn_k"]
    window_seconds: float = QUERY_SETTINGS["window_seconds"]
    edr_eps: float = QUERY_SETTINGS["edr_eps"]
    similarity_delta: float = QUERY_SETTINGS["similarity_delta"]


@dataclass(frozen=True)
class ExperimentSpec:
    """A full benchmark: algorithms x budgets x tasks, repeated"""
    dataset: str
    algorithms: Tuple[str, ...]
    budget_ratios: Tuple[float, ...] = tuple(BENCH_SETTINGS["budget_ratios"])
    tasks: Tuple[str, ...] = tuple(BENCH_SETTINGS["tasks"])
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    repetitions: int = BENCH_SETTINGS["repetitions"]
    seed: int = BENCH_SETTINGS["seed"]
    workers: int = BENCH_SETTINGS["workers"]
    checkpoint: Optional[str] = None
    queries: QuerySpec = field(default_factory=QuerySpec)
    driver: DriverConfig = field(default_factory=DriverConfig)

    def __post_init__(self):
        if not self.algorithms:
            raise ConfigError("No algorithm given")
        if not self.budget_ratios or any(not 0 < r <= 1 for r in self.budget_ratios):
            raise ConfigError(f"Budget ratios must be in (0, 1], got {list(self.budget_ratios)}")
        unknown = [t for t in self.tasks if t not in TASKS]
        if not self.tasks or unknown:
            raise ConfigError(f"Unknown task(s) {unknown}; expected a subset of {TASKS}")
        if self.repetitions < 1:
            raise ConfigError("Repetitions must be >= 1")
        if self.workers < 1:
            raise ConfigError("Workers must be >= 1")


def budget_for_ratio(db: TrajectoryDatabase, ratio: float) -> int:
    return int(np.floor(ratio * db.N))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def sample_query_trajectories(db: TrajectoryDatabase, count: int, rng: np.random.Generator) -> List[Trajectory]:
    positions = np.sort(rng.choice(db.M, size=min(count, db.M), replace=False))
    return [db[pos] for pos in positions.tolist()]


def query_window(tq: Trajectory, window_seconds: float) -> Tuple[float, float]:
    """Time window starting at the query trajectory's first timestamp"""
    return tq.start_time, tq.start_time + window_seconds


def evaluate_knn(db: TrajectoryDatabase, view: SimplifiedDatabase, query_trajs: Sequence[Trajectory],
                 queries: QuerySpec) -> List[float]:
    """kNN F1 per query trajectory; queries with fewer than k candidates are skipped"""
    scores = []
    for tq in query_trajs:
        window = query_window(tq, queries.window_seconds)
        try:
            original = knn_query(db, tq, window, queries.knn_k, queries.edr_eps, exclude=tq.id)
            simplified = knn_query(view, tq, window, queries.knn_k, queries.edr_eps, exclude=tq.id)
        except InsufficientCandidates as e:
            logger.debug(f"Skipping kNN query {tq.id}: {e}")
            continue
        scores.append(knn_f1(original, simplified))
    return scores


def evaluate_similarity(db: TrajectoryDatabase, view: SimplifiedDatabase, query_trajs: Sequence[Trajectory],
                        queries: QuerySpec) -> List[float]:
    scores = []
    for tq in query_trajs:
        window = query_window(tq, queries.window_seconds)
        original = similarity_query(db, tq, window, queries.similarity_delta, exclude=tq.id)
        simplified = similarity_query(view, tq, window, queries.similarity_delta, exclude=tq.id)
        scores.append(f1(original, simplified)[2])
    return scores


class EvaluationSet(NamedTuple):
    """Queries shared by every algorithm within one repetition"""
    range_workload: QueryWorkload
    state_workload: QueryWorkload
    knn_trajs: List[Trajectory]
    similarity_trajs: List[Trajectory]


def evaluation_set(db: TrajectoryDatabase, workload: WorkloadSpec, queries: QuerySpec, driver: DriverConfig,
                   seed: int, repetition: int) -> EvaluationSet:
    range_spec = replace(workload, count=queries.range_queries)
    state_spec = replace(workload, count=driver.reward_queries)
    return EvaluationSet(
        generate(db, range_spec.with_seed(derive_seed(seed, "eval-range", repetition))),
        generate(db, state_spec.with_seed(derive_seed(seed, "state-workload", repetition))),
        sample_query_trajectories(db, queries.knn_queries, make_rng(seed, "eval-knn", repetition)),
        sample_query_trajectories(db, queries.similarity_queries, make_rng(seed, "eval-similarity", repetition)),
    )


def simplify(db: TrajectoryDatabase, algorithm: AlgorithmSpec, budget: int, rng: np.random.Generator,
             policies: Optional[Policies], driver: DriverConfig, state_workload: QueryWorkload) -> SimplifiedDatabase:
    """Run any named simplifier at a point budget"""
    if algorithm.baseline is not None:
        return algorithm.baseline.run(db, budget)
    if algorithm.name == "random":
        return random_simplify(db, budget, rng)
    cube_mode, point_mode = RL_VARIANTS[algorithm.name]
    config = replace(driver, cube_mode=cube_mode, point_mode=point_mode)
    octree = Octree(db, state_workload, config.end_level)
    return rl4qdts_simplify(db, budget, octree, policies or Policies(None, None), config, rng)


class CellResult(NamedTuple):
    algorithm: str
    budget_ratio: float
    repetition: int
    scores: Dict[str, float]
    wallclock_s: float


def run_cell(db: TrajectoryDatabase, algorithm: AlgorithmSpec, ratio: float, repetition: int,
             spec: ExperimentSpec, policies: Optional[Policies]) -> CellResult:
    """Simplify once and score every task; module-level so worker processes can run it"""
    queries = evaluation_set(db, spec.workload, spec.queries, spec.driver, spec.seed, repetition)
    rng = make_rng(spec.seed, algorithm.name, ratio, repetition)
    started = time.perf_counter()
    view = simplify(db, algorithm, budget_for_ratio(db, ratio), rng, policies, spec.driver, queries.state_workload)
    elapsed = time.perf_counter() - started

    scores: Dict[str, float] = {}
    for task in spec.tasks:
        if task == "range":
            values = workload_f1(db, view, queries.range_workload)
        elif task == "knn":
            values = evaluate_knn(db, view, queries.knn_trajs, spec.queries)
        else:
            values = evaluate_similarity(db, view, queries.similarity_trajs, spec.queries)
        scores[task] = float(np.mean(values)) if values else float("nan")
    return CellResult(algorithm.name, ratio, repetition, scores, elapsed)


class ExperimentManager:
    """Manages benchmark runs over algorithms, budgets, tasks and repetitions"""

    def __init__(self, spec: ExperimentSpec, db: TrajectoryDatabase, policies: Optional[Policies] = None):
        self.spec = spec
        self.db = db
        self.algorithms = parse_algorithms(spec.algorithms)
        self.policies = policies
        if policies is not None and policies.point is not None:
            self.spec = replace(spec, driver=replace(spec.driver, k=policies.point.n_outputs))
        if any(a.is_learned for a in self.algorithms) and policies is None:
            raise ConfigError("Learned RL4QDTS variants need a checkpoint")
        for ratio in spec.budget_ratios:
            if budget_for_ratio(db, ratio) < 2 * db.M:
                raise ConfigError(f"Budget ratio {ratio} gives {budget_for_ratio(db, ratio)} points, "
                                  f"below 2M = {2 * db.M}")

    def cells(self) -> List[Tuple[AlgorithmSpec, float, int]]:
        return [(algorithm, ratio, rep)
                for algorithm in self.algorithms
                for ratio in self.spec.budget_ratios
                for rep in range(self.spec.repetitions)]

    def _run_cells(self) -> List[CellResult]:
        cells = self.cells()
        results: List[CellResult] = []
        if self.spec.workers == 1:
            for i, (algorithm, ratio, rep) in enumerate(cells, 1):
                results.append(run_cell(self.db, algorithm, ratio, rep, self.spec, self.policies))
                logger.debug(f"Cell {i}/{len(cells)} done: {algorithm.name} r={ratio} rep={rep}")
            return results
        with ProcessPoolExecutor(max_workers=self.spec.workers) as executor:
            futures = {
                executor.submit(run_cell, self.db, algorithm, ratio, rep, self.spec, self.policies): (algorithm, ratio, rep)
                for algorithm, ratio, rep in cells
            }
            for done, future in enumerate(as_completed(futures), 1):
                algorithm, ratio, rep = futures[future]
                try:
                    results.append(future.result())
                except Exception as e:
                    logger.error(f"Cell {algorithm.name} r={ratio} rep={rep} failed: {e}")
                    raise
                logger.debug(f"Cell {done}/{len(cells)} done: {algorithm.name} r={ratio} rep={rep}")
        return results

    def run(self) -> List[Dict]:
        """
        Run every cell and aggregate over repetitions

        Returns:
            Result rows, one per (algorithm, budget ratio, task), in RESULT_COLUMNS
        """
        spec = self.spec
        logger.info("=" * 60)
        logger.info(f"Bench: {len(self.algorithms)} algorithm(s) x {len(spec.budget_ratios)} budget(s) x "
                    f"{len(spec.tasks)} task(s), {spec.repetitions} repetition(s), {spec.workers} worker(s)")
        logger.info("=" * 60)

        grouped: Dict[Tuple[str, float], List[CellResult]] = {}
        for result in self._run_cells():
            grouped.setdefault((result.algorithm, result.budget_ratio), []).append(result)

        rows = []
        for algorithm in self.algorithms:
            for ratio in spec.budget_ratios:
                results = sorted(grouped[(algorithm.name, ratio)], key=lambda r: r.repetition)
                wallclock = float(np.mean([r.wallclock_s for r in results]))
                for task in spec.tasks:
                    values = [r.scores[task] for r in results if not np.isnan(r.scores[task])]
                    f1_mean, f1_std = mean_std(values)
                    rows.append({**algorithm.row_fields(), "budget_ratio": ratio, "task": task,
                                 "f1_mean": f1_mean, "f1_std": f1_std, "wallclock_s": wallclock})
                    logger.info(f"{algorithm.name:<22} r={ratio:<7g} {task:<10} F1={f1_mean:.4f}±{f1_std:.4f} "
                                f"t={wallclock:.2f}s")
        return rows


def _row_name(row: pd.Series) -> str:
    if row["adaptation"]:
        return f"{row['algorithm']}-{row['adaptation']}-{row['measure']}"
    return str(row["algorithm"])


def select_skyline(results: Union[pd.DataFrame, List[Dict]]) -> pd.DataFrame:
    """
    Best baseline row per (task, budget ratio); ties by name

    Args:
        results: Bench rows (DataFrame or list of dicts) in RESULT_COLUMNS

    Returns:
        One row per (task, budget_ratio) with a "name" column
    """
    frame = pd.DataFrame(results) if not isinstance(results, pd.DataFrame) else results.copy()
    missing = [c for c in RESULT_COLUMNS if c not in frame.columns]
    if missing:
        raise MalformedResults(f"Results are missing columns {missing}")
    frame["adaptation"] = frame["adaptation"].fillna("").astype(str)
    frame["measure"] = frame["measure"].fillna("").astype(str)
    baselines = frame[frame["adaptation"].isin(["e", "w"])].copy()
    if baselines.empty:
        return baselines.assign(name=pd.Series(dtype=str))
    baselines["name"] = baselines.apply(_row_name, axis=1)
    baselines = baselines.sort_values(["task", "budget_ratio", "f1_mean", "name"],
                                      ascending=[True, True, False, True])
    return baselines.groupby(["task", "budget_ratio"], sort=True).head(1).reset_index(drop=True)


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    """One parameter varied over a list of values, RL4QDTS range F1 per value"""
    param: str
    values: Tuple[float, ...]
    budget_ratio: float = DRIVER_SETTINGS["train_budget_ratio"]
    repetitions: int = BENCH_SETTINGS["repetitions"]
    seed: int = BENCH_SETTINGS["seed"]
    train_databases: int = 5
    train_size: int = 100
    episodes_per_database: int = DRIVER_SETTINGS["episodes_per_database"]
    train_budget_ratio: float = DRIVER_SETTINGS["train_budget_ratio"]
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    queries: QuerySpec = field(default_factory=QuerySpec)
    driver: DriverConfig = field(default_factory=DriverConfig)
    dqn: DqnConfig = field(default_factory=DqnConfig)

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ConfigError(f"Unknown sweep parameter {self.param!r}; expected one of {SWEEP_PARAMS}")
        if not self.values:
            raise ConfigError("Sweep needs at least one value")
        if not 0 < self.budget_ratio <= 1:
            raise ConfigError(f"Budget ratio must be in (0, 1], got {self.budget_ratio}")
        if self.repetitions < 1:
            raise ConfigError("Repetitions must be >= 1")

    @property
    def trains_per_value(self) -> bool:
        return self.param in ("S", "E", "K", "train_size")


def _sweep_driver(spec: SweepSpec, value: float) -> DriverConfig:
    if spec.param == "S":
        return replace(spec.driver, start_level=int(value))
    if spec.param == "E":
        return replace(spec.driver, end_level=int(value))
    if spec.param == "K":
        return replace(spec.driver, k=int(value))
    return spec.driver


def _sweep_workload(spec: SweepSpec, value: float) -> WorkloadSpec:
    if spec.param in ("mu", "sigma"):
        return replace(spec.workload, distribution="gaussian", **{spec.param: float(value)})
    if spec.param == "zipf_a":
        return replace(spec.workload, distribution="zipf", zipf_a=float(value))
    return spec.workload


def _train_policies(db: TrajectoryDatabase, spec: SweepSpec, driver: DriverConfig, train_size: int) -> Policies:
    databases = sample_training_databases(db, spec.train_databases, train_size, spec.seed)
    manager = TrainingManager(driver, spec.dqn, spec.workload, spec.seed, spec.train_budget_ratio,
                              spec.episodes_per_database)
    return manager.train(databases).policies


def run_sweep(db: TrajectoryDatabase, spec: SweepSpec, policies: Optional[Policies] = None) -> List[Dict]:
    """
    Evaluate RL4QDTS range-query F1 and simplification time per parameter value

    Structural parameters (S, E, K, training size) retrain a model per value;
    workload parameters (mu, sigma, zipf_a) reuse the given policies and only
    change the query distribution.
    """
    if not spec.trains_per_value and policies is None:
        raise ConfigError(f"Sweeping {spec.param} needs a trained checkpoint")
    budget = budget_for_ratio(db, spec.budget_ratio)
    logger.info("=" * 60)
    logger.info(f"Sweep {spec.param} over {list(spec.values)} at r={spec.budget_ratio} ({budget} points)")
    logger.info("=" * 60)

    rows = []
    for value in spec.values:
        driver = _sweep_driver(spec, value)
        workload = _sweep_workload(spec, value)
        if spec.trains_per_value:
            train_size = int(value) if spec.param == "train_size" else spec.train_size
            value_policies = _train_policies(db, spec, driver, train_size)
        else:
            value_policies = policies
            driver = replace(driver, k=policies.point.n_outputs)

        scores, times = [], []
        for rep in range(spec.repetitions):
            queries = evaluation_set(db, workload, spec.queries, driver, spec.seed, rep)
            rng = make_rng(spec.seed, "sweep", spec.param, value, rep)
            started = time.perf_counter()
            octree = Octree(db, queries.state_workload, driver.end_level)
            view = rl4qdts_simplify(db, budget, octree, value_policies, driver, rng)
            times.append(time.perf_counter() - started)
            scores.append(float(np.mean(workload_f1(db, view, queries.range_workload))))
        f1_mean, f1_std = mean_std(scores)
        time_mean, time_std = mean_std(times)
        rows.append({"param": spec.param, "value": value, "f1_mean": f1_mean, "f1_std": f1_std,
                     "wallclock_s": time_mean, "wallclock_std": time_std})
        logger.info(f"{spec.param}={value}: F1={f1_mean:.4f}±{f1_std:.4f} time={time_mean:.2f}s")
    return rows


def sweep_report(path: str) -> pd.DataFrame:
    """
    Summary table of a sweep results CSV

    Returns:
        Columns param, value, f1 ("mean±std"), time ("mean±std"), best; the
        row with the highest f1_mean per parameter is flagged
    """
    frame = load_results(path, SWEEP_COLUMNS[:5])
    if "wallclock_std" not in frame.columns:
        frame["wallclock_std"] = 0.0
    try:
        frame["f1_mean"] = frame["f1_mean"].astype(float)
        frame["f1_std"] = frame["f1_std"].astype(float)
        frame["wallclock_s"] = frame["wallclock_s"].astype(float)
        frame["wallclock_std"] = frame["wallclock_std"].fillna(0.0).astype(float)
    except ValueError as e:
        raise MalformedResults(f"Non-numeric result values in {path}: {e}")

    best = frame.groupby("param", sort=False)["f1_mean"].idxmax()
    report = pd.DataFrame({
        "param": frame["param"],
        "value": frame["value"],
        "f1": [f"{m:.3f}±{s:.3f}" for m, s in zip(frame["f1_mean"], frame["f1_std"])],
        "time": [f"{m:.2f}±{s:.2f}" for m, s in zip(frame["wallclock_s"], frame["wallclock_std"])],
        "best": frame.index.isin(best.values),
    })
    return report
