import numpy as np
import pandas as pd
import pytest

from data_handler import save_results
from errors import ConfigError, MalformedResults
from experiment_manager import (
    SWEEP_COLUMNS,
    ExperimentManager,
    ExperimentSpec,
    QuerySpec,
    SweepSpec,
    parse_algorithms,
    run_sweep,
    select_skyline,
    sweep_report,
)
from rl4qdts import DriverConfig, initial_policies
from rl_agents import DqnConfig
from synthetic_data import generate_synthetic_database
from workload_generator import WorkloadSpec

DRIVER = DriverConfig(start_level=2, end_level=4, k=2, delta=5, reward_queries=10)
QUERIES = QuerySpec(range_queries=10, knn_queries=4, similarity_queries=4, knn_k=2)
WORKLOAD = WorkloadSpec(spatial_extent=1500.0, temporal_extent=6 * 3600.0)


def _spec(algorithms, **kwargs):
    settings = dict(dataset="synthetic", algorithms=tuple(algorithms), budget_ratios=(0.1, 0.2),
                    tasks=("range", "knn", "similarity"), workload=WORKLOAD, repetitions=2, seed=3,
                    workers=1, queries=QUERIES, driver=DRIVER)
    settings.update(kwargs)
    return ExperimentSpec(**settings)


def _row(algorithm, measure, adaptation, ratio, task, f1):
    return {"algorithm": algorithm, "measure": measure, "adaptation": adaptation, "budget_ratio": ratio,
            "task": task, "f1_mean": f1, "f1_std": 0.0, "wallclock_s": 0.1}


class TestParseAlgorithms:

    def test_names(self):
        specs = parse_algorithms(["RL4QDTS", "random", "topdown-e-sed", "rl4qdts"])
        assert [s.name for s in specs] == ["rl4qdts", "random", "topdown-e-sed"]
        assert specs[0].is_learned and not specs[1].is_learned
        assert specs[2].row_fields() == {"algorithm": "topdown", "measure": "sed", "adaptation": "e"}

    def test_all_baselines(self):
        specs = parse_algorithms(["baselines"])
        assert len(specs) == 16
        assert all(s.baseline is not None for s in specs)

    def test_only_none_variant_is_unlearned(self):
        learned = {s.name: s.is_learned for s in parse_algorithms(["rl4qdts-nocube", "rl4qdts-nopoint",
                                                                    "rl4qdts-none"])}
        assert learned == {"rl4qdts-nocube": True, "rl4qdts-nopoint": True, "rl4qdts-none": False}

    @pytest.mark.parametrize("name", ["douglas", "topdown-x-sed", "middle-e-sed"])
    def test_unknown(self, name):
        with pytest.raises(ConfigError):
            parse_algorithms([name])


class TestExperimentSpec:

    @pytest.mark.parametrize("kwargs", [
        {"budget_ratios": (0.0,)},
        {"budget_ratios": (1.5,)},
        {"tasks": ("range", "join")},
        {"repetitions": 0},
        {"workers": 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            _spec(["random"], **kwargs)

    def test_needs_an_algorithm(self):
        with pytest.raises(ConfigError):
            _spec([])


class TestExperimentManager:

    def test_rows_cover_every_cell(self, small_db):
        algorithms = ["rl4qdts-none", "random", "topdown-e-sed"]
        rows = ExperimentManager(_spec(algorithms), small_db).run()
        assert len(rows) == 3 * 2 * 3
        frame = pd.DataFrame(rows)
        assert set(frame["task"]) == {"range", "knn", "similarity"}
        assert set(frame["budget_ratio"]) == {0.1, 0.2}
        assert frame["f1_mean"].between(0.0, 1.0).all()
        assert (frame["wallclock_s"] >= 0).all()

    def test_rows_are_deterministic(self, small_db):
        spec = _spec(["random", "bottomup-w-ped"], tasks=("range",))
        first = pd.DataFrame(ExperimentManager(spec, small_db).run())
        second = pd.DataFrame(ExperimentManager(spec, small_db).run())
        pd.testing.assert_series_equal(first["f1_mean"], second["f1_mean"])

    def test_learned_variant_with_policies(self, small_db):
        policies = initial_policies(2, np.random.default_rng(0))
        rows = ExperimentManager(_spec(["rl4qdts"], tasks=("range",), repetitions=1), small_db, policies).run()
        assert [row["algorithm"] for row in rows] == ["rl4qdts", "rl4qdts"]

    def test_learned_variant_needs_policies(self, small_db):
        with pytest.raises(ConfigError):
            ExperimentManager(_spec(["rl4qdts"]), small_db)

    def test_budget_below_endpoints(self, small_db):
        ratio = (2 * small_db.M - 1) / small_db.N
        with pytest.raises(ConfigError):
            ExperimentManager(_spec(["random"], budget_ratios=(ratio,)), small_db)


class TestSkyline:

    def test_best_baseline_per_task_and_budget(self):
        rows = [
            _row("topdown", "sed", "e", 0.1, "range", 0.4),
            _row("bottomup", "ped", "w", 0.1, "range", 0.6),
            _row("topdown", "sed", "w", 0.1, "range", 0.6),
            _row("topdown", "sed", "e", 0.2, "range", 0.7),
            _row("rl4qdts", "", "", 0.1, "range", 0.9),
        ]
        skyline = select_skyline(rows)
        assert skyline[["budget_ratio", "name"]].values.tolist() == [[0.1, "bottomup-w-ped"], [0.2, "topdown-e-sed"]]

    def test_no_baselines(self):
        assert select_skyline([_row("rl4qdts", "", "", 0.1, "range", 0.9)]).empty

    def test_missing_columns(self):
        with pytest.raises(MalformedResults):
            select_skyline([{"algorithm": "topdown", "f1_mean": 0.5}])


class TestSweepReport:

    def test_single_row_is_best(self, tmp_path):
        path = tmp_path / "sweep.csv"
        save_results([{"param": "K", "value": 2, "f1_mean": 0.5, "f1_std": 0.1, "wallclock_s": 1.0,
                       "wallclock_std": 0.0}], str(path), SWEEP_COLUMNS)
        report = sweep_report(str(path))
        assert report["best"].tolist() == [True]
        assert report["f1"].tolist() == ["0.500±0.100"]
        assert report["time"].tolist() == ["1.00±0.00"]

    def test_best_per_param(self, tmp_path):
        path = tmp_path / "sweep.csv"
        rows = [{"param": "K", "value": v, "f1_mean": f, "f1_std": 0.0, "wallclock_s": 1.0, "wallclock_std": 0.0}
                for v, f in [(2, 0.3), (3, 0.5), (4, 0.4)]]
        save_results(rows, str(path), SWEEP_COLUMNS)
        assert sweep_report(str(path))["best"].tolist() == [False, True, False]

    def test_missing_columns(self, tmp_path):
        path = tmp_path / "sweep.csv"
        path.write_text("param,value\nK,2\n")
        with pytest.raises(MalformedResults):
            sweep_report(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            sweep_report(str(tmp_path / "absent.csv"))


class TestSweep:

    def test_workload_sweep_needs_policies(self, small_db):
        with pytest.raises(ConfigError):
            run_sweep(small_db, SweepSpec("mu", (0.5,), driver=DRIVER))

    def test_unknown_parameter(self):
        with pytest.raises(ConfigError):
            SweepSpec("delta", (1,))

    def test_workload_sweep(self, small_db):
        policies = initial_policies(3, np.random.default_rng(1))
        spec = SweepSpec("mu", (0.25, 0.75), budget_ratio=0.2, repetitions=1, workload=WORKLOAD,
                         queries=QUERIES, driver=DRIVER)
        rows = run_sweep(small_db, spec, policies)
        assert [row["value"] for row in rows] == [0.25, 0.75]
        assert all(0.0 <= row["f1_mean"] <= 1.0 for row in rows)
        assert list(rows[0]) == SWEEP_COLUMNS

    def test_structural_sweep_trains_per_value(self, small_db):
        spec = SweepSpec("K", (2, 3), budget_ratio=0.2, repetitions=1, train_databases=1, train_size=6,
                         episodes_per_database=1, workload=WORKLOAD, queries=QUERIES, driver=DRIVER,
                         dqn=DqnConfig(batch_size=8))
        rows = run_sweep(small_db, spec)
        assert [row["value"] for row in rows] == [2, 3]
        assert all(0.0 <= row["f1_mean"] <= 1.0 for row in rows)


@pytest.mark.slow
def test_full_budget_answers_every_query_exactly():
    db = generate_synthetic_database(40, points=(40, 80), seed=12, extent=8000.0, days=2.0)
    spec = _spec(["rl4qdts-none", "random", "baselines"], budget_ratios=(1.0,), repetitions=1)
    rows = ExperimentManager(spec, db).run()
    assert len(rows) == 18 * 3
    assert all(row["f1_mean"] == 1.0 for row in rows)
