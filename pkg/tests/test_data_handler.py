import numpy as np
import pytest

from data_handler import (
    RESULT_COLUMNS,
    load_centers,
    load_kept,
    load_results,
    load_trajectories,
    load_workload,
    save_kept,
    save_results,
    save_trajectories,
    save_workload,
)
from errors import MalformedResults, MalformedRow, NonIncreasingTimestamp, TrajectoryTooShort
from query_engine import QueryWorkload, RangeQuery
from trajectory import SimplifiedDatabase, Trajectory, TrajectoryDatabase


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestLoadTrajectories:

    def test_two_by_three(self, tmp_path):
        path = _write(tmp_path / "d.csv", "traj_id,t,x,y\n"
                                          "a,0,0,0\na,1,1,0\na,2,2,0\n"
                                          "b,0,5,5\nb,1,5,6\nb,2,5,7\n")
        db = load_trajectories(path)
        assert (db.M, db.N) == (2, 6)
        assert db.ids == ["a", "b"]
        assert db.get("b").coords[2] == (5.0, 7.0, 2.0)

    def test_decreasing_time(self, tmp_path):
        path = _write(tmp_path / "d.csv", "traj_id,t,x,y\na,0,0,0\na,2,1,0\na,1,2,0\n")
        with pytest.raises(NonIncreasingTimestamp):
            load_trajectories(path)

    def test_sort_rows_repairs_order(self, tmp_path):
        path = _write(tmp_path / "d.csv", "traj_id,t,x,y\na,0,0,0\na,2,1,0\na,1,2,0\n")
        db = load_trajectories(path, sort_rows=True)
        assert [c[2] for c in db[0].coords] == [0.0, 1.0, 2.0]

    def test_single_point(self, tmp_path):
        path = _write(tmp_path / "d.csv", "traj_id,t,x,y\na,0,0,0\na,1,1,0\nb,0,3,3\n")
        with pytest.raises(TrajectoryTooShort):
            load_trajectories(path)

    def test_bad_header_and_values(self, tmp_path):
        with pytest.raises(MalformedRow):
            load_trajectories(_write(tmp_path / "h.csv", "id,time,a,b\n1,2,3,4\n"))
        with pytest.raises(MalformedRow):
            load_trajectories(_write(tmp_path / "v.csv", "traj_id,t,x,y\na,0,zero,0\na,1,1,0\n"))
        with pytest.raises(MalformedRow):
            load_trajectories(_write(tmp_path / "t.csv", "traj_id,t,x,y\na,yesterday,0,0\na,1,1,0\n"))

    def test_iso_timestamps(self, tmp_path):
        path = _write(tmp_path / "d.csv", "traj_id,t,x,y\n"
                                          "a,2008-10-23T02:53:04,0,0\na,2008-10-23T02:53:10,1,0\n")
        db = load_trajectories(path)
        assert db[0].end_time - db[0].start_time == pytest.approx(6.0)

    def test_latlon_projection(self, tmp_path):
        path = _write(tmp_path / "d.csv", "traj_id,t,lat,lon\na,0,40.0,10.0\na,1,41.0,10.0\n")
        db = load_trajectories(path, reference=(40.0, 10.0))
        assert db[0].coords[0][:2] == (0.0, 0.0)
        assert db[0].coords[1][1] == pytest.approx(111194.9, abs=0.1)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_trajectories(str(tmp_path / "missing.csv"))

    def test_save_then_load(self, tmp_path, tiny_db):
        path = str(tmp_path / "out" / "db.csv")
        save_trajectories(tiny_db, path)
        loaded = load_trajectories(path)
        assert loaded.ids == tiny_db.ids
        assert np.array_equal(loaded.points, tiny_db.points)

    def test_full_precision_floats_survive(self, tmp_path):
        rng = np.random.default_rng(17)
        rows = np.column_stack([np.sort(rng.uniform(0, 1e6, 8)), rng.uniform(-1e5, 1e5, (8, 2))])
        db = TrajectoryDatabase([Trajectory("a", rows[:, [1, 2, 0]])])
        path = str(tmp_path / "precise.csv")
        save_trajectories(db, path)
        assert np.array_equal(load_trajectories(path).points, db.points)


class TestKeptAndWorkloads:

    def test_kept_csv(self, tmp_path, tiny_db):
        view = SimplifiedDatabase.endpoints_only(tiny_db, tiny_db.N)
        view.insert(0, 3)
        view.insert(4, 1)
        path = str(tmp_path / "kept.csv")
        save_kept(view, path)
        loaded = load_kept(tiny_db, path)
        assert loaded.kept == view.kept
        assert loaded.total == view.total

    def test_kept_missing_endpoint(self, tmp_path, tiny_db):
        rows = "".join(f"{traj.id},0\n" for traj in tiny_db)
        with pytest.raises(MalformedRow):
            load_kept(tiny_db, _write(tmp_path / "kept.csv", "traj_id,kept_index\n" + rows))

    def test_kept_unknown_trajectory(self, tmp_path, tiny_db):
        with pytest.raises(MalformedRow):
            load_kept(tiny_db, _write(tmp_path / "kept.csv", "traj_id,kept_index\nnope,0\n"))

    def test_workload_csv(self, tmp_path):
        workload = QueryWorkload([RangeQuery(0, 1, 2, 3, 4, 5), RangeQuery(-1, 1, -1, 1, 0, 10)])
        path = str(tmp_path / "w.csv")
        save_workload(workload, path)
        assert load_workload(path).as_rows() == workload.as_rows()

    def test_workload_min_above_max(self, tmp_path):
        path = _write(tmp_path / "w.csv", "x_min,x_max,y_min,y_max,t_min,t_max\n5,1,0,1,0,1\n")
        with pytest.raises(MalformedRow):
            load_workload(path)

    def test_centers(self, tmp_path):
        centers = load_centers(_write(tmp_path / "c.csv", "x,y,t\n1,2,3\n4,5,6\n"))
        assert centers.tolist() == [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]
        with pytest.raises(MalformedRow):
            load_centers(_write(tmp_path / "e.csv", "x,y,t\n"))


class TestResults:

    def test_results_roundtrip_and_validation(self, tmp_path):
        row = {"algorithm": "random", "measure": "", "adaptation": "", "budget_ratio": 0.01,
               "task": "range", "f1_mean": 0.5, "f1_std": 0.1, "wallclock_s": 1.0}
        path = str(tmp_path / "r.csv")
        save_results([row], path)
        frame = load_results(path, RESULT_COLUMNS)
        assert list(frame.columns) == RESULT_COLUMNS
        assert frame["f1_mean"].tolist() == [0.5]
        with pytest.raises(MalformedResults):
            load_results(path, RESULT_COLUMNS + ["param"])

    def test_results_without_rows(self, tmp_path):
        path = str(tmp_path / "r.csv")
        save_results([], path)
        with pytest.raises(MalformedResults):
            load_results(path, RESULT_COLUMNS)
