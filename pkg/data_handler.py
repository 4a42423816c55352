"""
CSV data handler: trajectories, workloads, kept-index sets, query centers and results
"""

import logging
import os
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from dateutil import parser as date_parser

from errors import MalformedResults, MalformedRow, TrajectoryTooShort
from query_engine import QueryWorkload, RangeQuery
from trajectory import SimplifiedDatabase, Trajectory, TrajectoryDatabase, project_latlon

logger = logging.getLogger(__name__)

PLANAR_COLUMNS = ["traj_id", "t", "x", "y"]
GEO_COLUMNS = ["traj_id", "t", "lat", "lon"]
WORKLOAD_COLUMNS = ["x_min", "x_max", "y_min", "y_max", "t_min", "t_max"]
KEPT_COLUMNS = ["traj_id", "kept_index"]
CENTER_COLUMNS = ["x", "y", "t"]
RESULT_COLUMNS = ["algorithm", "measure", "adaptation", "budget_ratio", "task",
                  "f1_mean", "f1_std", "wallclock_s"]


def _ensure_parent(path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def _parse_time(raw: str, row: int) -> float:
    """Seconds from a numeric value or an ISO-8601 timestamp"""
    try:
        value = float(raw)
    except ValueError:
        value = None
    if value is not None:
        if not np.isfinite(value):
            raise MalformedRow(f"Row {row}: non-finite timestamp {raw!r}")
        return value
    try:
        return date_parser.isoparse(raw).timestamp()
    except (ValueError, OverflowError):
        raise MalformedRow(f"Row {row}: unparsable timestamp {raw!r}")


def _read_csv(path: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise MalformedRow(f"{path}: {e}")
    frame.columns = [column.strip() for column in frame.columns]
    return frame


def _numeric(frame: pd.DataFrame, columns: List[str], path: str) -> np.ndarray:
    try:
        values = frame[columns].apply(lambda col: col.str.strip().astype(float))
    except (ValueError, TypeError) as e:
        raise MalformedRow(f"{path}: non-numeric value ({e})")
    array = values.to_numpy(dtype=float)
    if not np.all(np.isfinite(array)):
        bad = int(np.argmax(~np.all(np.isfinite(array), axis=1)))
        raise MalformedRow(f"{path}: row {bad + 2} has a non-finite value")
    return array


def load_trajectories(path: str, fmt: str = "csv", sort_rows: bool = False,
                      reference: Optional[Tuple[float, float]] = None) -> TrajectoryDatabase:
    """
    Load a trajectory database from CSV

    Args:
        path: CSV with header traj_id,t,x,y or traj_id,t,lat,lon
        fmt: Only "csv" is supported
        sort_rows: Sort each trajectory by time before validation
        reference: (ref_lat, ref_lon) for lat/lon files; defaults to the mean position

    Returns:
        TrajectoryDatabase in order of first appearance of each id
    """
    if fmt != "csv":
        raise MalformedRow(f"Unsupported format: {fmt}")
    frame = _read_csv(path)
    columns = set(frame.columns)
    if set(PLANAR_COLUMNS) <= columns:
        geo = False
    elif set(GEO_COLUMNS) <= columns:
        geo = True
    else:
        raise MalformedRow(f"{path}: header must be {','.join(PLANAR_COLUMNS)} or {','.join(GEO_COLUMNS)}")

    if frame.empty:
        logger.warning(f"{path} has no rows")
        return TrajectoryDatabase([])

    ids = frame["traj_id"].str.strip()
    if (ids == "").any():
        raise MalformedRow(f"{path}: row {int(np.argmax(ids == '')) + 2} has an empty traj_id")

    times = np.array([_parse_time(raw.strip(), row + 2) for row, raw in enumerate(frame["t"])])
    if geo:
        latlon = _numeric(frame, ["lat", "lon"], path)
        ref_lat, ref_lon = reference if reference is not None else tuple(latlon.mean(axis=0))
        xy = np.array([project_latlon(lat, lon, ref_lat, ref_lon) for lat, lon in latlon])
        logger.info(f"Projected lat/lon about ({ref_lat:.6f}, {ref_lon:.6f})")
    else:
        xy = _numeric(frame, ["x", "y"], path)

    data = np.column_stack([xy, times])
    trajectories = []
    groups = ids.groupby(ids, sort=False).indices
    for traj_id in pd.unique(ids):
        rows = np.asarray(groups[traj_id])
        block = data[rows]
        if sort_rows:
            block = block[np.argsort(block[:, 2], kind="stable")]
        if len(block) < 2:
            raise TrajectoryTooShort(f"{path}: trajectory {traj_id} has {len(block)} point(s)")
        trajectories.append(Trajectory(traj_id, block))

    db = TrajectoryDatabase(trajectories)
    logger.info(f"Loaded {db.M} trajectories ({db.N} points) from {path}")
    return db


def save_trajectories(db: TrajectoryDatabase, path: str) -> None:
    """Write a database as traj_id,t,x,y"""
    _ensure_parent(path)
    frame = pd.DataFrame({
        "traj_id": np.repeat(db.ids, db.lengths) if db.M else np.array([], dtype=str),
        "t": db.points[:, 2],
        "x": db.points[:, 0],
        "y": db.points[:, 1],
    })
    frame.to_csv(path, index=False, columns=PLANAR_COLUMNS)
    logger.info(f"Saved {db.M} trajectories to {path}")


def load_workload(path: str) -> QueryWorkload:
    frame = _read_csv(path)
    if not set(WORKLOAD_COLUMNS) <= set(frame.columns):
        raise MalformedRow(f"{path}: header must be {','.join(WORKLOAD_COLUMNS)}")
    boxes = _numeric(frame, WORKLOAD_COLUMNS, path) if not frame.empty else np.zeros((0, 6))
    try:
        return QueryWorkload([RangeQuery(*row) for row in boxes.tolist()])
    except ValueError as e:
        raise MalformedRow(f"{path}: {e}")


def save_workload(workload: QueryWorkload, path: str) -> None:
    _ensure_parent(path)
    pd.DataFrame(workload.as_rows(), columns=WORKLOAD_COLUMNS).to_csv(path, index=False)


def load_centers(path: str) -> np.ndarray:
    """Query centers (x, y, t) for the real distribution"""
    frame = _read_csv(path)
    if not set(CENTER_COLUMNS) <= set(frame.columns):
        raise MalformedRow(f"{path}: header must be {','.join(CENTER_COLUMNS)}")
    if frame.empty:
        raise MalformedRow(f"{path}: no centers")
    return _numeric(frame, CENTER_COLUMNS, path)


def save_kept(view: SimplifiedDatabase, path: str) -> None:
    """Write the kept-index sets as traj_id,kept_index"""
    _ensure_parent(path)
    ids, indices = [], []
    for pos, kept in enumerate(view.kept):
        ids.extend([view.db.trajectories[pos].id] * len(kept))
        indices.extend(kept)
    pd.DataFrame({"traj_id": ids, "kept_index": indices}).to_csv(path, index=False, columns=KEPT_COLUMNS)
    logger.info(f"Saved {view.total} kept points to {path}")


def load_kept(db: TrajectoryDatabase, path: str, budget: Optional[int] = None) -> SimplifiedDatabase:
    frame = _read_csv(path)
    if not set(KEPT_COLUMNS) <= set(frame.columns):
        raise MalformedRow(f"{path}: header must be {','.join(KEPT_COLUMNS)}")
    kept: Dict[int, List[int]] = {pos: [] for pos in range(db.M)}
    for row, (traj_id, raw) in enumerate(zip(frame["traj_id"], frame["kept_index"])):
        try:
            pos = db.position(traj_id.strip())
            index = int(raw)
        except (KeyError, ValueError):
            raise MalformedRow(f"{path}: row {row + 2} ({traj_id}, {raw}) does not match the database")
        if not 0 <= index < len(db[pos]):
            raise MalformedRow(f"{path}: row {row + 2} index {index} out of range")
        kept[pos].append(index)
    for pos, indices in kept.items():
        if 0 not in indices or len(db[pos]) - 1 not in indices:
            raise MalformedRow(f"{path}: trajectory {db[pos].id} is missing an endpoint")
    total = sum(len(set(indices)) for indices in kept.values())
    return SimplifiedDatabase(db, budget if budget is not None else total, kept)


def save_results(rows: List[Dict], path: str, columns: Optional[List[str]] = None) -> None:
    _ensure_parent(path)
    pd.DataFrame(rows, columns=columns or RESULT_COLUMNS).to_csv(path, index=False)
    logger.info(f"Wrote {len(rows)} result rows to {path}")


def load_results(path: str, required: List[str]) -> pd.DataFrame:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise MalformedResults(f"{path}: {e}")
    missing = [column for column in required if column not in frame.columns]
    if missing:
        raise MalformedResults(f"{path}: missing columns {missing}")
    if frame.empty:
        raise MalformedResults(f"{path}: no rows")
    return frame
