"""
SQLite run log for bench and sweep results
"""

import contextlib
import json
import logging
import os
import sqlite3
import uuid
from datetime import datetime
from threading import Lock
from typing import Any, Dict, List, Optional

import pandas as pd

logger = logging.getLogger(__name__)

SCHEMA = """
CREATE TABLE IF NOT EXISTS runs (
    run_id TEXT PRIMARY KEY,
    command TEXT NOT NULL,
    started_at TEXT NOT NULL,
    settings_json TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS results (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    run_id TEXT NOT NULL REFERENCES runs(run_id),
    row_json TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_results_run ON results(run_id);
"""


class ResultsStore:
    """SQLite-backed results log with thread-safe, context-managed connections"""

    def __init__(self, db_path: str):
        self.db_path = db_path
        self._lock = Lock()
        self._ensure_database()

    def _ensure_database(self) -> None:
        """Create the database file and schema if missing"""
        directory = os.path.dirname(self.db_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with self._get_connection() as conn:
            conn.executescript(SCHEMA)

    @contextlib.contextmanager
    def _get_connection(self):
        """Get a database connection with proper handling"""
        conn = sqlite3.connect(self.db_path, timeout=30.0)
        conn.row_factory = sqlite3.Row
        conn.execute("PRAGMA foreign_keys = ON")
        try:
            yield conn
            conn.commit()
        except Exception:
            conn.rollback()
            raise
        finally:
            conn.close()

    def start_run(self, command: str, settings: Optional[Dict[str, Any]] = None) -> str:
        """
        Register a new run

        Args:
            command: CLI subcommand (bench, sweep)
            settings: JSON-serializable experiment settings

        Returns:
            The run id
        """
        run_id = uuid.uuid4().hex
        with self._lock:
            try:
                with self._get_connection() as conn:
                    conn.execute(
                        "INSERT INTO runs (run_id, command, started_at, settings_json) VALUES (?, ?, ?, ?)",
                        (run_id, command, datetime.now().isoformat(), json.dumps(settings or {}, default=str)),
                    )
                logger.info(f"Started {command} run {run_id}")
                return run_id
            except sqlite3.Error as e:
                logger.error(f"Failed to register run: {e}")
                raise

    def append_rows(self, run_id: str, rows: List[Dict[str, Any]]) -> None:
        """Append result rows to a run"""
        with self._lock:
            try:
                with self._get_connection() as conn:
                    conn.executemany(
                        "INSERT INTO results (run_id, row_json) VALUES (?, ?)",
                        [(run_id, json.dumps(row, default=float)) for row in rows],
                    )
                logger.debug(f"Logged {len(rows)} row(s) for run {run_id}")
            except sqlite3.Error as e:
                logger.error(f"Failed to log results for run {run_id}: {e}")
                raise

    def list_runs(self) -> List[Dict[str, Any]]:
        with self._get_connection() as conn:
            cursor = conn.execute("""
                SELECT r.run_id, r.command, r.started_at, COUNT(x.id) AS row_count
                FROM runs r LEFT JOIN results x ON x.run_id = r.run_id
                GROUP BY r.run_id
                ORDER BY r.started_at
            """)
            return [dict(row) for row in cursor.fetchall()]

    def load_rows(self, run_id: Optional[str] = None) -> pd.DataFrame:
        """
        Result rows as a DataFrame with run_id and started_at columns

        Args:
            run_id: Restrict to one run; all runs when omitted
        """
        query = """
            SELECT x.run_id, r.started_at, x.row_json
            FROM results x JOIN runs r ON r.run_id = x.run_id
        """
        params: tuple = ()
        if run_id is not None:
            query += " WHERE x.run_id = ?"
            params = (run_id,)
        query += " ORDER BY x.id"
        with self._get_connection() as conn:
            rows = conn.execute(query, params).fetchall()
        records = [{"run_id": row["run_id"], "started_at": row["started_at"], **json.loads(row["row_json"])}
                   for row in rows]
        return pd.DataFrame.from_records(records)
