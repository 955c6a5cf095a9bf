"""
SQLite run log: one row per CLI run.
"""
import sqlite3
from typing import Dict, List, Optional
from pathlib import Path


class RunLog:
    """SQLite database recording every experiment run."""

    def __init__(self, db_path: str = "data/smoothlab.db"):
        self.db_path = db_path
        Path(db_path).parent.mkdir(parents=True, exist_ok=True)
        self._init_db()

    def _init_db(self):
        """Initialize database tables."""
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        cursor.execute("""
            CREATE TABLE IF NOT EXISTS run_log (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_timestamp TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                experiment TEXT NOT NULL,
                config_path TEXT,
                seed INTEGER,
                status TEXT NOT NULL,
                exit_code INTEGER NOT NULL,
                report_path TEXT,
                errors TEXT
            )
        """)

        conn.commit()
        conn.close()

    def log_run(
        self,
        experiment: str,
        seed: Optional[int],
        status: str,
        exit_code: int,
        config_path: Optional[str] = None,
        report_path: Optional[str] = None,
        errors: Optional[str] = None,
    ) -> int:
        """Log a run. Returns the row id."""
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()
        cursor.execute("""
            INSERT INTO run_log (experiment, config_path, seed, status, exit_code, report_path, errors)
            VALUES (?, ?, ?, ?, ?, ?, ?)
        """, (experiment, config_path, seed, status, exit_code, report_path, errors))
        run_id = cursor.lastrowid
        conn.commit()
        conn.close()
        return run_id

    def recent_runs(self, limit: int = 20) -> List[Dict]:
        """Most recent runs first."""
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()
        cursor.execute("""
            SELECT * FROM run_log
            ORDER BY id DESC
            LIMIT ?
        """, (limit,))

        columns = [desc[0] for desc in cursor.description]
        runs = [dict(zip(columns, row)) for row in cursor.fetchall()]
        conn.close()
        return runs
