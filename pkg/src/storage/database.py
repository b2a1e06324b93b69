# Module: database.py
# Purpose: SQLite history of experiment runs and their checks

import sqlite3
import logging
import os
from contextlib import contextmanager
from typing import Iterator, List, Dict, Any, Optional


class RunDatabase:
    def __init__(self, db_path: str = "data/history.db"):
        self.db_path = db_path
        self.logger = logging.getLogger(__name__)
        self._memory_conn: Optional[sqlite3.Connection] = None
        self.ensure_database_exists()

    @contextmanager
    def _connect(self) -> Iterator[sqlite3.Connection]:
        """File connections are closed on exit, even when a statement raises"""
        if self._memory_conn is not None:
            yield self._memory_conn
            return
        conn = sqlite3.connect(self.db_path)
        try:
            yield conn
        finally:
            conn.close()

    def ensure_database_exists(self):
        """Create database and tables if they don't exist"""
        try:
            directory = os.path.dirname(self.db_path)
            if directory:
                os.makedirs(directory, exist_ok=True)

            with self._connect() as conn:
                self.create_default_schema(conn)
                conn.commit()
                self.logger.info(f"Run history database: {self.db_path}")

        except Exception as e:
            self.logger.error(f"Database initialization error: {e}")
            # Fall back to an in-memory database kept open for the whole run
            self.db_path = ":memory:"
            self._memory_conn = sqlite3.connect(":memory:")
            self.create_default_schema(self._memory_conn)

    def create_default_schema(self, conn):
        """Create default database schema"""
        conn.executescript("""
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                timestamp TEXT NOT NULL DEFAULT (datetime('now')),
                command TEXT NOT NULL,
                config_path TEXT,
                config_sha256 TEXT,
                seed INTEGER,
                exit_code INTEGER NOT NULL,
                summary TEXT,
                execution_time REAL
            );

            CREATE TABLE IF NOT EXISTS check_results (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id INTEGER NOT NULL,
                check_name TEXT NOT NULL,
                status TEXT NOT NULL,
                value REAL,
                FOREIGN KEY (run_id) REFERENCES runs(id)
            );

            CREATE TABLE IF NOT EXISTS settings (
                key TEXT PRIMARY KEY,
                value TEXT NOT NULL,
                updated_at TEXT NOT NULL DEFAULT (datetime('now'))
            );
        """)

    def save_run(self, command: str, config_path: str, config_sha256: str, seed: Optional[int],
                 exit_code: int, summary: str, execution_time: float) -> int:
        """
        Save one command run and return its ID (-1 on failure)
        """
        try:
            with self._connect() as conn:
                cursor = conn.execute("""
                    INSERT INTO runs
                    (command, config_path, config_sha256, seed, exit_code, summary, execution_time)
                    VALUES (?, ?, ?, ?, ?, ?, ?)
                """, (command, config_path, config_sha256, seed, exit_code, summary, execution_time))
                conn.commit()
                return cursor.lastrowid

        except Exception as e:
            self.logger.error(f"Error saving run: {e}")
            return -1

    def save_check_results(self, run_id: int, checks: List[Dict[str, Any]]):
        """Save the named pass/fail checks of a run"""
        try:
            with self._connect() as conn:
                conn.executemany("""
                    INSERT INTO check_results (run_id, check_name, status, value)
                    VALUES (?, ?, ?, ?)
                """, [(run_id, check.get("name", ""), "pass" if check.get("passed") else "fail",
                       check.get("value")) for check in checks])
                conn.commit()
        except Exception as e:
            self.logger.error(f"Error saving check results: {e}")

    def get_recent_runs(self, limit: int = 100) -> List[Dict[str, Any]]:
        """Get recent runs, newest first"""
        try:
            with self._connect() as conn:
                conn.row_factory = sqlite3.Row
                cursor = conn.execute("""
                    SELECT * FROM runs
                    ORDER BY id DESC
                    LIMIT ?
                """, (limit,))
                return [dict(row) for row in cursor.fetchall()]

        except Exception as e:
            self.logger.error(f"Error getting history: {e}")
            return []

    def get_check_results(self, run_id: int) -> List[Dict[str, Any]]:
        try:
            with self._connect() as conn:
                conn.row_factory = sqlite3.Row
                cursor = conn.execute("SELECT * FROM check_results WHERE run_id = ? ORDER BY id", (run_id,))
                return [dict(row) for row in cursor.fetchall()]
        except Exception as e:
            self.logger.error(f"Error getting check results: {e}")
            return []

    def save_setting(self, key: str, value: str):
        """Remember a runner setting such as the last config path"""
        try:
            with self._connect() as conn:
                conn.execute("""
                    INSERT OR REPLACE INTO settings (key, value, updated_at)
                    VALUES (?, ?, datetime('now'))
                """, (key, value))
                conn.commit()
        except Exception as e:
            self.logger.error(f"Error saving setting: {e}")

    def get_setting(self, key: str, default: str = "") -> str:
        try:
            with self._connect() as conn:
                row = conn.execute("SELECT value FROM settings WHERE key = ?", (key,)).fetchone()
                return row[0] if row else default
        except Exception as e:
            self.logger.error(f"Error getting setting: {e}")
            return default
