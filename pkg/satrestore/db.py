import sqlite3
from datetime import datetime
from pathlib import Path
from typing import Optional

from satrestore.models import PipelineState


def connect(db_path: Path) -> sqlite3.Connection:
    db_path.parent.mkdir(parents=True, exist_ok=True)
    conn = sqlite3.connect(db_path)
    conn.row_factory = sqlite3.Row
    _create_schema(conn)
    return conn


def _create_schema(conn: sqlite3.Connection) -> None:
    conn.executescript("""
        CREATE TABLE IF NOT EXISTS runs (
            id           INTEGER PRIMARY KEY AUTOINCREMENT,
            config_hash  TEXT NOT NULL,
            seed         INTEGER NOT NULL,
            started      TEXT NOT NULL
        );

        CREATE TABLE IF NOT EXISTS stages (
            run_id   INTEGER NOT NULL REFERENCES runs(id),
            stage    TEXT NOT NULL,
            status   TEXT NOT NULL,
            started  TEXT NOT NULL,
            seconds  REAL NOT NULL,
            message  TEXT,
            UNIQUE(run_id, stage)
        );

        CREATE TABLE IF NOT EXISTS artifacts (
            run_id  INTEGER NOT NULL REFERENCES runs(id),
            stage   TEXT NOT NULL,
            path    TEXT NOT NULL,
            sha256  TEXT NOT NULL,
            UNIQUE(run_id, path)
        );
    """)
    conn.commit()


# --- Runs ---

def begin_run(conn: sqlite3.Connection, config_hash: str, seed: int) -> int:
    cursor = conn.execute(
        "INSERT INTO runs (config_hash, seed, started) VALUES (?, ?, ?)",
        (config_hash, seed, _now()),
    )
    conn.commit()
    return cursor.lastrowid


def latest_run(conn: sqlite3.Connection) -> Optional[sqlite3.Row]:
    return conn.execute(
        "SELECT id, config_hash, seed, started FROM runs ORDER BY id DESC LIMIT 1"
    ).fetchone()


def get_run(conn: sqlite3.Connection, run_id: int) -> sqlite3.Row:
    return conn.execute(
        "SELECT id, config_hash, seed, started FROM runs WHERE id = ?", (run_id,)
    ).fetchone()


# --- Stages ---

def upsert_stage(
    conn: sqlite3.Connection,
    run_id: int,
    stage: str,
    status: str,
    started: str,
    seconds: float,
    message: str = "",
) -> None:
    conn.execute(
        """
        INSERT INTO stages (run_id, stage, status, started, seconds, message)
        VALUES (:run_id, :stage, :status, :started, :seconds, :message)
        ON CONFLICT(run_id, stage) DO UPDATE SET
            status  = excluded.status,
            started = excluded.started,
            seconds = excluded.seconds,
            message = excluded.message
        """,
        {"run_id": run_id, "stage": stage, "status": status, "started": started,
         "seconds": seconds, "message": message},
    )
    conn.commit()


def get_stages(conn: sqlite3.Connection, run_id: int) -> list[sqlite3.Row]:
    return conn.execute(
        "SELECT stage, status, started, seconds, message FROM stages WHERE run_id = ? "
        "ORDER BY started, rowid",
        (run_id,),
    ).fetchall()


# --- Artifacts ---

def upsert_artifact(conn: sqlite3.Connection, run_id: int, stage: str, path: str, sha256: str) -> None:
    conn.execute(
        """
        INSERT INTO artifacts (run_id, stage, path, sha256)
        VALUES (?, ?, ?, ?)
        ON CONFLICT(run_id, path) DO UPDATE SET
            stage  = excluded.stage,
            sha256 = excluded.sha256
        """,
        (run_id, stage, path, sha256),
    )
    conn.commit()


def get_artifacts(conn: sqlite3.Connection, run_id: int) -> dict[str, str]:
    rows = conn.execute(
        "SELECT path, sha256 FROM artifacts WHERE run_id = ? ORDER BY path", (run_id,)
    ).fetchall()
    return {r["path"]: r["sha256"] for r in rows}


def get_pipeline_state(conn: sqlite3.Connection, run_id: int) -> Optional[PipelineState]:
    """State after the most recent successful stage of the run, or None if none succeeded."""
    run = get_run(conn, run_id)
    done = [r for r in get_stages(conn, run_id) if r["status"] == "ok"]
    if run is None or not done:
        return None
    return PipelineState(
        stage=done[-1]["stage"],
        config_hash=run["config_hash"],
        artifacts=get_artifacts(conn, run_id),
        run_id=run_id,
    )


def _now() -> str:
    return datetime.now().isoformat(timespec="seconds")
