"""Persistent generation jobs: bounded queue, worker pool, atomic job state.

Each job owns a directory {state}/jobs/{id}/ holding job.json (atomically
replaced on every update), result.png and trace.jsonl. A restart marks any
job found queued/running as failed with reason "interrupted".
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

from ..errors import MepgError

DEFAULT_QUEUE_LIMIT = 16

QUEUED = "queued"
RUNNING = "running"
DONE = "done"
FAILED = "failed"


class QueueFull(MepgError):
    pass


@dataclass
class JobRecord:
    job_id: str
    status: str
    request: dict
    progress: dict = field(default_factory=lambda: {"completed": 0, "total": 0})
    result_path: Optional[str] = None
    error: Optional[str] = None
    created: float = 0.0
    finished: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def atomic_write_json(path: Path, doc: dict) -> None:
    """Write via temp file + rename so readers never see a torn file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


# runner(job_dir, request, progress_cb) -> path of the result image
Runner = Callable[[Path, dict, Callable[[int, int], None]], Path]


class JobStore:
    """Single-writer-per-job-directory discipline; jobs are independent."""

    def __init__(self, state_dir: str | Path, runner: Runner,
                 workers: int = 0, queue_limit: int = DEFAULT_QUEUE_LIMIT):
        self.state_dir = Path(state_dir)
        self.jobs_dir = self.state_dir / "jobs"
        self.jobs_dir.mkdir(parents=True, exist_ok=True)
        self.runner = runner
        self.queue_limit = queue_limit
        if workers <= 0:
            workers = min(4, os.cpu_count() or 1)
        self._pool = ThreadPoolExecutor(max_workers=workers,
                                        thread_name_prefix="mepg-job")
        self._lock = threading.Lock()
        self._pending = 0  # queued + running
        self._recover()

    # --- persistence ---

    def job_dir(self, job_id: str) -> Path:
        return self.jobs_dir / job_id

    def _write(self, rec: JobRecord) -> None:
        atomic_write_json(self.job_dir(rec.job_id) / "job.json", rec.to_dict())

    def get(self, job_id: str) -> Optional[JobRecord]:
        path = self.job_dir(job_id) / "job.json"
        if not path.exists():
            return None
        try:
            return JobRecord(**json.loads(path.read_text()))
        except (json.JSONDecodeError, TypeError):
            return None

    def _recover(self) -> None:
        for jdir in self.jobs_dir.iterdir() if self.jobs_dir.exists() else []:
            rec = self.get(jdir.name)
            if rec and rec.status in (QUEUED, RUNNING):
                rec.status = FAILED
                rec.error = "interrupted"
                rec.finished = time.time()
                self._write(rec)

    # --- lifecycle ---

    def submit(self, request: dict) -> str:
        with self._lock:
            if self._pending >= self.queue_limit:
                raise QueueFull(f"job queue is full ({self.queue_limit})")
            self._pending += 1
        job_id = uuid.uuid4().hex
        rec = JobRecord(job_id=job_id, status=QUEUED, request=request,
                        created=time.time())
        self._write(rec)
        self._pool.submit(self._run, job_id)
        return job_id

    def _run(self, job_id: str) -> None:
        rec = self.get(job_id)
        if rec is None:
            with self._lock:
                self._pending -= 1
            return
        rec.status = RUNNING
        self._write(rec)

        def on_progress(done: int, total: int) -> None:
            rec.progress = {"completed": done, "total": total}
            self._write(rec)

        try:
            result = self.runner(self.job_dir(job_id), rec.request, on_progress)
            rec.status = DONE
            rec.result_path = str(result)
        except Exception as exc:  # report any failure through the record
            rec.status = FAILED
            rec.error = f"{type(exc).__name__}: {exc}"
        finally:
            rec.finished = time.time()
            self._write(rec)
            with self._lock:
                self._pending -= 1

    def shutdown(self) -> None:
        self._pool.shutdown(wait=True)
