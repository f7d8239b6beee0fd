from __future__ import annotations

import logging
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")

_CHUNK = 2048


@dataclass
class Job:
    job_id: str
    name: str
    total: int
    status: str = "queued"  # queued|running|completed|failed
    done: int = 0
    message: str = ""
    created_at: float = field(default_factory=time.time)
    updated_at: float = field(default_factory=time.time)

    @property
    def percent(self) -> float:
        if self.status == "completed":
            return 1.0
        if self.total <= 0:
            return 0.0
        return min(1.0, self.done / self.total)

    @property
    def elapsed(self) -> float:
        return self.updated_at - self.created_at

    def to_public(self) -> dict[str, Any]:
        return {
            "job_id": self.job_id,
            "name": self.name,
            "status": self.status,
            "message": self.message,
            "done": self.done,
            "total": self.total,
            "percent": round(float(self.percent), 4),
            "elapsed": round(self.elapsed, 3),
        }


class JobRunner:
    """Runs indexed work items on a thread pool and tracks their progress.

    Results always come back in index order, so anything seeded per index is
    independent of how the pool schedules the work.
    """

    def __init__(self, threads: int = 1, log_every: float = 5.0):
        self.threads = max(1, int(threads))
        self.log_every = log_every
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()

    def create_job(self, name: str, total: int) -> Job:
        job = Job(job_id=str(uuid.uuid4()), name=name, total=int(total))
        with self._lock:
            self._jobs[job.job_id] = job
        return job

    def get_job(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def jobs(self) -> list[Job]:
        with self._lock:
            return list(self._jobs.values())

    def _update(self, job_id: str, **kwargs: Any) -> None:
        with self._lock:
            j = self._jobs.get(job_id)
            if not j:
                return
            for k, v in kwargs.items():
                setattr(j, k, v)
            j.updated_at = time.time()

    def imap_indexed(self, name: str, fn: Callable[[int], T], count: int) -> Iterator[T]:
        job = self.create_job(name, count)
        self._update(job.job_id, status="running", message="Running...")
        last_log = time.time()
        done = 0
        try:
            if self.threads == 1:
                chunks: Iterator[Any] = ((fn(i),) for i in range(count))
                pool = None
            else:
                pool = ThreadPoolExecutor(max_workers=self.threads, thread_name_prefix=f"crackscat-{name}")
                chunks = self._pooled(pool, fn, count)
            try:
                for batch in chunks:
                    for item in batch:
                        done += 1
                        yield item
                    self._update(job.job_id, done=done)
                    now = time.time()
                    if now - last_log >= self.log_every:
                        last_log = now
                        logger.info("%s: %d/%d (%.1f%%)", name, done, count, 100.0 * done / max(count, 1))
            finally:
                if pool is not None:
                    pool.shutdown(wait=True, cancel_futures=True)
        except Exception as e:
            self._update(job.job_id, status="failed", message=str(e))
            raise
        self._update(job.job_id, status="completed", message="Completed", done=done)
        cur = self.get_job(job.job_id)
        logger.debug("%s finished in %.2fs", name, cur.elapsed if cur else 0.0)

    def map_indexed(self, name: str, fn: Callable[[int], T], count: int) -> list[T]:
        return list(self.imap_indexed(name, fn, count))

    def _pooled(self, pool: ThreadPoolExecutor, fn: Callable[[int], T], count: int) -> Iterator[list[T]]:
        # 分块提交，避免一次性堆积全部 future
        for start in range(0, count, _CHUNK):
            stop = min(count, start + _CHUNK)
            yield list(pool.map(fn, range(start, stop)))
