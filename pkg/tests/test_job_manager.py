from __future__ import annotations

import threading
import time

import pytest

from crackscat.job_manager import JobRunner


def test_results_in_index_order():
    def slow_square(i):
        time.sleep(0.001 * ((7 * i) % 5))
        return i * i

    assert JobRunner(4).map_indexed("squares", slow_square, 40) == [i * i for i in range(40)]


def test_uses_several_threads():
    names = set()
    lock = threading.Lock()

    def record(i):
        time.sleep(0.005)
        with lock:
            names.add(threading.current_thread().name)
        return i

    JobRunner(3).map_indexed("spread", record, 30)
    assert len(names) > 1
    assert all(n.startswith("crackscat-spread") for n in names)


def test_job_completes():
    runner = JobRunner(2)
    runner.map_indexed("count", lambda i: i, 10)
    (job,) = runner.jobs()
    assert job.status == "completed"
    assert job.done == 10
    assert job.percent == 1.0
    public = job.to_public()
    assert public["name"] == "count"
    assert public["total"] == 10
    assert runner.get_job(job.job_id) is job


def test_empty_job():
    runner = JobRunner(1)
    assert runner.map_indexed("none", lambda i: i, 0) == []
    assert runner.jobs()[0].status == "completed"


@pytest.mark.parametrize("threads", [1, 3])
def test_failure_marks_job(threads):
    def fail_at_five(i):
        if i == 5:
            raise RuntimeError("item 5 broke")
        return i

    runner = JobRunner(threads)
    with pytest.raises(RuntimeError, match="item 5"):
        runner.map_indexed("fragile", fail_at_five, 12)
    (job,) = runner.jobs()
    assert job.status == "failed"
    assert job.message == "item 5 broke"


def test_imap_streams():
    seen = []
    for x in JobRunner(1).imap_indexed("stream", lambda i: i + 1, 3):
        seen.append(x)
    assert seen == [1, 2, 3]


def test_percent_before_start():
    runner = JobRunner(1)
    job = runner.create_job("idle", 4)
    assert job.status == "queued"
    assert job.percent == 0.0
    runner._update(job.job_id, done=2)
    assert job.percent == 0.5
