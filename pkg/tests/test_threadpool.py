import threading

import pytest

from causalgnn.python import limit
from causalgnn.python.threadpool import ThreadPool, run_jobs


def test_limit():
    assert limit(5, min=1, max=3) == 3
    assert limit(-2, min=0) == 0
    assert limit(0.5) == 0.5


class TestRunJobs:
    def test_results_keep_the_item_order(self):
        assert run_jobs(lambda item: item * item, [3, 1, 2], max_threads=3) == [9, 1, 4]

    def test_single_thread_runs_inline(self):
        names = run_jobs(lambda item: threading.current_thread().name, [0, 1], max_threads=1)
        assert names == [threading.current_thread().name] * 2

    def test_jobs_use_worker_threads(self):
        names = run_jobs(lambda item: threading.current_thread().name, [0, 1, 2], max_threads=2, name='seeds')
        assert all('seeds' in name for name in names)

    def test_failures_reach_the_caller(self):
        def job(item):
            if item == 2:
                raise ValueError('job %d failed' % item)
            return item

        with pytest.raises(ValueError, match='job 2 failed'):
            run_jobs(job, [1, 2, 3], max_threads=2)


class TestThreadPool:
    def test_workers_are_bounded(self):
        release = threading.Event()
        with ThreadPool(name='bounded', max_threads=2) as pool:
            jobs = [pool.run(release.wait, 5) for _ in range(4)]
            assert pool.workers == 2
            release.set()
            assert all(job.result(timeout=5) for job in jobs)

    def test_result_timeout(self):
        release = threading.Event()
        with ThreadPool(max_threads=1) as pool:
            job = pool.run(release.wait, 5)
            with pytest.raises(TimeoutError):
                job.result(timeout=0.01)
            release.set()
            assert job.result(timeout=5) is True
