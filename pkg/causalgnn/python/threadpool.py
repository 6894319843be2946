"""A thread pool that runs independent jobs (one per seed) and hands back their results"""

from itertools import count
from queue import Queue
from threading import Event, Lock, Thread, current_thread

from causalgnn import log
from causalgnn.python import limit


__all__ = 'ThreadPool', 'Job', 'run_jobs'


logger = log.get_logger(__name__)


class Job(object):
    __slots__ = 'function', 'args', 'kw', '_done', '_result', '_exception'

    # noinspection PyShadowingBuiltins
    def __init__(self, function, args, kw):
        self.function = function
        self.args = args
        self.kw = kw
        self._done = Event()
        self._result = None
        self._exception = None

    def __call__(self):
        try:
            self._result = self.function(*self.args, **self.kw)
        except BaseException as e:
            self._exception = e
            raise
        finally:
            self._done.set()

    @property
    def done(self):
        return self._done.is_set()

    def result(self, timeout=None):
        """Wait for the job to finish and return its result, re-raising its exception if it failed"""
        if not self._done.wait(timeout):
            raise TimeoutError('job did not finish in time')
        if self._exception is not None:
            raise self._exception
        return self._result


class ThreadPool(object):
    StopWorker = object()

    def __init__(self, name=None, max_threads=4):
        assert max_threads > 0, 'invalid bounds'
        self.name = name
        self.max_threads = max_threads
        self._lock = Lock()
        self._queue = Queue()
        self._thread_id = count(1)
        self._threads = []
        self._started = False
        self.workers = 0
        self.jobs = 0

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        self.stop()
        return False

    def start(self):
        with self._lock:
            if self._started:
                return
            self._started = True
            needed_workers = limit(self.jobs, min=1, max=self.max_threads)
            while self.workers < needed_workers:
                self._start_worker()

    def stop(self):
        with self._lock:
            if not self._started:
                return
            self._started = False
            threads = self._threads[:]
            while self.workers:
                self._stop_worker()
        for thread in threads:
            thread.join()

    def run(self, func, *args, **kw):
        job = Job(func, args, kw)
        with self._lock:
            self._queue.put(job)
            self.jobs += 1
            if self._started and self.workers < limit(self.jobs, max=self.max_threads):
                self._start_worker()
        return job

    def _start_worker(self):
        # Must be called with the lock held
        self.workers += 1
        name = '%sThread-%s-%s' % (self.__class__.__name__, self.name or id(self), next(self._thread_id))
        thread = Thread(target=self._worker, name=name)
        self._threads.append(thread)
        thread.daemon = True
        thread.start()

    def _stop_worker(self):
        # Must be called with the lock held
        self._queue.put(self.StopWorker)
        self.workers -= 1

    def _worker(self):
        thread = current_thread()
        while True:
            job = self._queue.get()
            if job is self.StopWorker:
                break
            # noinspection PyBroadException
            try:
                job()
            except Exception:
                logger.exception('Unhandled exception while calling %r in the %r thread' % (job.function, thread.name))
            finally:
                with self._lock:
                    self.jobs -= 1
                del job
        with self._lock:
            self._threads.remove(thread)


def run_jobs(func, items, max_threads=1, name=None):
    """Call func on every item and return the results in item order; max_threads=1 runs inline"""
    items = list(items)
    if max_threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPool(name=name, max_threads=min(max_threads, len(items))) as pool:
        jobs = [pool.run(func, item) for item in items]
        return [job.result() for job in jobs]
