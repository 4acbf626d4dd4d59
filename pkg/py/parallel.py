# process-pool fan-out shared by synthesis and rendering
import contextlib
import multiprocessing as mp
import multiprocessing.pool as mpp
import os

import torch
import tqdm

from config import THREADS_ENV


def istarmap(self, func, iterable, chunksize=1):
    """starmap-version of imap"""
    self._check_running()
    if chunksize < 1:
        raise ValueError("Chunksize must be 1+, not {0:n}".format(chunksize))

    task_batches = mpp.Pool._get_tasks(func, iterable, chunksize)
    result = mpp.IMapIterator(self)
    self._taskqueue.put(
        (
            self._guarded_task_generation(result._job, mpp.starmapstar, task_batches),
            result._set_length,
        )
    )
    return (item for chunk in result for item in chunk)


mpp.Pool.istarmap = istarmap


def resolve_threads(threads=None):
    """--threads value, else $LF_THREADS, else the machine's core count."""
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else (os.cpu_count() or 1)
    if threads < 1:
        raise ValueError(f"thread count must be at least 1, got {threads}")
    return threads


@contextlib.contextmanager
def single_threaded_torch():
    previous = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.set_num_threads(previous)


def _init_worker(initializer, initargs):
    torch.set_num_threads(1)
    if initializer is not None:
        initializer(*initargs)


def _pool_context():
    if "fork" in mp.get_all_start_methods():
        return mp.get_context("fork")
    return mp.get_context()


def run_chunks(func, tasks, threads=1, initializer=None, initargs=(), desc=None, progress=True):
    """Apply `func(*task)` to every task and yield the results in task order.

    Work units are fixed by the caller; the thread count only decides how many
    processes share them, so results do not depend on it.
    """
    tasks = list(tasks)
    bar = dict(total=len(tasks), desc=desc, disable=not progress, leave=False)
    if threads == 1 or len(tasks) <= 1:
        with single_threaded_torch():
            if initializer is not None:
                initializer(*initargs)
            for task in tqdm.tqdm(tasks, **bar):
                yield func(*task)
        return

    with _pool_context().Pool(
        processes=min(threads, len(tasks)),
        initializer=_init_worker,
        initargs=(initializer, initargs),
    ) as p:
        yield from tqdm.tqdm(p.istarmap(func, tasks), **bar)
