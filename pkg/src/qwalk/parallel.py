"""Order-preserving fan-out of independent work chunks."""

from concurrent.futures import ProcessPoolExecutor


def map_chunks(fn, tasks, workers=1):
    """Yield ``fn(task)`` for each task, in task order.

    Chunk boundaries are fixed by the caller, never by ``workers``, so the
    reduction order (and every float it produces) is the same for any
    worker count.
    """
    if workers <= 1 or len(tasks) <= 1:
        for task in tasks:
            yield fn(task)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(fn, tasks)
