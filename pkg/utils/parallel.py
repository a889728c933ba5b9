# utils/parallel.py
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

from utils.rng import chunk_bounds
from utils.logger import get_logger

logger = get_logger(__name__)

T = TypeVar("T")


def map_path_chunks(
    func: Callable[[int, int], T],
    n_paths: int,
    chunk: int,
    threads: int = 1,
    name: str = "PathWorker",
) -> list[T]:
    """
    Run func(start, stop) over consecutive path blocks, results in block order.

    Every block draws from per-path random streams, so the result does not
    depend on the thread count.

    :param func: Worker taking a [start, stop) path range.
    :param n_paths: Total number of paths.
    :param chunk: Paths per block.
    :param threads: Worker threads; 1 runs inline.
    :param name: Thread name prefix.
    """
    bounds = chunk_bounds(n_paths, chunk)
    if threads <= 1 or len(bounds) == 1:
        results = []
        for start, stop in bounds:
            results.append(func(start, stop))
            logger.debug(f"{name}: paths {start}..{stop - 1} done")
        return results
    with ThreadPoolExecutor(max_workers=threads, thread_name_prefix=name) as executor:
        futures = [executor.submit(func, start, stop) for start, stop in bounds]
        results = []
        for (start, stop), future in zip(bounds, futures):
            try:
                results.append(future.result())
            except Exception as e:
                logger.error(f"{name}: paths {start}..{stop - 1} failed: {e}")
                raise
            logger.debug(f"{name}: paths {start}..{stop - 1} done")
        return results
