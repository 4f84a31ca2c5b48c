"""Region-parallel map.

Work items are independent per-region computations; results come back in
submission order so reductions done afterwards stay deterministic. The numba
kernels release the GIL, so a thread pool is enough.
"""
from concurrent.futures import ThreadPoolExecutor

_pools = {}


def region_map(func, items, workers=1):
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    pool = _pools.get(workers)
    if pool is None:
        pool = _pools[workers] = ThreadPoolExecutor(max_workers=workers,
                                                    thread_name_prefix="region")
    return list(pool.map(func, items))
