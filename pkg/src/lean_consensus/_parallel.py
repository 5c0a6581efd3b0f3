from concurrent.futures import ProcessPoolExecutor


def parallel_map(fn, tasks, jobs: int = 1) -> list:
    """Order-preserving map; ``jobs > 1`` fans out to worker processes."""
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def chunk_ranges(total: int, size: int):
    return [(lo, min(lo + size, total)) for lo in range(0, total, size)]
