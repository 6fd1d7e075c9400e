from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Optional, TypeVar

from ulrs.common.config import get_settings

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(
    fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None
) -> list[R]:
    """
    Apply `fn` to every item, possibly on a thread pool.

    Results come back in input order whatever the worker count, so callers can
    aggregate them deterministically. numpy/scipy release the GIL inside the
    linear algebra, which is where per-signal coding spends its time.
    """
    workers = workers or get_settings().workers
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
