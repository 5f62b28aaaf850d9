from __future__ import annotations

import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from functools import partial
from typing import Any, Callable, Iterable, Optional, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")


def executor(jobs: int) -> Optional[ThreadPoolExecutor]:
    """Thread pool with jobs workers, None for jobs == 1 so calls run inline."""
    if jobs < 1:
        raise ValueError(f"jobs must be at least 1, got {jobs}")
    return ThreadPoolExecutor(max_workers=jobs, thread_name_prefix="dualspectra") if jobs > 1 else None


async def run(pool: Optional[ThreadPoolExecutor], fn: Callable[..., T], *args: Any, **kwargs: Any) -> T:
    if pool is None:
        return fn(*args, **kwargs)
    loop = asyncio.get_running_loop()
    return await loop.run_in_executor(pool, partial(fn, *args, **kwargs))


async def map_ordered(
    pool: Optional[ThreadPoolExecutor], fn: Callable[..., T], items: Iterable[Any], **kwargs: Any
) -> list[T]:
    """
    fn(item, **kwargs) for every item, results in input order

    :param pool: worker pool, or None to evaluate sequentially on the loop thread
    :return: list aligned with items
    """
    items = list(items)
    logger.debug(f"dispatching {len(items)} calls of {getattr(fn, '__name__', fn)}")
    return list(await asyncio.gather(*(run(pool, fn, item, **kwargs) for item in items)))
