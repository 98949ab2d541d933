import asyncio
import logging
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from os import getenv

from src import THREADS_ENV_VAR
from src.utils.errors import ErrorCode, RejectKitError

logger = logging.getLogger(__name__)


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value first, then the environment fallback, then 1."""
    if threads is None:
        raw = getenv(THREADS_ENV_VAR, '1') or '1'
        try:
            threads = int(raw)
        except ValueError as err:
            raise RejectKitError(
                ErrorCode.CONFIG_INVALID, f'{THREADS_ENV_VAR}={raw!r} is not an integer'
            ) from err
    if threads < 1:
        raise RejectKitError(ErrorCode.CONFIG_INVALID, f'threads must be >= 1, got {threads}')
    return threads


async def _gather_in_pool[T, R](func: Callable[[T], R], items: list[T], threads: int) -> list[R]:
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=threads, thread_name_prefix='rejectkit') as pool:
        tasks = [loop.run_in_executor(pool, func, item) for item in items]
        return list(await asyncio.gather(*tasks))


def run_parallel[T, R](func: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """
    Map `func` over `items` on a thread pool.

    Results are returned in input order whatever the completion order, so any reduction over
    them is identical to the sequential one.
    """
    work = list(items)
    if threads <= 1 or len(work) <= 1:
        return [func(item) for item in work]
    logger.debug(f'Dispatching {len(work)} work items to {threads} threads')
    return asyncio.run(_gather_in_pool(func, work, min(threads, len(work))))
