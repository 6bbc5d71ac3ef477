import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, Hashable, TypeVar, Union

logger = logging.getLogger(__name__)

T = TypeVar("T")


class FoldScheduler:
    """
    Runs independent fold jobs on worker threads with bounded concurrency.

    Results are keyed by job name and returned in sorted key order, so the
    outcome does not depend on completion order. A job that raises yields
    its exception object in place of a result.
    """

    def __init__(self, max_concurrency: int = 1):
        if max_concurrency < 1:
            raise ValueError(f"max_concurrency must be >= 1, got {max_concurrency}")
        self.max_concurrency = max_concurrency

    async def _run_with_limit(self, semaphore: asyncio.Semaphore, job: Callable[[], T]) -> T:
        async with semaphore:
            return await asyncio.to_thread(job)

    async def run(self, jobs: Dict[Hashable, Callable[[], T]]) -> Dict[Hashable, Union[T, Exception]]:
        semaphore = asyncio.Semaphore(self.max_concurrency)
        results: Dict[Hashable, Any] = {}

        async def execute(name, job):
            try:
                results[name] = await self._run_with_limit(semaphore, job)
            except Exception as e:
                logger.error(f"Job {name} failed: {e}")
                results[name] = e

        await asyncio.gather(*(execute(name, job) for name, job in jobs.items()))
        return {name: results[name] for name in sorted(results)}

    def run_sync(self, jobs: Dict[Hashable, Callable[[], T]]) -> Dict[Hashable, Union[T, Exception]]:
        """
        Blocking form of `run`.

        When called while an event loop is already running on this thread
        (a notebook or an async caller), the jobs run on a fresh loop in a
        helper thread and this call blocks until they finish.
        """
        try:
            asyncio.get_running_loop()
        except RuntimeError:
            return asyncio.run(self.run(jobs))
        logger.debug("Event loop already running; scheduling jobs on a helper thread")
        with ThreadPoolExecutor(max_workers=1) as pool:
            return pool.submit(asyncio.run, self.run(jobs)).result()
