"""Ordered concurrent execution of independent solver runs.

Each job is a blocking callable pushed to a thread with asyncio.to_thread; a
semaphore bounds how many run at once. Outcomes come back in submission order
regardless of completion order, with exceptions captured per job so one
failing sweep entry does not cancel its siblings.
"""

from __future__ import annotations

import asyncio
import logging
from typing import Callable, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")


async def gather_ordered(
    jobs: Sequence[Callable[[], T]], concurrency: int = 4
) -> list[T | BaseException]:
    """Run ``jobs`` on worker threads, at most ``concurrency`` at a time."""
    semaphore = asyncio.Semaphore(max(1, concurrency))

    async def _run(index: int, job: Callable[[], T]) -> T | BaseException:
        async with semaphore:
            try:
                return await asyncio.to_thread(job)
            except Exception as e:
                logger.error("Job %d failed: %s", index, e)
                return e

    return list(await asyncio.gather(*(_run(i, job) for i, job in enumerate(jobs))))


def run_ordered(
    jobs: Sequence[Callable[[], T]], concurrency: int = 4
) -> list[T | BaseException]:
    """Synchronous wrapper around gather_ordered; runs inline when concurrency <= 1."""
    if concurrency <= 1 or len(jobs) <= 1:
        outcomes: list[T | BaseException] = []
        for index, job in enumerate(jobs):
            try:
                outcomes.append(job())
            except Exception as e:
                logger.error("Job %d failed: %s", index, e)
                outcomes.append(e)
        return outcomes
    logger.debug("Running %d jobs with concurrency %d", len(jobs), concurrency)
    return asyncio.run(gather_ordered(jobs, concurrency))
