"""Tests for ordered concurrent job execution."""

from __future__ import annotations

import threading
import time

from src.tasks.pool import gather_ordered, run_ordered


def _sleeper(value: int, delay: float):
    def job() -> int:
        time.sleep(delay)
        return value

    return job


def _failing() -> int:
    raise ValueError("boom")


class TestGatherOrdered:
    async def test_preserves_submission_order(self):
        jobs = [_sleeper(0, 0.05), _sleeper(1, 0.0), _sleeper(2, 0.02)]
        assert await gather_ordered(jobs, concurrency=3) == [0, 1, 2]

    async def test_captures_exceptions(self):
        outcomes = await gather_ordered([_sleeper(1, 0.0), _failing, _sleeper(3, 0.0)])
        assert outcomes[0] == 1
        assert isinstance(outcomes[1], ValueError)
        assert outcomes[2] == 3

    async def test_concurrency_bound(self):
        lock = threading.Lock()
        active = [0]
        peak = [0]

        def job() -> None:
            with lock:
                active[0] += 1
                peak[0] = max(peak[0], active[0])
            time.sleep(0.02)
            with lock:
                active[0] -= 1

        await gather_ordered([job] * 6, concurrency=2)
        assert peak[0] <= 2


class TestRunOrdered:
    def test_inline(self):
        seen = []

        def job(value: int):
            def inner() -> int:
                seen.append(threading.get_ident())
                return value

            return inner

        assert run_ordered([job(1), job(2)], concurrency=1) == [1, 2]
        assert set(seen) == {threading.get_ident()}

    def test_inline_captures_exceptions(self):
        outcomes = run_ordered([_failing, _sleeper(5, 0.0)], concurrency=1)
        assert isinstance(outcomes[0], ValueError)
        assert outcomes[1] == 5

    def test_threaded(self):
        jobs = [_sleeper(k, 0.01 * (3 - k)) for k in range(3)]
        assert run_ordered(jobs, concurrency=3) == [0, 1, 2]

    def test_empty(self):
        assert run_ordered([]) == []
