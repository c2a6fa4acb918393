"""Deterministic replica scheduling.

Replicas are cut into fixed-size blocks; block ``b`` of a job always draws
from ``RandomStream(master_seed, base_index + b)``. Workers may finish blocks
in any order, results are merged by block index, so output does not depend
on the number of workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, TypeVar

from .core import RandomStream

T = TypeVar("T")

# Each job owns 2**24 consecutive stream indices.
JOB_STRIDE = 1 << 24


@dataclass(frozen=True)
class BlockPlan:
    master_seed: int
    replicas: int
    block_size: int
    base_index: int = 0

    @property
    def n_blocks(self) -> int:
        return -(-self.replicas // self.block_size)

    def blocks(self) -> list[tuple[RandomStream, int]]:
        out = []
        for b in range(self.n_blocks):
            size = min(self.block_size, self.replicas - b * self.block_size)
            out.append((RandomStream(self.master_seed, self.base_index + b), size))
        return out

    @property
    def stream_range(self) -> tuple[int, int]:
        return self.base_index, self.base_index + self.n_blocks


def job_base(job_number: int) -> int:
    return int(job_number) * JOB_STRIDE


def run_blocks(
    fn: Callable[[RandomStream, int], T],
    plan: BlockPlan,
    jobs: int = 1,
) -> list[T]:
    """Evaluate ``fn(stream, size)`` for every block, results in block order."""
    work = plan.blocks()
    if jobs <= 1 or len(work) == 1:
        return [fn(s, n) for s, n in work]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda item: fn(*item), work))
