"""Arena-style memory pool for activation buffers.

Blocks are handed out first-fit in creation order and only go back to the
system when the pool itself is dropped. A decode pass that repeats the
acquire/release sequence of an earlier pass (after :meth:`MemoryPool.reset`)
therefore lands on exactly the same blocks and allocates nothing new.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ResourceError

_ALIGN = 64


@dataclass
class PoolStats:
    system_allocs: int = 0
    reuses: int = 0
    peak_bytes: int = 0  # high-water mark of bytes held by in-use blocks


class Block:
    __slots__ = ("index", "capacity", "data", "in_use")

    def __init__(self, index: int, capacity: int):
        self.index = index
        self.capacity = capacity
        self.data = np.empty(capacity, dtype=np.uint8)
        self.in_use = False

    def view(self, shape: tuple[int, ...], dtype) -> np.ndarray:
        dtype = np.dtype(dtype)
        n = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if n > self.capacity:
            raise ValueError(f"block of {self.capacity} bytes cannot hold {shape} {dtype}")
        return self.data[:n].view(dtype).reshape(shape)


class MemoryPool:
    def __init__(self) -> None:
        self.blocks: list[Block] = []
        self.stats = PoolStats()
        self._in_use_bytes = 0

    def acquire(self, nbytes: int) -> Block:
        if nbytes <= 0:
            raise ValueError(f"pool request must be positive, got {nbytes}")
        for blk in self.blocks:
            if not blk.in_use and blk.capacity >= nbytes:
                self.stats.reuses += 1
                return self._take(blk)
        capacity = -(-nbytes // _ALIGN) * _ALIGN
        try:
            blk = Block(len(self.blocks), capacity)
        except MemoryError as exc:
            raise ResourceError(f"pool could not allocate {capacity} bytes") from exc
        self.blocks.append(blk)
        self.stats.system_allocs += 1
        return self._take(blk)

    def _take(self, blk: Block) -> Block:
        blk.in_use = True
        self._in_use_bytes += blk.capacity
        self.stats.peak_bytes = max(self.stats.peak_bytes, self._in_use_bytes)
        return blk

    def release(self, blk: Block) -> None:
        if blk.in_use:
            blk.in_use = False
            self._in_use_bytes -= blk.capacity

    def reset(self) -> None:
        for blk in self.blocks:
            blk.in_use = False
        self._in_use_bytes = 0

    def empty(self, shape: tuple[int, ...], dtype) -> tuple[Block, np.ndarray]:
        """Acquire a block sized for ``shape`` and return it with a typed view."""
        dtype = np.dtype(dtype)
        nbytes = max(int(np.prod(shape, dtype=np.int64)) * dtype.itemsize, 1)
        blk = self.acquire(nbytes)
        return blk, blk.view(shape, dtype)

    @property
    def capacity_bytes(self) -> int:
        return sum(b.capacity for b in self.blocks)


def pool_acquire(pool: MemoryPool, nbytes: int) -> Block:
    return pool.acquire(nbytes)


def pool_reset(pool: MemoryPool) -> None:
    pool.reset()
