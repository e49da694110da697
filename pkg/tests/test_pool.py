import numpy as np
import pytest

from dsnmt.pool import MemoryPool, pool_acquire, pool_reset


def test_reuse_after_reset():
    pool = MemoryPool()
    pool_acquire(pool, 100)
    pool_reset(pool)
    blk = pool_acquire(pool, 80)
    assert blk.capacity >= 80
    assert pool.stats.system_allocs == 1
    assert pool.stats.reuses == 1


def test_no_fitting_block():
    pool = MemoryPool()
    pool_acquire(pool, 100)
    pool_reset(pool)
    pool_acquire(pool, 200)
    assert pool.stats.system_allocs == 2


def test_reset_keeps_capacity():
    pool = MemoryPool()
    for n in (10, 300, 5000):
        pool.acquire(n)
    cap = pool.capacity_bytes
    pool.reset()
    assert pool.capacity_bytes == cap
    assert not any(b.in_use for b in pool.blocks)


def test_release_and_first_fit():
    pool = MemoryPool()
    a = pool.acquire(1000)
    b = pool.acquire(64)
    pool.release(a)
    c = pool.acquire(500)
    assert c is a
    assert b.in_use and pool.stats.system_allocs == 2


def test_rejects_nonpositive():
    with pytest.raises(ValueError):
        MemoryPool().acquire(0)


def test_typed_view_and_peak():
    pool = MemoryPool()
    blk, arr = pool.empty((3, 4), np.float32)
    arr[...] = 1.5
    assert arr.shape == (3, 4) and blk.capacity >= 48
    pool.empty((100,), np.float16)
    peak = pool.stats.peak_bytes
    pool.reset()
    pool.empty((2,), np.float32)
    assert pool.stats.peak_bytes == peak


def test_replayed_sequence_allocates_nothing():
    rng = np.random.default_rng(0)
    ops = []
    live = []
    for _ in range(300):
        if live and rng.random() < 0.4:
            ops.append(("rel", live.pop(int(rng.integers(len(live))))))
        else:
            ops.append(("acq", len(ops), int(rng.integers(1, 5000))))
            live.append(len(ops) - 1)

    def replay(pool):
        held = {}
        for op in ops:
            if op[0] == "acq":
                held[op[1]] = pool.acquire(op[2])
            else:
                pool.release(held.pop(op[1]))

    pool = MemoryPool()
    replay(pool)
    first = pool.stats.system_allocs
    pool.reset()
    replay(pool)
    assert pool.stats.system_allocs == first
