"""Concurrent global-to-local ID compaction.

The table is open-addressing with linear probing. ``build`` fuses hash-table
construction with local-ID assignment in a single pass: workers race on a
hardware compare-and-swap of the slot key (store the global ID iff the slot
still holds the sentinel, returning the prior key); the winner claims the next
local ID with an atomic fetch-add and writes it into the slot value. No
barrier exists between individual insertions — the only synchronization point
is the completion join separating the build phase from all reads.

Atomics come from libatomic via ctypes and run inside numba ``nogil`` kernels,
so worker threads execute truly in parallel. ``build_locked_baseline`` is the
contrast case for benchmarks: identical functional contract, but every
insertion happens under one global spin mutex.
"""

from __future__ import annotations

import ctypes
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from numba import njit, uint64

from .errors import CapacityError, NotFoundError, ValidationError
from .sampler import SubgraphBatch

__all__ = [
    "SENTINEL",
    "IdMapTable",
    "build",
    "build_locked_baseline",
    "lookup",
    "translate_batch",
    "bench_ids",
    "run_bench",
]

SENTINEL = np.uint64(0xFFFFFFFFFFFFFFFF)

_SEQ_CST = 5
_FIB_MULT = uint64(0x9E3779B97F4A7C15)

_lib = ctypes.CDLL("libatomic.so.1")

# bool __atomic_compare_exchange_8(void *mem, void *expected, u64 desired, int, int)
_cas = _lib.__atomic_compare_exchange_8
_cas.argtypes = [ctypes.c_uint64, ctypes.c_uint64, ctypes.c_uint64, ctypes.c_int32, ctypes.c_int32]
_cas.restype = ctypes.c_uint8

# u64 __atomic_fetch_add_8(void *mem, u64 val, int)
_fetch_add = _lib.__atomic_fetch_add_8
_fetch_add.argtypes = [ctypes.c_uint64, ctypes.c_uint64, ctypes.c_int32]
_fetch_add.restype = ctypes.c_uint64

# u64 __atomic_exchange_8(void *mem, u64 val, int)
_exchange = _lib.__atomic_exchange_8
_exchange.argtypes = [ctypes.c_uint64, ctypes.c_uint64, ctypes.c_int32]
_exchange.restype = ctypes.c_uint64

# void __atomic_store_8(void *mem, u64 val, int)
_store = _lib.__atomic_store_8
_store.argtypes = [ctypes.c_uint64, ctypes.c_uint64, ctypes.c_int32]
_store.restype = None


@dataclass
class IdMapTable:
    """Built hash table: write-once keys, local-ID values, probe parameters."""

    keys: np.ndarray
    values: np.ndarray
    capacity: int
    num_inserted: int
    hash_kind: str = "fib"
    shift: int = 0


@njit(nogil=True)
def _hash_slot(gid, capacity, shift, mod_hash):
    if mod_hash:
        return gid % capacity
    return (gid * _FIB_MULT) >> shift


@njit(nogil=True)
def _insert_chunk(keys, values, counter, ids, capacity, shift, mod_hash, expected):
    """Lock-free insertion loop for one worker's chunk. Returns 0, or -1 if full."""
    keys_base = keys.ctypes.data
    counter_addr = counter.ctypes.data
    expected_addr = expected.ctypes.data
    sent = uint64(0xFFFFFFFFFFFFFFFF)
    for i in range(ids.shape[0]):
        gid = ids[i]
        idx = _hash_slot(gid, capacity, shift, mod_hash)
        probes = uint64(0)
        while True:
            k = keys[idx]  # keys only ever transition sentinel -> gid, once
            if k == gid:
                break
            if k == sent:
                expected[0] = sent
                won = _cas(keys_base + uint64(8) * idx, expected_addr, gid, _SEQ_CST, _SEQ_CST)
                if won:
                    values[idx] = _fetch_add(counter_addr, uint64(1), _SEQ_CST)
                    break
                if expected[0] == gid:
                    break
            probes += uint64(1)
            if probes >= capacity:
                return -1
            idx += uint64(1)
            if idx == capacity:
                idx = uint64(0)
    return 0


@njit(nogil=True)
def _insert_chunk_locked(keys, values, counter, lock, ids, capacity, shift, mod_hash):
    """Baseline: the whole insertion runs inside one global spin mutex."""
    lock_addr = lock.ctypes.data
    sent = uint64(0xFFFFFFFFFFFFFFFF)
    for i in range(ids.shape[0]):
        gid = ids[i]
        while _exchange(lock_addr, uint64(1), _SEQ_CST) != uint64(0):
            pass
        idx = _hash_slot(gid, capacity, shift, mod_hash)
        probes = uint64(0)
        status = 0
        while True:
            k = keys[idx]
            if k == gid:
                break
            if k == sent:
                keys[idx] = gid
                values[idx] = counter[0]
                counter[0] += uint64(1)
                break
            probes += uint64(1)
            if probes >= capacity:
                status = -1
                break
            idx += uint64(1)
            if idx == capacity:
                idx = uint64(0)
        _store(lock_addr, uint64(0), _SEQ_CST)
        if status != 0:
            return -1
    return 0


@njit(nogil=True)
def _lookup_chunk(keys, values, ids, out, capacity, shift, mod_hash):
    sent = uint64(0xFFFFFFFFFFFFFFFF)
    for i in range(ids.shape[0]):
        gid = ids[i]
        idx = _hash_slot(gid, capacity, shift, mod_hash)
        probes = uint64(0)
        while True:
            k = keys[idx]
            if k == gid:
                out[i] = values[idx]
                break
            if k == sent or probes >= capacity:
                out[i] = sent  # miss marker
                break
            probes += uint64(1)
            idx += uint64(1)
            if idx == capacity:
                idx = uint64(0)


def _prepare(ids, capacity_override, hash_kind):
    ids = np.ascontiguousarray(ids, dtype=np.uint64)
    if ids.size == 0:
        raise ValidationError("cannot build an ID map from an empty id list")
    if np.any(ids == SENTINEL):
        raise ValidationError("the all-ones id is reserved as the table sentinel")
    if hash_kind not in ("fib", "mod"):
        raise ValidationError(f"unknown hash kind {hash_kind!r}")
    if capacity_override is not None:
        capacity = int(capacity_override)
        if capacity < 1:
            raise ValidationError("capacity override must be positive")
    else:
        capacity = 1 << max(1, int(np.ceil(np.log2(2 * len(ids)))))
    if hash_kind == "fib" and (capacity < 2 or capacity & (capacity - 1)):
        raise ValidationError("fib hashing requires a power-of-two capacity >= 2")
    shift = 64 - int(capacity - 1).bit_length() if capacity > 1 else 63
    keys = np.full(capacity, SENTINEL, dtype=np.uint64)
    values = np.zeros(capacity, dtype=np.uint64)
    counter = np.zeros(1, dtype=np.uint64)
    return ids, capacity, shift, keys, values, counter


def build(ids, workers: int = 1, *, capacity_override=None, hash_kind="fib") -> IdMapTable:
    """Fused single-pass build: concurrent key CAS + atomic local-ID counter.

    ``capacity_override`` and ``hash_kind="mod"`` exist for unit tests that pin
    exact slot placement; production callers use the defaults.
    """
    ids, capacity, shift, keys, values, counter = _prepare(ids, capacity_override, hash_kind)
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    mod_hash = hash_kind == "mod"
    cap = uint64(capacity)
    sh = uint64(shift)
    if workers == 1:
        status = _insert_chunk(keys, values, counter, ids, cap, sh, mod_hash, np.zeros(1, np.uint64))
        statuses = [status]
    else:
        chunks = np.array_split(ids, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(
                    _insert_chunk, keys, values, counter, chunk, cap, sh, mod_hash,
                    np.zeros(1, np.uint64),
                )
                for chunk in chunks
            ]
            statuses = [f.result() for f in futures]  # completion barrier
    if any(s != 0 for s in statuses):
        raise CapacityError("hash table full: probed every slot")
    return IdMapTable(
        keys=keys,
        values=values,
        capacity=capacity,
        num_inserted=int(counter[0]),
        hash_kind=hash_kind,
        shift=shift,
    )


def build_locked_baseline(
    ids, workers: int = 1, *, capacity_override=None, hash_kind="fib"
) -> IdMapTable:
    """Same contract as ``build``, but one global mutex per insertion."""
    ids, capacity, shift, keys, values, counter = _prepare(ids, capacity_override, hash_kind)
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    mod_hash = hash_kind == "mod"
    cap = uint64(capacity)
    sh = uint64(shift)
    lock = np.zeros(1, dtype=np.uint64)
    if workers == 1:
        statuses = [_insert_chunk_locked(keys, values, counter, lock, ids, cap, sh, mod_hash)]
    else:
        chunks = np.array_split(ids, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_insert_chunk_locked, keys, values, counter, lock, chunk, cap, sh, mod_hash)
                for chunk in chunks
            ]
            statuses = [f.result() for f in futures]
    if any(s != 0 for s in statuses):
        raise CapacityError("hash table full: probed every slot")
    return IdMapTable(
        keys=keys,
        values=values,
        capacity=capacity,
        num_inserted=int(counter[0]),
        hash_kind=hash_kind,
        shift=shift,
    )


def lookup_many(table: IdMapTable, ids) -> np.ndarray:
    """Vectorized lookup; raises NotFoundError naming the first missing ID."""
    ids = np.ascontiguousarray(ids, dtype=np.uint64)
    out = np.empty(len(ids), dtype=np.uint64)
    _lookup_chunk(
        table.keys,
        table.values,
        ids,
        out,
        uint64(table.capacity),
        uint64(table.shift),
        table.hash_kind == "mod",
    )
    misses = out == SENTINEL
    if misses.any():
        missing = ids[misses][0]
        raise NotFoundError(f"global id {int(missing)} not present in the ID map")
    return out


def lookup(table: IdMapTable, gid: int) -> int:
    """Local ID for one global ID; probing path identical to insertion."""
    return int(lookup_many(table, np.array([gid], dtype=np.uint64))[0])


def translate_batch(table: IdMapTable, batch: SubgraphBatch) -> SubgraphBatch:
    """Translate every global edge list of a batch into local-ID space."""
    local_layers = []
    for targets, sources, weights in batch.layers:
        lt = lookup_many(table, targets).astype(np.int64)
        ls = lookup_many(table, sources).astype(np.int64)
        local_layers.append((lt, ls, weights))
    # seeds must be translatable too, even if no edges reference them
    lookup_many(table, batch.seeds)
    return replace(batch, local_layers=local_layers, num_local=table.num_inserted)


def bench_ids(n: int, dup_ratio: float, seed: int = 0) -> np.ndarray:
    """ID stream with an exact duplicate fraction: the unique pool plus redraws."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    if not 0.0 <= dup_ratio < 1.0:
        raise ValidationError("dup_ratio must be in [0, 1)")
    rng = np.random.Generator(np.random.Philox(seed))
    n_unique = max(1, n - int(round(n * dup_ratio)))
    pool = rng.integers(0, 1 << 62, size=n_unique, dtype=np.uint64)
    extra = pool[rng.integers(0, n_unique, size=n - n_unique)]
    ids = np.concatenate([pool, extra])
    return rng.permutation(ids)


def run_bench(n: int, workers: int, dup_ratio: float, seed: int = 0, repeats: int = 3) -> dict:
    """Time fused build vs the locked baseline on the same ID stream."""
    ids = bench_ids(n, dup_ratio, seed)
    # warm up JIT compilation and the page cache before timing
    build(ids[: min(1024, len(ids))], workers)
    build_locked_baseline(ids[: min(1024, len(ids))], workers)

    def best(fn):
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter_ns()
            table = fn(ids, workers)
            times.append(time.perf_counter_ns() - t0)
        return min(times), table

    build_ns, table = best(build)
    baseline_ns, _ = best(build_locked_baseline)
    return {
        "n": n,
        "workers": workers,
        "dup_ratio": dup_ratio,
        "n_unique": table.num_inserted,
        "build_ns": build_ns,
        "baseline_ns": baseline_ns,
        "speedup": baseline_ns / build_ns,
    }
