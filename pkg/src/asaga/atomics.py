"""Lock-free primitives on shared 64-bit cells, usable from ``nogil`` numba code.

A real-valued cell is a float64 array slot. ``atomic_add`` reinterprets its
bit pattern as int64 and retries a compare-and-swap until the addition lands,
so concurrent adders never overwrite each other. ``unsafe_add`` performs the
same read-modify-write as two independent word accesses, which is what a
plain ``x[v] += delta`` does on shared memory: the load and the store are each
indivisible but another thread may write in between.

The clock is ``clock_gettime(CLOCK_MONOTONIC)`` linked by symbol name, which
keeps every kernel that uses it cacheable.
"""
from __future__ import annotations

import threading

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.core import cgutils
from numba.extending import intrinsic

CLOCK_MONOTONIC = 1

_i64 = ir.IntType(64)


def _as_i64_ptr(builder, addr):
    return builder.inttoptr(addr, _i64.as_pointer())


@intrinsic
def _cas(typingctx, addr, expected, desired):
    """Compare-and-swap an int64 at ``addr``; returns the value found there."""
    sig = types.int64(types.intp, types.int64, types.int64)

    def codegen(context, builder, signature, args):
        ptr = _as_i64_ptr(builder, args[0])
        res = builder.cmpxchg(ptr, args[1], args[2], "seq_cst", "seq_cst")
        return builder.extract_value(res, 0)

    return sig, codegen


@intrinsic
def _load(typingctx, addr):
    sig = types.int64(types.intp)

    def codegen(context, builder, signature, args):
        return builder.load_atomic(_as_i64_ptr(builder, args[0]), "monotonic", 8)

    return sig, codegen


@intrinsic
def _store(typingctx, addr, value):
    sig = types.void(types.intp, types.int64)

    def codegen(context, builder, signature, args):
        builder.store_atomic(args[1], _as_i64_ptr(builder, args[0]), "monotonic", 8)
        return context.get_dummy_value()

    return sig, codegen


@intrinsic
def _fetch_add(typingctx, addr, value):
    sig = types.int64(types.intp, types.int64)

    def codegen(context, builder, signature, args):
        ptr = _as_i64_ptr(builder, args[0])
        return builder.atomic_rmw("add", ptr, args[1], "seq_cst")

    return sig, codegen


@intrinsic
def _bits(typingctx, x):
    sig = types.int64(types.float64)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], _i64)

    return sig, codegen


@intrinsic
def _real(typingctx, x):
    sig = types.float64(types.int64)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], ir.DoubleType())

    return sig, codegen


@intrinsic
def _clock_gettime(typingctx, clock_id, addr):
    sig = types.int32(types.int32, types.intp)

    def codegen(context, builder, signature, args):
        fnty = ir.FunctionType(ir.IntType(32), [ir.IntType(32), _i64.as_pointer()])
        fn = cgutils.get_or_insert_function(builder.module, fnty, "clock_gettime")
        return builder.call(fn, [args[0], _as_i64_ptr(builder, args[1])])

    return sig, codegen


@njit(nogil=True, inline="always", cache=True)
def atomic_add(arr, i, delta):
    """Add ``delta`` to ``arr[i]`` exactly once under any contention."""
    addr = arr.ctypes.data + i * 8
    cur = _load(addr)
    while True:
        prev = _cas(addr, cur, _bits(_real(cur) + delta))
        if prev == cur:
            return
        cur = prev


@njit(nogil=True, inline="always", cache=True)
def unsafe_add(arr, i, delta):
    addr = arr.ctypes.data + i * 8
    _store(addr, _bits(_real(_load(addr)) + delta))


@njit(nogil=True, inline="always", cache=True)
def shared_add(arr, i, delta, unsafe):
    if unsafe:
        unsafe_add(arr, i, delta)
    else:
        atomic_add(arr, i, delta)


@njit(nogil=True, inline="always", cache=True)
def load_real(arr, i):
    return _real(_load(arr.ctypes.data + i * 8))


@njit(nogil=True, inline="always", cache=True)
def store_real(arr, i, value):
    _store(arr.ctypes.data + i * 8, _bits(value))


@njit(nogil=True, inline="always", cache=True)
def load_int(arr, i):
    return _load(arr.ctypes.data + i * 8)


@njit(nogil=True, inline="always", cache=True)
def store_int(arr, i, value):
    _store(arr.ctypes.data + i * 8, value)


@njit(nogil=True, inline="always", cache=True)
def fetch_add_int(arr, i, value):
    """Atomically add to an int64 cell; returns the previous value."""
    return _fetch_add(arr.ctypes.data + i * 8, value)


@njit(nogil=True, cache=True)
def monotonic_ns(buf):
    """Monotonic clock in nanoseconds; ``buf`` is an int64[2] scratch array."""
    _clock_gettime(np.int32(CLOCK_MONOTONIC), buf.ctypes.data)
    return buf[0] * 1_000_000_000 + buf[1]


@njit(nogil=True, cache=True)
def _hammer(cells, reps, unsafe):
    m = cells.shape[0]
    for _ in range(reps):
        for k in range(m):
            shared_add(cells, k, 1.0, unsafe)


def stress_adds(workers: int, reps: int, n_cells: int = 16, unsafe: bool = False) -> np.ndarray:
    """Have ``workers`` threads each add 1.0 to every cell ``reps`` times.

    All threads are released together from a start gate so they contend for
    the whole run. Returns the final cell values; the lossless outcome is
    ``workers * reps`` in every cell.
    """
    cells = np.zeros(n_cells)
    _hammer(np.zeros(1), 1, unsafe)  # compile before the gate opens
    gate = threading.Barrier(workers)

    def work():
        gate.wait()
        _hammer(cells, reps, unsafe)

    threads = [threading.Thread(target=work) for _ in range(workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return cells
