"""Lock-free asynchronous solvers over a shared parameter vector.

Workers are OS threads running one ``nogil`` numba kernel each. Every write
to shared state (``x``, the per-sample scalars ``alpha`` and the running
average ``abar``) is a per-coordinate atomic add, or a plain load/store pair
in ``UNSAFE`` mode. Reads are coordinatewise and inconsistent by design.

A single int64 ticket counter labels iterations: a worker claims ticket ``t``
before sampling, so the global count is exact and a run stops after exactly
``budget`` updates. The worker that claims a multiple of ``snapshot_every``
copies ``x`` into that multiple's slot; suboptimality is evaluated on those copies after
the run (and inline when a target must stop the run early, with that
evaluation time taken out of the reported clock).

With one worker every algorithm replays its serial counterpart bit for bit:
the arithmetic below repeats the serial update expressions, and worker ``w``
samples from the same Philox stream ``seed + w``.
"""
from __future__ import annotations

import enum
import math
import threading
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .atomics import fetch_add_int, load_int, load_real, monotonic_ns, shared_add, store_int, store_real
from .metrics import OverlapEstimate, TraceRecord, estimate_overlap
from .objective import Objective, loss_gradient_sum, loss_slope, objective_value
from .serial import stream

ASAGA, ASAGA_FULL, HOGWILD, KROMAGNON, AHSVRG = range(5)

# control cells
TICKET, DONE, FLAG, OVERFLOW = range(4)
_DONE_BUDGET, _DONE_TARGET = 1, 2


class AsyncAlgorithm(enum.Enum):
    ASAGA = "asaga"
    KROMAGNON = "kromagnon"
    AHSVRG = "ahsvrg"
    HOGWILD = "hogwild"


class AtomicMode(enum.Enum):
    CAS = "cas"
    UNSAFE = "unsafe"


class ReadMode(enum.Enum):
    SPARSE = "sparse"  # sample i, then read x and abar on S_i only
    FULL = "full"  # read all of x and alpha, then sample (small problems only)


SERIAL_COUNTERPART = {
    AsyncAlgorithm.ASAGA: "saga",
    AsyncAlgorithm.KROMAGNON: "svrg",
    AsyncAlgorithm.AHSVRG: "hsvrg",
    AsyncAlgorithm.HOGWILD: "sgd",
}


@dataclass
class AsyncConfig:
    algorithm: AsyncAlgorithm
    gamma: float
    workers: int = 1
    m: int | None = None
    seed: int = 0
    max_epochs: float = 10.0
    target_subopt: float | None = None
    atomic_mode: AtomicMode = AtomicMode.CAS
    read_mode: ReadMode = ReadMode.SPARSE
    ticket_stride: int = 1
    window: int = 100
    snapshot_every: int | None = None
    instrument: bool = False
    log_deltas: bool = False

    def __post_init__(self):
        self.algorithm = AsyncAlgorithm(self.algorithm)
        self.atomic_mode = AtomicMode(self.atomic_mode)
        self.read_mode = ReadMode(self.read_mode)
        if self.workers < 1:
            raise ValueError("need at least one worker")
        if not self.gamma >= 0 or not math.isfinite(self.gamma):
            raise ValueError("gamma must be a finite non-negative number")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be positive")
        if self.ticket_stride < 1 or self.window < 0:
            raise ValueError("bad ticket stride or window")
        if self.read_mode is ReadMode.FULL and self.algorithm is not AsyncAlgorithm.ASAGA:
            raise ValueError("full reads are only defined for ASAGA")
        if self.algorithm in (AsyncAlgorithm.KROMAGNON, AsyncAlgorithm.AHSVRG) and self.ticket_stride != 1:
            raise ValueError("SVRG-type runs claim tickets one at a time")


@dataclass
class AsyncResult:
    algorithm: str
    p: int
    seed: int
    x: np.ndarray
    trace: list[TraceRecord]
    converged: bool
    iterations: int
    elapsed_ns: int
    alpha: np.ndarray
    abar: np.ndarray
    windows: np.ndarray
    durations_ns: np.ndarray  # per worker: min, max, total, count
    overlap: OverlapEstimate | None = None
    refresh_tickets: list[int] = field(default_factory=list)
    delta_idx: np.ndarray | None = None
    delta_val: np.ndarray | None = None
    delta_overflow: bool = False


@njit(nogil=True, cache=True)
def _worker(algo, wid, indptr, indices, data, labels, inv_p, max_support,
            x, alpha, abar, ref_s, ref_g, ctrl, rng,
            gamma, mu, unsafe, limit, stride,
            snap_every, snaps, snap_ticket, snap_ns, check_target, fstar, target, paused,
            window, win_out, win_count, instrument, dur, log_idx, log_val, log_count):
    n = labels.shape[0]
    d = x.shape[0]
    full = algo == ASAGA_FULL
    xh = np.empty(max_support)
    ah = np.empty(max_support)
    xf = np.empty(d if full else 0)
    af = np.empty(n if full else 0)
    abf = np.empty(d if full else 0)
    clk = np.zeros(2, np.int64)
    wcap = win_out.shape[1]
    lcap = log_idx.shape[1]
    wc = win_count[wid]
    lc = log_count[wid]
    dmin = dur[wid, 0]
    dmax = dur[wid, 1]
    dtot = dur[wid, 2]
    dcnt = dur[wid, 3]
    local = 0
    left = 0
    t = 0
    t0 = 0
    win_start = 0
    while True:
        if load_int(ctrl, DONE) != 0:
            break
        if algo == AHSVRG:
            if load_int(ctrl, FLAG) != 0:
                break
            if load_int(ctrl, TICKET) >= limit:
                break
            if rng.random() < 1.0 / n:
                store_int(ctrl, FLAG, 1)
                break
        if left == 0:
            t = fetch_add_int(ctrl, TICKET, stride)
            if t >= limit:
                break
            left = min(stride, limit - t)
            # whoever claims a multiple of snap_every owns that snapshot slot
            q = ((t + snap_every - 1) // snap_every) * snap_every
            if q == 0:
                q = snap_every
            k = q // snap_every - 1
            if q < t + left and k < snaps.shape[0]:
                for v in range(d):
                    snaps[k, v] = x[v]
                snap_ticket[k] = t
                snap_ns[k] = monotonic_ns(clk) - load_int(paused, 0)
                if check_target:
                    t0 = monotonic_ns(clk)
                    f = objective_value(indptr, indices, data, labels, snaps[k], mu, False)
                    if f - fstar <= target:
                        store_int(ctrl, DONE, _DONE_TARGET)
                    fetch_add_int(paused, 0, monotonic_ns(clk) - t0)
        else:
            t += 1
        if window > 0 and local % window == 0:
            win_start = t
        if instrument:
            t0 = monotonic_ns(clk)

        lo = 0
        hi = 0
        if full:
            # Algorithm 1: read everything, then sample
            for v in range(d):
                xf[v] = load_real(x, v)
            for j in range(n):
                af[j] = load_real(alpha, j)
            abf[:] = 0.0
            for j in range(n):
                for k in range(indptr[j], indptr[j + 1]):
                    abf[indices[k]] += af[j] * data[k]
            for v in range(d):
                abf[v] = abf[v] / n
            i = rng.integers(0, n)
            lo = indptr[i]
            hi = indptr[i + 1]
            z = 0.0
            for k in range(lo, hi):
                z += data[k] * xf[indices[k]]
            s = loss_slope(z, labels[i])
            ds = s - af[i]
            for k in range(lo, hi):
                v = indices[k]
                dx = -gamma * (ds * data[k] + abf[v] * inv_p[v] + mu * xf[v] * inv_p[v])
                shared_add(x, v, dx, unsafe)
                if lc < lcap:
                    log_idx[wid, lc] = v
                    log_val[wid, lc] = dx
                    lc += 1
                elif lcap > 0:
                    ctrl[OVERFLOW] = 1
            store_real(alpha, i, s)
        else:
            i = rng.integers(0, n)
            lo = indptr[i]
            hi = indptr[i + 1]
            z = 0.0
            for k in range(lo, hi):
                xv = load_real(x, indices[k])
                xh[k - lo] = xv
                z += data[k] * xv
            s = loss_slope(z, labels[i])
            if algo == ASAGA:
                ai = load_real(alpha, i)
                for k in range(lo, hi):
                    ah[k - lo] = load_real(abar, indices[k])
                ds = s - ai
            elif algo == HOGWILD:
                ds = s
            else:
                ds = s - ref_s[i]
            for k in range(lo, hi):
                v = indices[k]
                if algo == ASAGA:
                    dx = -gamma * (ds * data[k] + ah[k - lo] * inv_p[v] + mu * xh[k - lo] * inv_p[v])
                elif algo == HOGWILD:
                    dx = -gamma * (ds * data[k] + mu * xh[k - lo] * inv_p[v])
                else:
                    dx = -gamma * (ds * data[k] + ref_g[v] * inv_p[v] + mu * xh[k - lo] * inv_p[v])
                shared_add(x, v, dx, unsafe)
                if algo == ASAGA:
                    shared_add(abar, v, ds * data[k] / n, unsafe)
                if lc < lcap:
                    log_idx[wid, lc] = v
                    log_val[wid, lc] = dx
                    lc += 1
                elif lcap > 0:
                    ctrl[OVERFLOW] = 1
            if algo == ASAGA:
                shared_add(alpha, i, ds, unsafe)

        if instrument:
            el = monotonic_ns(clk) - t0
            dmin = min(dmin, el)
            dmax = max(dmax, el)
            dtot += el
            dcnt += 1
        left -= 1
        local += 1
        if window > 0 and local % window == 0 and wc < wcap:
            win_out[wid, wc] = (load_int(ctrl, TICKET) - win_start - window) / window
            wc += 1
    win_count[wid] = wc
    log_count[wid] = lc
    dur[wid, 0] = dmin
    dur[wid, 1] = dmax
    dur[wid, 2] = dtot
    dur[wid, 3] = dcnt


def _run_threads(fn, p: int) -> None:
    """Run ``fn(w)`` for ``w < p`` on threads released together."""
    if p == 1:
        fn(0)
        return
    gate = threading.Barrier(p)
    errors = []

    def body(w):
        try:
            gate.wait()
            fn(w)
        except BaseException as exc:  # surfaced after join
            errors.append(exc)

    threads = [threading.Thread(target=body, args=(w,)) for w in range(p)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        raise errors[0]


def parallel_refresh(obj: Objective, x: np.ndarray, ref_x: np.ndarray, ref_s: np.ndarray,
                     ref_g: np.ndarray, p: int) -> None:
    """``x~ <- x`` and its batch loss gradient, rows split evenly across ``p`` threads."""
    indptr, indices, data, labels = obj.arrays
    n = obj.n
    ref_x[:] = x
    bounds = np.linspace(0, n, p + 1).astype(np.int64)
    parts = np.zeros((p, obj.d))
    _run_threads(lambda w: loss_gradient_sum(indptr, indices, data, labels, ref_x, bounds[w],
                                             bounds[w + 1], parts[w], ref_s), p)
    acc = parts[0].copy()
    for w in range(1, p):
        acc += parts[w]
    ref_g[:] = acc / n


def _warm_up() -> None:
    # compile once before any start gate opens; all algorithms share one specialization
    e = np.zeros(0, np.int64)
    ds = np.zeros(1)
    one = np.ones(1)
    _worker(ASAGA, 0, np.array([0, 1], np.int64), np.zeros(1, np.int64), ds, one, one, 1,
            np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(8, np.int64),
            stream(0), 0.0, 0.0, False, 0, 1,
            1, np.zeros((0, 1)), e, e, False, 0.0, 0.0, np.zeros(1, np.int64),
            0, np.zeros((1, 0)), np.zeros(1, np.int64), False, np.zeros((1, 4), np.int64),
            np.zeros((1, 0), np.int64), np.zeros((1, 0)), np.zeros(1, np.int64))


def run_async(obj: Objective, config: AsyncConfig, fstar: float | None = None,
              x0: np.ndarray | None = None) -> AsyncResult:
    """Drive ``config.workers`` threads to the epoch budget or the target."""
    if config.target_subopt is not None and fstar is None:
        raise ValueError("a target suboptimality needs fstar")
    _warm_up()
    algo = config.algorithm
    p = config.workers
    n, d = obj.n, obj.d
    indptr, indices, data, labels = obj.arrays
    inv_p = obj.stats.inv_p
    max_support = max(1, int(obj.dataset.support_sizes().max()))
    code = {AsyncAlgorithm.ASAGA: ASAGA_FULL if config.read_mode is ReadMode.FULL else ASAGA,
            AsyncAlgorithm.HOGWILD: HOGWILD, AsyncAlgorithm.KROMAGNON: KROMAGNON,
            AsyncAlgorithm.AHSVRG: AHSVRG}[algo]
    budget = int(round(config.max_epochs * n))
    m = config.m or n
    base = 0.0 if fstar is None else float(fstar)

    x = np.zeros(d) if x0 is None else np.array(x0, dtype=np.float64)
    x_start = x.copy()
    alpha = np.zeros(n)
    abar = np.zeros(d)
    ref_x, ref_s, ref_g = np.zeros(d), np.zeros(n), np.zeros(d)
    ctrl = np.zeros(8, np.int64)

    snap_every = config.snapshot_every or max(1, n // 10)
    while (budget // snap_every + 2) * d > 50_000_000:
        snap_every *= 2
    cap = budget // snap_every + 2
    snaps = np.empty((cap, d))
    snap_ticket = np.full(cap, -1, np.int64)
    snap_ns = np.zeros(cap, np.int64)
    paused = np.zeros(1, np.int64)

    window = config.window
    win_out = np.zeros((p, budget // window + 2 if window else 0))
    win_count = np.zeros(p, np.int64)
    dur = np.zeros((p, 4), np.int64)
    dur[:, 0] = np.iinfo(np.int64).max
    lcap = budget * max_support if config.log_deltas else 0
    log_idx = np.zeros((p, lcap), np.int64)
    log_val = np.zeros((p, lcap))
    log_count = np.zeros(p, np.int64)

    rngs = [stream(config.seed, w) for w in range(p)]
    unsafe = config.atomic_mode is AtomicMode.UNSAFE
    check = config.target_subopt is not None
    target = config.target_subopt if check else 0.0

    def launch(limit: int, stride: int) -> None:
        def body(w):
            _worker(code, w, indptr, indices, data, labels, inv_p, max_support,
                    x, alpha, abar, ref_s, ref_g, ctrl, rngs[w],
                    config.gamma, obj.mu, unsafe, limit, stride,
                    snap_every, snaps, snap_ticket, snap_ns, check, base, target, paused,
                    window, win_out, win_count, config.instrument, dur, log_idx, log_val, log_count)
        _run_threads(body, p)
        ctrl[TICKET] = min(ctrl[TICKET], limit)

    refresh_tickets = []

    def refresh():
        # batch gradients are real work and stay on the clock
        parallel_refresh(obj, x, ref_x, ref_s, ref_g, p)
        refresh_tickets.append(int(ctrl[TICKET]))

    start = time.monotonic_ns()
    if algo in (AsyncAlgorithm.ASAGA, AsyncAlgorithm.HOGWILD):
        launch(budget, config.ticket_stride)
    elif algo is AsyncAlgorithm.KROMAGNON:
        while ctrl[TICKET] < budget and ctrl[DONE] == 0:
            refresh()
            launch(min(int(ctrl[TICKET]) + m, budget), 1)
    else:
        refresh()
        while True:
            launch(budget, 1)
            if ctrl[DONE] != 0 or ctrl[TICKET] >= budget:
                break
            refresh()
            ctrl[FLAG] = 0
    elapsed = time.monotonic_ns() - start - int(paused[0])

    trace = [TraceRecord(0, 0, obj.value(x_start) - base, 0.0)]
    for k in np.flatnonzero(snap_ticket >= 0):
        t = int(snap_ticket[k])
        trace.append(TraceRecord(t, max(0, int(snap_ns[k] - start)), obj.value(snaps[k]) - base, t / n))
    final_t = int(ctrl[TICKET])
    final_gap = obj.value(x) - base
    if trace[-1].ticket != final_t or len(trace) == 1:
        trace.append(TraceRecord(final_t, max(elapsed, trace[-1].wall_ns), final_gap, final_t / n))
    if check:
        converged = ctrl[DONE] == _DONE_TARGET or final_gap <= config.target_subopt
    else:
        converged = math.isfinite(final_gap)

    windows = np.concatenate([win_out[w, : win_count[w]] for w in range(p)]) if window else np.zeros(0)
    overlap = None
    if config.instrument and dur[:, 3].sum() > 0:
        live = dur[:, 3] > 0
        mean_ns = dur[live, 2].sum() / dur[live, 3].sum()
        overlap = estimate_overlap(windows, p, float(dur[live, 0].min()), float(dur[live, 1].max()),
                                   mean_ns, window)
    result = AsyncResult(
        algorithm=algo.value, p=p, seed=config.seed, x=x, trace=trace, converged=bool(converged),
        iterations=final_t, elapsed_ns=elapsed, alpha=alpha, abar=abar, windows=windows,
        durations_ns=dur, overlap=overlap, refresh_tickets=refresh_tickets,
    )
    if config.log_deltas:
        result.delta_idx = np.concatenate([log_idx[w, : log_count[w]] for w in range(p)])
        result.delta_val = np.concatenate([log_val[w, : log_count[w]] for w in range(p)])
        result.delta_overflow = bool(ctrl[OVERFLOW])
    return result


def replay_deltas(x0: np.ndarray, idx: np.ndarray, val: np.ndarray) -> np.ndarray:
    """Apply a multiset of logged coordinate deltas serially (exact-sum check)."""
    out = np.array(x0, dtype=np.float64)
    np.add.at(out, idx, val)
    return out


def update_direction(obj: Objective, x_hat: np.ndarray, alpha: np.ndarray, abar: np.ndarray, i: int):
    """ASAGA direction ``f_i'(x) - alpha_i + D_i abar + mu D_i x`` read from a frozen state."""
    idx, val = obj.dataset.row(i)
    s = obj.slope(i, x_hat)
    inv_p = obj.stats.inv_p[idx]
    return idx, (s - alpha[i]) * val + abar[idx] * inv_p + obj.mu * x_hat[idx] * inv_p
