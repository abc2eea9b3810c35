"""Single-worker solvers: SGD, dense/sparse/lagged SAGA, SVRG and Hofmann's SVRG.

These are the baselines for speedup measurements and the oracles the
asynchronous engine is checked against, so each update is written as one
expression that the async kernels repeat verbatim. Sampling uses a Philox
stream keyed by the seed (worker ``w`` of an async run uses ``seed + w``),
and numba draws the same integers numpy would.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .metrics import TraceRecord
from .objective import GradMemory, Objective, loss_gradient_sum, loss_slope, margin


class Algorithm(enum.Enum):
    SGD = "sgd"
    SAGA_DENSE = "saga-dense"
    SAGA_SPARSE = "saga"
    SAGA_LAGGED = "saga-lagged"
    SVRG = "svrg"
    SVRG_HOFMANN = "hsvrg"


SAGA_FAMILY = (Algorithm.SAGA_DENSE, Algorithm.SAGA_SPARSE, Algorithm.SAGA_LAGGED)
SVRG_FAMILY = (Algorithm.SVRG, Algorithm.SVRG_HOFMANN)


def stream(seed: int, worker: int = 0) -> np.random.Generator:
    """Sampling stream of ``worker``; serial runs are worker 0."""
    return np.random.Generator(np.random.Philox(key=seed + worker))


@dataclass
class SolverConfig:
    algorithm: Algorithm
    gamma: float
    m: int | None = None
    seed: int = 0
    max_epochs: float = 10.0
    target_subopt: float | None = None
    random_reference: bool = False  # SVRG: draw the next reference among the epoch's iterates
    lagged_closed_form: bool = False  # lagged SAGA: O(1) catch-up instead of replaying steps

    def __post_init__(self):
        self.algorithm = Algorithm(self.algorithm)
        if not self.gamma >= 0 or not math.isfinite(self.gamma):
            raise ValueError("gamma must be a finite non-negative number")
        if self.algorithm is Algorithm.SVRG and (self.m is None or self.m < 1):
            raise ValueError("SVRG needs an epoch size m >= 1")
        if self.max_epochs <= 0:
            raise ValueError("max_epochs must be positive")


# --- per-sample updates, shared verbatim with the async kernels -------------

@njit(nogil=True, inline="always", cache=True)
def sgd_update(indptr, indices, data, labels, inv_p, x, gamma, mu, i):
    s = loss_slope(margin(indptr, indices, data, x, i), labels[i])
    for k in range(indptr[i], indptr[i + 1]):
        v = indices[k]
        x[v] = x[v] - gamma * (s * data[k] + mu * x[v] * inv_p[v])


@njit(nogil=True, inline="always", cache=True)
def saga_sparse_update(indptr, indices, data, labels, inv_p, x, alpha, abar, gamma, mu, i):
    n = labels.shape[0]
    ds = loss_slope(margin(indptr, indices, data, x, i), labels[i]) - alpha[i]
    for k in range(indptr[i], indptr[i + 1]):
        v = indices[k]
        x[v] = x[v] - gamma * (ds * data[k] + abar[v] * inv_p[v] + mu * x[v] * inv_p[v])
        abar[v] = abar[v] + ds * data[k] / n
    alpha[i] = alpha[i] + ds


@njit(nogil=True, inline="always", cache=True)
def saga_dense_update(indptr, indices, data, labels, x, alpha, abar, gamma, mu, i):
    n = labels.shape[0]
    ds = loss_slope(margin(indptr, indices, data, x, i), labels[i]) - alpha[i]
    k = indptr[i]
    hi = indptr[i + 1]
    for v in range(x.shape[0]):
        if k < hi and indices[k] == v:
            x[v] = x[v] - gamma * (ds * data[k] + abar[v] + mu * x[v])
            abar[v] = abar[v] + ds * data[k] / n
            k += 1
        else:
            x[v] = x[v] - gamma * (abar[v] + mu * x[v])
    alpha[i] = alpha[i] + ds


@njit(nogil=True, inline="always", cache=True)
def lag_catch_up(x, abar, lag, t, gamma, mu, v, closed_form):
    """Apply the ``t - lag[v]`` dense steps coordinate ``v`` skipped."""
    k = t - lag[v]
    if k <= 0:
        return
    if closed_form:
        # x <- (1 - gamma mu) x - gamma abar has fixed point -abar/mu
        c = -abar[v] / mu
        x[v] = c + (x[v] - c) * (1.0 - gamma * mu) ** k
    else:
        for _ in range(k):
            x[v] = x[v] - gamma * (abar[v] + mu * x[v])
    lag[v] = t


@njit(nogil=True, inline="always", cache=True)
def saga_lagged_update(indptr, indices, data, labels, x, alpha, abar, lag, t, gamma, mu, i, closed_form):
    n = labels.shape[0]
    for k in range(indptr[i], indptr[i + 1]):
        lag_catch_up(x, abar, lag, t, gamma, mu, indices[k], closed_form)
    ds = loss_slope(margin(indptr, indices, data, x, i), labels[i]) - alpha[i]
    for k in range(indptr[i], indptr[i + 1]):
        v = indices[k]
        x[v] = x[v] - gamma * (ds * data[k] + abar[v] + mu * x[v])
        abar[v] = abar[v] + ds * data[k] / n
        lag[v] = t + 1
    alpha[i] = alpha[i] + ds


@njit(nogil=True, cache=True)
def lag_finalize(x, abar, lag, t, gamma, mu, closed_form):
    for v in range(x.shape[0]):
        lag_catch_up(x, abar, lag, t, gamma, mu, v, closed_form)


@njit(nogil=True, inline="always", cache=True)
def svrg_update(indptr, indices, data, labels, inv_p, x, ref_s, ref_g, gamma, mu, i):
    # ref_g is the loss part of f'(x~); mu D_i (x - x~) + mu D_i x~ collapses to mu D_i x
    ds = loss_slope(margin(indptr, indices, data, x, i), labels[i]) - ref_s[i]
    for k in range(indptr[i], indptr[i + 1]):
        v = indices[k]
        x[v] = x[v] - gamma * (ds * data[k] + ref_g[v] * inv_p[v] + mu * x[v] * inv_p[v])


@njit(nogil=True, cache=True)
def refresh_reference(indptr, indices, data, labels, x, ref_x, ref_s, ref_g):
    """``x~ <- x`` and its batch loss gradient, with the per-sample slopes kept."""
    n = labels.shape[0]
    ref_x[:] = x
    ref_g[:] = 0.0
    loss_gradient_sum(indptr, indices, data, labels, ref_x, 0, n, ref_g, ref_s)
    for v in range(ref_g.shape[0]):
        ref_g[v] = ref_g[v] / n


# --- chunk drivers ----------------------------------------------------------

@njit(nogil=True, cache=True)
def _sgd_chunk(indptr, indices, data, labels, inv_p, x, gamma, mu, rng, count):
    n = labels.shape[0]
    for _ in range(count):
        sgd_update(indptr, indices, data, labels, inv_p, x, gamma, mu, rng.integers(0, n))


@njit(nogil=True, cache=True)
def _saga_chunk(indptr, indices, data, labels, inv_p, x, alpha, abar, lag, t, gamma, mu, rng, count,
                mode, closed_form):
    n = labels.shape[0]
    for _ in range(count):
        i = rng.integers(0, n)
        if mode == 0:
            saga_sparse_update(indptr, indices, data, labels, inv_p, x, alpha, abar, gamma, mu, i)
        elif mode == 1:
            saga_dense_update(indptr, indices, data, labels, x, alpha, abar, gamma, mu, i)
        else:
            saga_lagged_update(indptr, indices, data, labels, x, alpha, abar, lag, t, gamma, mu, i,
                               closed_form)
        t += 1
    return t


@njit(nogil=True, cache=True)
def _svrg_chunk(indptr, indices, data, labels, inv_p, x, ref_s, ref_g, gamma, mu, rng, count,
                first, pick, picked):
    """Inner steps ``first .. first+count-1`` of an epoch; copies x into ``picked`` before step ``pick``."""
    n = labels.shape[0]
    for k in range(first, first + count):
        if k == pick:
            picked[:] = x
        svrg_update(indptr, indices, data, labels, inv_p, x, ref_s, ref_g, gamma, mu, rng.integers(0, n))


@njit(nogil=True, cache=True)
def _hofmann_chunk(indptr, indices, data, labels, inv_p, x, ref_x, ref_s, ref_g, gamma, mu, rng, count):
    """``count`` inner updates; a Bernoulli(1/n) draw before each may refresh x~ first."""
    n = labels.shape[0]
    refreshes = 0
    done = 0
    while done < count:
        if rng.random() < 1.0 / n:
            refresh_reference(indptr, indices, data, labels, x, ref_x, ref_s, ref_g)
            refreshes += 1
            continue
        svrg_update(indptr, indices, data, labels, inv_p, x, ref_s, ref_g, gamma, mu, rng.integers(0, n))
        done += 1
    return refreshes


# --- state and single-step API ----------------------------------------------

@dataclass
class SerialState:
    obj: Objective
    config: SolverConfig
    x: np.ndarray
    alpha: GradMemory
    abar: np.ndarray
    ref_x: np.ndarray
    ref_grad: np.ndarray
    ref_slopes: np.ndarray
    lag_counters: np.ndarray
    rng: np.random.Generator
    t: int = 0
    epoch_step: int = 0
    refreshes: int = 0
    pick: int = -1
    picked: np.ndarray | None = None

    @classmethod
    def init(cls, obj: Objective, config: SolverConfig, x0: np.ndarray | None = None) -> "SerialState":
        x = np.zeros(obj.d) if x0 is None else np.array(x0, dtype=np.float64)
        state = cls(obj, config, x, GradMemory.zeros(obj.n), np.zeros(obj.d), np.zeros(obj.d),
                    np.zeros(obj.d), np.zeros(obj.n), np.zeros(obj.d, dtype=np.int64), stream(config.seed))
        if config.algorithm in SVRG_FAMILY:
            state.refresh()
        return state

    @property
    def _args(self):
        o = self.obj
        return (*o.arrays, o.stats.inv_p)

    def refresh(self) -> None:
        indptr, indices, data, labels = self.obj.arrays
        refresh_reference(indptr, indices, data, labels, self.x, self.ref_x, self.ref_slopes, self.ref_grad)
        self.epoch_step = 0
        self.refreshes += 1

    def finalize(self) -> None:
        """Bring every lagged coordinate up to date (no-op for other solvers)."""
        if self.config.algorithm is Algorithm.SAGA_LAGGED:
            lag_finalize(self.x, self.abar, self.lag_counters, self.t, self.config.gamma, self.obj.mu,
                         self.config.lagged_closed_form)

    def current_x(self) -> np.ndarray:
        self.finalize()
        return self.x


def sgd_step(state: SerialState, i: int) -> SerialState:
    indptr, indices, data, labels, inv_p = state._args
    sgd_update(indptr, indices, data, labels, inv_p, state.x, state.config.gamma, state.obj.mu, i)
    state.t += 1
    return state


def saga_dense_step(state: SerialState, i: int) -> SerialState:
    indptr, indices, data, labels, _ = state._args
    saga_dense_update(indptr, indices, data, labels, state.x, state.alpha.scalars, state.abar,
                      state.config.gamma, state.obj.mu, i)
    state.t += 1
    return state


def sparse_saga_step(state: SerialState, i: int) -> SerialState:
    indptr, indices, data, labels, inv_p = state._args
    saga_sparse_update(indptr, indices, data, labels, inv_p, state.x, state.alpha.scalars, state.abar,
                       state.config.gamma, state.obj.mu, i)
    state.t += 1
    return state


def saga_lagged_step(state: SerialState, i: int) -> SerialState:
    indptr, indices, data, labels, _ = state._args
    saga_lagged_update(indptr, indices, data, labels, state.x, state.alpha.scalars, state.abar,
                       state.lag_counters, state.t, state.config.gamma, state.obj.mu, i,
                       state.config.lagged_closed_form)
    state.t += 1
    return state


def svrg_step(state: SerialState, i: int) -> SerialState:
    indptr, indices, data, labels, inv_p = state._args
    svrg_update(indptr, indices, data, labels, inv_p, state.x, state.ref_slopes, state.ref_grad,
                state.config.gamma, state.obj.mu, i)
    state.t += 1
    state.epoch_step += 1
    return state


def svrg_epoch(state: SerialState) -> SerialState:
    """Finish the current epoch of ``m`` inner steps and take a new reference."""
    advance(state, state.config.m - state.epoch_step)
    return state


def hofmann_step(state: SerialState, i: int, B: bool) -> SerialState:
    if B:
        state.refresh()
        return state
    return svrg_step(state, i)


STEPS = {
    Algorithm.SGD: sgd_step,
    Algorithm.SAGA_DENSE: saga_dense_step,
    Algorithm.SAGA_SPARSE: sparse_saga_step,
    Algorithm.SAGA_LAGGED: saga_lagged_step,
    Algorithm.SVRG: svrg_step,
}


# --- runs -------------------------------------------------------------------

@dataclass
class RunResult:
    algorithm: str
    x: np.ndarray
    trace: list[TraceRecord] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    p: int = 1
    seed: int = 0


def advance(state: SerialState, count: int) -> None:
    """Run ``count`` sampled iterations of the configured solver."""
    cfg, obj = state.config, state.obj
    args = state._args
    algo = cfg.algorithm
    if algo is Algorithm.SGD:
        _sgd_chunk(*args, state.x, cfg.gamma, obj.mu, state.rng, count)
        state.t += count
    elif algo in SAGA_FAMILY:
        mode = {Algorithm.SAGA_SPARSE: 0, Algorithm.SAGA_DENSE: 1, Algorithm.SAGA_LAGGED: 2}[algo]
        state.t = _saga_chunk(*args, state.x, state.alpha.scalars, state.abar, state.lag_counters, state.t,
                              cfg.gamma, obj.mu, state.rng, count, mode, cfg.lagged_closed_form)
    elif algo is Algorithm.SVRG_HOFMANN:
        state.refreshes += _hofmann_chunk(*args, state.x, state.ref_x, state.ref_slopes, state.ref_grad,
                                          cfg.gamma, obj.mu, state.rng, count)
        state.t += count
    else:
        m = cfg.m
        while count > 0:
            if state.epoch_step == 0:
                state.pick = int(state.rng.integers(0, m)) if cfg.random_reference else -1
                state.picked = np.empty(obj.d)
            step = min(count, m - state.epoch_step)
            _svrg_chunk(*args, state.x, state.ref_slopes, state.ref_grad, cfg.gamma, obj.mu, state.rng,
                        step, state.epoch_step, state.pick, state.picked)
            state.t += step
            state.epoch_step += step
            count -= step
            if state.epoch_step == m:
                if cfg.random_reference:
                    state.x[:] = state.picked
                state.refresh()


def run_serial(obj: Objective, config: SolverConfig, fstar: float | None = None,
               x0: np.ndarray | None = None, trace_every: int | None = None) -> RunResult:
    """Run until ``max_epochs`` passes or the target suboptimality, whichever first.

    The trace samples ``f(x) - fstar`` every ``trace_every`` iterations
    (default n/10); evaluation time is excluded from ``wall_ns``.
    """
    import time

    if config.target_subopt is not None and fstar is None:
        raise ValueError("a target suboptimality needs fstar")
    base = 0.0 if fstar is None else fstar
    state = SerialState.init(obj, config, x0)
    budget = int(round(config.max_epochs * obj.n))
    every = trace_every or max(1, obj.n // 10)
    elapsed = 0
    result = RunResult(config.algorithm.value, state.x, seed=config.seed)

    def record():
        gap = obj.value(state.current_x()) - base
        result.trace.append(TraceRecord(state.t, elapsed, gap, state.t / obj.n))
        return gap

    record()
    while state.t < budget:
        count = min(every, budget - state.t)
        t0 = time.perf_counter_ns()
        advance(state, count)
        elapsed += time.perf_counter_ns() - t0
        gap = record()
        if config.target_subopt is not None and gap <= config.target_subopt:
            result.converged = True
            break
        if not math.isfinite(gap):
            break
    if config.target_subopt is None:
        result.converged = math.isfinite(result.trace[-1].subopt)
    result.x = state.current_x()
    result.iterations = state.t
    return result


def step_grid(L: float, lo: float = 0.1, hi: float = 10.0, k: int = 10) -> np.ndarray:
    """``k`` equally spaced step sizes in ``[lo/L, hi/L]``."""
    return np.linspace(lo / L, hi / L, k)


def reference_optimum(obj: Objective, tol: float = 1e-12, max_epochs: int = 5000,
                      seed: int = 12345) -> tuple[np.ndarray, float]:
    """High-accuracy minimizer from a long Sparse SAGA run.

    Stops once the full-gradient norm is below ``tol`` or stops improving
    for 20 consecutive check points (the rounding floor).
    """
    cfg = SolverConfig(Algorithm.SAGA_SPARSE, 1.0 / (3.0 * obj.L), seed=seed, max_epochs=max_epochs)
    state = SerialState.init(obj, cfg)
    best, best_x, stale = math.inf, state.x.copy(), 0
    for _ in range(max_epochs // 5):
        advance(state, 5 * obj.n)
        g = float(np.linalg.norm(obj.full_gradient(state.x)))
        if g < best:
            best, best_x, stale = g, state.x.copy(), 0
        else:
            stale += 1
        if best <= tol or stale >= 20:
            break
    return best_x, obj.value(best_x)
