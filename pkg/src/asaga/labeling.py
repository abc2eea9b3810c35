"""Discrete-event simulation of concurrent iterations and their labelings.

Each simulated core repeats the schema *read, sample, compute, write*. The
read takes ``read_time`` logical units and visits coordinates in order, the
computation takes ``durations[i - 1]`` units for factor ``i``, and the write
lands instantly at the end. Events at equal times are ordered by core id, so
a script plus a sampler fully determines the run.

An iteration's global label ``t`` is its rank in one of three orders: write
completion (``AFTER_WRITE``), read start (``BEFORE_READ``) or read completion
(``AFTER_READ``). Sampling after the read makes ``i_t`` independent of the
snapshot under the two read-based labelings; labeling by writes lets fast
factors overtake slow ones and biases the virtual iterates.
"""
from __future__ import annotations

import csv
import enum
import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Vector = tuple[float, ...]


class Labeling(enum.Enum):
    AFTER_WRITE = "after-write"
    BEFORE_READ = "before-read"
    AFTER_READ = "after-read"


@dataclass(frozen=True)
class TwoFactorToy:
    """``f = (f_1 + f_2) / 2`` with ``f_j(x) = 1/2 sum_{v in S_j} (x_v - c_j[v])^2``."""

    c1: Vector = (1.0, 0.0)
    c2: Vector = (-1.0, 2.0)
    support1: tuple[int, ...] = (0,)
    support2: tuple[int, ...] = (0, 1)
    x0: Vector = (0.0, 0.0)

    @property
    def d(self) -> int:
        return len(self.x0)

    @property
    def factors(self) -> int:
        return 2

    def grad(self, i: int, x: Sequence[float]) -> Vector:
        c, support = (self.c1, self.support1) if i == 1 else (self.c2, self.support2)
        return tuple(x[v] - c[v] if v in support else 0.0 for v in range(self.d))

    def full_grad(self, x: Sequence[float]) -> Vector:
        g1, g2 = self.grad(1, x), self.grad(2, x)
        return tuple(0.5 * (a + b) for a, b in zip(g1, g2))


@dataclass(frozen=True)
class ScheduleScript:
    cores: int
    durations: tuple[float, ...]  # compute time of factor i is durations[i - 1]
    labeling: Labeling
    horizon: int
    read_time: float = 0.0
    gamma: float = 0.1

    def __post_init__(self):
        if self.cores < 1 or self.horizon < 1:
            raise ValueError("need cores >= 1 and horizon >= 1")
        if not all(t > 0 for t in self.durations) or self.read_time < 0:
            raise ValueError("durations must be strictly positive")
        object.__setattr__(self, "labeling", Labeling(self.labeling))

    @classmethod
    def figure_one(cls, labeling=Labeling.AFTER_WRITE, horizon: int = 1, ratio: float = 1e6,
                   cores: int = 2) -> "ScheduleScript":
        """Two cores; ``f_1`` is fast and ``f_2`` is ``ratio`` times slower."""
        return cls(cores, (1.0, ratio), Labeling(labeling), horizon)


@dataclass
class Iteration:
    uid: int
    core: int
    read_start: float
    read_end: float = math.nan
    write_time: float = math.nan
    sample: int = 0
    x_hat: Vector = ()
    grad: Vector = ()
    included: tuple[frozenset, ...] = ()  # per coordinate: uids of updates seen by the read
    label: int = -1


@dataclass
class LabeledTrace:
    script: ScheduleScript
    x0: Vector
    iterations: list[Iteration]  # labeled iterations sorted by label
    all_iterations: list[Iteration] = field(default_factory=list)

    @property
    def samples(self) -> list[int]:
        return [it.sample for it in self.iterations]

    def virtual_iterates(self) -> list[Vector]:
        """``x_t = x_0 - gamma sum_{u<t} g(x_hat_u, i_u)`` for ``t = 0..horizon``."""
        g = self.script.gamma
        xs = [self.x0]
        for it in self.iterations:
            xs.append(tuple(a - g * b for a, b in zip(xs[-1], it.grad)))
        return xs

    def reconstruct_read(self, it: Iteration) -> Vector:
        """Rebuild a snapshot from ``x_0`` plus the updates its read included."""
        g = self.script.gamma
        by_uid = {u.uid: u for u in self.all_iterations}
        out = []
        for v, seen in enumerate(it.included):
            val = self.x0[v]
            for uid in sorted(seen, key=lambda u: (by_uid[u].write_time, by_uid[u].core)):
                val = val - g * by_uid[uid].grad[v]
            out.append(val)
        return tuple(out)


class _NeedChoice(Exception):
    pass


class ScriptedSampler:
    """Replays a fixed choice prefix and signals when it runs out (for enumeration)."""

    def __init__(self, prefix: Sequence[int]):
        self.prefix = list(prefix)
        self.used = 0

    def __call__(self) -> int:
        if self.used >= len(self.prefix):
            raise _NeedChoice
        self.used += 1
        return self.prefix[self.used - 1]


def simulate(script: ScheduleScript, toy: TwoFactorToy, sampler: Callable[[], int]) -> LabeledTrace:
    """Run the event simulation until ``horizon`` iterations are labeled and written."""
    _START, _READ, _WRITE = 0, 1, 2
    events: list[tuple] = []
    seq = 0
    for c in range(script.cores):
        heapq.heappush(events, (0.0, c, seq, _START))
        seq += 1
    current: dict[int, Iteration] = {}
    writes: list[tuple[float, int, Iteration]] = []
    done: list[Iteration] = []
    labeled: list[Iteration] = []
    uid = 0
    d = toy.d

    def assign(it):
        if len(labeled) < script.horizon:
            it.label = len(labeled)
            labeled.append(it)

    def finished():
        return len(labeled) >= script.horizon and all(not math.isnan(it.write_time) for it in labeled)

    while events and not finished():
        time, core, _, kind = heapq.heappop(events)
        if kind == _START:
            if len(labeled) >= script.horizon:
                continue  # later iterations cannot take a label below the horizon
            it = Iteration(uid, core, time)
            uid += 1
            current[core] = it
            if script.labeling is Labeling.BEFORE_READ:
                assign(it)
            heapq.heappush(events, (time + script.read_time, core, seq, _READ))
        elif kind == _READ:
            it = current[core]
            it.read_end = time
            snap, seen = [], []
            for v in range(d):
                tv = it.read_start + script.read_time * (v + 1) / d
                inc = [w for (wt, wc, w) in writes if (wt, wc) < (tv, core) or (wt == tv and wc == core)]
                val = toy.x0[v]
                for w in inc:  # writes are kept in (time, core) order
                    val = val - script.gamma * w.grad[v]
                snap.append(val)
                seen.append(frozenset(w.uid for w in inc))
            it.x_hat = tuple(snap)
            it.included = tuple(seen)
            it.sample = sampler()
            it.grad = toy.grad(it.sample, it.x_hat)
            if script.labeling is Labeling.AFTER_READ:
                assign(it)
            heapq.heappush(events, (time + script.durations[it.sample - 1], core, seq, _WRITE))
        else:
            it = current.pop(core)
            it.write_time = time
            writes.append((time, core, it))
            done.append(it)
            if script.labeling is Labeling.AFTER_WRITE:
                assign(it)
            heapq.heappush(events, (time, core, seq, _START))
        seq += 1
    return LabeledTrace(script, toy.x0, labeled, done + list(current.values()))


def enumerate_branches(script: ScheduleScript, toy: TwoFactorToy) -> list[tuple[float, LabeledTrace]]:
    """Every sampling branch with its probability (uniform choice among factors)."""
    out = []
    stack: list[tuple[int, ...]] = [()]
    k = toy.factors
    while stack:
        prefix = stack.pop()
        sampler = ScriptedSampler(prefix)
        try:
            trace = simulate(script, toy, sampler)
        except _NeedChoice:
            stack.extend(prefix + (i,) for i in range(k, 0, -1))
            continue
        out.append((k ** -len(prefix), trace))
    return out


def expected_first_iterate(script: ScheduleScript, toy: TwoFactorToy) -> tuple[Vector, list[float]]:
    """Exact ``E x_1`` and the probabilities of ``i_0`` over all branches."""
    branches = enumerate_branches(script, toy)
    ex = [0.0] * toy.d
    weights = [0.0] * toy.factors
    for prob, trace in branches:
        x1 = trace.virtual_iterates()[1]
        for v in range(toy.d):
            ex[v] += prob * x1[v]
        weights[trace.iterations[0].sample - 1] += prob
    return tuple(ex), weights


def conditional_dependence_check(script: ScheduleScript, toy: TwoFactorToy, given: int = 2,
                                 then: int = 2) -> float:
    """``P(i_1 = then | i_0 = given)`` by exact enumeration (horizon forced to 2)."""
    two = ScheduleScript(script.cores, script.durations, script.labeling, max(2, script.horizon),
                         script.read_time, script.gamma)
    num = den = 0.0
    for prob, trace in enumerate_branches(two, toy):
        s = trace.samples
        if s[0] == given:
            den += prob
            if s[1] == then:
                num += prob
    if den == 0:
        raise ValueError(f"i_0 = {given} has probability zero")
    return num / den


def monte_carlo_first_gradient(script: ScheduleScript, toy: TwoFactorToy, samples: int = 100_000,
                               seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of ``g(x_hat_0, i_0)`` over independent simulations."""
    rng = np.random.default_rng(seed)
    one = ScheduleScript(script.cores, script.durations, script.labeling, 1, script.read_time, script.gamma)
    draws = rng.integers(1, toy.factors + 1, size=(samples, 4 * script.cores))
    grads = np.empty((samples, toy.d))
    for s in range(samples):
        row = iter(draws[s].tolist())
        grads[s] = simulate(one, toy, row.__next__).iterations[0].grad
    return grads.mean(axis=0), grads.std(axis=0, ddof=1) / math.sqrt(samples)


def overlap_bound(script: ScheduleScript) -> int:
    """Structural overlap bound: other cores fit at most ``ceil(max/min) + 1`` iterations each."""
    longest = script.read_time + max(script.durations)
    shortest = script.read_time + min(script.durations)
    return (script.cores - 1) * (math.ceil(longest / shortest) + 1)


def max_label_overlap(trace: LabeledTrace) -> int:
    """Largest ``r - t`` over labeled pairs whose lifetimes intersect."""
    its = trace.iterations
    worst = 0
    for a in its:
        for b in its:
            if b.label > a.label and b.read_start < a.write_time and a.read_start < b.write_time:
                worst = max(worst, b.label - a.label)
    return worst


def emit_trace_csv(trace: LabeledTrace, path) -> None:
    d = len(trace.x0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "core", "sample", "read_start", "read_end", "write_time"]
                   + [f"xhat{v}" for v in range(d)] + [f"update{v}" for v in range(d)])
        g = trace.script.gamma
        for it in trace.iterations:
            w.writerow([it.label, it.core, it.sample, it.read_start, it.read_end, it.write_time,
                        *it.x_hat, *(-g * u for u in it.grad)])
