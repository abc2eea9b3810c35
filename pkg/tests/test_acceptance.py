"""Acceptance checks 1-11, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python tests/test_acceptance.py``. Every check uses its stated tolerance;
nothing is retried.
"""
from __future__ import annotations

import math
import statistics
import sys
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asaga.atomics import stress_adds
from asaga.dataset import SparseDataset, lipschitz_constant, make_disjoint, make_synthetic, support_stats
from asaga.engine import AsyncConfig, run_async
from asaga.labeling import (Labeling, ScheduleScript, TwoFactorToy, expected_first_iterate,
                            monte_carlo_first_gradient)
from asaga.metrics import first_hit
from asaga.objective import Objective, gradient_variance, project_average
from asaga.serial import SerialState, SolverConfig, advance, reference_optimum, run_serial
from asaga.theory import asaga_max_a, hogwild_max_a, kromagnon_max_a, svrg_theta

_PRINT = None  # set by the capsys fixture below; plain print when run as a script


def report(k: int, ok: bool, detail: str) -> None:
    line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    if _PRINT is not None:
        with _PRINT():
            print(line)
    else:
        print(line)
    assert ok, line


@pytest.fixture(autouse=True)
def _visible(capsys):
    global _PRINT
    _PRINT = capsys.disabled
    yield
    _PRINT = None


# 1 ---------------------------------------------------------------------------

def test_c01_labeling_bias():
    t0 = time.perf_counter()
    toy = TwoFactorToy()
    script = ScheduleScript.figure_one(Labeling.AFTER_WRITE)
    ex, weights = expected_first_iterate(script, toy)
    g1, g2 = toy.grad(1, toy.x0), toy.grad(2, toy.x0)
    want = [x - script.gamma * (0.75 * a + 0.25 * b) for x, a, b in zip(toy.x0, g1, g2)]
    exact_ok = weights == [0.75, 0.25] and max(abs(a - b) for a, b in zip(ex, want)) <= 1e-15
    mean, se = monte_carlo_first_gradient(ScheduleScript.figure_one(Labeling.AFTER_READ), toy, 100_000, seed=0)
    z = np.abs(mean - np.array(toy.full_grad(toy.x0))) / se
    took = time.perf_counter() - t0
    report(1, exact_ok and bool(np.all(z <= 3.0)) and took < 5.0,
           f"P(i0)={weights}, E x1={tuple(ex)}, after-read max|z|={z.max():.2f}, {took:.2f}s")


# 2 ---------------------------------------------------------------------------

def test_c02_sparse_unbiasedness():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        n, d = int(rng.integers(2, 51)), int(rng.integers(1, 21))
        mask = rng.random((n, d)) < rng.uniform(0.1, 0.9)
        mask[rng.integers(0, n, d), np.arange(d)] = True  # every dimension in some support
        X = np.where(mask, rng.standard_normal((n, d)), 0.0)
        ds = SparseDataset.from_dense(X, np.where(rng.random(n) < 0.5, -1.0, 1.0))
        stats = support_stats(ds)
        for _ in range(100):
            w = rng.standard_normal(d)
            acc = np.zeros(d)
            for i in range(n):
                idx, val = project_average(stats, w, ds, i)
                acc[idx] += val
            worst = max(worst, float(np.max(np.abs(acc / n - w)) / np.max(np.abs(w))))
    report(2, worst <= 1e-12, f"max relative error {worst:.2e} over 20 datasets x 100 vectors")


# 3 ---------------------------------------------------------------------------

def _x_after(obj, algo, steps, seed=11, **kw):
    s = SerialState.init(obj, SolverConfig(algo, 1 / (3 * obj.L), seed=seed, **kw))
    advance(s, steps)
    return s.current_x().copy()


def test_c03_serial_oracles():
    rng = np.random.default_rng(3)
    dense = Objective.from_dataset(SparseDataset.from_dense(rng.standard_normal((200, 15)),
                                                            np.where(rng.random(200) < 0.5, -1.0, 1.0)))
    a_ok = dense.dataset.dense_flag and np.array_equal(_x_after(dense, "saga", 10_000),
                                                       _x_after(dense, "saga-dense", 10_000))
    sparse = Objective.from_dataset(make_synthetic(400, 60, 4, seed=3))
    b_ok = np.array_equal(_x_after(sparse, "saga-lagged", 10_000), _x_after(sparse, "saga-dense", 10_000))
    c = {}
    xs, fs = reference_optimum(sparse)
    g = 1 / (5 * sparse.L)
    for a, s, kw in [("asaga", "saga", {}), ("hogwild", "sgd", {}), ("kromagnon", "svrg", {"m": 500}),
                     ("ahsvrg", "hsvrg", {})]:
        r = run_async(sparse, AsyncConfig(a, g, workers=1, seed=5, max_epochs=25, **kw), fstar=fs)
        q = run_serial(sparse, SolverConfig(s, g, seed=5, max_epochs=25, **kw), fstar=fs)
        c[a] = np.array_equal(r.x, q.x) and [t.subopt for t in r.trace] == [t.subopt for t in q.trace]
    report(3, a_ok and b_ok and all(c.values()), f"(a) {a_ok} (b) {b_ok} (c) {c}")


# 4 ---------------------------------------------------------------------------

def test_c04_saga_envelope():
    t0 = time.perf_counter()
    obj = Objective.from_dataset(make_synthetic(500, 50, 5, seed=4))
    xs, _ = reference_optimum(obj)
    rho = min(1 / obj.n, 1 / obj.kappa) / 5
    X = obj.dataset.to_dense()
    grads = sum(float(np.sum((X[i] * obj.slope(i, xs) + obj.mu * xs) ** 2))
                for i in range(obj.n))
    c0 = float(xs @ xs) + grads / (5 * obj.L ** 2)  # x0 = 0, alpha^0 = 0
    every, horizon = obj.n // 10, 200 * obj.n
    dist = np.zeros(horizon // every + 1)
    for seed in range(10):
        s = SerialState.init(obj, SolverConfig("saga", 1 / (5 * obj.L), seed=seed))
        dist[0] += float(xs @ xs)
        for k in range(1, dist.size):
            advance(s, every)
            dist[k] += float(np.sum((s.x - xs) ** 2))
    dist /= 10
    t = np.arange(dist.size) * every
    env = (1 - rho) ** t * c0
    live = env > 1e-20  # below this the reference optimum itself is the error
    worst = float(np.max(dist[live] / env[live]))
    took = time.perf_counter() - t0
    report(4, worst <= 1.0 and took < 60, f"max E||x_t-x*||^2 / envelope = {worst:.3g} "
           f"(rho={rho:.2e}, C0={c0:.3g}, {live.sum()} checkpoints, {took:.1f}s)")


# 5 ---------------------------------------------------------------------------

def test_c05_lost_updates():
    exact = {p: bool(np.all(stress_adds(p, 100_000) == p * 100_000)) for p in (2, 4, 8)}
    lossy = sum(bool(np.any(stress_adds(8, 100_000, unsafe=True) != 8 * 100_000)) for _ in range(20))
    report(5, all(exact.values()) and lossy >= 18,
           f"CAS exact {exact}; UNSAFE lost updates in {lossy}/20 runs at p=8 (need >= 18)")


# 6 ---------------------------------------------------------------------------

def test_c06_cas_necessity():
    obj = Objective.from_dataset(make_synthetic(50_000, 2000, 10, seed=6))
    xs, fs = reference_optimum(obj)
    g = 1 / (5 * obj.L)
    cas = run_async(obj, AsyncConfig("asaga", g, workers=8, seed=0, max_epochs=40), fstar=fs)
    cas_best = min(r.subopt for r in cas.trace)
    plateaus = []
    for seed in range(5):
        r = run_async(obj, AsyncConfig("asaga", g, workers=8, seed=seed, max_epochs=40, atomic_mode="unsafe"),
                      fstar=fs)
        tail = [t.subopt for t in r.trace[-len(r.trace) // 4:]]
        plateaus.append(min(tail))
    high = sum(p >= 1e3 * 1e-10 for p in plateaus)
    report(6, cas_best <= 1e-10 and high >= 4,
           f"CAS best {cas_best:.2e}; UNSAFE plateaus {[f'{p:.1e}' for p in plateaus]}, "
           f"{high}/5 at least 1e3 x 1e-10 (need >= 4)")


# 7 ---------------------------------------------------------------------------

def test_c07_iteration_speedup():
    t0 = time.perf_counter()
    ds = make_synthetic(20_000, 5000, 10, seed=4)
    cases = [("asaga", None, 1 / 5, 1e-5, {}), ("kromagnon", None, 1 / 5, 1e-5, {"m": 2 * ds.n}),
             ("hogwild", 1e-3, 1 / 400, 1e-3, {})]
    ratios = {}
    for algo, mu, a, target, kw in cases:
        obj = Objective.from_dataset(ds, mu=mu)
        _, fs = reference_optimum(obj)
        med = {}
        for p in (1, 8):
            its = []
            for seed in range(5):
                r = run_async(obj, AsyncConfig(algo, a / obj.L, workers=p, seed=seed, max_epochs=60,
                                               target_subopt=target, **kw), fstar=fs)
                hit = first_hit(r.trace, target)
                its.append(hit.ticket if hit else math.inf)
            med[p] = statistics.median(its)
        ratios[algo] = med[8] / med[1]
    took = time.perf_counter() - t0
    ok = all(abs(r - 1) <= 0.15 for r in ratios.values()) and took < 300
    report(7, ok, "iterations p=8 / p=1: " + ", ".join(f"{k} {v:.3f}" for k, v in ratios.items())
           + f" (Delta={support_stats(ds).delta:.4f}, {took:.0f}s)")


# 8 ---------------------------------------------------------------------------

def test_c08_hogwild_ball():
    obj = Objective.from_dataset(make_disjoint(2000, 5, seed=8))
    xs, fs = reference_optimum(obj)
    sigma0 = gradient_variance(obj, xs)
    r = run_async(obj, AsyncConfig("hogwild", 1 / (5 * obj.L), workers=8, seed=0, max_epochs=200), fstar=fs)
    final0 = r.trace[-1].subopt
    zero_ok = final0 < 1e-12

    noisy = Objective.from_dataset(make_synthetic(5000, 500, 10, seed=8), mu=1e-2)
    _, fn = reference_optimum(noisy)
    gammas = np.array([0.01, 0.02, 0.05, 0.1]) / noisy.L
    levels = []
    for g in gammas:
        r = run_async(noisy, AsyncConfig("hogwild", float(g), workers=8, seed=1, max_epochs=300,
                                         snapshot_every=noisy.n // 20), fstar=fn)
        tail = [t.subopt for t in r.trace[len(r.trace) // 2:]]
        levels.append(float(np.mean(tail)))
    slope = float(np.polyfit(np.log(gammas), np.log(levels), 1)[0])
    report(8, zero_ok and 0.7 <= slope <= 1.3,
           f"sigma^2={sigma0:.1e}: p=8 final subopt {final0:.1e}; "
           f"plateaus {[f'{v:.2e}' for v in levels]} over 10x gamma, log-log slope {slope:.2f}")


# 9 ---------------------------------------------------------------------------

def _specializations() -> dict:
    L, mu, g, m = 1.0, 0.01, 0.05, 1000
    return {
        "asaga": asaga_max_a(0, 0.3, 50) == 1 / 32,
        "hogwild": hogwild_max_a(0, 0.3, 50) == 1 / 5,
        "kromagnon": kromagnon_max_a(0, 0.3, 50).a == 1 / 4,
        "svrg": svrg_theta(g, m, L, mu, 0.3, 0) == (1 / (mu * g * m) + 2 * L * g) / (1 - 2 * L * g),
    }


_TRIPLES = st.tuples(st.integers(0, 10**4), st.floats(1e-6, 1.0), st.floats(1.0, 1e8))


@settings(max_examples=1000, deadline=None, derandomize=True)
@given(_TRIPLES, st.integers(1, 50), st.floats(1.0, 50.0))
def _monotone(t, k, f):
    tau, delta, kappa = t
    big = min(1.0, delta * f)
    for fn in (asaga_max_a, hogwild_max_a, lambda *a: kromagnon_max_a(*a).a):
        assert fn(tau + k, delta, kappa) <= fn(tau, delta, kappa)
        assert fn(tau, big, kappa) <= fn(tau, delta, kappa) * (1 + 1e-12)
    gamma, m, L, mu = 1e-6, 10**7, 1.0, 1.0 / kappa
    assert svrg_theta(gamma, m, L, mu, delta, tau + k) >= svrg_theta(gamma, m, L, mu, delta, tau)


def test_c09_theory_calculators():
    spec = _specializations()
    try:
        _monotone()
        mono = True
    except AssertionError:
        mono = False
    report(9, all(spec.values()) and mono, f"tau=0 specializations {spec}; monotone over 1000 triples: {mono}")


# 10 --------------------------------------------------------------------------

def test_c10_overlap():
    obj = Objective.from_dataset(make_synthetic(20_000, 2000, 10, seed=10))
    g = 1 / (5 * obj.L)
    maxes, within = [], []
    for seed in range(5):
        r = run_async(obj, AsyncConfig("asaga", g, workers=4, seed=seed, max_epochs=20, instrument=True))
        maxes.append(r.overlap.max_observed)
        within.append(r.overlap.max_observed <= r.overlap.upper_bound)
    single = run_async(obj, AsyncConfig("asaga", g, workers=1, seed=0, max_epochs=2, instrument=True)).overlap
    med = statistics.median(maxes)
    report(10, med >= 3 and all(within) and single.max_observed == 0.0,
           f"p=4 max overlaps {[f'{m:.0f}' for m in maxes]} (median {med:.0f}), within (p-1)R: {all(within)}; "
           f"p=1 max {single.max_observed:g}")


# 11 --------------------------------------------------------------------------

def test_c11_svrg_rate():
    ds = make_synthetic(2000, 200, 10, seed=11)
    lloss = lipschitz_constant(ds, 0.0)
    obj = Objective.from_dataset(ds, mu=lloss / (ds.n - 1))  # kappa = n
    _, fs = reference_optimum(obj)
    worst = 0.0
    for seed in range(5):
        r = run_serial(obj, SolverConfig("svrg", 1 / (10 * obj.L), m=20 * ds.n, seed=seed, max_epochs=20 * 12),
                       fstar=fs, trace_every=20 * ds.n)
        gaps = [t.subopt for t in r.trace]
        for a, b in zip(gaps, gaps[1:]):
            if b > 1e-12:
                worst = max(worst, b / a)
    report(11, worst <= 0.75, f"kappa={obj.kappa:.0f}, n={obj.n}, worst per-epoch ratio {worst:.3f} over 5 seeds")


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_c")):
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
