"""Command-line front end: train, gridsearch, speedup, overlap and bias-demo.

Exit status: 0 success, 1 configuration error, 2 data error, 3 a run (or a
whole grid) failed to reach its target.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import statistics
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import plotting
from .dataset import LibsvmParseError, load_libsvm, make_synthetic, parse_synthetic_spec, standardize
from .engine import AsyncAlgorithm, AsyncConfig, run_async
from .labeling import (Labeling, ScheduleScript, TwoFactorToy, conditional_dependence_check,
                       emit_trace_csv, enumerate_branches, expected_first_iterate,
                       monte_carlo_first_gradient)
from .metrics import emit_csv, first_hit, label, speedup_table, trace_path
from .objective import Objective
from .serial import Algorithm, SolverConfig, reference_optimum, run_serial, step_grid

SERIAL = [a.value for a in Algorithm]
ASYNC = [a.value for a in AsyncAlgorithm]

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NOCONV = 0, 1, 2, 3


class ConfigError(Exception):
    pass


@dataclass
class RunManifest:
    data: str
    algorithms: list[str]
    gamma: str | None
    grid: str | None
    p: list[int]
    seeds: list[int]
    epochs: float
    target: float | None
    out: str
    atomic_mode: str = "cas"
    m: int | None = None
    mu: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.algorithms or not self.p or not self.seeds:
            raise ConfigError("need at least one algorithm, one worker count and one seed")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None


def parse_gamma(text: str, L: float) -> float:
    """``"0.7"`` is absolute; ``"0.2/L"`` and ``"a/L"``-style values scale by ``1/L``."""
    text = text.strip()
    try:
        if text.endswith("/L"):
            return float(text[:-2]) / L
        return float(text)
    except ValueError:
        raise ConfigError(f"bad step size {text!r}") from None


def parse_grid(text: str, L: float) -> np.ndarray:
    """``"lo:hi:k"`` in units of ``1/L``."""
    try:
        lo, hi, k = text.split(":")
        lo, hi, k = float(lo), float(hi), int(k)
    except ValueError:
        raise ConfigError(f"grid must look like lo:hi:k, got {text!r}") from None
    if not 0 < lo <= hi or k < 1:
        raise ConfigError("grid needs 0 < lo <= hi and k >= 1")
    return step_grid(L, lo, hi, k) if k > 1 else np.array([lo / L])


def worker_cap(p: int) -> int:
    cap = os.environ.get("ASAGA_THREADS")
    if cap:
        try:
            return max(1, min(p, int(cap)))
        except ValueError:
            raise ConfigError(f"ASAGA_THREADS must be an integer, got {cap!r}") from None
    return p


def load_problem(args) -> tuple[Objective, str]:
    if bool(args.data) == bool(args.synthetic):
        raise ConfigError("give exactly one of --data or --synthetic")
    if args.data:
        ds = load_libsvm(args.data)
        name = Path(args.data).name
    else:
        try:
            kw = parse_synthetic_spec(args.synthetic)
            ds = make_synthetic(**kw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        name = "synthetic(" + ",".join(f"{k}={v}" for k, v in kw.items()) + ")"
    if args.standardize:
        ds = standardize(ds)
        for w in ds.warnings:
            print(f"warning: {w}", file=sys.stderr)
    obj = Objective.from_dataset(ds, args.mu)
    return obj, name


def run_one(obj: Objective, algo: str, gamma: float, p: int, seed: int, args, fstar: float):
    """Return (trace, converged, iterations) for one configuration."""
    if algo in SERIAL:
        if p != 1:
            raise ConfigError(f"{algo} is a serial solver; use p=1")
        m = args.m or (obj.n if algo == "svrg" else None)
        res = run_serial(obj, SolverConfig(algo, gamma, m=m, seed=seed, max_epochs=args.epochs,
                                           target_subopt=args.target), fstar=fstar)
    elif algo in ASYNC:
        res = run_async(obj, AsyncConfig(algo, gamma, workers=worker_cap(p), m=args.m, seed=seed,
                                         max_epochs=args.epochs, target_subopt=args.target,
                                         atomic_mode=args.atomic_mode), fstar=fstar)
    else:
        raise ConfigError(f"unknown algorithm {algo!r}")
    return res.trace, res.converged, res.iterations


def _prepare(args):
    obj, name = load_problem(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(f"dataset {name}: n={obj.n} d={obj.d} density={obj.dataset.density:.4g} "
          f"L={obj.L:.4g} mu={obj.mu:.4g} Delta={obj.stats.delta:.4g}")
    xstar, fstar = reference_optimum(obj)
    print(f"reference f* = {fstar:.16g} (|grad| = {np.linalg.norm(obj.full_gradient(xstar)):.2e})")
    manifest = RunManifest(name, list(args.algo), getattr(args, "gamma", None), getattr(args, "grid", None),
                           list(args.p), list(args.seeds), args.epochs, args.target, str(out),
                           args.atomic_mode, args.m, obj.mu, {"fstar": fstar, "command": args.command})
    (out / "manifest.json").write_text(json.dumps(asdict(manifest), indent=2))
    return obj, fstar, out


def cmd_train(args) -> int:
    obj, fstar, out = _prepare(args)
    gamma = parse_gamma(args.gamma, obj.L) if args.gamma else 1.0 / (5.0 * obj.L)
    failed = 0
    curves = {}
    for algo in args.algo:
        for p in args.p:
            for seed in args.seeds:
                trace, ok, iters = run_one(obj, algo, gamma, p, seed, args, fstar)
                emit_csv(label(trace, algo, p, seed), trace_path(out, algo, p, seed))
                curves[f"{algo} p={p} s={seed}"] = trace
                status = "" if ok else "  (not converged)"
                print(f"{algo:10s} p={p:<3d} seed={seed:<4d} gamma={gamma:.4g} iters={iters} "
                      f"subopt={trace[-1].subopt:.3e}{status}")
                failed += not ok
    plotting.plot_traces(curves, out / "train_epochs.png")
    plotting.plot_traces(curves, out / "train_time.png", axis="time")
    return EXIT_NOCONV if failed and args.target is not None else EXIT_OK


def cmd_gridsearch(args) -> int:
    obj, fstar, out = _prepare(args)
    if args.target is None:
        args.target = 1e-5
    grid = parse_grid(args.grid, obj.L)
    rows = []
    status = EXIT_OK
    for algo in args.algo:
        for p in args.p:
            times = []
            for gamma in grid:
                ts = []
                for seed in args.seeds:
                    trace, _, _ = run_one(obj, algo, float(gamma), p, seed, args, fstar)
                    hit = first_hit(trace, args.target)
                    ts.append(hit.wall_ns if hit else math.inf)
                times.append(float(np.mean(ts)))
                rows.append((algo, p, float(gamma), times[-1]))
            if all(math.isinf(t) for t in times):
                print(f"{algo} p={p}: no step size reached {args.target:g}")
                status = EXIT_NOCONV
                continue
            best = int(np.argmin(times))
            print(f"{algo} p={p}: best gamma {grid[best]:.4g} ({grid[best] * obj.L:.3g}/L), "
                  f"time to target {times[best] / 1e6:.2f} ms")
            if len(grid) > 1 and best in (0, len(grid) - 1):
                print(f"warning: best step size for {algo} p={p} is at the grid boundary")
    with open(out / "gridsearch.csv", "w") as fh:
        fh.write("algorithm,p,gamma,time_to_target_ns\n")
        for algo, p, g, t in rows:
            fh.write(f"{algo},{p},{g!r},{t!r}\n")
    return status


def cmd_speedup(args) -> int:
    obj, fstar, out = _prepare(args)
    if args.target is None:
        args.target = 1e-5
    gamma = parse_gamma(args.gamma, obj.L) if args.gamma else 1.0 / (5.0 * obj.L)
    status = EXIT_OK
    for algo in args.algo:
        traces = {}
        for p in args.p:
            traces[p] = []
            for seed in args.seeds:
                trace, ok, _ = run_one(obj, algo, gamma, p, seed, args, fstar)
                emit_csv(label(trace, algo, p, seed), trace_path(out, algo, p, seed))
                traces[p].append(trace)
                status = status if ok else EXIT_NOCONV
        rows = speedup_table(traces, args.target)
        with open(out / f"speedup_{algo}.csv", "w") as fh:
            fh.write("p,time_speedup,iteration_speedup,time_ns,iterations,excluded\n")
            for r in rows:
                fh.write(f"{r.p},{r.time_speedup!r},{r.iteration_speedup!r},{r.time_ns!r},"
                         f"{r.iterations!r},{r.excluded}\n")
                print(f"{algo} p={r.p}: time speedup {r.time_speedup:.2f}, "
                      f"theoretical speedup {r.iteration_speedup:.2f}"
                      + (f" ({r.excluded} runs excluded)" if r.excluded else ""))
        plotting.plot_speedup(rows, out / f"speedup_{algo}.png", title=algo)
    return status


def cmd_overlap(args) -> int:
    obj, fstar, out = _prepare(args)
    gamma = parse_gamma(args.gamma, obj.L) if args.gamma else 1.0 / (5.0 * obj.L)
    algo = args.algo[0]
    if algo not in ASYNC:
        raise ConfigError("overlap needs an asynchronous algorithm")
    rows = []
    for p in args.p:
        for seed in args.seeds:
            res = run_async(obj, AsyncConfig(algo, gamma, workers=worker_cap(p), seed=seed, m=args.m,
                                             max_epochs=args.epochs, instrument=True, window=args.window,
                                             atomic_mode=args.atomic_mode), fstar=fstar)
            ov = res.overlap
            rows.append((p, seed, ov.max_observed, ov.mean, ov.duration_ratio, ov.upper_bound,
                         ov.max_over_mean_ratio))
    with open(out / "overlap.csv", "w") as fh:
        fh.write("p,seed,max_overlap,mean_overlap,R,upper_bound,max_over_mean\n")
        for r in rows:
            fh.write(",".join(repr(v) for v in r) + "\n")
    ps = sorted(set(args.p))
    med_max = [statistics.median(r[2] for r in rows if r[0] == p) for p in ps]
    med_mean = [statistics.median(r[3] for r in rows if r[0] == p) for p in ps]
    for p, a, b in zip(ps, med_max, med_mean):
        ub = statistics.median(r[5] for r in rows if r[0] == p)
        print(f"p={p}: max overlap {a:.2f}, mean {b:.3f}, (p-1)R bound {ub:.3g} (lower-bound estimates)")
    plotting.plot_overlap(ps, med_max, med_mean, out / "overlap.png")
    return EXIT_OK


def cmd_bias_demo(args) -> int:
    toy = TwoFactorToy()
    script = ScheduleScript.figure_one(Labeling.AFTER_WRITE)
    branches = enumerate_branches(script, toy)
    ex1, weights = expected_first_iterate(script, toy)
    g1, g2 = toy.grad(1, toy.x0), toy.grad(2, toy.x0)
    print(f"after-write: {len(branches)} branches, P(i_0=1)={weights[0]:g}, P(i_0=2)={weights[1]:g}")
    print(f"  E x_1 = {ex1}")
    mix = tuple(x - script.gamma * (0.75 * a + 0.25 * b) for x, a, b in zip(toy.x0, g1, g2))
    print(f"  x_0 - gamma (3/4 f1' + 1/4 f2') = {mix}")
    print(f"  P(i_1=2 | i_0=2) = {conditional_dependence_check(script, toy):g}")
    mean, se = monte_carlo_first_gradient(ScheduleScript.figure_one(Labeling.AFTER_READ), toy,
                                          args.samples, args.seed)
    truth = toy.full_grad(toy.x0)
    z = np.max(np.abs(mean - truth) / se)
    print(f"after-read Monte Carlo ({args.samples} samples): mean g = {mean}, f'(x_0) = {truth}, "
          f"max |z| = {z:.2f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        emit_trace_csv(branches[0][1], out / "bias_branch0.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="asaga", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def problem(sp, default_algo):
        sp.add_argument("--data", help="libsvm file (optionally gzipped)")
        sp.add_argument("--synthetic", help='generator spec, e.g. "n=1000,d=100,nnz=5"')
        sp.add_argument("--standardize", action="store_true", help="center and scale columns")
        sp.add_argument("--mu", type=float, default=None, help="l2 regularization (default 1/n)")
        sp.add_argument("--algo", nargs="+", default=[default_algo], choices=SERIAL + ASYNC)
        sp.add_argument("--p", type=_int_list, default=[1], help="worker counts, e.g. 1,2,4")
        sp.add_argument("--seeds", type=_int_list, default=[0])
        sp.add_argument("--epochs", type=float, default=10.0)
        sp.add_argument("--target", type=float, default=None, help="stop at this suboptimality")
        sp.add_argument("--m", type=int, default=None, help="SVRG epoch size (default n)")
        sp.add_argument("--atomic-mode", choices=["cas", "unsafe"], default="cas")
        sp.add_argument("--out", default="out")

    sp = sub.add_parser("train", help="run solvers and write traces")
    problem(sp, "asaga")
    sp.add_argument("--gamma", help="step size; '0.2/L' scales by 1/L (default 1/(5L))")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("gridsearch", help="pick the fastest step size on a grid")
    problem(sp, "asaga")
    sp.add_argument("--grid", default="0.1:10:10", help="lo:hi:k in units of 1/L")
    sp.set_defaults(func=cmd_gridsearch)

    sp = sub.add_parser("speedup", help="time and iteration speedups over worker counts")
    problem(sp, "asaga")
    sp.add_argument("--gamma")
    sp.set_defaults(func=cmd_speedup)

    sp = sub.add_parser("overlap", help="measure the overlap constant over worker counts")
    problem(sp, "asaga")
    sp.add_argument("--gamma")
    sp.add_argument("--window", type=int, default=100)
    sp.set_defaults(func=cmd_overlap)

    sp = sub.add_parser("bias-demo", help="labeling bias on the two-factor example")
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_bias_demo)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "p", None) is not None and any(p < 1 for p in args.p):
            raise ConfigError("worker counts must be positive")
        return args.func(args)
    except (LibsvmParseError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
