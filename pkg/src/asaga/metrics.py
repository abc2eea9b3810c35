"""Traces, speedup tables, overlap estimates and their CSV form."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CSV_COLUMNS = ("algorithm", "p", "seed", "ticket", "wall_ns", "epoch", "subopt")


@dataclass(frozen=True)
class TraceRecord:
    ticket: int
    wall_ns: int
    subopt: float
    epoch: float


@dataclass(frozen=True)
class LabeledRecord:
    """A trace record tagged with the run it came from (one CSV row)."""

    algorithm: str
    p: int
    seed: int
    record: TraceRecord


@dataclass(frozen=True)
class OverlapEstimate:
    """Windowed overlap measurements of one run.

    Each window value is ``(D - W) / W`` where ``D`` is the ticket distance
    between the start of a window's first iteration and the end of its last
    one and ``W`` the window length: iterations other workers completed per
    own iteration. This is a lower bound on the actual overlap.
    """

    mean_overlap_per_window: np.ndarray
    max_observed: float
    upper_bound: float
    duration_ratio: float
    max_over_mean_ratio: float
    p: int
    window: int
    kind: str = "lower bound on the actual overlap"

    @property
    def mean(self) -> float:
        w = self.mean_overlap_per_window
        return float(w.mean()) if w.size else 0.0


def estimate_overlap(windows: np.ndarray, p: int, min_ns: float, max_ns: float,
                     mean_ns: float | None = None, window: int = 100) -> OverlapEstimate:
    """Summarize window overlaps; ``R`` is the max/min iteration duration ratio."""
    windows = np.asarray(windows, dtype=np.float64)
    R = max_ns / min_ns if min_ns > 0 else math.inf
    mean_ratio = max_ns / mean_ns if mean_ns else math.nan
    return OverlapEstimate(
        mean_overlap_per_window=windows,
        max_observed=float(windows.max()) if windows.size else 0.0,
        upper_bound=(p - 1) * R,
        duration_ratio=R,
        max_over_mean_ratio=mean_ratio,
        p=p,
        window=window,
    )


def first_hit(trace: Sequence[TraceRecord], target: float) -> TraceRecord | None:
    for rec in trace:
        if rec.subopt <= target:
            return rec
    return None


@dataclass(frozen=True)
class SpeedupRow:
    p: int
    time_speedup: float
    iteration_speedup: float
    time_ns: float
    iterations: float
    excluded: int  # traces that never reached the target


def speedup_table(traces: dict[int, Sequence[Sequence[TraceRecord]]], target: float) -> list[SpeedupRow]:
    """Speedups relative to the smallest ``p`` present (normally 1).

    Times and iteration counts to ``target`` are averaged over the traces of
    each ``p``. The iteration speedup is ``p * iters_1 / iters_p``: it equals
    ``p`` when every worker count needs the same number of iterations, which
    is the theoretical (hardware-free) linear speedup.
    """
    stats = {}
    for p, group in sorted(traces.items()):
        hits = [first_hit(tr, target) for tr in group]
        ok = [h for h in hits if h is not None]
        excluded = len(hits) - len(ok)
        if ok:
            stats[p] = (np.mean([h.wall_ns for h in ok]), np.mean([h.ticket for h in ok]), excluded)
        else:
            stats[p] = (math.nan, math.nan, excluded)
    if not stats:
        return []
    base = min(stats)
    t1, it1, _ = stats[base]
    rows = []
    for p, (tp, itp, excluded) in stats.items():
        rows.append(SpeedupRow(
            p=p,
            time_speedup=t1 / tp if tp > 0 else math.nan,
            iteration_speedup=(p / base) * it1 / itp if itp > 0 else math.nan,
            time_ns=tp,
            iterations=itp,
            excluded=excluded,
        ))
    return rows


def emit_csv(records: Iterable[LabeledRecord], path) -> None:
    """Write trace rows sorted by (algorithm, p, seed, ticket, wall_ns)."""
    rows = sorted(records, key=lambda r: (r.algorithm, r.p, r.seed, r.record.ticket, r.record.wall_ns))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            rec = r.record
            w.writerow([r.algorithm, r.p, r.seed, rec.ticket, rec.wall_ns, repr(float(rec.epoch)),
                        repr(float(rec.subopt))])


def read_csv(path) -> list[LabeledRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected header {header}")
        return [
            LabeledRecord(a, int(p), int(seed), TraceRecord(int(t), int(ns), float(sub), float(ep)))
            for a, p, seed, t, ns, ep, sub in reader
        ]


def label(trace: Iterable[TraceRecord], algorithm: str, p: int, seed: int) -> list[LabeledRecord]:
    return [LabeledRecord(algorithm, p, seed, r) for r in trace]


def trace_path(out_dir, algorithm: str, p: int, seed: int) -> Path:
    return Path(out_dir) / f"{algorithm}_{p}_{seed}.csv"
