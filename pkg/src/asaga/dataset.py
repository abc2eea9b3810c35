"""Row-compressed sparse datasets, libsvm I/O and sparsity statistics."""
from __future__ import annotations

import gzip
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np


class LibsvmParseError(ValueError):
    """Malformed libsvm input; ``lineno`` is 1-based."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True, eq=False)
class SparseDataset:
    """Samples ``a_i`` stored in CSR form with labels ``b_i`` in {-1, +1}.

    ``indptr``/``indices``/``data`` follow the usual CSR convention, so the
    support of sample ``i`` is ``indices[indptr[i]:indptr[i + 1]]``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    labels: np.ndarray
    d: int
    dense_flag: bool = False
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "indptr", np.ascontiguousarray(self.indptr, dtype=np.int64))
        object.__setattr__(self, "indices", np.ascontiguousarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "data", np.ascontiguousarray(self.data, dtype=np.float64))
        object.__setattr__(self, "labels", np.ascontiguousarray(self.labels, dtype=np.float64))
        self.validate()

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def nnz(self) -> int:
        return self.indices.shape[0]

    @property
    def density(self) -> float:
        return self.nnz / (self.n * self.d)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    @property
    def rows(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        return (self.row(i) for i in range(self.n))

    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    def support_sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.d))
        for i in range(self.n):
            idx, val = self.row(i)
            out[i, idx] = val
        return out

    def validate(self) -> None:
        n = self.labels.shape[0]
        if n < 1 or self.d < 1:
            raise ValueError("dataset needs n >= 1 and d >= 1")
        if self.indptr.shape[0] != n + 1 or self.indptr[0] != 0 or self.indptr[-1] != self.indices.shape[0]:
            raise ValueError("inconsistent indptr")
        if self.data.shape != self.indices.shape:
            raise ValueError("indices and data differ in length")
        if not np.all(np.abs(self.labels) == 1.0):
            raise ValueError("labels must be -1 or +1")
        if self.nnz:
            if self.indices.min() < 0 or self.indices.max() >= self.d:
                raise ValueError("feature index out of range")
            ok = np.diff(self.indices) > 0
            cross = self.indptr[1:-1] - 1
            ok[cross[(cross >= 0) & (cross < ok.shape[0])]] = True
            if not ok.all():
                raise ValueError("row indices must be strictly increasing")
            if not np.all(np.isfinite(self.data)):
                raise ValueError("non-finite feature value")

    def __eq__(self, other):
        if not isinstance(other, SparseDataset):
            return NotImplemented
        return (
            self.d == other.d
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data, other.data)
            and np.array_equal(self.labels, other.labels)
        )

    @classmethod
    def from_dense(cls, X: np.ndarray, labels, keep_zeros: bool = False) -> "SparseDataset":
        X = np.asarray(X, dtype=np.float64)
        n, d = X.shape
        mask = np.ones_like(X, dtype=bool) if keep_zeros else X != 0
        indptr = np.concatenate([[0], np.cumsum(mask.sum(axis=1))])
        rows, cols = np.nonzero(mask)
        return cls(indptr, cols, X[rows, cols], np.asarray(labels, dtype=np.float64), d,
                   dense_flag=bool(mask.all()))


@dataclass(frozen=True, eq=False)
class SupportStats:
    """Per-dimension inclusion probabilities ``p_v`` and the sparsity constant.

    ``inv_p`` holds ``1/p_v`` and 0 for dimensions that no sample touches.
    """

    p: np.ndarray
    inv_p: np.ndarray
    counts: np.ndarray
    delta_r: int
    delta: float


_PAIR = re.compile(r"^(\d+):(\S+)$")


def _open_text(path: Path):
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rt")
    return open(path, "r")


def load_libsvm(path, d: int | None = None) -> SparseDataset:
    """Parse a libsvm/svmlight file (optionally gzipped).

    Indices are 1-based on disk and 0-based in memory. Binary labels are mapped
    by sorted class value: the smaller class becomes -1, the larger +1.
    ``d`` forces the dimension; otherwise it is the largest index seen.
    """
    path = Path(path)
    raw_labels: list[float] = []
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                label = float(tokens[0])
            except ValueError:
                raise LibsvmParseError(lineno, f"bad label {tokens[0]!r}") from None
            if not math.isfinite(label):
                raise LibsvmParseError(lineno, "non-finite label")
            prev = 0
            for tok in tokens[1:]:
                m = _PAIR.match(tok)
                if m is None:
                    raise LibsvmParseError(lineno, f"bad feature token {tok!r}")
                idx = int(m.group(1))
                try:
                    val = float(m.group(2))
                except ValueError:
                    raise LibsvmParseError(lineno, f"bad value in {tok!r}") from None
                if idx < 1:
                    raise LibsvmParseError(lineno, "feature indices are 1-based")
                if idx <= prev:
                    raise LibsvmParseError(lineno, "feature indices must be strictly increasing")
                if not math.isfinite(val):
                    raise LibsvmParseError(lineno, f"non-finite value in {tok!r}")
                prev = idx
                indices.append(idx - 1)
                values.append(val)
            raw_labels.append(label)
            indptr.append(len(indices))
    if not raw_labels:
        raise LibsvmParseError(0, "empty file")
    classes = sorted(set(raw_labels))
    if len(classes) > 2:
        raise LibsvmParseError(0, f"expected a binary problem, found {len(classes)} classes")
    if classes == [-1.0, 1.0] or len(classes) == 1 and classes[0] in (-1.0, 1.0):
        labels = np.asarray(raw_labels)
    else:
        labels = np.where(np.asarray(raw_labels) == classes[0], -1.0, 1.0)
    dim = max(indices) + 1 if indices else 1
    if d is not None:
        if d < dim:
            raise ValueError(f"d={d} smaller than largest index {dim}")
        dim = d
    return SparseDataset(np.asarray(indptr), np.asarray(indices, dtype=np.int64),
                         np.asarray(values), labels, dim)


def dump_libsvm(ds: SparseDataset, path) -> None:
    with open(path, "w") as fh:
        for i in range(ds.n):
            idx, val = ds.row(i)
            pairs = " ".join(f"{j + 1}:{v!r}" for j, v in zip(idx.tolist(), val.tolist()))
            fh.write(f"{int(ds.labels[i]):+d} {pairs}".rstrip() + "\n")


def standardize(ds: SparseDataset) -> SparseDataset:
    """Center and scale every column to mean 0, variance 1; result is dense.

    Zero-variance columns are left at zero and reported in ``warnings``.
    """
    X = ds.to_dense()
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    X = X - mean
    warnings = []
    flat = sd == 0
    for v in np.flatnonzero(flat):
        warnings.append(f"column {v} has zero variance")
    X[:, ~flat] /= sd[~flat]
    X[:, flat] = 0.0
    out = SparseDataset.from_dense(X, ds.labels, keep_zeros=True)
    return SparseDataset(out.indptr, out.indices, out.data, out.labels, out.d,
                         dense_flag=True, warnings=tuple(warnings))


def support_stats(ds: SparseDataset) -> SupportStats:
    counts = np.bincount(ds.indices, minlength=ds.d).astype(np.int64)
    p = counts / ds.n
    inv_p = np.zeros(ds.d)
    seen = counts > 0
    inv_p[seen] = ds.n / counts[seen]
    delta_r = int(counts.max())
    return SupportStats(p=p, inv_p=inv_p, counts=counts, delta_r=delta_r, delta=delta_r / ds.n)


def lipschitz_constant(ds: SparseDataset, mu: float) -> float:
    """Per-sample smoothness of the logistic loss plus ``mu``: max ||a_i||^2/4 + mu."""
    sq = np.bincount(ds.row_ids(), weights=ds.data**2, minlength=ds.n)
    return float(sq.max() / 4.0 + mu)


def make_synthetic(n: int, d: int, nnz: int, noise: float = 0.05, seed: int = 0,
                   row_norm: float = 1.0) -> SparseDataset:
    """Random sparse classification data.

    Each row has ``nnz`` distinct features drawn uniformly, gaussian values
    rescaled to ``row_norm``, and a label from a planted linear separator
    flipped with probability ``noise``.
    """
    if not 1 <= nnz <= d:
        raise ValueError("need 1 <= nnz <= d")
    rng = np.random.default_rng(seed)
    cols = np.empty((n, nnz), dtype=np.int64)
    for i in range(n):
        cols[i] = np.sort(rng.choice(d, size=nnz, replace=False))
    vals = rng.standard_normal((n, nnz))
    vals *= row_norm / np.linalg.norm(vals, axis=1, keepdims=True)
    w = rng.standard_normal(d)
    margin = (vals * w[cols]).sum(axis=1)
    labels = np.where(margin >= 0, 1.0, -1.0)
    flip = rng.random(n) < noise
    labels[flip] *= -1
    indptr = np.arange(n + 1, dtype=np.int64) * nnz
    return SparseDataset(indptr, cols.ravel(), vals.ravel(), labels, d, dense_flag=nnz == d)


def make_disjoint(n: int, width: int, seed: int = 0) -> SparseDataset:
    """Every feature belongs to exactly one sample (``Delta = 1/n``)."""
    rng = np.random.default_rng(seed)
    d = n * width
    indices = np.arange(d, dtype=np.int64)
    vals = rng.standard_normal(d)
    vals = vals.reshape(n, width)
    vals /= np.linalg.norm(vals, axis=1, keepdims=True)
    labels = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    indptr = np.arange(n + 1, dtype=np.int64) * width
    return SparseDataset(indptr, indices, vals.ravel(), labels, d)


def parse_synthetic_spec(spec: str) -> dict:
    """``"n=1000,d=100,nnz=5"`` -> keyword arguments for :func:`make_synthetic`."""
    kinds = {"n": int, "d": int, "nnz": int, "noise": float, "seed": int, "row_norm": float}
    out = {}
    for part in filter(None, (p.strip() for p in spec.split(","))):
        key, _, value = part.partition("=")
        if key not in kinds or not value:
            raise ValueError(f"bad synthetic field {part!r}")
        out[key] = kinds[key](value)
    missing = {"n", "d", "nnz"} - out.keys()
    if missing:
        raise ValueError(f"synthetic spec lacks {sorted(missing)}")
    return out
