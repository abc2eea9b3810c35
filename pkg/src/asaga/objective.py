"""l2-regularized logistic regression as a finite sum with sparse oracles.

The per-sample loss is ``log(1 + exp(-b_i a_i^T x))``; its gradient is
``s_i(x) * a_i`` with the scalar ``s_i(x) = -b_i * sigmoid(-b_i a_i^T x)``,
so a historical gradient is one scalar per sample. The regularizer
``mu/2 ||x||^2`` never enters that memory: solvers apply ``mu * D_i x`` (or
``mu * x`` for dense updates) at step time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .dataset import SparseDataset, SupportStats, lipschitz_constant, support_stats


@njit(nogil=True, inline="always", cache=True)
def margin(indptr, indices, data, x, i):
    z = 0.0
    for k in range(indptr[i], indptr[i + 1]):
        z += data[k] * x[indices[k]]
    return z


@njit(nogil=True, inline="always", cache=True)
def loss_slope(z, b):
    """Derivative of ``log(1 + exp(-b z))`` with respect to ``z``."""
    t = -b * z
    if t >= 0.0:
        sig = 1.0 / (1.0 + math.exp(-t))
    else:
        e = math.exp(t)
        sig = e / (1.0 + e)
    return -b * sig


@njit(nogil=True, inline="always", cache=True)
def softplus(t):
    if t > 0.0:
        return t + math.log1p(math.exp(-t))
    return math.log1p(math.exp(t))


@njit(nogil=True, cache=True)
def objective_value(indptr, indices, data, labels, x, mu, reverse):
    n = labels.shape[0]
    acc = 0.0
    for j in range(n):
        i = n - 1 - j if reverse else j
        acc += softplus(-labels[i] * margin(indptr, indices, data, x, i))
    sq = 0.0
    d = x.shape[0]
    for j in range(d):
        v = d - 1 - j if reverse else j
        sq += x[v] * x[v]
    return acc / n + 0.5 * mu * sq


@njit(nogil=True, cache=True)
def loss_gradient_sum(indptr, indices, data, labels, x, lo, hi, out, slopes):
    """Accumulate ``sum_{lo<=i<hi} s_i(x) a_i`` into ``out``; stores ``s_i`` in ``slopes``."""
    for i in range(lo, hi):
        s = loss_slope(margin(indptr, indices, data, x, i), labels[i])
        slopes[i] = s
        for k in range(indptr[i], indptr[i + 1]):
            out[indices[k]] += s * data[k]


@dataclass(frozen=True, eq=False)
class Objective:
    """``f(x) = 1/n sum_i log(1 + exp(-b_i a_i^T x)) + mu/2 ||x||^2``."""

    dataset: SparseDataset
    stats: SupportStats
    mu: float
    L: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.L < self.mu:
            raise ValueError("L must be at least mu")

    @classmethod
    def from_dataset(cls, ds: SparseDataset, mu: float | None = None) -> "Objective":
        mu = 1.0 / ds.n if mu is None else float(mu)
        return cls(ds, support_stats(ds), mu, lipschitz_constant(ds, mu))

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def d(self) -> int:
        return self.dataset.d

    @property
    def kappa(self) -> float:
        return self.L / self.mu

    @property
    def arrays(self):
        ds = self.dataset
        return ds.indptr, ds.indices, ds.data, ds.labels

    def value(self, x: np.ndarray, reverse: bool = False) -> float:
        return objective_value(*self.arrays, np.ascontiguousarray(x, dtype=np.float64), self.mu, reverse)

    def slope(self, i: int, x: np.ndarray) -> float:
        indptr, indices, data, labels = self.arrays
        return loss_slope(margin(indptr, indices, data, x, i), labels[i])

    def partial_gradient(self, i: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Loss gradient of sample ``i`` as ``(support, values)``; no regularizer.

        ``x`` may be a full vector or only its values on the support of ``i``.
        """
        idx, val = self.dataset.row(i)
        x = np.asarray(x, dtype=np.float64)
        xs = x if x.shape[0] == idx.shape[0] and x.shape[0] != self.d else x[idx]
        s = loss_slope(float(np.dot(val, xs)) if idx.size else 0.0, self.dataset.labels[i])
        return idx, s * val

    def loss_gradient(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Average loss gradient ``1/n sum_i s_i a_i`` and the slopes ``s_i``."""
        out = np.zeros(self.d)
        slopes = np.empty(self.n)
        loss_gradient_sum(*self.arrays, np.ascontiguousarray(x, dtype=np.float64), 0, self.n, out, slopes)
        return out / self.n, slopes

    def full_gradient(self, x: np.ndarray) -> np.ndarray:
        g, _ = self.loss_gradient(x)
        return g + self.mu * np.asarray(x)

    def sample_direction(self, i: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Unbiased stochastic gradient ``f_i'(x) + mu D_i x`` on the support of ``i``."""
        idx, g = self.partial_gradient(i, x)
        return idx, g + self.mu * np.asarray(x)[idx] * self.stats.inv_p[idx]


@dataclass
class GradMemory:
    """Historical loss gradients ``alpha_i = scalars[i] * a_i``."""

    scalars: np.ndarray
    representation_kind: str = "scalar-per-sample"

    @classmethod
    def zeros(cls, n: int) -> "GradMemory":
        return cls(np.zeros(n))

    def reconstruct(self, ds: SparseDataset, i: int) -> tuple[np.ndarray, np.ndarray]:
        idx, val = ds.row(i)
        return idx, self.scalars[i] * val

    def average(self, ds: SparseDataset) -> np.ndarray:
        out = np.zeros(ds.d)
        np.add.at(out, ds.indices, ds.data * self.scalars[ds.row_ids()])
        return out / ds.n


def project_average(stats: SupportStats, abar: np.ndarray, ds: SparseDataset, i: int):
    """``D_i abar`` as ``(support, values)``: ``abar_v / p_v`` on the support of ``i``."""
    idx, _ = ds.row(i)
    return idx, abar[idx] * stats.inv_p[idx]


def suboptimality(obj: Objective, x: np.ndarray, fstar: float, raw: bool = False) -> float:
    """``f(x) - fstar``, clamped at 0 unless ``raw``."""
    gap = obj.value(x) - fstar
    return gap if raw else max(gap, 0.0)


def gradient_variance(obj: Objective, xstar: np.ndarray) -> float:
    """``1/n sum_i ||f_i'(x*) + mu D_i x*||^2`` for the estimator the solvers use."""
    total = 0.0
    for i in range(obj.n):
        _, g = obj.sample_direction(i, xstar)
        total += float(g @ g)
    return total / obj.n
