"""Empirical distributions and the exact two-sample KS statistic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class EmpiricalDistribution:
    values: np.ndarray  # sorted ascending

    def __init__(self, values):
        arr = np.sort(np.asarray(values, dtype=np.float64).ravel())
        if arr.size == 0:
            raise ValueError("empirical distribution needs at least one sample")
        self.values = arr

    @property
    def n(self):
        return int(self.values.size)


@dataclass
class KSResult:
    statistic: float
    n1: int
    n2: int


def ks_statistic(a, b):
    """Exact sup-difference of the two empirical CDFs.

    Evaluates both ECDFs at every observed value; the supremum over the
    pooled observation points is the supremum over the whole line
    because both ECDFs are right-continuous step functions.
    """
    if not isinstance(a, EmpiricalDistribution):
        a = EmpiricalDistribution(a)
    if not isinstance(b, EmpiricalDistribution):
        b = EmpiricalDistribution(b)
    grid = np.concatenate([a.values, b.values])
    cdf_a = np.searchsorted(a.values, grid, side="right") / a.n
    cdf_b = np.searchsorted(b.values, grid, side="right") / b.n
    d = float(np.abs(cdf_a - cdf_b).max())
    return KSResult(statistic=d, n1=a.n, n2=b.n)
