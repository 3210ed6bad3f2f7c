"""Representativeness checks of a reduced (fused) sample against full samples."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as _st

from .errors import ArityError, DomainError


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p_two_sided: float
    significant_95: bool


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    df: int
    p: float
    dropped: tuple[int, ...] = ()


def welch_t(mean1: float, sd1: float, n1: int, mean2: float, sd2: float, n2: int) -> TTestResult:
    """Unequal-variance t-test from summary moments.

    The degrees of freedom follow Welch-Satterthwaite; the p-value is two-sided.
    """
    if sd1 <= 0 or sd2 <= 0:
        raise DomainError("standard deviations must be positive")
    if n1 < 2 or n2 < 2:
        raise DomainError("each sample needs at least two observations")
    v1, v2 = sd1 ** 2 / n1, sd2 ** 2 / n2
    t = (mean1 - mean2) / math.sqrt(v1 + v2)
    df = (v1 + v2) ** 2 / (v1 ** 2 / (n1 - 1) + v2 ** 2 / (n2 - 1))
    p = float(min(1.0, 2.0 * _st.t.sf(abs(t), df)))
    return TTestResult(t, df, p, p < 0.05)


def welch_t_samples(sample1: Sequence[float], sample2: Sequence[float]) -> TTestResult:
    a, b = np.asarray(sample1, float), np.asarray(sample2, float)
    return welch_t(a.mean(), a.std(ddof=1), len(a), b.mean(), b.std(ddof=1), len(b))


def chi_square_gof(observed: Sequence[float], expected: Sequence[float]) -> ChiSquareResult:
    """Pearson goodness-of-fit statistic of observed against expected counts.

    Categories with zero expected count are left out of the sum (with a
    warning) but still counted in the degrees of freedom, ``categories - 1``.
    """
    o = np.asarray(observed, dtype=float)
    e = np.asarray(expected, dtype=float)
    if o.shape != e.shape or o.ndim != 1:
        raise ArityError(f"{o.size} observed vs {e.size} expected categories")
    if np.any(e < 0) or np.any(o < 0):
        raise DomainError("counts must be nonnegative")
    keep = e > 0
    dropped = tuple(int(i) for i in np.flatnonzero(~keep))
    if dropped:
        warnings.warn(f"chi-square: categories {dropped} have zero expected count and are skipped")
    statistic = float(np.sum((o[keep] - e[keep]) ** 2 / e[keep]))
    df = len(o) - 1
    if df < 1:
        raise DomainError("need at least two categories")
    p = float(_st.chi2.sf(statistic, df))
    return ChiSquareResult(statistic, df, p, dropped)
