"""Estimators and goodness-of-fit tests used by the Monte Carlo harness."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import chi2 as _chi2

KS_TERMS = 100
MIN_KS_SAMPLES = 8
MIN_EXPECTED = 5.0


def binomial_se(p: float, n: int) -> float:
    if n <= 0:
        return math.nan
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return math.nan, math.nan
    if x.size == 1:
        return float(x[0]), math.nan
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def z_score(estimate: float, oracle: float, se: float) -> float:
    if not se > 0:
        return 0.0 if estimate == oracle else math.inf
    return (estimate - oracle) / se


def kolmogorov_sf(x: float, terms: int = KS_TERMS) -> float:
    """``P(K > x)`` for the Kolmogorov distribution, series cut at ``terms``."""
    if x <= 0.0:
        return 1.0
    if x < 1.0:
        # the alternating series converges slowly here; use the dual theta series
        s = sum(math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8.0 * x * x)) for k in range(1, terms + 1))
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / x * s))
    s = sum((-1) ** (k - 1) * math.exp(-2.0 * k * k * x * x) for k in range(1, terms + 1))
    return min(1.0, max(0.0, 2.0 * s))


@dataclass
class KSResult:
    d: float
    p: float
    n: int


def ks_test(samples: Sequence[float], cdf: Callable | None = None, *, tail: Callable | None = None) -> KSResult:
    """One-sample KS test of sorted ``samples`` against a continuous law.

    Pass either ``cdf`` or ``tail`` (``tail = 1 - cdf``).
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size < MIN_KS_SAMPLES:
        raise ValueError(f"KS test needs at least {MIN_KS_SAMPLES} samples")
    if np.any(np.diff(x) < 0):
        raise ValueError("samples must be sorted")
    if (cdf is None) == (tail is None):
        raise ValueError("give exactly one of cdf or tail")
    f = np.asarray(cdf(x) if cdf is not None else 1.0 - np.asarray(tail(x)), dtype=np.float64)
    n = x.size
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
    return KSResult(d, kolmogorov_sf(math.sqrt(n) * d), n)


@dataclass
class ChiSquareResult:
    statistic: float
    dof: int
    p: float
    observed: np.ndarray
    expected: np.ndarray


def pool_cells(observed, expected, min_expected: float = MIN_EXPECTED):
    """Merge cells with expected count below ``min_expected``.

    Small cells (in their given order) are accumulated into one pooled cell;
    if that cell is still too small it is merged into the smallest large one.
    """
    obs = np.asarray(observed, dtype=np.float64).ravel()
    exp = np.asarray(expected, dtype=np.float64).ravel()
    big = exp >= min_expected
    o = list(obs[big])
    e = list(exp[big])
    po, pe = float(obs[~big].sum()), float(exp[~big].sum())
    if pe > 0 or po > 0:
        if pe >= min_expected or not e:
            o.append(po)
            e.append(pe)
        else:
            j = int(np.argmin(e))
            o[j] += po
            e[j] += pe
    return np.asarray(o), np.asarray(e)


def chi_square(observed, probs, min_expected: float = MIN_EXPECTED) -> ChiSquareResult:
    """Pearson test of counts against cell probabilities (sum to 1)."""
    obs = np.asarray(observed, dtype=np.float64).ravel()
    pr = np.asarray(probs, dtype=np.float64).ravel()
    if obs.shape != pr.shape:
        raise ValueError("observed and probs must have the same shape")
    n = obs.sum()
    if np.any(obs[pr <= 0] > 0):
        # an observation the law forbids; pooling must not hide it
        return ChiSquareResult(math.inf, int((pr > 0).sum()) - 1, 0.0, obs, n * pr / pr.sum())
    o, e = pool_cells(obs[pr > 0], n * pr[pr > 0] / pr.sum(), min_expected)
    stat = float(((o - e) ** 2 / e).sum())
    dof = max(o.size - 1, 1)
    return ChiSquareResult(stat, dof, float(_chi2.sf(stat, dof)), o, e)
