"""Limit objects: the binary birth-death process and the escape-time law.

Time units.  The limit skeleton lives on the *kappa* scale, where one unit
is ``1 / (sqrt(mu) * kappa)`` generations with ``kappa = sqrt(c^2 + 2 sigma^2)``.
The density of the escape time is stated on the *sqrt_mu* scale (one unit is
``1 / sqrt(mu)`` generations).  ``t_sqrt_mu = t_kappa / kappa``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from ._backend import kernels
from .rng import stream_key

Unit = Literal["kappa", "sqrt_mu"]

BD_EXTINCT, BD_ALIVE, BD_EXPLODED, BD_STOPPED = 0, 1, 2, 3


@dataclass(frozen=True)
class BirthDeathParams:
    """Unit-rate binary splitting: 2 children w.p. ``lam``, none otherwise."""

    lam: float
    rate: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if not self.rate > 0.0:
            raise ValueError("rate must be positive")


@dataclass
class BDPath:
    times: np.ndarray
    counts: np.ndarray
    extinct: bool
    exploded: bool
    t_end: float

    def count_at(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return int(self.counts[max(i, 0)])

    @property
    def first_death_time(self) -> float | None:
        """Time of the first childless death, None if it did not happen."""
        drops = np.flatnonzero(np.diff(self.counts) < 0)
        return float(self.times[drops[0] + 1]) if drops.size else None


def simulate_Y(params: BirthDeathParams, t_end: float, seed: int, replica: int = 0,
               cap: int = 10**6) -> BDPath:
    """Exact event-driven path from one particle up to ``t_end``.

    The path is flagged ``exploded`` (and cut) when the population reaches ``cap``.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    times, counts, status = kernels.bd_path(stream_key(seed, replica), params.lam, params.rate,
                                            float(t_end), int(cap))
    return BDPath(times, counts, status == BD_EXTINCT, status == BD_EXPLODED, float(t_end))


def simulate_Y_batch(params: BirthDeathParams, t_end: float, seed: int, replicas: int,
                     first_replica: int = 0, cap: int = 10**6, stop_at_first_death: bool = False) -> dict:
    """Summary arrays for many independent paths (status, end time, first childless death)."""
    return kernels.bd_batch(int(seed), int(first_replica), int(replicas), params.lam, params.rate,
                            float(t_end), int(cap), bool(stop_at_first_death))


def extinction_probability(params: BirthDeathParams) -> float:
    lam = params.lam
    if lam == 0.0:
        return 1.0
    return min(1.0, (1.0 - lam) / lam)


def extinction_probability_from_c(c: float, sigma2: float) -> float:
    """Closed form in terms of the regime constant; equals the lam form for c >= 0."""
    kappa = math.sqrt(c * c + 2.0 * sigma2)
    if c <= 0:
        return 1.0
    return (kappa - c) / (kappa + c)


def lambda_from_c(c: float, sigma2: float) -> float:
    return 0.5 + 0.5 * c / math.sqrt(c * c + 2.0 * sigma2)


def mean_population(lam: float, t: float, rate: float = 1.0) -> float:
    """``E Y(t) = exp((2 lam - 1) rate t)`` from one particle."""
    return math.exp((2.0 * lam - 1.0) * rate * t)


def first_death_tail(lam: float, t):
    """``P(T > t) = 1 / (lam + (1 - lam) e^t)``, ``t`` in the process's own time."""
    t = np.asarray(t, dtype=np.float64)
    # written to avoid overflow of e^t for large t
    out = np.exp(-t) / (lam * np.exp(-t) + (1.0 - lam))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EscapeLaw:
    """Limit law of the scaled time to the first marked particle."""

    c: float
    sigma2: float = 1.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if not math.isfinite(self.c):
            raise ValueError("c must be finite")

    @classmethod
    def from_lambda(cls, lam: float, sigma2: float = 1.0) -> "EscapeLaw":
        if not 0.0 < lam < 1.0:
            raise ValueError("lam must lie in (0, 1)")
        d = 2.0 * lam - 1.0
        return cls(d * math.sqrt(2.0 * sigma2 / (1.0 - d * d)), sigma2)

    @property
    def kappa(self) -> float:
        return math.sqrt(self.c * self.c + 2.0 * self.sigma2)

    @property
    def lam(self) -> float:
        return 0.5 + 0.5 * self.c / self.kappa

    def to_kappa(self, t_sqrt_mu):
        return np.asarray(t_sqrt_mu) * self.kappa

    def to_sqrt_mu(self, t_kappa):
        return np.asarray(t_kappa) / self.kappa

    def generations(self, t_sqrt_mu, mu: float):
        """Convert sqrt_mu-scaled time to generations."""
        return np.asarray(t_sqrt_mu) / math.sqrt(mu)

    def tail(self, t, unit: Unit = "kappa"):
        t = _nonneg(t)
        if unit == "sqrt_mu":
            t = t * self.kappa
        elif unit != "kappa":
            raise ValueError(f"unknown unit {unit!r}")
        return first_death_tail(self.lam, t)

    def cdf(self, t, unit: Unit = "kappa"):
        return 1.0 - self.tail(t, unit)

    def density(self, t):
        """Density of the sqrt_mu-scaled escape time."""
        t = _nonneg(t)
        k, c = self.kappa, self.c
        x = np.exp(-k * t)
        # numerator and denominator multiplied by e^{-2 k t}
        out = 2.0 * (k - c) * x / ((1.0 + c / k) * x + (1.0 - c / k)) ** 2
        return float(out) if out.ndim == 0 else out

    def mode(self) -> float:
        """Argmax of :meth:`density`; 0 when ``c <= 0`` (decreasing density)."""
        if self.c <= 0:
            return 0.0
        k = self.kappa
        return math.log1p(2.0 * self.c / (k - self.c)) / k

    def mean(self, unit: Unit = "kappa") -> float:
        """``E T = -log(1 - lam) / lam``, the integral of the tail."""
        lam = self.lam
        m = -math.log1p(-lam) / lam
        return m if unit == "kappa" else m / self.kappa

    def most_likely_generation(self, mu: float) -> float:
        """Mode expressed in generations for marking rate ``mu``."""
        return self.mode() / math.sqrt(mu)

    def curve(self, grid: Sequence[float]) -> dict:
        t = np.asarray(grid, dtype=np.float64)
        return {"t": t, "psi": self.density(t), "tail": self.tail(t, unit="sqrt_mu")}


def _nonneg(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0) or np.any(~np.isfinite(t)):
        raise ValueError("time must be finite and non-negative")
    return t


def escape_tail(law: EscapeLaw, t, unit: Unit = "kappa"):
    return law.tail(t, unit)


def escape_density(law: EscapeLaw, t):
    return law.density(t)


def escape_mode(law: EscapeLaw) -> float:
    return law.mode()


def write_escape_curves(path, laws: Sequence[EscapeLaw], grid: Sequence[float]) -> Path:
    """CSV with columns ``c, sigma2, t, psi, tail`` (t on the sqrt_mu scale)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["c", "sigma2", "t", "psi", "tail"])
        for law in laws:
            cur = law.curve(grid)
            for t, psi, tail in zip(cur["t"], cur["psi"], cur["tail"]):
                w.writerow([repr(law.c), repr(law.sigma2), repr(float(t)), repr(float(psi)), repr(float(tail))])
    return path


def leaf_count_pmf(n_max: int) -> np.ndarray:
    """``P(W = n)`` for ``n = 1..n_max``: coefficients of ``1 - sqrt(1 - s)``."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    out = np.empty(n_max)
    out[0] = 0.5
    for n in range(1, n_max):
        out[n] = out[n - 1] * (2 * n - 1) / (2 * n + 2)
    return out


def leaf_count_recursion(n_max: int) -> np.ndarray:
    """Same law from ``w_1 = 1/2``, ``w_n = 1/2 sum_{i+j=n} w_i w_j``."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    w = np.zeros(n_max + 1)
    w[1] = 0.5
    for n in range(2, n_max + 1):
        w[n] = 0.5 * math.fsum(w[i] * w[n - i] for i in range(1, n))
    return w[1:]
