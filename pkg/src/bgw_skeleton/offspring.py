"""Offspring laws, marking rules and exact generating-function machinery.

Everything here is exact (finite support, double precision).  The survival
probability of the skeleton is found by a bracketed root search (Illinois
regula falsi) on a concave map written
without catastrophic cancellation, so it stays accurate in relative terms
down to survival probabilities of order 1e-15.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import comb

PMF_TOL = 1e-12
TRUNCATION_MASS = 1e-14


class InvalidLawError(ValueError):
    """A pmf or marking table violates its invariants."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message if index is None else f"law {index}: {message}")
        self.index = index


class ConditioningError(ValueError):
    """Conditioning on an event of probability zero."""


class NumericalError(RuntimeError):
    """An iterative solver failed to converge."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class OffspringLaw:
    """Offspring distribution ``p(0..K)`` with cached moments."""

    pmf: np.ndarray
    mean: float = field(init=False)
    factorial_moment2: float = field(init=False)

    def __post_init__(self):
        p = np.asarray(self.pmf, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise InvalidLawError("pmf must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(p)):
            raise InvalidLawError("pmf has non-finite entries")
        bad = np.flatnonzero((p < 0) | (p > 1))
        if bad.size:
            raise InvalidLawError(f"pmf entry p({bad[0]})={p[bad[0]]!r} outside [0, 1]")
        total = math.fsum(p)
        if abs(total - 1.0) > PMF_TOL:
            raise InvalidLawError(f"pmf sums to {total!r}, not 1")
        k = np.arange(p.size, dtype=np.float64)
        object.__setattr__(self, "pmf", _frozen(p))
        object.__setattr__(self, "mean", math.fsum(k * p))
        object.__setattr__(self, "factorial_moment2", math.fsum(k * (k - 1) * p))

    @property
    def epsilon(self) -> float:
        return self.mean - 1.0

    @property
    def support(self) -> int:
        """Largest offspring count ``K``."""
        return self.pmf.size - 1

    @property
    def second_moment(self) -> float:
        k = np.arange(self.pmf.size, dtype=np.float64)
        return math.fsum(k * k * self.pmf)

    def pgf(self, s):
        return np.polynomial.polynomial.polyval(s, self.pmf)

    def tail_second_moment(self, n: int) -> float:
        """``sum_{k >= n} k^2 p(k)``."""
        k = np.arange(self.pmf.size, dtype=np.float64)
        return math.fsum((k * k * self.pmf)[n:])

    def to_dict(self) -> dict:
        return {"pmf": [float(x) for x in self.pmf]}

    def __repr__(self) -> str:
        return f"OffspringLaw(K={self.support}, mean={self.mean:.7g}, fm2={self.factorial_moment2:.7g})"


def _truncated(weights: Iterable[float], tail_of) -> OffspringLaw:
    w = []
    for k, x in enumerate(weights):
        w.append(x)
        if tail_of(k) <= TRUNCATION_MASS:
            break
    p = np.asarray(w, dtype=np.float64)
    return OffspringLaw(p / math.fsum(p))


def poisson_law(mean: float) -> OffspringLaw:
    from scipy.stats import poisson

    if mean <= 0:
        raise InvalidLawError("Poisson mean must be positive")

    def gen():
        k = 0
        while True:
            yield poisson.pmf(k, mean)
            k += 1

    return _truncated(gen(), lambda k: poisson.sf(k, mean))


def geometric_law(mean: float) -> OffspringLaw:
    """Geometric law on {0, 1, ...} with the given mean."""
    if mean <= 0:
        raise InvalidLawError("geometric mean must be positive")
    r = mean / (1.0 + mean)

    def gen():
        k = 0
        while True:
            yield (1.0 - r) * r**k
            k += 1

    return _truncated(gen(), lambda k: r ** (k + 1))


def binary_law(epsilon: float = 0.0) -> OffspringLaw:
    """0 or 2 children, mean ``1 + epsilon``."""
    p2 = (1.0 + epsilon) / 2.0
    if not 0.0 <= p2 <= 1.0:
        raise InvalidLawError("epsilon must lie in [-1, 1]")
    return OffspringLaw([1.0 - p2, 0.0, p2])


def near_critical_law(epsilon: float, sigma2: float = 1.0) -> OffspringLaw:
    """Three-point law on {0,1,2} with mean ``1+epsilon`` and factorial moment ``sigma2``."""
    if not 0.0 < sigma2 <= 1.0 + epsilon:
        raise InvalidLawError(f"three-point law needs 0 < sigma2 <= 1 + epsilon, got sigma2={sigma2!r}, "
                              f"epsilon={epsilon!r}")
    p2 = sigma2 / 2.0
    p1 = 1.0 + epsilon - sigma2
    p0 = 1.0 - p1 - p2
    return OffspringLaw([p0, p1, p2])


@dataclass(frozen=True, eq=False)
class MarkingRule:
    """Marking probabilities ``A(k)`` aligned with an offspring law.

    ``mu`` is the total marking probability and ``marked_mean`` the mean
    offspring number of marked particles (0 when ``mu == 0``).
    """

    a: np.ndarray
    mu: float
    marked_mean: float
    kind: str = "table"

    @classmethod
    def for_law(cls, law: OffspringLaw, a, kind: str = "table") -> "MarkingRule":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim == 0:
            a = np.full(law.pmf.size, float(a))
        if a.shape != law.pmf.shape:
            raise InvalidLawError(f"marking table has {a.size} entries, law has {law.pmf.size}")
        bad = np.flatnonzero(~np.isfinite(a) | (a < 0) | (a > 1))
        if bad.size:
            raise InvalidLawError(f"marking probability A({bad[0]}) outside [0, 1]")
        pa = law.pmf * a
        mu = min(1.0, math.fsum(pa))
        k = np.arange(a.size, dtype=np.float64)
        mm = math.fsum(k * pa) / mu if mu > 0 else 0.0
        return cls(_frozen(a), mu, mm, kind)

    @classmethod
    def constant(cls, law: OffspringLaw, mu: float) -> "MarkingRule":
        return cls.for_law(law, np.full(law.pmf.size, float(mu)), kind="constant")

    @classmethod
    def none(cls, law: OffspringLaw) -> "MarkingRule":
        return cls.for_law(law, np.zeros(law.pmf.size), kind="none")

    def to_dict(self) -> dict:
        if self.kind == "none":
            return {"kind": "none"}
        if self.kind == "constant":
            return {"kind": "constant", "mu": float(self.a[0])}
        return {"kind": "table", "a": [float(x) for x in self.a]}


def _check_unit(name: str, x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def joint_pgf(law: OffspringLaw, rule: MarkingRule, r, s):
    """``f(r, s) = sum_k p(k) s^k (1 - A(k) + A(k) r)``; broadcasts over ``r`` and ``s``."""
    r = _check_unit("r", r)
    s = _check_unit("s", s)
    w0 = law.pmf * (1.0 - rule.a)
    w1 = law.pmf * rule.a
    out = np.polynomial.polynomial.polyval(s, w0) + r * np.polynomial.polynomial.polyval(s, w1)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _one_minus_f0(law: OffspringLaw, rule: MarkingRule, u: float) -> float:
    """``1 - f(0, 1-u)`` as a sum of non-negative terms."""
    if u <= 0.0:
        return rule.mu
    k = np.arange(law.pmf.size, dtype=np.float64)
    lu = math.log1p(-u) if u < 1.0 else -math.inf
    gone = -np.expm1(k * lu) if u < 1.0 else (k > 0).astype(np.float64)
    return rule.mu + math.fsum(law.pmf * (1.0 - rule.a) * gone)


def solve_q_exact(law: OffspringLaw, rule: MarkingRule, infinite_lineages: bool = True,
                  atol: float = 1e-12, rtol: float = 1e-13, max_iter: int = 5000) -> float:
    """Probability that the skeleton is non-empty.

    This is ``Q = 1 - e`` with ``e`` the smallest root of ``e = f(0, e)``.
    With ``infinite_lineages=False`` and no marking the skeleton can only
    consist of marked lineages, so 0 is returned.
    """
    eps = law.epsilon
    if rule.mu == 0.0 and (eps <= 0.0 or not infinite_lineages):
        return 0.0
    # h(q) = 1 - f(0, 1-q) - q is concave with h(0) = mu >= 0
    if law.pmf[0] * (1.0 - rule.a[0]) == 0.0:
        return 1.0

    def h(q: float) -> float:
        return _one_minus_f0(law, rule, q) - q

    lo, hi = 0.0, 1.0
    if rule.mu == 0.0:
        # h(0) = 0 here; halve down from 1/2 to a point where h > 0
        lo = 0.5
        while h(lo) <= 0.0:
            hi = lo
            lo *= 0.5
            if lo < 1e-300:
                raise NumericalError("no positive survival root found")
    # Illinois regula falsi on the sign bracket h(lo) > 0 >= h(hi); a stale
    # end has its value halved so both ends keep moving.
    flo, fhi = h(lo), h(hi)
    side = 0
    for _ in range(max_iter):
        x = (lo * fhi - hi * flo) / (fhi - flo)
        if not lo < x < hi:
            x = 0.5 * (lo + hi)
            if x <= lo or x >= hi:
                return x
        fx = h(x)
        if fx > 0.0:
            lo, flo = x, fx
            if side == 1:
                fhi *= 0.5
            side = 1
        else:
            hi, fhi = x, fx
            if side == -1:
                flo *= 0.5
            side = -1
        if hi - lo <= min(atol, rtol * hi):
            return 0.5 * (lo + hi)
    raise NumericalError("root search did not converge")


def fixed_point_residual(law: OffspringLaw, rule: MarkingRule, q: float) -> float:
    """``1 - q - f(0, 1 - q)``."""
    return 1.0 - q - joint_pgf(law, rule, 0.0, 1.0 - q)


def skeleton_offspring_pgf(law: OffspringLaw, rule: MarkingRule, q: float, r, s):
    """Joint pgf of (root mark, skeleton offspring) given a non-empty skeleton."""
    if q <= 0.0:
        raise ConditioningError("skeleton is empty almost surely (q = 0)")
    s = _check_unit("s", s)
    f = joint_pgf(law, rule, r, s * q + 1.0 - q)
    out = np.clip((np.asarray(f) - (1.0 - q)) / q, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def skeleton_offspring_pmf(law: OffspringLaw, rule: MarkingRule, q: float) -> np.ndarray:
    """Table ``P(xi = a, X(1) = j | non-empty)`` of shape ``(2, K+1)``.

    Exact coefficient extraction: binomial expansion of ``(s q + 1 - q)^k``.
    """
    if q <= 0.0:
        raise ConditioningError("skeleton is empty almost surely (q = 0)")
    K = law.support
    k = np.arange(K + 1)
    j = np.arange(K + 1)
    kk, jj = np.meshgrid(k, j, indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        bern = np.where(jj <= kk, comb(kk, jj) * q ** jj * (1.0 - q) ** np.maximum(kk - jj, 0), 0.0)
    w0 = law.pmf * (1.0 - rule.a)
    w1 = law.pmf * rule.a
    table = np.vstack([w0 @ bern, w1 @ bern]) / q
    # P(xi=0, X(1)=0 | non-empty) = (f(0, 1-q) - (1-q)) / q, zero at the fixed point
    table[0, 0] = max(0.0, -fixed_point_residual(law, rule, q) / q)
    return np.clip(table, 0.0, 1.0)


def marked_total_pmf(law: OffspringLaw, rule: MarkingRule, n_max: int) -> np.ndarray:
    """Exact ``P(W = n)``, ``n = 0..n_max``, for the total number of marked particles.

    Power-series solution of ``G(s) = f(s, G(s))``; coefficient ``n`` enters
    linearly through ``df/dG`` at ``s = 0``.
    """
    g = np.zeros(n_max + 1)
    if rule.mu == 0.0:
        g[0] = 1.0
        return g
    e = 1.0 - solve_q_exact(law, rule, infinite_lineages=False)
    if e <= 0.0:
        raise NumericalError("total marked count is infinite with probability one")
    w0 = law.pmf * (1.0 - rule.a)
    w1 = law.pmf * rule.a
    K = law.support
    kk = np.arange(K + 1)
    dfdg = math.fsum((kk[1:] * w0[1:]) * e ** (kk[1:] - 1))
    g[0] = e
    for n in range(1, n_max + 1):
        # coefficient n of f(s, G) with g[n] still zero; g[n] itself only
        # enters through the linear term dfdg * g[n]
        powers = np.zeros(n + 1)
        powers[0] = 1.0
        coef0 = 0.0
        coef1 = 0.0
        for k in range(K + 1):
            if k > 0:
                powers = np.convolve(powers, g[: n + 1])[: n + 1]
            coef0 += w0[k] * powers[n]
            coef1 += w1[k] * powers[n - 1]
        g[n] = (coef0 + coef1) / (1.0 - dfdg)
    return g


@dataclass
class LawDiagnostics:
    index: int
    epsilon: float
    factorial_moment2: float
    sigma2_deviation: float
    mu: float
    marked_mean: float
    cross_term: float
    cross_term_bound: dict


@dataclass
class ValidationReport:
    sigma_target: float
    laws: list[LawDiagnostics]
    ui_grid: list[int]
    ui_proxy: list[float]
    sup_marked_mean: float

    def summary_rows(self) -> list[dict]:
        return [vars(d) for d in self.laws]


def _coerce(item, index: int) -> tuple[OffspringLaw, MarkingRule]:
    law, rule = item
    try:
        if not isinstance(law, OffspringLaw):
            law = OffspringLaw(law)
        if not isinstance(rule, MarkingRule):
            rule = MarkingRule.for_law(law, 0.0 if rule is None else rule)
    except InvalidLawError as exc:
        raise InvalidLawError(str(exc), index) from None
    return law, rule


def validate_family(laws: Sequence, sigma_target: float, ui_grid: Sequence[int] = (2, 4, 8, 16, 32)) -> ValidationReport:
    """Moment diagnostics for a sweep of ``(law, rule)`` pairs.

    Reports per member the drift ``epsilon``, the distance of the second
    factorial moment from ``sigma_target``, and the cross term
    ``sum k(k-1) p(k) A(k)`` that must vanish along the sweep; plus the
    uniform-integrability proxy ``sup_m sum_{k>=n} k^2 p_m(k)`` on a grid
    of ``n``.  Raw pmfs are accepted and rejected with their index when
    malformed.
    """
    if len(laws) == 0:
        raise ValueError("empty family")
    pairs = [_coerce(item, i) for i, item in enumerate(laws)]
    diags = []
    for i, (law, rule) in enumerate(pairs):
        k = np.arange(law.pmf.size, dtype=np.float64)
        cross = math.fsum(k * (k - 1) * law.pmf * rule.a)
        bounds = {
            int(n): n * n * rule.mu + law.tail_second_moment(int(n)) for n in ui_grid
        }
        diags.append(LawDiagnostics(
            index=i,
            epsilon=law.epsilon,
            factorial_moment2=law.factorial_moment2,
            sigma2_deviation=abs(law.factorial_moment2 - sigma_target),
            mu=rule.mu,
            marked_mean=rule.marked_mean,
            cross_term=cross,
            cross_term_bound=bounds,
        ))
    ui = [max(law.tail_second_moment(int(n)) for law, _ in pairs) for n in ui_grid]
    return ValidationReport(
        sigma_target=sigma_target,
        laws=diags,
        ui_grid=[int(n) for n in ui_grid],
        ui_proxy=ui,
        sup_marked_mean=max(rule.marked_mean for _, rule in pairs),
    )


def first_mark_tail(law: OffspringLaw, rule: MarkingRule, n_max: int) -> np.ndarray:
    """Exact ``P(T >= n | non-empty)``, ``n = 0..n_max``, for the first mark generation ``T``.

    With ``f0(s) = f(0, s)`` iterated ``n`` times (``F_n``), the event
    {no mark before generation n, skeleton non-empty} has probability
    ``F_n(1) - F_n(1 - Q)``.
    """
    q = solve_q_exact(law, rule)
    if q <= 0.0:
        raise ConditioningError("skeleton is empty almost surely (q = 0)")
    w0 = law.pmf * (1.0 - rule.a)
    hi, lo = 1.0, 1.0 - q
    out = np.empty(n_max + 1)
    for n in range(n_max + 1):
        out[n] = (hi - lo) / q
        hi = float(np.polynomial.polynomial.polyval(hi, w0))
        lo = float(np.polynomial.polynomial.polyval(lo, w0))
    out[0] = 1.0
    return np.clip(out, 0.0, 1.0)


def jittered_cdf(tail_ge: np.ndarray, x):
    """CDF of ``T + U`` (U uniform on [0, 1)) from ``P(T >= n)``, ``x`` in generations."""
    x = np.asarray(x, dtype=np.float64)
    pt = tail_ge[:-1] - tail_ge[1:]
    cdf_before = 1.0 - tail_ge
    n = np.floor(x).astype(np.int64)
    inside = (n >= 0) & (n < pt.size)
    nn = np.clip(n, 0, pt.size - 1)
    out = np.where(inside, cdf_before[nn] + pt[nn] * (x - n), np.where(n < 0, 0.0, 1.0 - tail_ge[-1]))
    return out
