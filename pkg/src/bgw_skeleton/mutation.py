"""Marking structures induced by irreversible mutation.

One-step model: each daughter of a wild-type mother mutates independently
with probability ``pi``; wild-type mothers with at least one mutant daughter
are marked.  The marked process is the wild-type process with the derived
law ``p`` and table ``A``.

Sequential model: a chain of types ``0 -> 1 -> ... -> b-1 -> target``.  A
type-``i`` mother is marked when it has a *successful* mutant daughter, i.e.
a type-``i+1`` daughter whose own skeleton is non-empty.  Survival
probabilities are obtained level by level from the bottom of the chain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .offspring import InvalidLawError, MarkingRule, OffspringLaw, binary_law, near_critical_law, solve_q_exact


def _check_pi(pi: float) -> float:
    pi = float(pi)
    if not 0.0 < pi < 1.0:
        raise ValueError(f"mutation probability must lie in (0, 1), got {pi!r}")
    return pi


def _thinning_tables(q: OffspringLaw, pi: float, success: float, support_cap: int | None):
    """Wild-type pmf and the marked part ``p(k) A(k)``.

    ``success`` is the probability that a mutant daughter counts (1 for the
    one-step model).  Both tables are sums of non-negative terms, so tiny
    marking probabilities keep full relative precision.
    """
    K = q.support
    if support_cap is not None:
        if support_cap < K:
            raise ValueError(f"support_cap {support_cap} is below the support {K} of q")
    j = np.arange(K + 1)
    k = np.arange(K + 1)
    jj, kk = np.meshgrid(j, k, indexing="ij")
    ll = jj - kk
    valid = ll >= 0
    llc = np.where(valid, ll, 0)
    logc = gammaln(jj + 1) - gammaln(kk + 1) - gammaln(llc + 1)
    with np.errstate(divide="ignore"):
        logw = logc + kk * math.log1p(-pi) + llc * math.log(pi)
    w = np.where(valid, np.exp(logw), 0.0) * q.pmf[:, None]
    p = w.sum(axis=0)
    if success >= 1.0:
        hit = (llc > 0).astype(np.float64)
    else:
        hit = -np.expm1(llc * math.log1p(-success)) if success > 0 else np.zeros_like(w)
    pa = (w * np.where(valid, hit, 0.0)).sum(axis=0)
    return p, pa


def derive_level(q: OffspringLaw, pi: float, success: float = 1.0,
                 support_cap: int | None = None) -> tuple[OffspringLaw, MarkingRule]:
    """Wild-type law and marking rule when mutants succeed w.p. ``success``."""
    pi = _check_pi(pi)
    if not 0.0 <= success <= 1.0:
        raise ValueError("success probability must lie in [0, 1]")
    p, pa = _thinning_tables(q, pi, success, support_cap)
    p = p / math.fsum(p)
    law = OffspringLaw(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(p > 0, np.minimum(pa / p, 1.0), 0.0)
    return law, MarkingRule.for_law(law, a, kind="table")


def derive_binomial(q: OffspringLaw, pi: float, support_cap: int | None = None) -> tuple[OffspringLaw, MarkingRule]:
    """Wild-type law ``p`` and marking rule of the one-step model."""
    return derive_level(q, pi, 1.0, support_cap)


@dataclass
class BinomialMutationModel:
    q: OffspringLaw
    pi: float
    law: OffspringLaw = field(init=False)
    rule: MarkingRule = field(init=False)

    def __post_init__(self):
        self.pi = _check_pi(self.pi)
        self.law, self.rule = derive_binomial(self.q, self.pi)

    @property
    def eta(self) -> float:
        return self.q.epsilon

    def mu_closed_form(self) -> float:
        """``sum_k q(k) (1 - (1-pi)^k)``."""
        k = np.arange(self.q.pmf.size, dtype=np.float64)
        return math.fsum(self.q.pmf * -np.expm1(k * math.log1p(-self.pi)))

    def identity_residuals(self) -> dict:
        """Largest deviations in the three splitting identities."""
        k = np.arange(self.q.pmf.size, dtype=np.float64)
        keep = self.q.pmf * np.exp(k * math.log1p(-self.pi))
        p, a = self.law.pmf, self.rule.a
        _, pa = _thinning_tables(self.q, self.pi, 1.0, None)
        return {
            "wild": float(np.max(np.abs(p * (1 - a) - keep))),
            "marked": float(np.max(np.abs(p * a - pa))),
            "split": float(np.max(np.abs(p * (1 - a) + p * a - p))),
            "mu": abs(self.rule.mu - self.mu_closed_form()),
        }

    def q_exact(self) -> float:
        return solve_q_exact(self.law, self.rule)


@dataclass
class LemmaMember:
    pi: float
    eta: float
    mu: float
    mu_over_pi: float
    marked_mean: float
    mk_printed: float
    mk_gap: float
    mk_upper: float
    qk_gap: float
    qk_upper: float
    epsilon: float
    factorial_moment2: float

    @property
    def mk_holds(self) -> bool:
        return 0.0 <= self.mk_gap <= self.mk_upper

    @property
    def qk_holds(self) -> bool:
        return 0.0 <= self.qk_gap <= self.qk_upper


@dataclass
class LemmaReport:
    sigma2: float
    members: list[LemmaMember]
    mu_over_pi_monotone: bool
    marked_mean_monotone: bool
    mk_all: bool
    qk_all: bool


def _monotone_to(values: Sequence[float], target: float) -> bool:
    d = [abs(v - target) for v in values]
    return all(d[i + 1] < d[i] for i in range(len(d) - 1))


def check_lemma_limits(family: Sequence[BinomialMutationModel], sigma2: float) -> LemmaReport:
    """Trends of ``mu/pi`` and ``M`` along a family ordered by decreasing ``pi``.

    ``mk_gap = pi (1 + eta) - mu`` lies in ``[0, pi^2 sum k^2 q(k)]``;
    ``mk_printed`` is the opposite difference ``mu - pi (1 + eta)``, which
    is never positive.  ``qk_gap = eta - epsilon + mu M`` lies in
    ``[0, pi sum k^2 q(k)]``.
    """
    members = []
    for m in family:
        mu = m.rule.mu
        s2 = m.q.second_moment
        members.append(LemmaMember(
            pi=m.pi,
            eta=m.eta,
            mu=mu,
            mu_over_pi=mu / m.pi,
            marked_mean=m.rule.marked_mean,
            mk_printed=mu - m.pi * (1.0 + m.eta),
            mk_gap=m.pi * m.q.mean - mu,
            mk_upper=m.pi * m.pi * s2,
            qk_gap=m.eta - m.law.epsilon + mu * m.rule.marked_mean,
            qk_upper=m.pi * s2,
            epsilon=m.law.epsilon,
            factorial_moment2=m.law.factorial_moment2,
        ))
    pis = [x.pi for x in members]
    if any(pis[i + 1] >= pis[i] for i in range(len(pis) - 1)):
        raise ValueError("family must be ordered by decreasing pi")
    one_plus_eta = members[-1].eta + 1.0 if members else 1.0
    return LemmaReport(
        sigma2=sigma2,
        members=members,
        mu_over_pi_monotone=_monotone_to([x.mu_over_pi for x in members], one_plus_eta),
        marked_mean_monotone=_monotone_to([x.marked_mean for x in members], sigma2),
        mk_all=all(x.mk_holds for x in members),
        qk_all=all(x.qk_holds for x in members),
    )


@dataclass
class SequentialModel:
    """Chain of levels ``(law, pi)``; level 0 is the wild type, the last
    level mutates into the absorbing target type."""

    levels: list[tuple[OffspringLaw, float]]

    def __post_init__(self):
        if not self.levels:
            raise ValueError("a sequential model needs at least one level")
        for i, (law, pi) in enumerate(self.levels):
            if not isinstance(law, OffspringLaw):
                raise InvalidLawError("level law must be an OffspringLaw", i)
            _check_pi(pi)

    @property
    def depth(self) -> int:
        return len(self.levels)

    def level_rule(self, i: int, success: float) -> tuple[OffspringLaw, MarkingRule]:
        law, pi = self.levels[i]
        return derive_level(law, pi, success)


@dataclass
class SequentialResult:
    level_q: list[float]
    q: float
    q_asymptotic: float | None
    order: float

    def to_dict(self) -> dict:
        return {"level_q": list(self.level_q), "q": self.q, "q_asymptotic": self.q_asymptotic,
                "order": self.order}


def nested_q(model: SequentialModel) -> list[float]:
    """Exact skeleton survival probability of each level, wild type first."""
    qs = [0.0] * model.depth
    success = 1.0
    for i in range(model.depth - 1, -1, -1):
        law, rule = model.level_rule(i, success)
        qs[i] = solve_q_exact(law, rule)
        success = qs[i]
    return qs


@dataclass(frozen=True)
class TwoStepConstants:
    """Scale constants of the two-step regime: ``eta ~ c1 pi^{3/4}``,
    ``eta_hat ~ c2 sqrt(pi)``, ``pi_hat ~ alpha pi``."""

    c1: float
    c2: float
    alpha: float
    sigma2: float = 1.0
    sigma2_hat: float = 1.0

    @classmethod
    def from_model(cls, model: SequentialModel, pi_scale: float | None = None) -> "TwoStepConstants":
        if model.depth != 2:
            raise ValueError("two-step constants need exactly two levels")
        (law, pi), (law_hat, pi_hat) = model.levels
        pi = pi if pi_scale is None else pi_scale
        return cls(
            c1=law.epsilon / pi**0.75,
            c2=law_hat.epsilon / math.sqrt(pi),
            alpha=pi_hat / pi,
            sigma2=law.factorial_moment2,
            sigma2_hat=law_hat.factorial_moment2,
        )

    @property
    def _inner(self) -> float:
        return self.c2 + math.sqrt(self.c2**2 + 2.0 * self.alpha * self.sigma2_hat)

    def q_hat(self, pi: float) -> float:
        return math.sqrt(pi) * self._inner / self.sigma2_hat

    def q(self, pi: float) -> float:
        s, s2 = math.sqrt(self.sigma2), math.sqrt(self.sigma2_hat)
        num = self.c1 * s2 + math.sqrt(self.c1**2 * self.sigma2_hat + 2.0 * self.sigma2 * self._inner)
        return pi**0.75 * num / (self.sigma2 * s2)

    def tau_hat(self, pi: float) -> float:
        """Time-scale rate of the intermediate skeleton."""
        return math.sqrt(pi) * math.sqrt(self.c2**2 + 2.0 * self.alpha * self.sigma2_hat)

    def tau(self, pi: float) -> float:
        """Time-scale rate of the wild-type skeleton."""
        return pi**0.75 * math.sqrt(self.c1**2 + 2.0 * self.sigma2 / self.sigma2_hat * self._inner)


def sequential_q(model: SequentialModel, pi_scale: float | None = None) -> SequentialResult:
    """Nested exact survival probabilities plus, for two levels, the
    closed-form asymptotic."""
    qs = nested_q(model)
    asym = None
    if model.depth == 2:
        pi = model.levels[0][1] if pi_scale is None else pi_scale
        asym = TwoStepConstants.from_model(model, pi).q(pi)
    return SequentialResult(qs, qs[0], asym, 1.0 - 2.0 ** (-model.depth))


def exponent_slope(pis: Sequence[float], qs: Sequence[float]) -> float:
    """Least-squares slope of ``log q`` against ``log pi``."""
    x = np.log(np.asarray(pis, dtype=np.float64))
    y = np.log(np.asarray(qs, dtype=np.float64))
    if x.size < 2:
        raise ValueError("need at least two points")
    return float(np.polyfit(x, y, 1)[0])


def critical_chain(depth: int, pi: float, sigma2: float = 1.0) -> SequentialModel:
    """``depth`` critical levels sharing the mutation probability ``pi``."""
    law = binary_law(0.0) if sigma2 == 1.0 else near_critical_law(0.0, sigma2)
    return SequentialModel([(law, pi)] * depth)


def subcritical_chain(depth: int, pi: float, eta: float = -0.3) -> SequentialModel:
    if eta >= 0:
        raise ValueError("eta must be negative")
    return SequentialModel([(binary_law(eta), pi)] * depth)


def two_step_chain(pi: float, c1: float = 0.0, c2: float = 0.0, alpha: float = 1.0,
                   sigma2: float = 1.0, sigma2_hat: float = 1.0) -> SequentialModel:
    """Two levels in the regime ``eta = c1 pi^{3/4}``, ``eta_hat = c2 sqrt(pi)``, ``pi_hat = alpha pi``."""
    return SequentialModel([
        (near_critical_law(c1 * pi**0.75, sigma2), pi),
        (near_critical_law(c2 * math.sqrt(pi), sigma2_hat), alpha * pi),
    ])


def same_scale_chain(pi: float, gamma: float = 1.5, alpha: float = 1.0, beta: float = 1.0,
                     c1: float = 0.0, sigma2: float = 0.5, sigma2_hat: float = 0.5) -> SequentialModel:
    """Two levels whose skeletons share the time scale ``1/pi``:
    ``pi_hat = alpha pi^gamma``, ``eta_hat = -beta pi^{gamma-1}``, ``eta = c1 pi``.
    No closed-form survival probability is available here.  The default
    variances leave room for the negative intermediate drift in a law on
    {0, 1, 2}."""
    if not 1.0 < gamma < 2.0:
        raise ValueError("gamma must lie in (1, 2)")
    return SequentialModel([
        (near_critical_law(c1 * pi, sigma2), pi),
        (near_critical_law(-beta * pi ** (gamma - 1.0), sigma2_hat), alpha * pi**gamma),
    ])
