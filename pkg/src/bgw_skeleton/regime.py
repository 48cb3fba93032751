"""Asymptotic regime of the skeleton for a given drift and marking rate."""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

DEFAULT_C_THRESHOLD = 50.0


class DegenerateRegimeError(ValueError):
    """Neither drift nor marking: no limit skeleton."""


class Regime(str, enum.Enum):
    SUPERCRITICAL_YULE = "i"
    BALANCED = "ii"
    SUBCRITICAL_SINGLE = "iii"


@dataclass(frozen=True)
class RegimeReport:
    c: float
    regime: Regime
    lam: float
    tau: float
    q_asymptotic: float
    epsilon: float
    mu: float
    sigma2: float
    c_threshold: float

    @property
    def kappa(self) -> float:
        """``sqrt(c^2 + 2 sigma^2)``; infinite outside the balanced regime."""
        return math.sqrt(self.c * self.c + 2.0 * self.sigma2) if math.isfinite(self.c) else math.inf

    @property
    def limit_extinction(self) -> float:
        """Extinction probability of the limit birth-death skeleton."""
        if self.lam <= 0.5:
            return 1.0
        return (1.0 - self.lam) / self.lam

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regime"] = self.regime.value
        return d


def regime_constant(epsilon: float, mu: float) -> float:
    if mu < 0.0 or mu > 1.0:
        raise ValueError("mu must lie in [0, 1]")
    if mu == 0.0:
        if epsilon == 0.0:
            raise DegenerateRegimeError("degenerate regime: mu = 0 and epsilon = 0")
        return math.copysign(math.inf, epsilon)
    return epsilon / math.sqrt(mu)


def classify_regime(epsilon: float, mu: float, sigma2: float, c_override: float | None = None,
                    c_threshold: float = DEFAULT_C_THRESHOLD) -> RegimeReport:
    """Map ``(epsilon, mu, sigma2)`` to one of the three limit cases.

    ``c = epsilon / sqrt(mu)`` unless overridden; ``|c| >= c_threshold`` is
    treated as ``c = +/- inf``.
    """
    if not sigma2 > 0.0:
        raise ValueError("sigma2 must be positive")
    if mu == 0.0 and epsilon == 0.0:
        raise DegenerateRegimeError("degenerate regime: mu = 0 and epsilon = 0")
    c = regime_constant(epsilon, mu) if c_override is None else float(c_override)
    if c >= c_threshold:
        if epsilon <= 0.0:
            raise ValueError("case (i) needs a positive drift")
        return RegimeReport(c, Regime.SUPERCRITICAL_YULE, 1.0, epsilon, 2.0 * epsilon / sigma2,
                            epsilon, mu, sigma2, c_threshold)
    if c <= -c_threshold:
        if epsilon >= 0.0:
            raise ValueError("case (iii) needs a negative drift")
        return RegimeReport(c, Regime.SUBCRITICAL_SINGLE, 0.0, abs(epsilon), mu / abs(epsilon),
                            epsilon, mu, sigma2, c_threshold)
    if mu == 0.0:
        raise ValueError("a finite c needs mu > 0")
    kappa = math.sqrt(c * c + 2.0 * sigma2)
    root_mu = math.sqrt(mu)
    return RegimeReport(
        c=c,
        regime=Regime.BALANCED,
        lam=0.5 + 0.5 * c / kappa,
        tau=root_mu * kappa,
        q_asymptotic=root_mu * (c + kappa) / sigma2,
        epsilon=epsilon,
        mu=mu,
        sigma2=sigma2,
        c_threshold=c_threshold,
    )
