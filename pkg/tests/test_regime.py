import math

import pytest
from hypothesis import given, strategies as st

from bgw_skeleton.offspring import MarkingRule, near_critical_law, solve_q_exact
from bgw_skeleton.regime import DegenerateRegimeError, Regime, classify_regime, regime_constant

LAMBDA_C1 = 0.78867513459481288225457439025097872782380087563506  # 1/2 + 1/(2 sqrt 3)


def test_critical_balanced():
    rep = classify_regime(0.0, 1e-4, 1.0)
    assert rep.regime is Regime.BALANCED
    assert rep.c == 0.0
    assert rep.lam == 0.5
    assert rep.tau == pytest.approx(math.sqrt(2) * 1e-2, rel=1e-14)
    assert rep.q_asymptotic == pytest.approx(math.sqrt(2) * 1e-2, rel=1e-14)
    assert rep.limit_extinction == 1.0


def test_positive_c_balanced():
    rep = classify_regime(0.01, 1e-4, 1.0)
    assert rep.regime is Regime.BALANCED
    assert rep.c == pytest.approx(1.0, rel=1e-14)
    assert rep.lam == pytest.approx(LAMBDA_C1, abs=1e-14)
    assert rep.tau == pytest.approx(math.sqrt(3) * 1e-2, rel=1e-14)
    assert rep.kappa == pytest.approx(math.sqrt(3), rel=1e-14)
    assert rep.limit_extinction == pytest.approx((1 - LAMBDA_C1) / LAMBDA_C1, rel=1e-13)


def test_threshold_subcritical():
    rep = classify_regime(-0.05, 1e-8, 1.0)
    assert rep.c == pytest.approx(-500.0)
    assert rep.regime is Regime.SUBCRITICAL_SINGLE
    assert rep.lam == 0.0
    assert rep.tau == pytest.approx(0.05)
    assert rep.q_asymptotic == pytest.approx(2e-7, rel=1e-12)


def test_threshold_supercritical():
    rep = classify_regime(0.05, 1e-8, 0.5)
    assert rep.regime is Regime.SUPERCRITICAL_YULE
    assert rep.lam == 1.0
    assert rep.tau == 0.05
    assert rep.q_asymptotic == pytest.approx(0.2)


def test_zero_mu_maps_to_infinite_c():
    assert regime_constant(0.1, 0.0) == math.inf
    assert regime_constant(-0.1, 0.0) == -math.inf
    assert classify_regime(0.1, 0.0, 1.0).regime is Regime.SUPERCRITICAL_YULE
    assert classify_regime(-0.1, 0.0, 1.0).regime is Regime.SUBCRITICAL_SINGLE


def test_degenerate():
    with pytest.raises(DegenerateRegimeError, match="degenerate regime"):
        classify_regime(0.0, 0.0, 1.0)


def test_bad_inputs():
    with pytest.raises(ValueError):
        classify_regime(0.0, 1e-3, 0.0)
    with pytest.raises(ValueError):
        classify_regime(0.0, 1.5, 1.0)
    # a threshold case whose sign disagrees with the drift
    with pytest.raises(ValueError):
        classify_regime(-0.01, 1e-3, 1.0, c_override=80.0)


def test_override_and_threshold_parameter():
    rep = classify_regime(0.01, 1e-4, 1.0, c_override=2.0)
    assert rep.c == 2.0
    assert rep.regime is Regime.BALANCED
    assert classify_regime(0.01, 1e-4, 1.0, c_threshold=0.5).regime is Regime.SUPERCRITICAL_YULE


def test_report_dict():
    d = classify_regime(0.0, 1e-4, 1.0).to_dict()
    assert d["regime"] == "ii"
    assert set(d) >= {"c", "lam", "tau", "q_asymptotic"}


@given(st.floats(-49, 49), st.floats(0.1, 3.0))
def test_balanced_invariants(c, sigma2):
    mu = 1e-6
    rep = classify_regime(c * math.sqrt(mu), mu, sigma2)
    assert rep.regime is Regime.BALANCED
    k = math.sqrt(c * c + 2 * sigma2)
    assert 0.0 < rep.lam < 1.0
    assert rep.lam == pytest.approx(0.5 + c / (2 * k), abs=1e-9)
    assert rep.tau == pytest.approx(math.sqrt(mu) * k, rel=1e-9)
    assert rep.q_asymptotic == pytest.approx(math.sqrt(mu) * (c + k) / sigma2, rel=1e-9)


@pytest.mark.parametrize("c", [-1.0, 0.0, 1.0])
def test_q_asymptotic_matches_exact_for_small_mu(c):
    mu = 1e-8
    law = near_critical_law(c * math.sqrt(mu), 0.5)
    q = solve_q_exact(law, MarkingRule.constant(law, mu))
    rep = classify_regime(law.epsilon, mu, law.factorial_moment2)
    assert q == pytest.approx(rep.q_asymptotic, rel=1e-3)
