import itertools
import math
import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bgw_skeleton.offspring import (ConditioningError, InvalidLawError, MarkingRule, OffspringLaw,
                                    binary_law, first_mark_tail, fixed_point_residual, geometric_law,
                                    joint_pgf, marked_total_pmf, near_critical_law, poisson_law,
                                    skeleton_offspring_pgf, skeleton_offspring_pmf, solve_q_exact,
                                    validate_family)

from strategies import laws, marked

# 50-digit closed forms (mpmath): Q = 1 - e, e the root of (1-mu) e^2 - 2 e + (1-mu) = 0
Q_BINARY_002 = 0.18265049736869794994581220836759306228125031911772
Q_BINARY_0005 = 0.095351680178081301084323529286725061295791839782125
Q_BINARY_000125 = 0.048795366766288372859278913169636670370172456802167


def binary_marked(mu):
    law = binary_law(0.0)
    return law, MarkingRule.constant(law, mu)


# ------------------------------------------------------------------ laws


def test_law_moments_and_epsilon():
    law = OffspringLaw([0.2, 0.55, 0.25])
    assert law.mean == pytest.approx(1.05, abs=1e-15)
    assert law.epsilon == pytest.approx(0.05, abs=1e-15)
    assert law.factorial_moment2 == pytest.approx(0.5, abs=1e-15)
    assert law.support == 2


@pytest.mark.parametrize("pmf, fragment", [
    ([0.5, 0.6], "sums to 1.1"),
    ([-0.1, 1.1], "outside [0, 1]"),
    ([], "non-empty"),
    ([0.5, float("nan"), 0.5], "non-finite"),
])
def test_law_rejects_malformed(pmf, fragment):
    with pytest.raises(InvalidLawError, match=fragment.replace("[", r"\[").replace("]", r"\]")):
        OffspringLaw(pmf)


@given(laws())
def test_law_invariants(law):
    k = np.arange(law.pmf.size)
    assert abs(law.pmf.sum() - 1.0) <= 1e-12
    assert np.all((law.pmf >= 0) & (law.pmf <= 1))
    assert abs(law.mean - (k * law.pmf).sum()) <= 1e-12
    assert abs(law.factorial_moment2 - (k * (k - 1) * law.pmf).sum()) <= 1e-12
    assert law.factorial_moment2 > 0


@pytest.mark.parametrize("make, mean", [(lambda: poisson_law(1.3), 1.3), (lambda: geometric_law(0.9), 0.9)])
def test_truncated_families(make, mean):
    law = make()
    assert abs(law.pmf.sum() - 1.0) <= 1e-12
    assert law.mean == pytest.approx(mean, rel=1e-12)


def test_near_critical_law_moments():
    law = near_critical_law(0.01, 0.8)
    assert law.epsilon == pytest.approx(0.01, abs=1e-15)
    assert law.factorial_moment2 == pytest.approx(0.8, abs=1e-15)


# --------------------------------------------------------------- marking


def test_marking_totals():
    law = OffspringLaw([0.25, 0.25, 0.5])
    rule = MarkingRule.for_law(law, [0.1, 0.2, 0.4])
    assert rule.mu == pytest.approx(0.25 * 0.1 + 0.25 * 0.2 + 0.5 * 0.4)
    assert rule.marked_mean == pytest.approx((0.25 * 0.2 + 2 * 0.5 * 0.4) / rule.mu)


def test_marked_mean_zero_without_marking():
    law = binary_law()
    assert MarkingRule.none(law).marked_mean == 0.0


def test_marking_table_must_align():
    with pytest.raises(InvalidLawError):
        MarkingRule.for_law(binary_law(), [0.1, 0.1])
    with pytest.raises(InvalidLawError):
        MarkingRule.for_law(binary_law(), [0.1, 1.5, 0.1])


@given(marked())
def test_marking_invariants(pair):
    law, rule = pair
    k = np.arange(law.pmf.size)
    assert 0.0 <= rule.mu <= 1.0
    assert abs(rule.mu - (law.pmf * rule.a).sum()) <= 1e-12
    assert abs(rule.marked_mean * rule.mu - (k * law.pmf * rule.a).sum()) <= 1e-12


# -------------------------------------------------------- validate_family


def test_validate_symmetric_binary():
    law = OffspringLaw([0.5, 0.0, 0.5])
    rep = validate_family([(law, MarkingRule.none(law))], sigma_target=1.0)
    d = rep.laws[0]
    assert d.epsilon == 0.0
    assert d.factorial_moment2 == 1.0
    assert d.sigma2_deviation == 0.0
    assert d.cross_term == 0.0


def test_validate_truncated_poisson_cross_term():
    # Poisson(1) cut at k = 30 and renormalised; cross term 0.01 * sum k(k-1) p(k)
    p = np.array([math.exp(-1) / math.factorial(k) for k in range(31)])
    law = OffspringLaw(p / p.sum())
    rep = validate_family([(law, MarkingRule.constant(law, 0.01))], sigma_target=1.0)
    d = rep.laws[0]
    assert abs(d.epsilon) < 1e-12
    assert d.cross_term == pytest.approx(0.01, abs=1e-12)
    assert d.mu == pytest.approx(0.01)


def test_validate_reports_index_of_bad_law():
    good = OffspringLaw([0.5, 0.0, 0.5])
    with pytest.raises(InvalidLawError) as info:
        validate_family([(good, None), ([0.5, 0.6], None)], sigma_target=1.0)
    assert info.value.index == 1
    assert "1.1" in str(info.value)


def test_validate_ui_proxy_and_empty():
    fam = [(poisson_law(1.0), 0.0), (geometric_law(1.0), 0.0)]
    rep = validate_family(fam, sigma_target=1.0, ui_grid=(2, 8))
    assert rep.ui_proxy[0] >= rep.ui_proxy[1] > 0
    with pytest.raises(ValueError):
        validate_family([], 1.0)


# --------------------------------------------------------------- joint pgf


def test_joint_pgf_examples():
    law, rule = binary_marked(0.02)
    assert joint_pgf(law, rule, 1.0, 1.0) == 1.0
    assert joint_pgf(law, rule, 0.0, 1.0) == pytest.approx(0.98, abs=1e-15)
    assert joint_pgf(law, rule, 0.0, 0.9) == pytest.approx(0.98 * (0.5 + 0.5 * 0.81), abs=1e-15)
    assert joint_pgf(law, rule, 0.0, 0.9) == pytest.approx(0.8869, abs=1e-15)


@pytest.mark.parametrize("r, s", [(-0.1, 0.5), (0.5, 1.01), (float("nan"), 0.5)])
def test_joint_pgf_domain(r, s):
    law, rule = binary_marked(0.02)
    with pytest.raises(ValueError):
        joint_pgf(law, rule, r, s)


@given(marked(), st.floats(0, 1), st.floats(0, 1))
def test_joint_pgf_range(pair, r, s):
    law, rule = pair
    v = joint_pgf(law, rule, r, s)
    assert 0.0 <= v <= 1.0
    assert joint_pgf(law, rule, 1.0, 1.0) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------- solve_q_exact


def test_q_exact_drift_family():
    law = OffspringLaw([0.2, 0.55, 0.25])
    q = solve_q_exact(law, MarkingRule.none(law))
    assert abs(q - 0.2) <= 1e-10
    assert q == pytest.approx(2 * law.epsilon / law.factorial_moment2, abs=1e-10)


def test_q_exact_critical_marked_closed_form():
    law, rule = binary_marked(0.02)
    assert abs(solve_q_exact(law, rule) - Q_BINARY_002) <= 1e-12


def test_q_exact_critical_unmarked_is_zero():
    law = binary_law(0.0)
    assert solve_q_exact(law, MarkingRule.none(law)) == 0.0
    sub = binary_law(-0.2)
    assert solve_q_exact(sub, MarkingRule.none(sub)) == 0.0


def test_q_exact_without_infinite_lineages():
    law = OffspringLaw([0.2, 0.55, 0.25])
    assert solve_q_exact(law, MarkingRule.none(law), infinite_lineages=False) == 0.0


def test_q_exact_no_death_without_mark():
    law = OffspringLaw([0.0, 1.0])
    assert solve_q_exact(law, MarkingRule.constant(law, 0.1)) == 1.0


def test_q_exact_runtime():
    law = OffspringLaw([0.2, 0.55, 0.25])
    rule = MarkingRule.none(law)
    t0 = time.perf_counter()
    for _ in range(100):
        solve_q_exact(law, rule)
    assert (time.perf_counter() - t0) / 100 < 1e-3


def test_q_exact_tiny_survival_is_relatively_accurate():
    # Q ~ sqrt(2 mu) down to mu = 1e-24
    law, rule = binary_marked(1e-24)
    q = solve_q_exact(law, rule)
    assert q == pytest.approx(math.sqrt(2e-24), rel=1e-6)


@given(marked())
def test_fixed_point_consistency(pair):
    law, rule = pair
    q = solve_q_exact(law, rule)
    assert 0.0 <= q <= 1.0
    assert abs(fixed_point_residual(law, rule, q)) <= 1e-10
    if rule.mu > 0 or law.epsilon > 0:
        assert q > 0


@given(marked(), st.floats(0.0, 0.3))
def test_q_monotone_in_marking(pair, bump):
    law, rule = pair
    a2 = np.minimum(rule.a + bump, 1.0)
    assert solve_q_exact(law, MarkingRule.for_law(law, a2)) >= solve_q_exact(law, rule) - 1e-12


@given(st.floats(0.05, 0.4), st.lists(st.floats(0.0, 0.3), min_size=4, max_size=4, unique=True))
def test_q_monotone_in_drift(b, a_values):
    # shape (1-a-b, a, b): increasing a raises the mean
    prev = -1.0
    for a in sorted(a_values):
        law = OffspringLaw([1 - a - b, a, b])
        q = solve_q_exact(law, MarkingRule.constant(law, 1e-3))
        assert q >= prev - 1e-12
        prev = q


def test_critical_marking_ratios_increase():
    ratios = []
    for mu, frozen in [(2e-2, Q_BINARY_002), (5e-3, Q_BINARY_0005), (1.25e-3, Q_BINARY_000125)]:
        law, rule = binary_marked(mu)
        q = solve_q_exact(law, rule)
        assert q == pytest.approx(frozen, abs=1e-12)
        ratios.append(q / math.sqrt(2 * mu))
    assert ratios[0] < ratios[1] < ratios[2] < 1
    assert ratios[0] == pytest.approx(0.9132525, abs=1e-7)


def test_drift_asymptotic_exact_and_perturbed():
    for eps in (0.1, 0.05, 0.025):
        law = near_critical_law(eps, 0.5)
        assert solve_q_exact(law, MarkingRule.none(law)) == pytest.approx(2 * eps / 0.5, abs=1e-10)
    gaps = []
    for eps in (0.1, 0.05, 0.025):
        law = poisson_law(1 + eps)
        q = solve_q_exact(law, MarkingRule.none(law))
        gaps.append(abs(q / (2 * eps / law.factorial_moment2) - 1))
    assert gaps[0] > gaps[1] > gaps[2]


@pytest.mark.parametrize("law", [binary_law(0.0), near_critical_law(0.01, 0.7), poisson_law(1.0)])
@pytest.mark.parametrize("r", [0.0, 0.5, 1.0])
def test_quadratic_expansion_near_one(law, r):
    rule = MarkingRule.constant(law, 1e-3)
    u = 1e-4
    mu, M, eps = rule.mu, rule.marked_mean, law.epsilon
    resid = (1 - joint_pgf(law, rule, r, 1 - u) - mu * (1 - r) - u * (1 + eps - mu * M * (1 - r))) / (u * u / 2)
    assert resid == pytest.approx(-law.factorial_moment2, rel=1e-2)


# ---------------------------------------------------------- skeleton pgf


def test_skeleton_pgf_normalised_and_conditioning():
    law, rule = binary_marked(0.02)
    q = solve_q_exact(law, rule)
    assert skeleton_offspring_pgf(law, rule, q, 1.0, 1.0) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ConditioningError):
        skeleton_offspring_pgf(law, rule, 0.0, 1.0, 1.0)
    with pytest.raises(ConditioningError):
        skeleton_offspring_pmf(law, rule, 0.0)


def _enumerated_table(law, rule, q):
    """Brute force over (offspring count, root mark, status of each child subtree)."""
    table = np.zeros((2, law.pmf.size))
    for k, pk in enumerate(law.pmf):
        if pk == 0:
            continue
        for mark in (0, 1):
            pm = rule.a[k] if mark else 1 - rule.a[k]
            for status in itertools.product((0, 1), repeat=k):
                prob = pk * pm * math.prod(q if s else 1 - q for s in status)
                x1 = sum(status)
                if mark or x1:
                    table[mark, x1] += prob / q
    return table


def test_skeleton_pgf_matches_enumeration():
    law, rule = binary_marked(0.02)
    q = solve_q_exact(law, rule)
    table = _enumerated_table(law, rule, q)
    assert skeleton_offspring_pgf(law, rule, q, 1.0, 0.0) == pytest.approx(table[:, 0].sum(), abs=1e-12)
    assert skeleton_offspring_pgf(law, rule, q, 0.0, 0.5) == pytest.approx(
        sum(table[0, j] * 0.5**j for j in range(3)), abs=1e-12)
    assert np.allclose(skeleton_offspring_pmf(law, rule, q), table, atol=1e-12)


@given(marked(max_support=4))
def test_skeleton_pmf_matches_enumeration_property(pair):
    law, rule = pair
    q = solve_q_exact(law, rule)
    if q <= 1e-6:
        return
    assert np.allclose(skeleton_offspring_pmf(law, rule, q), _enumerated_table(law, rule, q), atol=1e-9)


def test_death_cell_approaches_limit():
    ratios = []
    for mu in (1e-2, 1e-3, 1e-4):
        law, rule = binary_marked(mu)
        q = solve_q_exact(law, rule)
        t = skeleton_offspring_pmf(law, rule, q)
        ratios.append(t[1, 0] / (math.sqrt(2 * mu) / 2))
    assert abs(ratios[-1] - 1) < 0.05
    assert abs(ratios[0] - 1) > abs(ratios[1] - 1) > abs(ratios[2] - 1)


def test_branching_cells_at_small_mu():
    law, rule = binary_marked(1e-4)
    q = solve_q_exact(law, rule)
    t = skeleton_offspring_pmf(law, rule, q)
    tau = math.sqrt(2e-4)
    assert t[0, 1] == pytest.approx(1 - tau, rel=0.05)
    assert t[1, 0] == pytest.approx(tau / 2, rel=0.05)
    assert t[0, 2] == pytest.approx(tau / 2, rel=0.05)


@given(marked(max_support=5), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_skeleton_pgf_is_a_pgf(pair, r1, r2, s1, s2):
    law, rule = pair
    q = solve_q_exact(law, rule)
    if q <= 1e-9:
        return
    g = lambda r, s: skeleton_offspring_pgf(law, rule, q, r, s)  # noqa: E731
    lo_r, hi_r = sorted((r1, r2))
    lo_s, hi_s = sorted((s1, s2))
    assert 0.0 <= g(lo_r, lo_s) <= 1.0
    assert g(lo_r, lo_s) <= g(hi_r, lo_s) + 1e-9
    assert g(lo_r, lo_s) <= g(lo_r, hi_s) + 1e-9
    assert g(1.0, 1.0) == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------- marked totals, T law


def test_marked_total_pmf_small_mu_approaches_leaf_law():
    law, rule = binary_marked(1e-6)
    g = marked_total_pmf(law, rule, 3)
    cond = g[1:] / (1 - g[0])
    assert cond == pytest.approx([0.5, 0.125, 0.0625], rel=5e-3)
    assert 1 - g[0] == pytest.approx(solve_q_exact(law, rule, infinite_lineages=False), rel=1e-9)


def test_marked_total_pmf_sums_to_one():
    # geometric tail for a subcritical law; the critical tail decays like n^(-3/2)
    law = binary_law(-0.3)
    rule = MarkingRule.constant(law, 0.3)
    g = marked_total_pmf(law, rule, 400)
    assert g.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(g >= 0)
    law, rule = binary_marked(0.05)
    short, long = marked_total_pmf(law, rule, 100), marked_total_pmf(law, rule, 400)
    assert np.allclose(short, long[:101], atol=1e-15)
    assert short.sum() < long.sum() <= 1.0 + 1e-12


def test_first_mark_tail_basic():
    law, rule = binary_marked(1e-2)
    ge = first_mark_tail(law, rule, 200)
    assert ge[0] == 1.0
    assert np.all(np.diff(ge) <= 1e-15)
    # P(T = 0 | nonempty) is the root's marking probability over Q
    q = solve_q_exact(law, rule)
    assert 1 - ge[1] == pytest.approx(rule.mu / q, rel=1e-9)
