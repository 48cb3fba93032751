import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate
from scipy.stats import kstest

from bgw_skeleton.limit import (BD_EXPLODED, BD_EXTINCT, BDPath, BirthDeathParams, EscapeLaw,
                                escape_density, escape_mode, escape_tail, extinction_probability,
                                extinction_probability_from_c, first_death_tail, lambda_from_c,
                                leaf_count_pmf, leaf_count_recursion, mean_population, simulate_Y,
                                simulate_Y_batch, write_escape_curves)
from bgw_skeleton.stats import ks_test, mean_se

SEED = 20240611
HALF_ROOT2 = 0.70710678118654752440084436210484903928483593768847
MODE_C05 = 0.46209812037329687294482141430545104538366675624017  # (2/3) ln 2


# -------------------------------------------------------------- params


def test_params_validation():
    with pytest.raises(ValueError):
        BirthDeathParams(1.2)
    with pytest.raises(ValueError):
        BirthDeathParams(0.5, rate=0.0)


def test_extinction_probability_examples():
    assert extinction_probability(BirthDeathParams(0.5)) == 1.0
    assert extinction_probability(BirthDeathParams(1.0)) == 0.0
    assert extinction_probability(BirthDeathParams(0.0)) == 1.0
    lam = lambda_from_c(0.5, 1.0)
    assert lam == pytest.approx(2 / 3, abs=1e-15)
    assert extinction_probability(BirthDeathParams(lam)) == pytest.approx(0.5, abs=1e-15)
    assert extinction_probability_from_c(0.5, 1.0) == pytest.approx(0.5, abs=1e-15)


@given(st.floats(-20, 20), st.floats(0.1, 4))
def test_extinction_closed_forms_agree(c, sigma2):
    lam = lambda_from_c(c, sigma2)
    assert extinction_probability(BirthDeathParams(lam)) == pytest.approx(
        extinction_probability_from_c(c, sigma2), abs=1e-12)


# -------------------------------------------------------------- paths


def test_path_is_reproducible_and_starts_at_one():
    p = BirthDeathParams(0.6)
    a = simulate_Y(p, 5.0, seed=3, replica=7)
    b = simulate_Y(p, 5.0, seed=3, replica=7)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.counts, b.counts)
    assert a.times[0] == 0.0 and a.counts[0] == 1
    assert np.all(np.diff(a.times) > 0)
    assert np.all(np.abs(np.diff(a.counts)) == 1)
    assert a.count_at(0.0) == 1
    assert a.count_at(5.0) == a.counts[-1]


def test_path_rejects_bad_horizon():
    with pytest.raises(ValueError):
        simulate_Y(BirthDeathParams(0.5), 0.0, seed=1)


def test_pure_death_single_event():
    path = simulate_Y(BirthDeathParams(0.0), 1e3, seed=1)
    assert path.extinct
    assert list(path.counts) == [1, 0]
    assert path.first_death_time == path.times[1]


def test_pure_death_mean_time():
    res = simulate_Y_batch(BirthDeathParams(0.0), 1e3, SEED, 100_000)
    assert np.all(res["status"] == BD_EXTINCT)
    assert np.all(res["events"] == 1)
    m, se = mean_se(res["time"])
    assert abs(m - 1.0) <= 3 * se


def test_yule_mean():
    res = simulate_Y_batch(BirthDeathParams(1.0), 1.0, SEED, 100_000)
    m, se = mean_se(res["final_count"])
    assert abs(m - math.e) <= 3 * se


def test_martingale_mean():
    lam, t = 0.75, 2.0
    res = simulate_Y_batch(BirthDeathParams(lam), t, SEED + 1, 50_000)
    m, se = mean_se(res["final_count"] / mean_population(lam, t))
    assert abs(m - 1.0) <= 3 * se


def test_extinction_frequency():
    # a path that reaches 1000 particles dies out with probability (1/3)^1000
    res = simulate_Y_batch(BirthDeathParams(0.75), 20.0, SEED + 2, 20_000, cap=1000)
    freq = float(np.mean(res["status"] == BD_EXTINCT))
    se = math.sqrt(freq * (1 - freq) / 20_000)
    assert abs(freq - 1 / 3) <= 3 * se


def test_exploded_flag():
    path = simulate_Y(BirthDeathParams(1.0), 100.0, seed=2, cap=50)
    assert path.exploded and not path.extinct
    assert path.counts[-1] == 50


@pytest.mark.parametrize("lam", [0.25, 0.5, 0.75])
def test_first_death_times_follow_tail(lam):
    res = simulate_Y_batch(BirthDeathParams(lam), 200.0, SEED + 3, 100_000, stop_at_first_death=True)
    t = np.sort(res["first_tip"])
    assert np.all(t >= 0)
    ours = ks_test(t, tail=lambda x: first_death_tail(lam, x))
    ref = kstest(t, lambda x: 1 - first_death_tail(lam, x))
    assert ours.d == pytest.approx(ref.statistic, abs=1e-12)
    assert ours.p > 0.01


def test_first_death_time_property():
    path = BDPath(np.array([0.0, 1.0, 2.0, 3.0]), np.array([1, 2, 1, 2]), False, False, 4.0)
    assert path.first_death_time == 2.0
    assert BDPath(np.array([0.0]), np.array([1]), False, False, 1.0).first_death_time is None


# -------------------------------------------------------------- escape law


def test_tail_at_zero():
    for c in (-3.0, 0.0, 0.7):
        assert escape_tail(EscapeLaw(c), 0.0) == 1.0


def test_density_at_zero_critical():
    assert escape_density(EscapeLaw(0.0), 0.0) == pytest.approx(HALF_ROOT2, abs=1e-15)


def test_density_critical_closed_form():
    law = EscapeLaw(0.0, 1.0)
    t = np.linspace(0, 6, 61)
    r2 = math.sqrt(2)
    expected = 2 * r2 * np.exp(r2 * t) / (1 + np.exp(r2 * t)) ** 2
    assert np.allclose(law.density(t), expected, rtol=1e-13, atol=0)


def test_density_critical_general_sigma():
    sigma = 1.3
    law = EscapeLaw(0.0, sigma**2)
    t = np.linspace(0, 4, 41)
    x = np.exp(math.sqrt(2) * sigma * t)
    assert np.allclose(law.density(t), 2 * math.sqrt(2) * sigma * x / (1 + x) ** 2, rtol=1e-13)


def test_mode_values():
    assert escape_mode(EscapeLaw(0.5)) == pytest.approx(MODE_C05, abs=1e-15)
    assert escape_mode(EscapeLaw(0.0)) == 0.0
    assert escape_mode(EscapeLaw(-0.5)) == 0.0
    assert EscapeLaw(0.5).most_likely_generation(1e-4) == pytest.approx(MODE_C05 * 100)


@given(st.floats(0.01, 10), st.floats(0.1, 4))
def test_mode_is_argmax(c, sigma2):
    law = EscapeLaw(c, sigma2)
    m = law.mode()
    h = 1e-4 * max(m, 1e-3)
    assert law.density(m) >= law.density(m + h) - 1e-12
    assert law.density(m) >= law.density(max(m - h, 0.0)) - 1e-12


@given(st.floats(-10, 0), st.floats(0.1, 4))
def test_density_decreasing_for_nonpositive_c(c, sigma2):
    d = EscapeLaw(c, sigma2).density(np.linspace(0, 5, 50))
    assert np.all(np.diff(d) <= 1e-15)


@pytest.mark.parametrize("c", [-0.5, 0.0, 0.5])
def test_density_integrates_to_one(c):
    law = EscapeLaw(c, 1.0)
    val, _ = integrate.quad(law.density, 0.0, 40.0 / law.kappa, limit=200, epsabs=1e-12)
    assert val >= 1 - 1e-6
    assert val <= 1 + 1e-9


@pytest.mark.parametrize("c", [-0.5, 0.0, 0.5, 2.0])
def test_density_is_minus_tail_derivative(c):
    law = EscapeLaw(c, 1.0)
    t = np.linspace(0.01, 5, 100)
    h = 1e-5
    fd = -(law.tail(t + h, unit="sqrt_mu") - law.tail(t - h, unit="sqrt_mu")) / (2 * h)
    assert np.max(np.abs(fd - law.density(t))) < 1e-6


@pytest.mark.parametrize("c", [-1.0, 0.0, 1.0])
def test_tail_ode(c):
    law = EscapeLaw(c, 1.0)
    t = np.linspace(0.01, 10, 200)
    h = 1e-5
    q = law.tail(t)
    dq = (law.tail(t + h) - law.tail(t - h)) / (2 * h)
    assert np.max(np.abs(dq + q - law.lam * q * q)) < 1e-8


def test_units_and_converters():
    law = EscapeLaw(0.5, 1.0)
    assert law.kappa == 1.5
    assert law.tail(1.0, unit="sqrt_mu") == pytest.approx(law.tail(1.5))
    assert law.to_sqrt_mu(law.to_kappa(0.3)) == pytest.approx(0.3)
    assert law.generations(0.5, 1e-4) == pytest.approx(50.0)
    with pytest.raises(ValueError):
        law.tail(1.0, unit="hours")


def test_mean_is_tail_integral():
    for c in (-0.5, 0.0, 0.5):
        law = EscapeLaw(c, 1.0)
        val, _ = integrate.quad(law.tail, 0, np.inf)
        assert law.mean() == pytest.approx(val, rel=1e-8)
        assert law.mean("sqrt_mu") == pytest.approx(val / law.kappa, rel=1e-8)


@given(st.floats(0.01, 0.99))
def test_from_lambda_round_trip(lam):
    assert EscapeLaw.from_lambda(lam, 0.8).lam == pytest.approx(lam, abs=1e-12)


def test_escape_law_domain_errors():
    with pytest.raises(ValueError):
        escape_tail(EscapeLaw(0.0), -0.1)
    with pytest.raises(ValueError):
        escape_density(EscapeLaw(0.0), [0.1, -1.0])
    with pytest.raises(ValueError):
        EscapeLaw(0.0, 0.0)


def test_write_curves(tmp_path):
    path = write_escape_curves(tmp_path / "curves.csv", [EscapeLaw(0.0), EscapeLaw(0.5)], [0.0, 1.0])
    lines = path.read_text().splitlines()
    assert lines[0] == "c,sigma2,t,psi,tail"
    assert len(lines) == 5
    first = [float(x) for x in lines[1].split(",")]
    assert first[3] == pytest.approx(HALF_ROOT2) and first[4] == 1.0


# -------------------------------------------------------------- leaf count


def test_leaf_count_values():
    w = leaf_count_pmf(3)
    assert list(w) == [0.5, 0.125, 0.0625]
    assert list(leaf_count_recursion(3)) == [0.5, 0.125, 0.0625]


def test_leaf_series_matches_recursion():
    assert np.allclose(leaf_count_pmf(200), leaf_count_recursion(200), rtol=0, atol=1e-12)


def test_leaf_partial_sums():
    w = leaf_count_pmf(100_000)
    s = np.cumsum(w)
    assert np.all(np.diff(s) > 0)
    assert s[-1] < 1.0
    # tail of 1 - sqrt(1 - s) beyond n is about 1 / sqrt(pi n)
    assert 1 - s[-1] == pytest.approx(1 / math.sqrt(math.pi * 100_000), rel=1e-3)


def test_leaf_count_bad_input():
    with pytest.raises(ValueError):
        leaf_count_pmf(0)
    with pytest.raises(ValueError):
        leaf_count_recursion(0)
