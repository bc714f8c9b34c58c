import math

import numpy as np
import pytest
from scipy import stats

from dirtail.bounds import (
    bound_table,
    c0_constant,
    check_epsilon_condition,
    chernoff_upper,
    dp_bernstein_threshold,
    dp_condition_met,
    dp_hoeffding_threshold,
    gaussian_tail,
    sandwich_bounds,
    shifted_measures,
    thm1_lower,
    thm1_upper,
)
from dirtail.dirichlet import DirichletParams, mc_crossing_prob
from dirtail.errors import DomainError
from dirtail.kinf import WeightedSupport, bernoulli_kl

BIN = WeightedSupport([0.0, 1.0])


def test_c0():
    assert c0_constant() == pytest.approx(289.81, abs=0.01)
    assert 4 * c0_constant() + 1 == pytest.approx(1160.2, abs=0.1)


class TestGaussianTail:
    def test_values(self):
        assert gaussian_tail(0.0) == 0.5
        assert gaussian_tail(1.959964) == pytest.approx(0.025, abs=1e-7)
        # 1 - 7.6e-24 rounds to 1 in double precision; the deficit shows up mirrored
        assert gaussian_tail(-10.0) == 1.0
        assert gaussian_tail(10.0) == pytest.approx(7.62e-24, rel=1e-3)

    def test_relative_accuracy(self):
        xs = np.linspace(-8, 8, 161)
        ref = stats.norm.sf(xs)
        got = np.array([gaussian_tail(x) for x in xs])
        assert np.max(np.abs(got / ref - 1)) < 1e-12

    def test_far_tail_positive(self):
        assert 0 < gaussian_tail(30.0) < 1e-190
        assert gaussian_tail(math.inf) == 0.0 and gaussian_tail(-math.inf) == 1.0


class TestConditions:
    def test_epsilon_condition(self):
        assert check_epsilon_condition(DirichletParams([1200, 1200]), 0.5)
        assert not check_epsilon_condition(DirichletParams([1200, 1200]), 0.4)
        assert check_epsilon_condition(DirichletParams([1e12, 1, 1e12]), 0.01)
        with pytest.raises(DomainError):
            check_epsilon_condition(DirichletParams([2, 2]), 1.0)

    def test_shifted_measures(self):
        plus, minus = shifted_measures(DirichletParams([3, 2, 5]))
        assert np.allclose(plus.as_array(), np.array([3, 2, 4]) / 9)
        assert np.allclose(minus.as_array(), np.array([2, 2, 5]) / 9)
        with pytest.raises(DomainError):
            shifted_measures(DirichletParams([0.5, 2]))


class TestChernoff:
    def test_uniform_closed_form(self):
        assert chernoff_upper(DirichletParams([1, 1]), BIN, 0.75) == pytest.approx(0.75, abs=1e-12)

    def test_trivial_below_mean(self):
        assert chernoff_upper(DirichletParams([2, 2]), BIN, 0.4) == 1.0

    def test_beta_10_10(self):
        params = DirichletParams([10, 10])
        bound = chernoff_upper(params, BIN, 0.75)
        assert bound == pytest.approx(math.exp(-20 * 0.5 * math.log(4 / 3)), rel=1e-10)
        est = mc_crossing_prob(params, BIN, 0.75, 10**6, seed=1)
        assert est.estimate <= bound + 3 * est.std_error


class TestSandwich:
    def test_brackets_beta_tail(self):
        params = DirichletParams([1200, 1200])
        rep = sandwich_bounds(params, BIN, 0.53, 0.5)
        exact = stats.beta(1200, 1200).sf(0.53)
        assert rep.condition_met
        assert rep.lower <= exact <= rep.upper
        assert rep.chernoff >= exact

    def test_near_zero(self):
        rep = sandwich_bounds(DirichletParams([1200, 1200]), BIN, 1e-3, 0.5)
        assert rep.lower >= 0.5 - 1e-12 and rep.upper == 1.0

    def test_at_mean(self):
        rep = sandwich_bounds(DirichletParams([1200, 1200]), BIN, 0.5, 0.5)
        assert rep.lower <= rep.upper
        assert rep.kinf_plus > 0 and rep.kinf_minus > 0

    def test_inadmissible_still_numbers(self):
        rep = sandwich_bounds(DirichletParams([3, 3]), BIN, 0.6, 0.5)
        assert not rep.condition_met
        assert 0 <= rep.lower <= 1 and 0 <= rep.upper <= 1

    def test_table(self):
        rows = bound_table(DirichletParams([1200, 1200]), BIN, [0.51, 0.52], 0.5)
        assert [r.mu for r in rows] == [0.51, 0.52]
        assert rows[0].upper >= rows[1].upper


class TestTheorem1:
    def test_documented_value(self):
        params = DirichletParams([400, 400])
        arg = math.sqrt(2 * 800 * bernoulli_kl(0.5, 0.55))
        assert arg == pytest.approx(2.836, abs=1e-3)
        lower = thm1_lower(params, BIN, 0.55, 0.9)
        assert lower == pytest.approx(0.1 * gaussian_tail(arg), rel=1e-12)
        assert lower == pytest.approx(2.28e-4, rel=0.01)
        assert lower <= stats.beta(401, 400).sf(0.55)

    def test_at_mean(self):
        params = DirichletParams([400, 400])
        assert thm1_lower(params, BIN, 0.5, 0.3) == pytest.approx(0.35)
        assert thm1_upper(params, BIN, 0.5, 0.3) == pytest.approx(0.65)

    def test_upper_capped(self):
        params = DirichletParams([1e9, 1e9])
        assert thm1_upper(params, BIN, 0.2, 0.99) == 1.0
        assert thm1_upper(params, BIN, 0.5, 0.99) == pytest.approx(0.995)

    def test_ordering(self):
        params = DirichletParams([1500, 20, 1500])
        f = WeightedSupport.grid(2)
        for mu in (0.51, 0.53, 0.56):
            assert thm1_upper(params, f, mu, 0.4) >= thm1_lower(params, f, mu, 0.4)


class TestDirichletProcess:
    def test_hoeffding_value(self):
        expected = math.sqrt(math.log(20) / 3162) + 291 / 1581
        assert dp_hoeffding_threshold(1000, 291, 1.0, 0.1) == pytest.approx(expected, rel=1e-12)
        assert dp_hoeffding_threshold(1000, 291, 1.0, 0.1) == pytest.approx(0.2148, abs=1e-4)

    def test_hoeffding_limits(self):
        assert dp_hoeffding_threshold(1000, 291, 1.0, 1 - 1e-15) == pytest.approx(
            291 / 1581 + math.sqrt(math.log(2) / 3162), rel=1e-9
        )
        assert dp_hoeffding_threshold(10**12, 291, 1.0, 0.1) < 1e-5

    def test_bernstein(self):
        n, g, e, d = 1000, 291, 1.0, 0.1
        log_term = math.log(2 / 0.1)
        assert dp_bernstein_threshold(n, g, e, d, 0.0) == pytest.approx((4 * log_term + 5 * g) / 1581)
        assert dp_bernstein_threshold(n, g, e, d, 0.25) == pytest.approx(0.9715, abs=1e-4)
        assert dp_bernstein_threshold(n, g, e, d, 0.1) < dp_bernstein_threshold(n, g, e, d, 0.2)

    def test_validation(self):
        with pytest.raises(DomainError):
            dp_hoeffding_threshold(0, 1, 1, 0.1)
        with pytest.raises(DomainError):
            dp_hoeffding_threshold(10, 1, 1.5, 0.1)
        with pytest.raises(DomainError):
            dp_hoeffding_threshold(10, 1, 1, 1.0)
        with pytest.raises(DomainError):
            dp_bernstein_threshold(10, 1, 1, 0.1, 0.3)

    def test_condition(self):
        assert dp_condition_met(291, 1.0)
        assert not dp_condition_met(290, 1.0)
