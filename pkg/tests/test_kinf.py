import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirtail.errors import DegenerateDistributionError, DomainError, InfeasibleError
from dirtail.kinf import (
    FiniteDist,
    WeightedSupport,
    a_transform,
    dual_objective,
    kinf,
    kinf_grid_oracle,
    kinf_star,
    kinf_two_point_oracle,
    random_instance,
    solve_kinf,
)

HALF = FiniteDist([0.5, 0.5])
BIN = WeightedSupport([0.0, 1.0])
THIRDS = FiniteDist([1 / 3, 1 / 3, 1 / 3])
THREE = WeightedSupport([0.0, 0.5, 1.0])
KL_HALF_34 = 0.5 * math.log(4 / 3)


class TestTypes:
    def test_support_conventions(self):
        with pytest.raises(DomainError):
            WeightedSupport([0.1, 1.0])
        with pytest.raises(DomainError):
            WeightedSupport([0.0, 0.0])
        with pytest.raises(DomainError):
            WeightedSupport([0.0, 2.0, 1.0])

    def test_grid(self):
        g = WeightedSupport.grid(4, b=2.0)
        assert np.allclose(g.as_array(), [0, 0.5, 1, 1.5, 2])
        assert g.m == 4 and g.b == 2.0

    def test_probs_must_sum_to_one(self):
        with pytest.raises(DomainError):
            FiniteDist([0.5, 0.6])
        with pytest.raises(DomainError):
            FiniteDist([1.2, -0.2])

    def test_complement_reindexes(self):
        f = WeightedSupport([0.0, 0.2, 1.0])
        assert np.allclose(f.complement().as_array(), [0.0, 0.8, 1.0])


class TestDualObjective:
    def test_zero_at_origin(self):
        assert dual_objective(HALF, BIN, 0.75, 0.0) == 0.0

    def test_closed_form_two_point(self):
        assert dual_objective(HALF, BIN, 0.75, 4 / 3) == pytest.approx(KL_HALF_34, abs=1e-12)

    def test_single_term(self):
        assert dual_objective(FiniteDist([1.0, 0.0]), BIN, 0.5, 1.0) == pytest.approx(math.log(1.5))

    def test_lambda_out_of_range(self):
        with pytest.raises(DomainError):
            dual_objective(HALF, BIN, 0.75, 5.0)
        with pytest.raises(DomainError):
            dual_objective(HALF, BIN, 0.0, 0.5)


class TestSolveKinf:
    def test_two_point(self):
        sol = solve_kinf(HALF, BIN, 0.75)
        assert sol.value == pytest.approx(KL_HALF_34, abs=1e-12)
        assert sol.lambda_star == pytest.approx(4 / 3, abs=1e-9)
        assert sol.sigma_sq == pytest.approx(0.140625, abs=1e-9)
        assert not sol.at_boundary

    def test_below_mean_is_zero(self):
        sol = solve_kinf(FiniteDist([0.3, 0.7]), BIN, 0.5)
        assert sol.value == 0.0 and sol.lambda_star == 0.0

    def test_three_point(self):
        sol = solve_kinf(THIRDS, THREE, 0.75)
        assert sol.value == pytest.approx(0.2100, abs=1e-3)
        assert sol.lambda_star == pytest.approx(1.907, abs=1e-3)

    def test_boundary_flag(self):
        sol = solve_kinf(FiniteDist([1.0, 0.0]), BIN, 0.5)
        assert sol.at_boundary
        assert sol.value == pytest.approx(math.log(2.0), abs=1e-9)

    def test_tied_support_values_aggregate(self):
        a = solve_kinf(FiniteDist([0.2, 0.3, 0.1, 0.4]), WeightedSupport([0, 0.5, 0.5, 1]), 0.8)
        b = solve_kinf(FiniteDist([0.2, 0.4, 0.4]), WeightedSupport([0, 0.5, 1]), 0.8)
        assert a.value == pytest.approx(b.value, abs=1e-14)

    def test_domain(self):
        with pytest.raises(DomainError):
            solve_kinf(HALF, BIN, 1.0)
        with pytest.raises(DomainError):
            solve_kinf(HALF, BIN, 0.0)
        with pytest.raises(DomainError):
            solve_kinf(THIRDS, BIN, 0.5)

    def test_finite_near_b(self):
        sol = solve_kinf(FiniteDist([0.5, 0.5, 0.0]), THREE, 1 - 1e-9)
        assert math.isfinite(sol.value) and sol.value >= 0

    def test_matches_two_point_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            p1, mu = rng.uniform(0.01, 0.99, 2)
            got = kinf(FiniteDist([1 - p1, p1]), BIN, mu)
            assert got == pytest.approx(kinf_two_point_oracle(p1, mu), abs=1e-10)


class TestKinfStar:
    def test_symmetry(self):
        assert kinf_star(HALF, BIN, 0.75) == pytest.approx(KL_HALF_34, abs=1e-12)
        assert kinf_star(HALF, BIN, 0.25) == pytest.approx(KL_HALF_34, abs=1e-12)
        assert kinf_star(HALF, BIN, 0.5) == 0.0

    def test_a_transform(self):
        assert a_transform(HALF, BIN, 0.5) == 0.0
        exact = math.sqrt(math.log(4 / 3))
        assert a_transform(HALF, BIN, 0.75) == pytest.approx(exact, abs=1e-12)
        assert a_transform(HALF, BIN, 0.25) == pytest.approx(-exact, abs=1e-12)
        # the six-digit literal is a rounding of sqrt(2 * 0.143841)
        assert a_transform(HALF, BIN, 0.75) == pytest.approx(0.536359, abs=2e-6)

    def test_a_transform_degenerate(self):
        with pytest.raises(DegenerateDistributionError):
            a_transform(FiniteDist([1.0, 0.0]), BIN, 0.3)


class TestOracles:
    def test_two_point_values(self):
        assert kinf_two_point_oracle(0.5, 0.75) == pytest.approx(0.143841, abs=1e-6)
        assert kinf_two_point_oracle(0.5, 0.5) == 0.0
        assert kinf_two_point_oracle(0.4, 0.5) == pytest.approx(0.020136, abs=1e-6)
        with pytest.raises(DomainError):
            kinf_two_point_oracle(0.0, 0.5)

    def test_grid_values(self):
        assert kinf_grid_oracle(HALF, BIN, 0.75, 1e-4) == pytest.approx(0.143841, abs=1e-4)
        assert kinf_grid_oracle(HALF, BIN, 0.4, 1e-2) == 0.0
        assert kinf_grid_oracle(THIRDS, THREE, 0.75, 1e-3) == pytest.approx(0.2100, abs=2e-3)

    def test_grid_upper_bounds_dual(self):
        rng = np.random.default_rng(5)
        for m in (1, 2, 3):
            for _ in range(10):
                p, f = random_instance(rng, m)
                mu = p.mean(f) + 0.5 * (f.b - p.mean(f))
                assert kinf_grid_oracle(p, f, mu, 1e-2) >= kinf(p, f, mu) - 1e-12

    def test_grid_limits(self):
        with pytest.raises(DomainError):
            kinf_grid_oracle(FiniteDist([0.2] * 5), WeightedSupport.grid(4), 0.5)
        with pytest.raises(DomainError):
            kinf_grid_oracle(HALF, BIN, 0.7, 0.1)

    def test_grid_infeasible(self):
        with pytest.raises(InfeasibleError):
            # q_1 >= 0.01 on the lattice leaves no room for q_0 > 0 at this level
            kinf_grid_oracle(FiniteDist([0.5, 0.25, 0.25]), THREE, 0.995, 1e-2)


# property-based checks ----------------------------------------------------

probs = st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6)


@st.composite
def instances(draw):
    w = np.array(draw(probs))
    m = w.size - 1
    inner = sorted(draw(st.lists(st.floats(0.01, 0.99), min_size=m - 1, max_size=m - 1)))
    f = WeightedSupport([0.0, *inner, 1.0])
    p = FiniteDist.normalized(w)
    t = draw(st.floats(0.05, 0.95))
    mu = p.mean(f) + t * (1.0 - p.mean(f))
    return p, f, mu


@settings(max_examples=150, deadline=None)
@given(instances())
def test_curvature_sandwich_and_lambda_bound(inst):
    p, f, mu = inst
    sol = solve_kinf(p, f, mu)
    lam, s2, b = sol.lambda_star, sol.sigma_sq, f.b
    assert 0.5 * lam**2 * s2 * (1 - lam * (b - mu)) ** 2 <= sol.value + 1e-10
    assert sol.value <= 0.5 * lam**2 * s2 * (1 + lam * mu) ** 2 + 1e-10
    assert 1 - lam * (b - mu) >= p.as_array()[-1] - 1e-10


@settings(max_examples=150, deadline=None)
@given(instances())
def test_pinsker(inst):
    p, f, mu = inst
    assert kinf(p, f, mu) >= 2 * ((mu - p.mean(f)) / f.b) ** 2 - 1e-12


@settings(max_examples=100, deadline=None)
@given(instances(), st.floats(0.001, 0.05))
def test_monotone_in_mu(inst, d):
    p, f, mu = inst
    hi = min(mu + d, 0.999)
    assert kinf(p, f, mu) <= kinf(p, f, hi) + 1e-14
    assert a_transform(p, f, mu * 0.9) < a_transform(p, f, mu)


@settings(max_examples=60, deadline=None)
@given(instances(), st.floats(0.1, 100.0))
def test_scale_invariance(inst, c):
    p, f, mu = inst
    scaled = FiniteDist.normalized(c * p.as_array())
    assert kinf(scaled, f, mu) == pytest.approx(kinf(p, f, mu), rel=1e-9, abs=1e-13)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(1.0, 50.0), min_size=3, max_size=5),
    st.lists(st.floats(0.0, 5.0), min_size=3, max_size=5),
    st.floats(0.05, 0.9),
)
def test_mixture_shift(alpha, beta, t):
    k = min(len(alpha), len(beta))
    a, bt = np.array(alpha[:k]), np.array(beta[:k])
    f = WeightedSupport.grid(k - 1)
    pa = FiniteDist.normalized(a)
    pab = FiniteDist.normalized(a + bt)
    mu = max(pa.mean(f), pab.mean(f)) + t * (1 - max(pa.mean(f), pab.mean(f)))
    A, B = a.sum(), bt.sum()
    k_a, k_ab = kinf(pa, f, mu), kinf(pab, f, mu)
    assert k_ab <= (A * k_a + B * math.log(1 / (1 - mu))) / (A + B) + 1e-10
    assert k_ab >= k_a - 3 * B / A * math.log((A + B) / (1 - mu)) - 1e-10


def test_derivative_identity():
    rng = np.random.default_rng(3)
    h = 1e-6
    for _ in range(30):
        p, f = random_instance(rng, int(rng.integers(1, 5)))
        mu = p.mean(f) + rng.uniform(0.1, 0.9) * (f.b - p.mean(f))
        fd = (kinf(p, f, mu + h) - kinf(p, f, mu - h)) / (2 * h)
        assert fd == pytest.approx(solve_kinf(p, f, mu).lambda_star, abs=1e-4)
