"""Closed-form deviation bounds for weighted Dirichlet sums.

Gaussian-type two-sided bounds are driven by the signed transform
``A(p, mu, f) = sgn(mu - p.f) sqrt(2 K_inf*(p, mu, f))``; they are
certified once ``min(alpha_0, alpha_m)`` exceeds ``c0 / eps**2``.  The
Chernoff bound ``exp(-abar K_inf)`` needs no such condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from dirtail.dirichlet import DirichletParams
from dirtail.errors import DomainError
from dirtail.kinf import FiniteDist, WeightedSupport, a_transform, solve_kinf, kinf_star

_SQRT2 = math.sqrt(2.0)


def c0_constant() -> float:
    return 2.0 / math.pi * (8.0 + 49.0 * math.sqrt(6.0) / 9.0) ** 2


def gaussian_tail(x: float) -> float:
    """``P(N(0, 1) >= x)``, via the scaled erfc for positive ``x``."""
    if x == math.inf:
        return 0.0
    if x == -math.inf:
        return 1.0
    if x > 0.0:
        z = x / _SQRT2
        return 0.5 * float(special.erfcx(z)) * math.exp(-z * z)
    return 0.5 * float(special.erfc(x / _SQRT2))


def _check_epsilon(epsilon: float, closed: bool = False) -> None:
    ok = 0.0 < epsilon <= 1.0 if closed else 0.0 < epsilon < 1.0
    if not ok:
        raise DomainError(f"epsilon out of range: {epsilon}")


def _alpha_min(params: DirichletParams) -> float:
    return min(params.alpha[0], params.alpha[-1])


def check_epsilon_condition(params: DirichletParams, epsilon: float) -> bool:
    """``min(alpha_0, alpha_m) >= c0 / eps**2``."""
    _check_epsilon(epsilon)
    return _alpha_min(params) >= c0_constant() / epsilon**2


def shifted_measures(params: DirichletParams) -> tuple[FiniteDist, FiniteDist]:
    """Normalised ``alpha`` with one unit removed from the top / bottom endpoint."""
    a = params.as_array()
    if a[0] < 1.0 or a[-1] < 1.0:
        raise DomainError("shifted measures need alpha_0 >= 1 and alpha_m >= 1")
    top = a.copy()
    top[-1] -= 1.0
    bottom = a.copy()
    bottom[0] -= 1.0
    return FiniteDist.normalized(top), FiniteDist.normalized(bottom)


@dataclass(frozen=True)
class BoundReport:
    mu: float
    epsilon: float
    lower: float
    upper: float
    chernoff: float
    condition_met: bool
    kinf_plus: float
    kinf_minus: float


def chernoff_upper(params: DirichletParams, f: WeightedSupport, mu: float) -> float:
    """``exp(-abar K_inf(p_bar, mu, f))``; valid for every ``alpha``."""
    return math.exp(-params.alpha_bar * solve_kinf(params.p_bar, f, mu).value)


def sandwich_bounds(
    params: DirichletParams, f: WeightedSupport, mu: float, epsilon: float
) -> BoundReport:
    """Two-sided bound on ``P(w.f >= mu)`` for ``w ~ Dir(alpha)`` itself.

    Inadmissible inputs (endpoint masses below ``c0/eps**2 + 1``) still yield
    numbers; ``condition_met`` records whether the bound is certified.
    """
    _check_epsilon(epsilon)
    p_plus, p_minus = shifted_measures(params)
    scale = math.sqrt(params.alpha_bar - 1.0)
    lower = (1.0 - epsilon) * gaussian_tail(scale * a_transform(p_plus, f, mu))
    upper = (1.0 + epsilon) * gaussian_tail(scale * a_transform(p_minus, f, mu))
    return BoundReport(
        mu=mu,
        epsilon=epsilon,
        lower=min(max(lower, 0.0), 1.0),
        upper=min(max(upper, 0.0), 1.0),
        chernoff=chernoff_upper(params, f, mu),
        condition_met=_alpha_min(params) >= c0_constant() / epsilon**2 + 1.0,
        kinf_plus=kinf_star(p_plus, f, mu),
        kinf_minus=kinf_star(p_minus, f, mu),
    )


def _thm1_tail(params: DirichletParams, f: WeightedSupport, mu: float) -> float:
    return gaussian_tail(math.sqrt(params.alpha_bar) * a_transform(params.p_bar, f, mu))


def thm1_lower(params: DirichletParams, f: WeightedSupport, mu: float, epsilon: float) -> float:
    """Lower bound on ``P(w.f >= mu)`` for ``w ~ Dir(params.plus())``."""
    _check_epsilon(epsilon)
    return (1.0 - epsilon) * _thm1_tail(params, f, mu)


def thm1_upper(params: DirichletParams, f: WeightedSupport, mu: float, epsilon: float) -> float:
    """Upper bound on ``P(w.f >= mu)`` for ``w ~ Dir(params.minus())``, capped at 1."""
    _check_epsilon(epsilon)
    return min(1.0, (1.0 + epsilon) * _thm1_tail(params, f, mu))


def _dp_common(n: int, gamma: float, epsilon: float, delta: float) -> tuple[float, float]:
    if n < 1:
        raise DomainError("n must be at least 1")
    if not gamma > 0.0:
        raise DomainError("gamma must be positive")
    _check_epsilon(epsilon, closed=True)
    if not 0.0 < delta < 1.0:
        raise DomainError("delta must lie in (0, 1)")
    return math.log((1.0 + epsilon) / delta), n + 2.0 * gamma - 1.0


def dp_condition_met(gamma: float, epsilon: float) -> bool:
    """Whether the prior weight certifies the posterior thresholds."""
    return gamma >= c0_constant() / epsilon**2 + 1.0


def dp_hoeffding_threshold(n: int, gamma: float, epsilon: float, delta: float) -> float:
    """Deviation ``t`` with ``P(posterior mean - empirical mean >= t) <= delta``."""
    log_term, size = _dp_common(n, gamma, epsilon, delta)
    return math.sqrt(log_term / (2.0 * size)) + gamma / size


def dp_bernstein_threshold(
    n: int, gamma: float, epsilon: float, delta: float, empirical_variance: float
) -> float:
    if not 0.0 <= empirical_variance <= 0.25:
        raise DomainError("empirical variance of [0, 1] data lies in [0, 1/4]")
    log_term, size = _dp_common(n, gamma, epsilon, delta)
    return math.sqrt(4.0 * empirical_variance * log_term / size) + (
        4.0 * log_term + 5.0 * gamma
    ) / size


def bound_table(params, f, mus, epsilon) -> list[BoundReport]:
    return [sandwich_bounds(params, f, float(mu), epsilon) for mu in np.atleast_1d(mus)]
