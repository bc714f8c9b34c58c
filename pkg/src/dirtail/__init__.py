"""Deviation bounds, densities and Monte-Carlo oracles for weighted Dirichlet sums,
plus Multinomial Thompson Sampling simulators built on them."""

from dirtail.bounds import (
    BoundReport,
    c0_constant,
    chernoff_upper,
    dp_bernstein_threshold,
    dp_hoeffding_threshold,
    gaussian_tail,
    sandwich_bounds,
    thm1_lower,
    thm1_upper,
)
from dirtail.dirichlet import (
    DirichletParams,
    McEstimate,
    mc_crossing_prob,
    sample_bootstrap_mean,
    sample_dirichlet,
    tail_probability,
    weighted_sum_density,
)
from dirtail.errors import (
    ConvergenceError,
    DegenerateDistributionError,
    DirtailError,
    DomainError,
    EmptySampleError,
    InfeasibleError,
)
from dirtail.kinf import (
    FiniteDist,
    KinfSolution,
    WeightedSupport,
    a_transform,
    kinf,
    kinf_star,
    solve_kinf,
)

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "ConvergenceError",
    "DegenerateDistributionError",
    "DirichletParams",
    "DirtailError",
    "DomainError",
    "EmptySampleError",
    "FiniteDist",
    "InfeasibleError",
    "KinfSolution",
    "McEstimate",
    "WeightedSupport",
    "a_transform",
    "c0_constant",
    "chernoff_upper",
    "dp_bernstein_threshold",
    "dp_hoeffding_threshold",
    "gaussian_tail",
    "kinf",
    "kinf_star",
    "mc_crossing_prob",
    "sample_bootstrap_mean",
    "sample_dirichlet",
    "sandwich_bounds",
    "solve_kinf",
    "tail_probability",
    "thm1_lower",
    "thm1_upper",
    "weighted_sum_density",
]
