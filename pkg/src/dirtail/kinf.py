"""Minimal Kullback-Leibler divergence on a finite weighted support.

For a probability vector ``p`` on ``{0, ..., m}``, a weight map ``f`` with
``f(0) = 0`` and ``f(m) = b``, and a level ``mu``,

    K_inf(p, mu, f) = inf { KL(p, q) : q in simplex, q.f >= mu }
                    = max_{0 <= lam <= 1/(b - mu)} E_p[log(1 - lam (f(X) - mu))].

The dual (right-hand) form is a one-dimensional concave maximisation and is
what :func:`solve_kinf` computes.  :func:`kinf_grid_oracle` scans the primal
form directly and is kept independent of the dual code path for testing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from dirtail.errors import DegenerateDistributionError, DomainError, InfeasibleError

PROB_ATOL = 1e-12
LAMBDA_TOL = 1e-12
DERIV_TOL = 1e-14
BOUNDARY_CLIP = 1e-12
MAX_ITER = 500


@dataclass(frozen=True)
class WeightedSupport:
    """Grid values ``f(0..m)`` with ``f(0) = 0`` and ``f(m) = b > 0``."""

    values: tuple[float, ...]

    def __init__(self, values):
        vals = tuple(float(v) for v in values)
        if len(vals) < 2:
            raise DomainError("support needs at least two points (m >= 1)")
        b = vals[-1]
        if vals[0] != 0.0:
            raise DomainError(f"f(0) must be 0, got {vals[0]}")
        if not b > 0.0:
            raise DomainError(f"f(m) must be positive, got {b}")
        if any(not (0.0 <= v <= b) for v in vals):
            raise DomainError("support values must lie in [0, b]")
        object.__setattr__(self, "values", vals)

    @classmethod
    def grid(cls, m: int, b: float = 1.0) -> "WeightedSupport":
        """The uniform grid ``{0, b/m, ..., b}``."""
        return cls([b * i / m for i in range(m + 1)])

    @property
    def b(self) -> float:
        return self.values[-1]

    @property
    def m(self) -> int:
        return len(self.values) - 1

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def complement(self) -> "WeightedSupport":
        """``b - f`` re-indexed so that it again starts at 0 and ends at b."""
        b = self.b
        return WeightedSupport([b - v for v in reversed(self.values)])


@dataclass(frozen=True)
class FiniteDist:
    """Probability vector on ``{0, ..., m}``."""

    probs: tuple[float, ...]

    def __init__(self, probs):
        ps = tuple(float(x) for x in probs)
        if any(not (x >= 0.0) or not math.isfinite(x) for x in ps):
            raise DomainError("probabilities must be finite and nonnegative")
        if abs(math.fsum(ps) - 1.0) > PROB_ATOL:
            raise DomainError(f"probabilities sum to {math.fsum(ps)!r}, not 1")
        object.__setattr__(self, "probs", ps)

    @classmethod
    def normalized(cls, weights) -> "FiniteDist":
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or not w.sum() > 0:
            raise DomainError("weights must be nonnegative with positive total")
        p = w / w.sum()
        # push the rounding residue onto the largest entry
        p[np.argmax(p)] += 1.0 - math.fsum(p)
        return cls(p)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def mean(self, f: WeightedSupport) -> float:
        _check_pair(self, f)
        return math.fsum(p * v for p, v in zip(self.probs, f.values))

    def reversed(self) -> "FiniteDist":
        return FiniteDist(self.probs[::-1])


@dataclass(frozen=True)
class KinfSolution:
    value: float
    lambda_star: float
    sigma_sq: float
    at_boundary: bool = False


def _check_pair(p: FiniteDist, f: WeightedSupport) -> None:
    if len(p.probs) != len(f.values):
        raise DomainError(
            f"distribution has {len(p.probs)} atoms but support has {len(f.values)}"
        )


def _check_mu(mu: float, b: float) -> None:
    if not (0.0 < mu < b):
        raise DomainError(f"mu must lie in (0, {b}), got {mu}")


def _pushforward(p: FiniteDist, f: WeightedSupport) -> tuple[np.ndarray, np.ndarray]:
    """Aggregate tied support values; drop zero-mass atoms."""
    _check_pair(p, f)
    vals, inv = np.unique(f.as_array(), return_inverse=True)
    probs = np.zeros(len(vals))
    np.add.at(probs, inv, p.as_array())
    keep = probs > 0
    return vals[keep], probs[keep]


def _phi(probs: np.ndarray, dev: np.ndarray, lam: float) -> float:
    args = 1.0 - lam * dev
    if np.any(args <= 0.0):
        return -math.inf
    return float(np.dot(probs, np.log(args)))


def _score(probs, dev, lam):
    """``E[dev / (1 - lam dev)]`` and its derivative in ``lam``."""
    r = dev / (1.0 - lam * dev)
    return float(np.dot(probs, r)), float(np.dot(probs, r * r))


def _root_increasing(probs, dev, lo, hi):
    """Bracketed Newton for the increasing map ``lam -> E[dev/(1-lam dev)]``.

    The map is negative at ``lo`` and positive at ``hi``.  A Newton step that
    leaves the current bracket is replaced by bisection.
    """
    lam = lo
    for _ in range(MAX_ITER):
        g, dg = _score(probs, dev, lam)
        if abs(g) <= DERIV_TOL:
            return lam
        if g < 0.0:
            lo = lam
        else:
            hi = lam
        new = lam - g / dg if dg > 0.0 else math.nan
        if not (lo < new < hi):
            new = 0.5 * (lo + hi)
        if abs(new - lam) <= LAMBDA_TOL * max(1.0, abs(lam)):
            return new
        lam = new
    return lam


def dual_objective(p: FiniteDist, f: WeightedSupport, mu: float, lam: float) -> float:
    """``sum_j p(j) log(1 - lam (f(j) - mu))``; ``-inf`` if any argument is <= 0."""
    _check_pair(p, f)
    b = f.b
    _check_mu(mu, b)
    if not (0.0 <= lam <= 1.0 / (b - mu)):
        raise DomainError(f"lambda must lie in [0, 1/(b - mu)], got {lam}")
    return _phi(p.as_array(), f.as_array() - mu, lam)


def solve_kinf(p: FiniteDist, f: WeightedSupport, mu: float) -> KinfSolution:
    b = f.b
    _check_mu(mu, b)
    vals, probs = _pushforward(p, f)
    dev = vals - mu
    mean = float(np.dot(probs, vals))
    if mu <= mean:
        return KinfSolution(0.0, 0.0, float(np.dot(probs, dev * dev)))

    hi = (1.0 - BOUNDARY_CLIP) / (b - mu)
    g_hi, _ = _score(probs, dev, hi)
    if g_hi <= 0.0:
        # no mass on b: the supremum sits on the clipped end of the bracket
        lam = hi
        at_boundary = True
    else:
        lam = _root_increasing(probs, dev, 0.0, hi)
        at_boundary = False
    r = dev / (1.0 - lam * dev)
    value = max(_phi(probs, dev, lam), 0.0)
    return KinfSolution(value, lam, float(np.dot(probs, r * r)), at_boundary)


def kinf(p: FiniteDist, f: WeightedSupport, mu: float) -> float:
    return solve_kinf(p, f, mu).value


def kinf_star(p: FiniteDist, f: WeightedSupport, mu: float) -> float:
    """Two-sided extension: cost of moving ``p`` to mean exactly ``mu``."""
    _check_mu(mu, f.b)
    if mu >= p.mean(f):
        return solve_kinf(p, f, mu).value
    return solve_kinf(p.reversed(), f.complement(), f.b - mu).value


def _is_degenerate(p: FiniteDist, f: WeightedSupport) -> bool:
    vals, _ = _pushforward(p, f)
    return len(vals) < 2


def a_transform(p: FiniteDist, f: WeightedSupport, mu: float) -> float:
    """Signed root ``sgn(mu - p.f) * sqrt(2 K_inf*)``, increasing in ``mu``."""
    _check_mu(mu, f.b)
    if _is_degenerate(p, f):
        raise DegenerateDistributionError("p charges a single support value")
    diff = mu - p.mean(f)
    if diff == 0.0:
        return 0.0
    return math.copysign(math.sqrt(2.0 * kinf_star(p, f, mu)), diff)


def bernoulli_kl(x: float, y: float) -> float:
    """``kl(x, y)`` for Bernoulli means; ``x`` may be 0 or 1."""
    out = 0.0
    if x > 0.0:
        out += x * math.log(x / y)
    if x < 1.0:
        out += (1.0 - x) * math.log((1.0 - x) / (1.0 - y))
    return out


def kinf_two_point_oracle(p1: float, mu: float) -> float:
    """Closed form on support ``{0, 1}`` with ``p = (1 - p1, p1)``."""
    if not (0.0 < p1 < 1.0) or not (0.0 < mu < 1.0):
        raise DomainError("p1 and mu must lie in (0, 1)")
    if mu <= p1:
        return 0.0
    return bernoulli_kl(p1, mu)


def _xlogy_ratio(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Elementwise ``p log(p/q)`` with 0 log 0 = 0 and p log(p/0) = inf."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(p > 0, p * np.log(p / q), 0.0)
    return np.where((p > 0) & (q <= 0), np.inf, out)


def kinf_grid_oracle(
    p: FiniteDist, f: WeightedSupport, mu: float, resolution: float = 1e-3
) -> float:
    """Primal scan of ``min KL(p, q)`` subject to ``q.f >= mu``.

    The interior coordinates ``q_1 .. q_{m-1}`` run over the lattice with
    step ``resolution``; the split of the remaining mass between the two
    endpoints is a convex one-dimensional problem solved in closed form.
    The endpoints carry the extreme optimal ratios ``q/p`` (the smallest one
    can fall below any fixed step), which is why they are kept off the
    lattice.  Every candidate is primal feasible, so the result is an upper
    bound that converges to ``K_inf`` as the step shrinks.
    """
    _check_pair(p, f)
    m = f.m
    if m > 3:
        raise DomainError("grid oracle supports m <= 3 only")
    if not (0.0 < resolution <= 1e-2):
        raise DomainError("resolution must lie in (0, 1e-2]")
    _check_mu(mu, f.b)

    pa = p.as_array()
    fa = f.as_array()
    n = int(round(1.0 / resolution))
    step = 1.0 / n

    # lattice over the interior coordinates
    if m == 1:
        heads = np.zeros((1, 0))
    else:
        ticks = np.arange(n + 1) * step
        mesh = np.meshgrid(*([ticks] * (m - 1)), indexing="ij")
        heads = np.stack([g.ravel() for g in mesh], axis=1)
        heads = heads[heads.sum(axis=1) <= 1.0 + 1e-12]

    rest = np.clip(1.0 - heads.sum(axis=1), 0.0, 1.0)
    base = heads @ fa[1:m]
    head_cost = _xlogy_ratio(pa[1:m][None, :], heads).sum(axis=1)

    # x = q_0 and q_m = rest - x; with f_0 = 0 the constraint reads x b <= slack
    p0, pm, b = pa[0], pa[m], fa[m]
    slack = base + rest * b - mu
    feasible = slack >= 0.0
    if p0 + pm > 0:
        x0 = rest * p0 / (p0 + pm)
    else:
        x0 = np.zeros_like(rest)
    x = np.minimum(x0, np.maximum(slack, 0.0) / b)
    tail = _xlogy_ratio(np.full_like(x, p0), x) + _xlogy_ratio(np.full_like(x, pm), rest - x)
    cost = np.where(feasible, head_cost + tail, np.inf)
    best = float(cost.min())
    if not math.isfinite(best):
        raise InfeasibleError("no lattice point with finite divergence meets q.f >= mu")
    return max(best, 0.0)


def random_instance(rng: np.random.Generator, m: int, b: float = 1.0):
    """Random (p, f) pair for property tests: Dirichlet(1) weights, sorted f."""
    p = FiniteDist.normalized(rng.dirichlet(np.ones(m + 1)))
    inner = np.sort(rng.uniform(0.0, b, size=m - 1))
    f = WeightedSupport([0.0, *inner, b])
    return p, f


__all__ = [
    "WeightedSupport",
    "FiniteDist",
    "KinfSolution",
    "dual_objective",
    "solve_kinf",
    "kinf",
    "kinf_star",
    "a_transform",
    "bernoulli_kl",
    "kinf_two_point_oracle",
    "kinf_grid_oracle",
    "random_instance",
]
