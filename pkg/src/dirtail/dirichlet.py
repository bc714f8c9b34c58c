"""Dirichlet sampling, weighted-sum densities and Monte-Carlo crossing oracles.

The density of ``Z = w.f`` for ``w ~ Dir(alpha)`` is evaluated from the
one-dimensional integral

    p_Z(u) = (abar - 1) / (2 pi) * int_R prod_j (1 + i (f_j - u) s)^(-alpha_j) ds.

Shifting the line of integration to ``R + i lam`` where ``lam`` solves the
saddle equation ``sum_j alpha_j a_j / (1 - lam a_j) = 0`` (``a_j = f_j - u``)
turns the integrand into a positive peak at ``s = 0`` whose modulus decreases
monotonically in ``|s|``.  The integrand is conjugate-symmetric, so only the
half line ``s >= 0`` is integrated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from dirtail.errors import (
    ConvergenceError,
    DegenerateDistributionError,
    DomainError,
    EmptySampleError,
)
from dirtail.kinf import FiniteDist, WeightedSupport, _root_increasing
from dirtail.rng import stream

SMALL_ALPHA_BAR = 4.0
TRUNCATION = 1e-12
MAX_WINDOW = 1e10
MC_CHUNK = 1 << 18


@dataclass(frozen=True)
class DirichletParams:
    alpha: tuple[float, ...]

    def __init__(self, alpha):
        a = tuple(float(x) for x in alpha)
        if len(a) < 2:
            raise DomainError("need at least two Dirichlet parameters")
        if any(not (x > 0.0) or not math.isfinite(x) for x in a):
            raise DomainError("Dirichlet parameters must be positive and finite")
        object.__setattr__(self, "alpha", a)

    @property
    def m(self) -> int:
        return len(self.alpha) - 1

    @property
    def alpha_bar(self) -> float:
        return math.fsum(self.alpha)

    @property
    def p_bar(self) -> FiniteDist:
        return FiniteDist.normalized(self.alpha)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.alpha, dtype=float)

    def plus(self) -> "DirichletParams":
        """One extra unit on the top endpoint."""
        a = list(self.alpha)
        a[-1] += 1.0
        return DirichletParams(a)

    def minus(self) -> "DirichletParams":
        """One extra unit on the bottom endpoint."""
        a = list(self.alpha)
        a[0] += 1.0
        return DirichletParams(a)

    def reversed(self) -> "DirichletParams":
        return DirichletParams(self.alpha[::-1])


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    std_error: float
    n_samples: int
    seed: int | None = None


def _as_alpha(params) -> np.ndarray:
    if isinstance(params, DirichletParams):
        return params.as_array()
    return np.asarray(params, dtype=float)


def sample_gamma(shape, rng: np.random.Generator, size=None) -> np.ndarray:
    """Log of independent ``Gamma(shape, 1)`` draws.

    Shapes below one are drawn as ``G(shape + 1) * U ** (1 / shape)``; the
    result is returned in log space because ``U ** (1 / shape)`` underflows
    for small shapes.
    """
    shape = np.asarray(shape, dtype=float)
    small = shape < 1.0
    if not small.any():
        return np.log(rng.standard_gamma(shape, size))
    g = rng.standard_gamma(np.where(small, shape + 1.0, shape), size)
    u = rng.random(g.shape)
    with np.errstate(divide="ignore"):
        return np.log(g) + np.where(small, np.log(u) / shape, 0.0)


def sample_dirichlet(params, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from ``Dir(alpha)`` by normalising independent Gamma variables.

    Returns an array of shape ``(m + 1,)`` or ``(size, m + 1)``.
    """
    alpha = _as_alpha(params)
    shape = alpha.shape if size is None else (size, alpha.size)
    if np.all(alpha >= 1.0):
        g = rng.standard_gamma(np.broadcast_to(alpha, shape))
        return g / g.sum(axis=-1, keepdims=True)
    logg = sample_gamma(np.broadcast_to(alpha, shape), rng)
    logg -= logg.max(axis=-1, keepdims=True)
    w = np.exp(logg)
    return w / w.sum(axis=-1, keepdims=True)


def sample_weighted_sums(params, f: WeightedSupport, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws of ``w.f`` with ``w ~ Dir(alpha)``, generated in fixed chunks."""
    fa = f.as_array()
    out = np.empty(n)
    for start in range(0, n, MC_CHUNK):
        k = min(MC_CHUNK, n - start)
        out[start : start + k] = sample_dirichlet(params, rng, k) @ fa
    return out


def _binomial_estimate(hits: int, n: int, seed) -> McEstimate:
    est = hits / n
    return McEstimate(est, math.sqrt(est * (1.0 - est) / n), n, seed)


def mc_crossing_prob(params, f: WeightedSupport, mu, n: int, seed: int, key=()):
    """Monte-Carlo estimate of ``P(w.f >= mu)``.

    ``mu`` may be a scalar or a sequence; for a sequence the same draws are
    shared across levels and a list of estimates is returned.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    _check_params_support(params, f)
    rng = stream(seed, *key)
    z = sample_weighted_sums(params, f, n, rng)
    if np.ndim(mu) == 0:
        return _binomial_estimate(int(np.count_nonzero(z >= mu)), n, seed)
    zs = np.sort(z)
    out = []
    for level in mu:
        hits = n - int(np.searchsorted(zs, level, side="left"))
        out.append(_binomial_estimate(hits, n, seed))
    return out


def _check_params_support(params, f: WeightedSupport) -> None:
    if len(_as_alpha(params)) != len(f.values):
        raise DomainError("parameter and support lengths differ")


def _aggregate(alpha: np.ndarray, fa: np.ndarray):
    vals, inv = np.unique(fa, return_inverse=True)
    agg = np.zeros(len(vals))
    np.add.at(agg, inv, alpha)
    return vals, agg


def saddle_point(alpha: np.ndarray, dev: np.ndarray, lo: float, hi: float) -> float:
    """Root of ``sum alpha_j dev_j / (1 - lam dev_j)`` on ``(lo, hi)``.

    The left side is increasing in ``lam``; the root is negative when the
    level lies below the Dirichlet mean.
    """
    probs = alpha / alpha.sum()
    mean_dev = float(np.dot(probs, dev))
    if mean_dev == 0.0:
        return 0.0
    if mean_dev < 0.0:
        return _root_increasing(probs, dev, 0.0, hi)
    # mirror to reuse the increasing-from-below solver: lam -> -lam, dev -> -dev
    return -_root_increasing(probs, -dev, 0.0, -lo)


def _half_line_integral(alpha: np.ndarray, beta: np.ndarray) -> float:
    """``int_0^inf Re prod_j (1 + i beta_j s)^(-alpha_j) ds`` on a peaked contour."""
    curv = float(np.dot(alpha, beta * beta))
    width = 1.0 / math.sqrt(curv)
    log_cut = math.log(TRUNCATION)

    def log_mod(s):
        return -0.5 * float(np.dot(alpha, np.log1p((beta * s) ** 2)))

    edge = width
    while log_mod(edge) > log_cut:
        edge *= 2.0
        if edge > MAX_WINDOW * width:
            raise ConvergenceError(
                "integrand does not decay below the truncation level; "
                "parameters are ill-conditioned"
            )

    def integrand(s):
        return math.exp(-float(np.dot(alpha, np.log1p((beta * s) ** 2))) * 0.5) * math.cos(
            -float(np.dot(alpha, np.arctan(beta * s)))
        )

    points = []
    x = width
    while x < edge:
        points.append(x)
        x *= 2.0
    value, _ = integrate.quad(
        integrand, 0.0, edge, points=points or None, epsabs=0.0, epsrel=1e-12, limit=2000
    )
    return value


def _real_axis_integral(alpha: np.ndarray, dev: np.ndarray) -> float:
    """``int_0^inf Re prod_j (1 + i dev_j s)^(-alpha_j) ds`` without a shift."""

    def integrand(s):
        mod = math.exp(-0.5 * float(np.dot(alpha, np.log1p((dev * s) ** 2))))
        return mod * math.cos(float(np.dot(alpha, np.arctan(dev * s))))

    scale = 1.0 / math.sqrt(float(np.dot(alpha, dev * dev)))
    head, _ = integrate.quad(integrand, 0.0, scale, epsabs=0.0, epsrel=1e-12, limit=500)
    tail, _ = integrate.quad(integrand, scale, np.inf, epsabs=0.0, epsrel=1e-12, limit=2000)
    return head + tail


def weighted_sum_density(params, f: WeightedSupport, u: float) -> float:
    """Density of ``w.f`` at ``u`` for ``w ~ Dir(alpha)``."""
    alpha = _as_alpha(params)
    _check_params_support(alpha, f)
    abar = float(alpha.sum())
    if not abar > 1.0:
        raise DomainError("the density formula needs alpha_bar > 1")
    b = f.b
    if not (0.0 <= u < b):
        raise DomainError(f"u must lie in [0, {b}), got {u}")
    vals, agg = _aggregate(alpha, f.as_array())
    if len(vals) < 2:
        raise DegenerateDistributionError("w.f is constant")
    dev = vals - u

    if abar < SMALL_ALPHA_BAR or u == 0.0:
        integral = _real_axis_integral(agg, dev)
        log_scale = 0.0
    else:
        lam = saddle_point(agg, dev, -1.0 / u, 1.0 / (b - u))
        c = 1.0 - lam * dev
        if np.any(c <= 0.0):
            raise ConvergenceError("saddle point left the strip of analyticity")
        integral = _half_line_integral(agg, dev / c)
        log_scale = -float(np.dot(agg, np.log(c)))
    return max((abar - 1.0) / math.pi * math.exp(log_scale) * integral, 0.0)


def tail_probability(params, f: WeightedSupport, mu: float, points=None) -> float:
    """``P(w.f >= mu)`` by quadrature of :func:`weighted_sum_density`."""
    b = f.b
    if mu >= b:
        return 0.0
    lo = max(mu, 0.0)
    val, _ = integrate.quad(
        lambda u: weighted_sum_density(params, f, u),
        lo,
        b,
        points=_density_breakpoints(params, f, lo, b) if points is None else points,
        epsabs=1e-13,
        epsrel=1e-10,
        limit=500,
    )
    return val


def _density_breakpoints(params, f: WeightedSupport, lo: float, hi: float):
    alpha = _as_alpha(params)
    fa = f.as_array()
    abar = alpha.sum()
    mean = float(alpha @ fa) / abar
    var = float(alpha @ (fa - mean) ** 2) / abar / (abar + 1.0)
    sd = math.sqrt(var)
    pts = [mean + k * sd for k in (-8, -4, -2, -1, 0, 1, 2, 4, 8)]
    pts = sorted({p for p in pts if lo < p < hi})
    return pts or None


def density_normalization_check(params, f: WeightedSupport) -> float:
    """Integral of the density over ``(0, b)``; should equal one."""
    return tail_probability(params, f, 0.0)


def _bootstrap_alpha(n: int, gamma: float) -> np.ndarray:
    return np.concatenate(([gamma], np.ones(n), [gamma]))


def _bootstrap_values(g_values) -> np.ndarray:
    g = np.asarray(g_values, dtype=float)
    if g.size == 0:
        raise EmptySampleError("need at least one observation")
    if np.any((g < 0.0) | (g > 1.0)):
        raise DomainError("observations must lie in [0, 1]")
    return np.concatenate(([0.0], g, [1.0]))


def sample_bootstrap_mean(g_values, gamma: float, rng: np.random.Generator) -> float:
    """One posterior draw of the mean with virtual endpoints 0 and 1 of weight ``gamma``."""
    return float(sample_bootstrap_means(g_values, gamma, 1, rng)[0])


def sample_bootstrap_means(g_values, gamma: float, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    if not gamma > 0.0:
        raise DomainError("gamma must be positive")
    values = _bootstrap_values(g_values)
    alpha = _bootstrap_alpha(values.size - 2, gamma)
    chunk = max(1, MC_CHUNK // alpha.size)
    out = np.empty(n_draws)
    for start in range(0, n_draws, chunk):
        k = min(chunk, n_draws - start)
        out[start : start + k] = sample_dirichlet(alpha, rng, k) @ values
    return out
