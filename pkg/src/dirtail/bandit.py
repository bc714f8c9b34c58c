"""Multinomial Thompson Sampling and its randomized-rounding extension.

Each arm keeps a Dirichlet posterior over the reward grid ``{0, 1/m, ..., 1}``.
At every round one posterior draw per arm is taken and the arm with the
largest sampled mean is played.  Bounded rewards are mapped to the grid by an
unbiased randomized rounding before the conjugate update.

Randomness is split into independent streams per run: one for posterior
draws, one per arm for rewards (consumed in pull order), and one for
rounding.  Reward streams are therefore shared between algorithms run with
the same ``(seed, rep)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from dirtail.bounds import c0_constant
from dirtail.errors import DomainError
from dirtail.kinf import FiniteDist, WeightedSupport, solve_kinf
from dirtail.rng import seed_sequence

TAPE_BLOCK = 4096
SNAP_TOL = 1e-12


# ---------------------------------------------------------------------------
# arms


class _FiniteLaw:
    values: np.ndarray
    probs: np.ndarray

    def _init_law(self, values, probs):
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if values.shape != probs.shape or values.ndim != 1:
            raise DomainError("values and probabilities must be 1-d of equal length")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise DomainError("probabilities must be nonnegative and sum to 1")
        if np.any((values < 0.0) | (values > 1.0)):
            raise DomainError("rewards must lie in [0, 1]")
        self.values = values
        self.probs = probs
        self._cdf = np.cumsum(probs)
        self._cdf[-1] = 1.0

    @property
    def mean(self) -> float:
        return float(math.fsum(self.values * self.probs))

    @property
    def variance(self) -> float:
        return float(np.dot(self.probs, (self.values - self.mean) ** 2))

    def _index(self, u: np.ndarray) -> np.ndarray:
        return np.searchsorted(self._cdf, u, side="right")

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Rewards from uniforms by inversion."""
        return self.values[self._index(u)]

    def discretize(self):
        return self.values, self.probs


class MultinomialArm(_FiniteLaw):
    """Law on the grid ``{0, 1/m, ..., 1}``."""

    kind = "multinomial"

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=float)
        m = probs.size - 1
        if m < 1:
            raise DomainError("grid needs m >= 1")
        self.m = m
        self._init_law(np.arange(m + 1) / m, probs)

    def categories(self, u: np.ndarray) -> np.ndarray:
        return self._index(u)

    def to_config(self):
        return {"kind": self.kind, "probs": self.probs.tolist()}


class DiscreteArm(_FiniteLaw):
    """Finite mixture of atoms in ``[0, 1]``."""

    kind = "discrete"

    def __init__(self, values, probs):
        self._init_law(values, probs)

    def to_config(self):
        return {"kind": self.kind, "values": self.values.tolist(), "probs": self.probs.tolist()}


class BetaArm:
    """``Beta(a, b)`` rewards."""

    kind = "beta"

    def __init__(self, a: float, b: float, nodes: int = 64):
        if not (a > 0 and b > 0):
            raise DomainError("Beta parameters must be positive")
        self.a, self.b = float(a), float(b)
        self._nodes = nodes

    @property
    def mean(self) -> float:
        return self.a / (self.a + self.b)

    @property
    def variance(self) -> float:
        s = self.a + self.b
        return self.a * self.b / (s * s * (s + 1.0))

    def sample(self, u: np.ndarray) -> np.ndarray:
        return special.betaincinv(self.a, self.b, u)

    def discretize(self):
        # Gauss-Jacobi rule for the Beta weight, mapped from [-1, 1]
        t, w = special.roots_jacobi(self._nodes, self.b - 1.0, self.a - 1.0)
        return (t + 1.0) / 2.0, w / w.sum()

    def to_config(self):
        return {"kind": self.kind, "a": self.a, "b": self.b}


class PiecewiseUniformArm:
    """Mixture of uniforms on consecutive bins ``[edges[k], edges[k+1])``."""

    kind = "piecewise"

    def __init__(self, edges, probs, nodes_per_bin: int = 16):
        edges = np.asarray(edges, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if edges.ndim != 1 or edges.size != probs.size + 1:
            raise DomainError("need len(edges) == len(probs) + 1")
        if edges[0] < 0.0 or edges[-1] > 1.0 or np.any(np.diff(edges) <= 0):
            raise DomainError("edges must increase within [0, 1]")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise DomainError("bin probabilities must sum to 1")
        self.edges, self.probs = edges, probs
        self._cdf = np.cumsum(probs)
        self._cdf[-1] = 1.0
        self._nodes = nodes_per_bin

    @property
    def mean(self) -> float:
        mids = 0.5 * (self.edges[:-1] + self.edges[1:])
        return float(np.dot(self.probs, mids))

    @property
    def variance(self) -> float:
        lo, hi = self.edges[:-1], self.edges[1:]
        second = (hi**2 + hi * lo + lo**2) / 3.0
        return float(np.dot(self.probs, second)) - self.mean**2

    def sample(self, u: np.ndarray) -> np.ndarray:
        k = np.minimum(np.searchsorted(self._cdf, u, side="right"), self.probs.size - 1)
        lo = np.where(k > 0, self._cdf[k - 1], 0.0)
        frac = np.where(self.probs[k] > 0, (u - lo) / np.where(self.probs[k] > 0, self.probs[k], 1.0), 0.0)
        frac = np.clip(frac, 0.0, 1.0)
        return self.edges[k] + frac * (self.edges[k + 1] - self.edges[k])

    def discretize(self):
        x, w = np.polynomial.legendre.leggauss(self._nodes)
        vals, probs = [], []
        for k in range(self.probs.size):
            lo, hi = self.edges[k], self.edges[k + 1]
            vals.append(lo + (x + 1.0) * (hi - lo) / 2.0)
            probs.append(self.probs[k] * w / 2.0)
        return np.concatenate(vals), np.concatenate(probs)

    def to_config(self):
        return {"kind": self.kind, "edges": self.edges.tolist(), "probs": self.probs.tolist()}


def arm_from_config(cfg: dict):
    kind = cfg.get("kind")
    if kind == "multinomial":
        return MultinomialArm(cfg["probs"])
    if kind == "discrete":
        return DiscreteArm(cfg["values"], cfg["probs"])
    if kind == "beta":
        return BetaArm(cfg["a"], cfg["b"])
    if kind == "piecewise":
        return PiecewiseUniformArm(cfg["edges"], cfg["probs"])
    raise DomainError(f"unknown arm kind {kind!r}")


def bernoulli_arm(p: float) -> MultinomialArm:
    return MultinomialArm([1.0 - p, p])


# ---------------------------------------------------------------------------
# posterior


def mts_prior(m: int, endpoint: float | None = None) -> np.ndarray:
    """Dirichlet prior on the grid of size ``m``.

    Endpoints get ``4 c0 + 1`` pseudo-counts (or ``endpoint`` if given) and
    interior categories ``1/(m-2)``.  For ``m = 2`` the single interior
    category gets weight 1; ``m = 1`` has no interior.
    """
    if m < 1:
        raise DomainError("grid size must be at least 1")
    top = 4.0 * c0_constant() + 1.0 if endpoint is None else float(endpoint)
    inner = 1.0 / (m - 2) if m >= 3 else 1.0
    prior = np.full(m + 1, inner)
    prior[0] = prior[-1] = top
    return prior


def _resolve_prior(prior, m: int) -> np.ndarray:
    if prior is None or prior == "paper":
        return mts_prior(m)
    if prior == "light":
        return mts_prior(m, endpoint=1.0)
    arr = np.asarray(prior, dtype=float)
    if arr.shape != (m + 1,) or np.any(arr <= 0):
        raise DomainError("explicit prior must be a positive vector of length m + 1")
    return arr


@dataclass
class PosteriorState:
    prior: np.ndarray
    alpha: np.ndarray
    pulls: np.ndarray

    @classmethod
    def fresh(cls, n_arms: int, prior) -> "PosteriorState":
        prior = np.asarray(prior, dtype=float)
        return cls(prior.copy(), np.tile(prior, (n_arms, 1)), np.zeros(n_arms, dtype=np.int64))

    @property
    def m(self) -> int:
        return self.alpha.shape[1] - 1

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.m + 1) / self.m

    def copy(self) -> "PosteriorState":
        return PosteriorState(self.prior.copy(), self.alpha.copy(), self.pulls.copy())


def posterior_update(state: PosteriorState, arm: int, category: int) -> PosteriorState:
    """Add one observation of ``category`` to ``arm`` (in place)."""
    if not 0 <= arm < state.alpha.shape[0]:
        raise IndexError(f"arm {arm} out of range")
    if not 0 <= category <= state.m:
        raise IndexError(f"category {category} out of range")
    state.alpha[arm, category] += 1.0
    state.pulls[arm] += 1
    return state


def posterior_sample_means(alpha: np.ndarray, grid: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """``w_a . grid`` for one ``w_a ~ Dir(alpha[a])`` per row."""
    small = alpha < 1.0
    if not small.any():
        g = rng.standard_gamma(alpha)
    else:
        g = rng.standard_gamma(np.where(small, alpha + 1.0, alpha))
        u = rng.random(alpha.shape)
        with np.errstate(divide="ignore", under="ignore"):
            g = np.where(small, g * u ** (1.0 / alpha), g)
    tot = g.sum(axis=1)
    if np.any(tot <= 0.0):
        raise FloatingPointError("all Gamma draws underflowed; use a prior with an entry >= 1")
    return (g @ grid) / tot


def mts_step(state: PosteriorState, rng: np.random.Generator) -> int:
    """Arm with the largest sampled posterior mean (lowest index on ties)."""
    return int(np.argmax(posterior_sample_means(state.alpha, state.grid, rng)))


def randomized_round(y: float, m: int, rng_or_u) -> int:
    """Unbiased rounding of ``y`` in ``[0, 1]`` to a category of ``{0..m}``.

    ``rng_or_u`` is either a generator or a pre-drawn uniform.
    """
    if not 0.0 <= y <= 1.0:
        raise DomainError(f"reward must lie in [0, 1], got {y}")
    if m < 1:
        raise DomainError("grid size must be at least 1")
    x = m * y
    i = math.floor(x)
    nearest = round(x)
    if abs(x - nearest) <= SNAP_TOL * max(1.0, x):
        return min(int(nearest), m)
    if i >= m:
        return m
    u = rng_or_u.random() if hasattr(rng_or_u, "random") else float(rng_or_u)
    return i + (1 if u < x - i else 0)


# ---------------------------------------------------------------------------
# simulation


class _Tape:
    """Per-arm uniforms consumed in pull order."""

    def __init__(self, rng: np.random.Generator):
        self._rng = rng
        self._buf = np.empty(0)
        self._pos = 0

    def next(self) -> float:
        if self._pos >= self._buf.size:
            self._buf = self._rng.random(TAPE_BLOCK)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


def _streams(seed: int, rep: int, n_arms: int):
    policy, rounding, rewards = seed_sequence(seed, rep).spawn(3)
    return _gen(policy), _gen(rounding), [_Tape(_gen(s)) for s in rewards.spawn(n_arms)]


def _gen(ss: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class RegretTrace:
    horizon: int
    arms: np.ndarray
    regret: np.ndarray
    pulls: np.ndarray
    counts: np.ndarray
    prior: np.ndarray
    checkpoints: np.ndarray
    lower_line: np.ndarray
    means: np.ndarray
    grid_size: int
    rebuilds: int = 0
    grid_condition_met: bool | None = None
    extra: dict = field(default_factory=dict)

    def regret_at(self, t: int) -> float:
        return float(self.regret[t - 1]) if t > 0 else 0.0


def log_checkpoints(T: int, n: int = 40) -> np.ndarray:
    pts = np.unique(np.round(np.logspace(0, math.log10(T), n)).astype(np.int64))
    pts = pts[(pts >= 1) & (pts <= T)]
    if pts[-1] != T:
        pts = np.append(pts, T)
    return pts


def arm_kinf(arm, mu: float) -> float:
    """``K_inf(nu_a, mu)`` over laws on ``[0, 1]`` (or the arm's grid)."""
    if not 0.0 < mu < 1.0:
        if mu >= 1.0:
            return math.inf
        return 0.0
    if isinstance(arm, MultinomialArm):
        return solve_kinf(FiniteDist(arm.probs), WeightedSupport.grid(arm.m), mu).value
    vals, probs = arm.discretize()
    vals = np.concatenate(([0.0], vals, [1.0]))
    probs = np.concatenate(([0.0], probs, [0.0]))
    order = np.argsort(vals, kind="stable")
    return solve_kinf(FiniteDist.normalized(probs[order]), WeightedSupport(vals[order]), mu).value


def lower_bound_coefficient(arms: Sequence) -> float:
    """``sum_{a: gap > 0} gap_a / K_inf(nu_a, mu*)``."""
    means = np.array([a.mean for a in arms])
    best = means.max()
    total = 0.0
    for arm, mu in zip(arms, means):
        gap = best - mu
        if gap > 1e-15:
            total += gap / arm_kinf(arm, best)
    return total


def asymptotic_lower_line(arms: Sequence, T: float) -> float:
    return lower_bound_coefficient(arms) * math.log(T)


def _validate(arms, T):
    if len(arms) < 1:
        raise DomainError("need at least one arm")
    if T < 1:
        raise DomainError("horizon must be positive")


def _finish(arms, T, chosen, state, grid_size, **kw) -> RegretTrace:
    means = np.array([a.mean for a in arms])
    gaps = means.max() - means
    regret = np.cumsum(gaps[chosen])
    checkpoints = log_checkpoints(T)
    coef = lower_bound_coefficient(arms)
    return RegretTrace(
        horizon=T,
        arms=chosen,
        regret=regret,
        pulls=state.pulls.copy(),
        counts=state.alpha - state.prior,
        prior=state.prior.copy(),
        checkpoints=checkpoints,
        lower_line=coef * np.log(checkpoints),
        means=means,
        grid_size=grid_size,
        **kw,
    )


def run_mts(arms: Sequence[MultinomialArm], T: int, seed: int, rep: int = 0, prior=None) -> RegretTrace:
    """Multinomial Thompson Sampling on arms sharing one grid."""
    _validate(arms, T)
    if not all(isinstance(a, MultinomialArm) for a in arms):
        raise DomainError("run_mts needs multinomial arms")
    m = arms[0].m
    if any(a.m != m for a in arms):
        raise DomainError("all arms must share the same grid")
    policy, _, tapes = _streams(seed, rep, len(arms))
    state = PosteriorState.fresh(len(arms), _resolve_prior(prior, m))
    alpha, grid = state.alpha, state.grid
    chosen = np.empty(T, dtype=np.int64)
    for t in range(T):
        a = int(np.argmax(posterior_sample_means(alpha, grid, policy)))
        cat = int(arms[a].categories(tapes[a].next()))
        alpha[a, cat] += 1.0
        state.pulls[a] += 1
        chosen[t] = a
    return _finish(arms, T, chosen, state, m)


def grid_condition(arms: Sequence, m: int) -> bool:
    """Post-hoc check of ``m > max_a (2 + K_a) / ((1 - mu*) K_a)``."""
    means = np.array([a.mean for a in arms])
    best = means.max()
    if best >= 1.0:
        return False
    need = 0.0
    for arm, mu in zip(arms, means):
        if best - mu > 1e-15:
            k = arm_kinf(arm, best)
            need = max(need, (2.0 + k) / ((1.0 - best) * k))
    return m > need


def run_rmts(arms: Sequence, T: int, m: int, seed: int, rep: int = 0, prior=None) -> RegretTrace:
    """Thompson Sampling on bounded rewards rounded to the grid of size ``m``."""
    _validate(arms, T)
    if m < 1:
        raise DomainError("grid size must be at least 1")
    policy, rounding, tapes = _streams(seed, rep, len(arms))
    state = PosteriorState.fresh(len(arms), _resolve_prior(prior, m))
    alpha, grid = state.alpha, state.grid
    chosen = np.empty(T, dtype=np.int64)
    for t in range(T):
        a = int(np.argmax(posterior_sample_means(alpha, grid, policy)))
        y = float(arms[a].sample(tapes[a].next()))
        cat = randomized_round(y, m, rounding)
        alpha[a, cat] += 1.0
        state.pulls[a] += 1
        chosen[t] = a
    return _finish(arms, T, chosen, state, m, grid_condition_met=grid_condition(arms, m))


def doubling_grid_size(completed: int) -> int:
    """Grid size in force after ``completed`` rounds of the doubling schedule."""
    if completed < 1:
        return 1
    return int(math.floor(math.log2(completed))) + 2


def run_rmts_doubling(arms: Sequence, T: int, seed: int, rep: int = 0, prior=None) -> RegretTrace:
    """Horizon-free variant: the grid grows by one after every ``2**j`` rounds.

    Raw rewards are stored; at each growth step all of them are re-rounded to
    the new grid with fresh rounding draws and the posteriors are rebuilt.
    """
    _validate(arms, T)
    policy, rounding, tapes = _streams(seed, rep, len(arms))
    m = 1
    state = PosteriorState.fresh(len(arms), _resolve_prior(prior, m))
    history: list[list[float]] = [[] for _ in arms]
    chosen = np.empty(T, dtype=np.int64)
    rebuilds = 0
    reround_work = 0
    next_rebuild = 1
    for t in range(T):
        if t == next_rebuild:
            m += 1
            state = PosteriorState.fresh(len(arms), _resolve_prior(prior, m))
            for a, ys in enumerate(history):
                for y in ys:
                    state.alpha[a, randomized_round(y, m, rounding)] += 1.0
                state.pulls[a] = len(ys)
                reround_work += len(ys)
            rebuilds += 1
            next_rebuild *= 2
        a = int(np.argmax(posterior_sample_means(state.alpha, state.grid, policy)))
        y = float(arms[a].sample(tapes[a].next()))
        history[a].append(y)
        state.alpha[a, randomized_round(y, m, rounding)] += 1.0
        state.pulls[a] += 1
        chosen[t] = a
    return _finish(
        arms,
        T,
        chosen,
        state,
        m,
        rebuilds=rebuilds,
        grid_condition_met=grid_condition(arms, m),
        extra={"reround_work": reround_work},
    )


# ---------------------------------------------------------------------------
# replications


@dataclass(frozen=True)
class RegretSummary:
    checkpoints: np.ndarray
    mean: np.ndarray
    std_error: np.ndarray
    lower_line: np.ndarray
    n_reps: int


def aggregate(traces: Sequence[RegretTrace]) -> RegretSummary:
    cps = traces[0].checkpoints
    mat = np.array([tr.regret[cps - 1] for tr in traces])
    n = len(traces)
    se = mat.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(len(cps))
    return RegretSummary(cps, mat.mean(axis=0), se, traces[0].lower_line, n)


def _run_one(args):
    fn, kwargs, rep = args
    return fn(rep=rep, **kwargs)


def run_replications(fn, n_reps: int, workers: int = 1, **kwargs) -> list[RegretTrace]:
    """Run ``fn(rep=r, **kwargs)`` for ``r in range(n_reps)``.

    Results are ordered by ``rep`` and do not depend on ``workers``.
    """
    jobs = [(fn, kwargs, r) for r in range(n_reps)]
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))
