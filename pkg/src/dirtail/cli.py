"""``dirtail`` command line: JSON config in, CSV/JSON tables out.

Usage::

    dirtail <kinf|density|tail|dp-bound|bandit> --config cfg.json \
        [--seed N] [--out path] [--format csv|json]

Exit codes: 0 success, 2 invalid config or input, 3 numerical failure.
Every written file ``X`` is accompanied by ``X.manifest.json`` recording the
validated config, the seed and the library version.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from dirtail import __version__
from dirtail import bandit as bd
from dirtail.bounds import (
    chernoff_upper,
    dp_bernstein_threshold,
    dp_condition_met,
    dp_hoeffding_threshold,
    sandwich_bounds,
)
from dirtail.dirichlet import (
    DirichletParams,
    mc_crossing_prob,
    sample_bootstrap_means,
    weighted_sum_density,
)
from dirtail.errors import ConvergenceError, DomainError
from dirtail.kinf import FiniteDist, WeightedSupport, a_transform, kinf_star, solve_kinf
from dirtail.rng import SEED_MAX, stream

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
THREADS_ENV = "DIRTAIL_THREADS"

Seed = Annotated[int, Field(ge=0, le=SEED_MAX)]


class _Base(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: Seed = 0
    out: Optional[str] = None
    format: Optional[Literal["csv", "json"]] = None


class KinfConfig(_Base):
    command: Literal["kinf"] = "kinf"
    p: list[float]
    f: Optional[list[float]] = None
    mu: list[float] = Field(min_length=1)


class DensityConfig(_Base):
    command: Literal["density"] = "density"
    alpha: list[float]
    f: Optional[list[float]] = None
    u: Optional[list[float]] = None
    n_points: Optional[Annotated[int, Field(ge=1)]] = None


class TailConfig(_Base):
    command: Literal["tail"] = "tail"
    alpha: list[float]
    f: Optional[list[float]] = None
    mu: list[float] = Field(min_length=1)
    epsilon: Annotated[float, Field(gt=0, lt=1)] = 0.5
    n_samples: Annotated[int, Field(ge=1)] = 1_000_000


class DpBoundConfig(_Base):
    command: Literal["dp-bound"] = "dp-bound"
    n: Optional[Annotated[int, Field(ge=1)]] = None
    data: Optional[list[float]] = None
    gamma: Annotated[float, Field(gt=0)]
    epsilon: Annotated[float, Field(gt=0, le=1)] = 1.0
    delta: list[float] = Field(min_length=1)
    empirical_variance: Optional[Annotated[float, Field(ge=0, le=0.25)]] = None
    coverage_draws: Annotated[int, Field(ge=0)] = 0


class MultinomialArmCfg(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["multinomial"]
    probs: list[float]


class BernoulliArmCfg(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["bernoulli"]
    p: Annotated[float, Field(ge=0, le=1)]


class DiscreteArmCfg(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["discrete"]
    values: list[float]
    probs: list[float]


class BetaArmCfg(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["beta"]
    a: Annotated[float, Field(gt=0)]
    b: Annotated[float, Field(gt=0)]


class PiecewiseArmCfg(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["piecewise"]
    edges: list[float]
    probs: list[float]


ArmCfg = Annotated[
    Union[MultinomialArmCfg, BernoulliArmCfg, DiscreteArmCfg, BetaArmCfg, PiecewiseArmCfg],
    Field(discriminator="kind"),
]


class BanditConfig(_Base):
    command: Literal["bandit"] = "bandit"
    algorithm: Literal["mts", "rmts", "rmts-doubling"] = "mts"
    arms: list[ArmCfg] = Field(min_length=1)
    horizon: Annotated[int, Field(ge=1)]
    replications: Annotated[int, Field(ge=1)] = 1
    m: Optional[Annotated[int, Field(ge=1)]] = None
    prior: Union[Literal["paper", "light"], list[float]] = "paper"
    n_checkpoints: Annotated[int, Field(ge=2)] = 40


CONFIGS = {
    "kinf": KinfConfig,
    "density": DensityConfig,
    "tail": TailConfig,
    "dp-bound": DpBoundConfig,
    "bandit": BanditConfig,
}


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# output


def _cell_csv(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _cell_json(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return v if math.isfinite(v) else None


def render(columns: list[str], rows: list[list], fmt: str) -> str:
    if fmt == "csv":
        lines = [",".join(columns)]
        lines += [",".join(_cell_csv(v) for v in row) for row in rows]
        return "\n".join(lines) + "\n"
    records = [{c: _cell_json(v) for c, v in zip(columns, row)} for row in rows]
    return json.dumps({"columns": columns, "rows": records}, indent=2) + "\n"


def parse_table(text: str, fmt: str) -> tuple[list[str], list[list]]:
    """Inverse of :func:`render` (numbers come back as float/int/bool)."""
    if fmt == "json":
        doc = json.loads(text)
        cols = doc["columns"]
        return cols, [[r[c] for c in cols] for r in doc["rows"]]
    lines = text.strip("\n").split("\n")
    cols = lines[0].split(",")

    def conv(s):
        if s in ("true", "false"):
            return s == "true"
        try:
            return int(s)
        except ValueError:
            return float(s)

    return cols, [[conv(s) for s in ln.split(",")] for ln in lines[1:]]


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with io.open(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _manifest(cfg: _Base, outputs: list[str]) -> str:
    doc = {
        "command": cfg.command,
        "config": cfg.model_dump(mode="json"),
        "seed": cfg.seed,
        "version": __version__,
        "outputs": outputs,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# commands


def _support(f, n_values: int) -> WeightedSupport:
    if f is None:
        return WeightedSupport.grid(n_values - 1)
    if len(f) != n_values:
        raise DomainError("support and weights have different lengths")
    return WeightedSupport(f)


def cmd_kinf(cfg: KinfConfig):
    p = FiniteDist(cfg.p)
    f = _support(cfg.f, len(cfg.p))
    rows = []
    for mu in cfg.mu:
        sol = solve_kinf(p, f, mu)
        try:
            a = a_transform(p, f, mu)
        except DomainError:
            a = math.nan
        rows.append([mu, sol.value, sol.lambda_star, sol.sigma_sq, kinf_star(p, f, mu), a, sol.at_boundary])
    return ["mu", "kinf", "lambda_star", "sigma_sq", "kinf_star", "a", "at_boundary"], rows


def cmd_density(cfg: DensityConfig):
    params = DirichletParams(cfg.alpha)
    f = _support(cfg.f, len(cfg.alpha))
    if cfg.u is not None:
        points = list(cfg.u)
    elif cfg.n_points is not None:
        lo, hi = f.values[0], f.b
        points = list(lo + (hi - lo) * (np.arange(cfg.n_points) + 0.5) / cfg.n_points)
    else:
        raise ConfigError("density needs either 'u' or 'n_points'")
    return ["u", "density"], [[u, weighted_sum_density(params, f, u)] for u in points]


def cmd_tail(cfg: TailConfig):
    params = DirichletParams(cfg.alpha)
    f = _support(cfg.f, len(cfg.alpha))
    mc = mc_crossing_prob(params, f, cfg.mu, cfg.n_samples, cfg.seed)
    rows = []
    for mu, est in zip(cfg.mu, mc):
        if not 0.0 < mu < f.b:
            # P(w.f >= mu) is exactly 1 below the support and 0 at or above b
            exact = 1.0 if mu <= 0.0 else 0.0
            rows.append([mu, exact, est.estimate, est.std_error, exact, exact, True, est.estimate == exact])
            continue
        try:
            rep = sandwich_bounds(params, f, mu, cfg.epsilon)
            lower, upper, met = rep.lower, rep.upper, rep.condition_met
        except DomainError:
            # endpoint masses too small for the shifted measures
            lower, upper, met = math.nan, math.nan, False
        holds = (
            lower - 3 * est.std_error <= est.estimate <= upper + 3 * est.std_error
            if math.isfinite(lower)
            else False
        )
        rows.append(
            [mu, lower, est.estimate, est.std_error, upper, chernoff_upper(params, f, mu), met, holds]
        )
    cols = ["mu", "lower", "mc_estimate", "mc_stderr", "upper", "chernoff", "condition_met", "sandwich_holds"]
    return cols, rows


def cmd_dp_bound(cfg: DpBoundConfig):
    data = None if cfg.data is None else np.asarray(cfg.data, dtype=float)
    if data is not None:
        if data.size == 0 or np.any((data < 0) | (data > 1)):
            raise ConfigError("data must be a non-empty list of values in [0, 1]")
        if cfg.n is not None and cfg.n != data.size:
            raise ConfigError("'n' disagrees with len(data)")
        n = data.size
        var = float(data.var()) if cfg.empirical_variance is None else cfg.empirical_variance
    else:
        if cfg.n is None:
            raise ConfigError("dp-bound needs 'n' or 'data'")
        if cfg.coverage_draws:
            raise ConfigError("coverage simulation needs 'data'")
        n, var = cfg.n, cfg.empirical_variance
    cols = ["delta", "hoeffding", "bernstein", "condition_met"]
    if cfg.coverage_draws:
        cols += ["exceedance", "exceedance_stderr"]
        draws = sample_bootstrap_means(data, cfg.gamma, cfg.coverage_draws, stream(cfg.seed, 0))
        centred = draws - data.mean()
    rows = []
    for delta in cfg.delta:
        hoeff = dp_hoeffding_threshold(n, cfg.gamma, cfg.epsilon, delta)
        bern = (
            math.nan if var is None else dp_bernstein_threshold(n, cfg.gamma, cfg.epsilon, delta, var)
        )
        row = [delta, hoeff, bern, dp_condition_met(cfg.gamma, cfg.epsilon)]
        if cfg.coverage_draws:
            freq = float(np.mean(centred >= hoeff))
            row += [freq, math.sqrt(freq * (1 - freq) / cfg.coverage_draws)]
        rows.append(row)
    return cols, rows


def _build_arm(cfg):
    if cfg.kind == "bernoulli":
        return bd.bernoulli_arm(cfg.p)
    return bd.arm_from_config(cfg.model_dump())


def _workers() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be positive")
    return n


def run_bandit(cfg: BanditConfig) -> list:
    arms = [_build_arm(a) for a in cfg.arms]
    prior = cfg.prior if isinstance(cfg.prior, str) else list(cfg.prior)
    common = dict(arms=arms, T=cfg.horizon, seed=cfg.seed, prior=prior)
    if cfg.algorithm == "mts":
        if cfg.m is not None:
            raise ConfigError("'m' is implied by the arms for mts")
        fn = bd.run_mts
    elif cfg.algorithm == "rmts":
        if cfg.m is None:
            raise ConfigError("rmts needs a grid size 'm'")
        fn, common["m"] = bd.run_rmts, cfg.m
    else:
        if not isinstance(cfg.prior, str):
            raise ConfigError("the doubling variant rebuilds its prior; use 'paper' or 'light'")
        fn = bd.run_rmts_doubling
    return bd.run_replications(fn, cfg.replications, workers=_workers(), **common)


def cmd_bandit(cfg: BanditConfig):
    """Returns the aggregate table and one table per replication."""
    traces = run_bandit(cfg)
    cps = bd.log_checkpoints(cfg.horizon, cfg.n_checkpoints)
    k = len(cfg.arms)
    per_rep = []
    for tr in traces:
        cols = ["t", "regret"] + [f"pulls_{a}" for a in range(k)]
        counts = [np.cumsum(tr.arms == a)[cps - 1] for a in range(k)]
        rows = [
            [int(t), float(tr.regret[t - 1])] + [int(c[i]) for c in counts]
            for i, t in enumerate(cps)
        ]
        per_rep.append((cols, rows))
    mat = np.array([tr.regret[cps - 1] for tr in traces])
    mean = mat.mean(axis=0)
    se = mat.std(axis=0, ddof=1) / math.sqrt(len(traces)) if len(traces) > 1 else np.zeros(len(cps))
    coef = bd.lower_bound_coefficient([_build_arm(a) for a in cfg.arms])
    logt = np.log(cps.astype(float))
    rows = []
    for i, t in enumerate(cps):
        slope = mean[i] / logt[i] if logt[i] > 0 else math.nan
        rows.append([int(t), mean[i], se[i], coef * logt[i], slope])
    return (["t", "mean_regret", "stderr", "lower_line", "slope"], rows), per_rep


HANDLERS = {
    "kinf": cmd_kinf,
    "density": cmd_density,
    "tail": cmd_tail,
    "dp-bound": cmd_dp_bound,
}


# ---------------------------------------------------------------------------
# entry point


def load_config(command: str, path: str, seed: int | None) -> _Base:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if raw.get("command", command) != command:
        raise ConfigError(f"config is for {raw['command']!r}, not {command!r}")
    if seed is not None:
        raw["seed"] = seed
    try:
        return CONFIGS[command].model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def _sibling(out: Path, rep: int, fmt: str) -> Path:
    return out.with_name(f"{out.stem}.rep{rep:03d}.{fmt}")


def execute(cfg: _Base, out: str | None, fmt: str) -> str | None:
    """Run a validated config; returns the rendered table when ``out`` is None."""
    if cfg.command == "bandit":
        if out is None:
            raise ConfigError("bandit needs an output path")
        (cols, rows), per_rep = cmd_bandit(cfg)
        out_path = Path(out)
        names = []
        for r, (rc, rr) in enumerate(per_rep):
            p = _sibling(out_path, r, fmt)
            atomic_write(p, render(rc, rr, fmt))
            names.append(p.name)
        atomic_write(out_path, render(cols, rows, fmt))
        atomic_write(Path(f"{out}.manifest.json"), _manifest(cfg, [out_path.name] + names))
        return None
    cols, rows = HANDLERS[cfg.command](cfg)
    text = render(cols, rows, fmt)
    if out is None:
        return text
    atomic_write(Path(out), text)
    atomic_write(Path(f"{out}.manifest.json"), _manifest(cfg, [Path(out).name]))
    return None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dirtail", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=sorted(CONFIGS))
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    ap.add_argument("--out", default=None, help="output file (stdout if omitted)")
    ap.add_argument("--format", choices=["csv", "json"], default=None)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args.command, args.config, args.seed)
        out = args.out if args.out is not None else cfg.out
        fmt = args.format or cfg.format or (Path(out).suffix.lstrip(".") if out else "") or "csv"
        if fmt not in ("csv", "json"):
            fmt = "csv"
        text = execute(cfg, out, fmt)
    except (ConfigError, DomainError) as exc:
        print(f"dirtail: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, ArithmeticError, FloatingPointError) as exc:
        print(f"dirtail: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if text is not None:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
