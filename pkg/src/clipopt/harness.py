"""Experiment orchestration: seeded trials, quantiles, reports, slope fits.

A single JSON config (versioned schema, unknown keys rejected) fixes the
problem, the noise, the method and regime, the horizon sweep, and the seed
base.  Each (horizon, trial) pair gets its own child random stream, so the
report is a deterministic function of the config no matter how trials are
scheduled; horizons whose schedule hypothesis fails are skipped and reported
rather than aborting the sweep.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom

from . import __version__
from .core import ConfigError, ContractError, HypothesisError, RngStream
from .noise import NoiseModel, ThreePointParams, default_tail_index, three_point_noise
from .problems import make_counterexample_1d, problem_from_config
from .optimizers import (
    run_clipped_seg,
    run_clipped_sgd,
    run_clipped_sgda,
    run_clipped_sstm,
    run_sgd,
)
from .schedules import (
    Schedule,
    qsc_horizon_for_target,
    seg_schedule,
    sgd_schedule,
    sgda_schedule,
    sstm_schedule,
)

SCHEMA_VERSION = 1

_CONFIG_KEYS = {
    "schema",
    "problem",
    "noise",
    "method",
    "case",
    "fidelity",
    "gamma",
    "gamma_factor",
    "delta",
    "ks",
    "trials",
    "beta",
    "quantile",
    "epsilon",
    "seed_base",
    "threads",
}

_NOISE_KEYS = {"kind", "sigma", "alpha", "tail_index", "three_point"}


def default_trials(beta: float) -> int:
    """Trial count heuristic for estimating a (1 - beta) quantile credibly."""
    return max(200, math.ceil(20.0 / beta))


@dataclass
class ExperimentConfig:
    problem: dict
    noise: dict
    method: str
    case: str
    ks: list
    trials: int
    beta: float = 0.05
    quantile: float | None = None
    fidelity: str = "theory"
    gamma: float | None = None
    gamma_factor: float = 20.0
    delta: float | None = None
    epsilon: float | None = None
    seed_base: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("need at least one trial")
        if not (0 < self.beta <= 1):
            raise ConfigError("beta must lie in (0, 1]")
        q = self.quantile if self.quantile is not None else 1.0 - self.beta
        if not (0 < q < 1):
            raise ConfigError("quantile level must lie in (0, 1)")
        if not self.ks or any(int(k) < 1 for k in self.ks):
            raise ConfigError("ks must be a nonempty list of positive horizons")
        self.ks = [int(k) for k in self.ks]

    @property
    def q(self) -> float:
        return self.quantile if self.quantile is not None else 1.0 - self.beta

    def to_json_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "problem": self.problem,
            "noise": self.noise,
            "method": self.method,
            "case": self.case,
            "fidelity": self.fidelity,
            "gamma": self.gamma,
            "gamma_factor": self.gamma_factor,
            "delta": self.delta,
            "ks": list(self.ks),
            "trials": self.trials,
            "beta": self.beta,
            "quantile": self.quantile,
            "epsilon": self.epsilon,
            "seed_base": self.seed_base,
            "threads": self.threads,
        }


def config_from_json_dict(raw: dict) -> ExperimentConfig:
    """Validate and build a config; unknown keys are rejected, schema pinned."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if raw.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"config schema must be {SCHEMA_VERSION}")
    for key in ("problem", "noise", "method", "case", "ks"):
        if key not in raw:
            raise ConfigError(f"config is missing {key!r}")
    noise_keys = set(raw["noise"]) - _NOISE_KEYS
    if noise_keys:
        raise ConfigError(f"unknown noise keys: {sorted(noise_keys)}")
    beta = float(raw.get("beta", 0.05))
    trials = raw.get("trials")
    return ExperimentConfig(
        problem=raw["problem"],
        noise=raw["noise"],
        method=raw["method"],
        case=raw["case"],
        ks=list(raw["ks"]),
        trials=int(trials) if trials is not None else default_trials(beta),
        beta=beta,
        quantile=raw.get("quantile"),
        fidelity=raw.get("fidelity", "theory"),
        gamma=raw.get("gamma"),
        gamma_factor=float(raw.get("gamma_factor", 20.0)),
        delta=raw.get("delta"),
        epsilon=raw.get("epsilon"),
        seed_base=int(raw.get("seed_base", 0)),
        threads=int(raw.get("threads", 1)),
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_json_dict(raw)


def noise_from_config(cfg: dict) -> NoiseModel:
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    tp = cfg.pop("three_point", None)
    params = ThreePointParams(**tp) if tp is not None else None
    alpha = float(cfg.pop("alpha", 2.0))
    tail_index = cfg.pop("tail_index", None)
    if kind == "heavy_tail_radial" and tail_index is None:
        tail_index = default_tail_index(alpha)
    try:
        return NoiseModel(
            kind=kind,
            sigma=float(cfg.pop("sigma", 0.0)),
            alpha=alpha,
            tail_index=tail_index,
            three_point=params,
        )
    except TypeError as exc:
        raise ConfigError(f"bad noise config: {exc}") from exc


# ---------------------------------------------------------------------------
# schedule dispatch
# ---------------------------------------------------------------------------


def build_schedule(config: ExperimentConfig, problem, k: int) -> Schedule | None:
    """Theorem pack for (method, case) at horizon k; None for plain sgd."""
    noise = noise_from_config(config.noise)
    sigma, alpha = noise.sigma, noise.alpha
    method = config.method
    if method == "sgd":
        if config.gamma is None:
            raise ConfigError("plain sgd needs an explicit gamma")
        return None
    common = dict(
        sigma=sigma,
        alpha=alpha,
        k=k,
        beta=config.beta,
        fidelity=config.fidelity,
        gamma_factor=config.gamma_factor,
    )
    if method == "clipped_sgd":
        delta = config.delta
        if config.case in ("nonconvex", "pl") and delta is None:
            delta = float(problem.value(problem.x0)) - problem.f_star
        mu = problem.mu_pl if config.case == "pl" else problem.mu_sc
        return sgd_schedule(
            config.case,
            lipschitz_l=problem.lipschitz_l,
            mu=mu,
            radius=problem.radius,
            delta=delta,
            **common,
        )
    if method == "clipped_sstm":
        return sstm_schedule(
            lipschitz_l=problem.lipschitz_l, radius=problem.radius, **common
        )
    if method == "clipped_seg":
        return seg_schedule(
            config.case,
            lipschitz_l=problem.lipschitz_l,
            mu=problem.mu_qsm,
            radius=problem.radius,
            **common,
        )
    if method == "clipped_sgda":
        return sgda_schedule(
            config.case,
            ell=problem.ell_coco if problem.ell_coco > 0 else problem.lipschitz_l,
            mu=problem.mu_qsm,
            radius=problem.radius,
            **common,
        )
    raise ConfigError(f"harness sweep does not support method {config.method!r}")


_RUNNERS = {
    "clipped_sgd": run_clipped_sgd,
    "clipped_sstm": run_clipped_sstm,
    "clipped_seg": run_clipped_seg,
    "clipped_sgda": run_clipped_sgda,
}


def run_one_trial(config: ExperimentConfig, k: int, trial: int):
    """One seeded trial at horizon k; returns (final metric, left-ball flag)."""
    root = RngStream(config.seed_base)
    problem = problem_from_config(config.problem, root.child("problem"))
    noise = noise_from_config(config.noise)
    stream = root.child("k", k, "trial", trial)
    schedule = build_schedule(config, problem, k)
    if config.method == "sgd":
        rec = run_sgd(problem, noise, config.gamma, k, stream)
    else:
        rec = _RUNNERS[config.method](problem, noise, schedule, k, stream)
    return rec.final_metric, rec.left_ball


def _run_chunk(config_json: str, k: int, indices: list) -> list:
    config = config_from_json_dict(json.loads(config_json))
    out = []
    for i in indices:
        metric, left = run_one_trial(config, k, i)
        out.append((i, metric, left))
    return out


# ---------------------------------------------------------------------------
# order-statistic quantiles with exact binomial intervals
# ---------------------------------------------------------------------------


def quantile_order_index(q: float, n: int) -> int:
    """1-based order-statistic index ceil(q n), clamped to [1, n]."""
    if not (0 < q < 1) or n < 1:
        raise ContractError("need 0 < q < 1 and n >= 1")
    return min(max(math.ceil(q * n), 1), n)


def quantile_ci_indices(q: float, n: int, confidence: float = 0.95) -> tuple:
    """Exact binomial (order-statistic) CI indices for the q-quantile.

    Returns 1-based (lo, hi): the largest lo with P(Bin(n,q) <= lo-1) below
    the lower tail and the smallest hi with P(Bin(n,q) <= hi-1) at or above
    the upper tail, clamped to the sample range when the tail mass does not
    reach the requested level.
    """
    tail = (1.0 - confidence) / 2.0
    cdf = binom.cdf(np.arange(-1, n), n, q)  # cdf[j] = P(X <= j-1)
    lo_candidates = np.nonzero(cdf <= tail)[0]
    lo = int(lo_candidates.max()) if lo_candidates.size else 1
    lo = max(lo, 1)
    hi_candidates = np.nonzero(cdf >= 1.0 - tail)[0]
    hi = int(hi_candidates.min()) if hi_candidates.size else n
    hi = min(max(hi, 1), n)
    return lo, hi


@dataclass
class KQuantileEntry:
    k: int
    n: int
    quantile: float
    ci_lo: float
    ci_hi: float
    fail_freq: float | None
    leftball_freq: float

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "n": self.n,
            "quantile": self.quantile,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "fail_freq": self.fail_freq,
            "leftball_freq": self.leftball_freq,
        }


@dataclass
class QuantileReport:
    entries: list
    skipped: list
    config: dict
    version: str = __version__
    wall_time_s: float = 0.0

    def entry_for(self, k: int) -> KQuantileEntry:
        for e in self.entries:
            if e.k == k:
                return e
        raise KeyError(k)

    def to_json_dict(self) -> dict:
        return {
            "version": self.version,
            "wall_time_s": self.wall_time_s,
            "config": self.config,
            "skipped": self.skipped,
            "entries": [e.to_json_dict() for e in self.entries],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["K", "quantile", "ci_lo", "ci_hi", "fail_freq", "leftball_freq", "n"])
        for e in self.entries:
            writer.writerow(
                [
                    e.k,
                    repr(e.quantile),
                    repr(e.ci_lo),
                    repr(e.ci_hi),
                    "" if e.fail_freq is None else repr(e.fail_freq),
                    repr(e.leftball_freq),
                    e.n,
                ]
            )
        return buf.getvalue()


def report_from_json_dict(raw: dict) -> QuantileReport:
    return QuantileReport(
        entries=[KQuantileEntry(**e) for e in raw["entries"]],
        skipped=list(raw["skipped"]),
        config=raw["config"],
        version=raw["version"],
        wall_time_s=raw["wall_time_s"],
    )


def summarize_metrics(
    k: int, metrics, left_flags, q: float, epsilon: float | None
) -> KQuantileEntry:
    metrics = np.asarray(metrics, dtype=float)
    n = metrics.size
    order = np.sort(metrics)
    idx = quantile_order_index(q, n)
    lo, hi = quantile_ci_indices(q, n)
    fail = None if epsilon is None else float(np.mean(metrics > epsilon))
    return KQuantileEntry(
        k=k,
        n=n,
        quantile=float(order[idx - 1]),
        ci_lo=float(order[lo - 1]),
        ci_hi=float(order[hi - 1]),
        fail_freq=fail,
        leftball_freq=float(np.mean(np.asarray(left_flags, dtype=bool))),
    )


def run_trials(config: ExperimentConfig) -> QuantileReport:
    """N seeded trials per horizon; per-horizon quantile of the case metric.

    Deterministic given the seed base regardless of execution order; horizons
    whose schedule hypothesis fails are skipped and listed in the report.
    """
    started = time.monotonic()
    root = RngStream(config.seed_base)
    problem = problem_from_config(config.problem, root.child("problem"))
    noise = noise_from_config(config.noise)
    entries = []
    skipped = []
    for k in config.ks:
        try:
            schedule = build_schedule(config, problem, k)
        except HypothesisError as exc:
            skipped.append({"k": k, "reason": str(exc)})
            continue
        metrics = np.empty(config.trials)
        lefts = np.empty(config.trials, dtype=bool)
        if config.threads > 1:
            cfg_json = json.dumps(config.to_json_dict())
            chunks = np.array_split(np.arange(config.trials), config.threads)
            with ProcessPoolExecutor(max_workers=config.threads) as pool:
                futures = [
                    pool.submit(_run_chunk, cfg_json, k, [int(i) for i in chunk])
                    for chunk in chunks
                    if chunk.size
                ]
                for fut in futures:
                    for i, metric, left in fut.result():
                        metrics[i] = metric
                        lefts[i] = left
        else:
            for i in range(config.trials):
                stream = root.child("k", k, "trial", i)
                if config.method == "sgd":
                    rec = run_sgd(problem, noise, config.gamma, k, stream)
                else:
                    rec = _RUNNERS[config.method](problem, noise, schedule, k, stream)
                metrics[i] = rec.final_metric
                lefts[i] = rec.left_ball
        entries.append(summarize_metrics(k, metrics, lefts, config.q, config.epsilon))
    return QuantileReport(
        entries=entries,
        skipped=skipped,
        config=config.to_json_dict(),
        wall_time_s=time.monotonic() - started,
    )


# ---------------------------------------------------------------------------
# slope fitting
# ---------------------------------------------------------------------------


def fit_loglog_slope(points) -> dict:
    """Least-squares slope of log(value) against log(K), with standard error."""
    points = list(points)
    if len(points) < 4:
        raise ContractError("slope fit needs at least 4 points")
    ks = np.array([p[0] for p in points], dtype=float)
    vs = np.array([p[1] for p in points], dtype=float)
    if np.any(ks <= 0) or np.any(vs <= 0):
        raise ContractError("slope fit needs positive horizons and values")
    x = np.log(ks)
    y = np.log(vs)
    n = x.size
    xm = x - x.mean()
    sxx = float(xm @ xm)
    slope = float(xm @ y / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    var = float(resid @ resid) / max(n - 2, 1)
    return {"slope": slope, "stderr": math.sqrt(var / sxx), "intercept": intercept}


def rates_experiment(config: ExperimentConfig) -> dict:
    """Quantile sweep over the config horizons plus a log-log slope fit."""
    report = run_trials(config)
    points = [(e.k, e.quantile) for e in report.entries if e.quantile > 0]
    fit = fit_loglog_slope(points) if len(points) >= 4 else None
    return {"report": report, "fit": fit}


# ---------------------------------------------------------------------------
# the adversarial-noise comparison
# ---------------------------------------------------------------------------


def _clipped_three_point_endpoint(
    mu: float, x0: float, schedule: Schedule, n_steps: int, fire_k: int, kick: float
) -> float:
    """Exact endpoint of clipped SGD on f = mu x^2 / 2 under one-kick noise.

    When the clipping level provably never binds the recursion is affine, so
    the endpoint follows in closed form; otherwise fall back to the literal
    loop (feasible horizons only).
    """
    gamma = schedule.gamma
    lam_min = min(schedule.lambda_at(0), schedule.lambda_at(n_steps - 1))
    x_bound = abs(x0) + gamma * abs(kick)
    if mu * x_bound + abs(kick) <= lam_min:
        log_rho = math.log1p(-gamma * mu)

        def power(n: int) -> float:
            return math.exp(n * log_rho) if n * log_rho > -745.0 else 0.0

        if fire_k >= n_steps:
            return power(n_steps) * x0
        x_fire = power(fire_k) * x0
        x_next = (1.0 - gamma * mu) * x_fire - gamma * kick
        return power(n_steps - fire_k - 1) * x_next
    if n_steps > 5_000_000:
        raise ArithmeticError(
            "clipping may bind and the horizon is too long for a literal loop"
        )
    x = float(x0)
    for k in range(n_steps):
        g = mu * x + (kick if k == fire_k else 0.0)
        lam = schedule.lambda_at(k)
        if abs(g) > lam:
            g = math.copysign(lam, g)
        x = x - gamma * g
    return x


def counterexample_experiment(
    epsilon: float,
    mu: float,
    sigma: float,
    x0: float,
    n_steps: int,
    gamma: float,
    n_trials: int,
    rng: RngStream,
    beta: float = 0.05,
    clipped_k: int | None = None,
) -> dict:
    """Adversarial-noise comparison: plain SGD against the clipped qsc pack.

    Plain SGD runs `n_steps` steps against the one-kick noise sized to its
    own (gamma, n_steps); the failure frequency of ||x^K||^2 >= eps is
    compared with the analytic value 1/A^2.  Clipped SGD runs the qsc pack at
    the horizon its guarantee prescribes for the same target; because the
    noise is zero except at one step, each trial endpoint is one of three
    values which are computed exactly.
    """
    if n_trials < 1:
        raise ConfigError("need at least one trial")
    problem = make_counterexample_1d(mu, x0)
    noise = three_point_noise(sigma, gamma, epsilon, n_steps, mu, x0)
    gate_ok = noise.gate_open()
    a = noise.a_value()
    analytic = 1.0 / a**2

    fails = 0
    for i in range(n_trials):
        rec = run_sgd(problem, noise, gamma, n_steps, rng.child("sgd", i))
        fails += rec.final_metric >= epsilon
    empirical = fails / n_trials

    radius = abs(x0)
    if clipped_k is None:
        clipped_k = qsc_horizon_for_target(
            lipschitz_l=mu,
            mu=mu,
            radius=radius,
            sigma=sigma,
            alpha=2.0,
            beta=beta,
            epsilon=epsilon,
        )
    sched = sgd_schedule(
        "qsc",
        lipschitz_l=mu,
        mu=mu,
        radius=radius,
        sigma=sigma,
        alpha=2.0,
        k=clipped_k,
        beta=beta,
    )
    fire_k = noise.fire_step()
    kick = sigma * a
    endpoints = {}
    for v in (-kick, 0.0, kick):
        value = v if gate_ok else 0.0
        endpoints[v] = _clipped_three_point_endpoint(
            mu, x0, sched, clipped_k, fire_k, value
        )
    gen = rng.child("clipped").gen
    draws = gen.random(n_trials)
    clipped_fails = 0
    for u in draws:
        if u < 0.5 / a**2:
            v = -kick
        elif u < 1.0 / a**2:
            v = kick
        else:
            v = 0.0
        clipped_fails += endpoints[v] ** 2 >= epsilon
    return {
        "empirical_failure_freq": empirical,
        "analytic_failure_prob": analytic,
        "clipped_comparison_freq": clipped_fails / n_trials,
        "gate_ok": gate_ok,
        "a_value": a,
        "clipped_k": clipped_k,
        "n_trials": n_trials,
    }


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def emit_report(report: QuantileReport, path: str, fmt: str = "json") -> None:
    """Write the report as CSV (fixed columns) or JSON (snake_case mirror)."""
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown report format {fmt!r}")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            if fmt == "csv":
                fh.write(report.to_csv())
            else:
                json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
