"""The iterative methods as deterministic state machines.

Each run maps (problem, noise, schedule, seed) to a TrialRecord: a thinned
metric trajectory, the final metric, and ball-containment flags.  Runs are
strictly sequential; distinct runs with split streams are independent.

The unclipped references (`run_sgd`, `run_extragradient`, `run_forward`) use
the same update expressions as their clipped counterparts, so with zero noise
and inactive clipping the trajectories agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clipping import clip
from .core import ConfigError, ContractError, MinProblem, RngStream, VipProblem
from .metrics import checkpoint_steps, restricted_gap
from .noise import NoiseModel, sample_noise
from .schedules import RestartPlan, Schedule, stage_schedule


@dataclass
class TrialRecord:
    """Per-run record: thinned metric trajectory plus containment flags."""

    seed: int
    method: str
    case: str
    metric_name: str
    steps: list = field(default_factory=list)
    values: list = field(default_factory=list)
    final_metric: float = float("nan")
    max_dist_from_star: float = 0.0
    left_ball: bool = False
    oracle_calls: int = 0
    stage_log: list | None = None
    iterates: dict | None = None
    final_point: np.ndarray | None = None

    def record(self, k: int, value: float):
        if self.steps and k <= self.steps[-1]:
            raise ContractError("trajectory indices must increase strictly")
        self.steps.append(int(k))
        self.values.append(float(value))

    @property
    def series(self) -> list:
        return list(zip(self.steps, self.values))

    def to_csv_rows(self) -> list:
        return [
            (self.seed, self.method, self.case, k, v)
            for k, v in zip(self.steps, self.values)
        ]

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "method": self.method,
            "case": self.case,
            "metric_name": self.metric_name,
            "steps": list(self.steps),
            "values": list(self.values),
            "final_metric": self.final_metric,
            "max_dist_from_star": self.max_dist_from_star,
            "left_ball": self.left_ball,
            "oracle_calls": self.oracle_calls,
            "stage_log": self.stage_log,
        }


def _finalize(rec: TrialRecord, final_point) -> TrialRecord:
    rec.final_point = np.asarray(final_point, dtype=float).copy()
    if not (np.isfinite(rec.final_metric) and np.all(np.isfinite(rec.final_point))):
        raise ContractError("run produced non-finite output")
    return rec


# ---------------------------------------------------------------------------
# plain and clipped gradient steps
# ---------------------------------------------------------------------------


def run_sgd(
    problem: MinProblem,
    noise: NoiseModel,
    gamma: float,
    n_steps: int,
    rng: RngStream,
    keep_iterates: bool = False,
) -> TrialRecord:
    """Unclipped stochastic gradient descent; records squared distances."""
    if gamma < 0:
        raise ContractError("gamma must be nonnegative")
    checkpoints = set(checkpoint_steps(n_steps))
    rec = TrialRecord(seed=rng.seed, method="sgd", case="qsc", metric_name="dist_sq")
    if keep_iterates:
        rec.iterates = {}
    ball = 2.0 * problem.radius
    x = problem.x0.copy()

    def observe(k):
        d = problem.dist_to_star(x)
        rec.max_dist_from_star = max(rec.max_dist_from_star, d)
        rec.left_ball = rec.left_ball or d > ball
        if k in checkpoints:
            rec.record(k, d * d)
            if rec.iterates is not None:
                rec.iterates[k] = x.copy()

    observe(0)
    for k in range(n_steps):
        g = problem.gradient(x) + sample_noise(noise, k, problem.dim, rng)
        x = x - gamma * g
        observe(k + 1)
    rec.final_metric = problem.dist_to_star(x) ** 2
    rec.oracle_calls = n_steps
    return _finalize(rec, x)


_SGD_METRICS = {
    "nonconvex": "grad_sq_mean",
    "pl": "suboptimality",
    "convex": "avg_suboptimality",
    "qsc": "dist_sq",
}


def run_clipped_sgd(
    problem: MinProblem,
    noise: NoiseModel,
    schedule: Schedule,
    n_steps: int,
    rng: RngStream,
    keep_iterates: bool = False,
) -> TrialRecord:
    """Clipped stochastic gradient descent with the schedule's level sequence.

    The recorded metric follows the schedule's regime: running mean of the
    squared gradient norms (nonconvex), objective gap of the last iterate
    (pl), objective gap of the running average (convex), or squared distance
    (qsc).
    """
    if schedule.method != "clipped_sgd":
        raise ConfigError("schedule was built for a different method")
    case = schedule.case
    metric = _SGD_METRICS[case]
    checkpoints = set(checkpoint_steps(n_steps))
    rec = TrialRecord(seed=rng.seed, method="clipped_sgd", case=case, metric_name=metric)
    if keep_iterates:
        rec.iterates = {}
    ball = 2.0 * problem.radius
    gamma = schedule.gamma

    x = problem.x0.copy()
    xbar = x.copy()
    grad_clean = problem.gradient(x)
    grad_sq_sum = 0.0

    def current_metric(k):
        nonlocal grad_sq_sum
        if case == "nonconvex":
            grad_sq_sum += float(grad_clean @ grad_clean)
            return grad_sq_sum / (k + 1)
        if case == "pl":
            return problem.suboptimality(x)
        if case == "convex":
            return problem.suboptimality(xbar)
        return problem.dist_to_star(x) ** 2

    def observe(k):
        d = problem.dist_to_star(x)
        rec.max_dist_from_star = max(rec.max_dist_from_star, d)
        rec.left_ball = rec.left_ball or d > ball
        m = current_metric(k)
        if k in checkpoints:
            rec.record(k, m)
            if rec.iterates is not None:
                rec.iterates[k] = x.copy()
        return m

    last = observe(0)
    for k in range(n_steps):
        g = grad_clean + sample_noise(noise, k, problem.dim, rng)
        x = x - gamma * clip(g, schedule.lambda_at(k))
        xbar = xbar + (x - xbar) / (k + 2)  # running mean over x^0..x^{k+1}
        grad_clean = problem.gradient(x)
        last = observe(k + 1)
    rec.final_metric = last
    rec.oracle_calls = n_steps
    return _finalize(rec, x)


# ---------------------------------------------------------------------------
# accelerated three-sequence method
# ---------------------------------------------------------------------------


def run_clipped_sstm(
    problem: MinProblem,
    noise: NoiseModel,
    schedule: Schedule,
    n_steps: int,
    rng: RngStream,
    x0=None,
    ball_radius: float | None = None,
    keep_iterates: bool = False,
) -> TrialRecord:
    """Clipped similar-triangles method; metric is the objective gap at y^k.

    Containment is checked for all three sequences against `ball_radius`
    (default twice the problem radius).
    """
    if schedule.method != "clipped_sstm":
        raise ConfigError("schedule was built for a different method")
    if schedule.a_param is None or schedule.a_param <= 0:
        raise ConfigError("accelerated schedule needs a positive a parameter")
    a_param = schedule.a_param
    lip = problem.lipschitz_l
    checkpoints = set(checkpoint_steps(n_steps))
    rec = TrialRecord(
        seed=rng.seed, method="clipped_sstm", case=schedule.case, metric_name="suboptimality"
    )
    if keep_iterates:
        rec.iterates = {}
    ball = 2.0 * problem.radius if ball_radius is None else ball_radius

    start = problem.x0 if x0 is None else np.asarray(x0, dtype=float)
    y = start.copy()
    z = start.copy()
    a_k = 0.0

    def track(*points):
        d = max(problem.dist_to_star(p) for p in points)
        rec.max_dist_from_star = max(rec.max_dist_from_star, d)
        rec.left_ball = rec.left_ball or d > ball

    track(y)
    if 0 in checkpoints:
        rec.record(0, problem.suboptimality(y))
        if rec.iterates is not None:
            rec.iterates[0] = y.copy()
    for k in range(n_steps):
        alpha_next = (k + 2) / (2.0 * a_param * lip)
        a_next = a_k + alpha_next
        x = (a_k * y + alpha_next * z) / a_next
        g = problem.gradient(x) + sample_noise(noise, k, problem.dim, rng)
        z = z - alpha_next * clip(g, schedule.lambda_at(k, alpha_next))
        y = (a_k * y + alpha_next * z) / a_next
        a_k = a_next
        track(x, y, z)
        if k + 1 in checkpoints:
            rec.record(k + 1, problem.suboptimality(y))
            if rec.iterates is not None:
                rec.iterates[k + 1] = y.copy()
    rec.final_metric = problem.suboptimality(y)
    rec.oracle_calls = n_steps
    return _finalize(rec, y)


def run_r_clipped_sstm(
    problem: MinProblem,
    noise: NoiseModel,
    plan: RestartPlan,
    rng: RngStream,
) -> TrialRecord:
    """Restarted accelerated method: stages of the clipped three-sequence run.

    The stage log keeps, per stage, the achieved objective gap against the
    stage target and the containment flag for the stage ball 2 R_{t-1}.
    """
    if problem.mu_sc <= 0:
        raise ConfigError("restarts need a strongly convex problem")
    rec = TrialRecord(
        seed=rng.seed,
        method="r_clipped_sstm",
        case="qsc",
        metric_name="suboptimality",
        stage_log=[],
    )
    x_hat = problem.x0.copy()
    calls = 0
    rec.record(0, problem.suboptimality(x_hat))
    for stage in plan.stages:
        sched = stage_schedule(plan, stage)
        sub = run_clipped_sstm(
            problem,
            noise,
            sched,
            stage.k_t,
            rng.child("stage", stage.index),
            x0=x_hat,
            ball_radius=2.0 * stage.r_prev,
        )
        x_hat = sub.final_point
        calls += stage.k_t
        rec.max_dist_from_star = max(rec.max_dist_from_star, sub.max_dist_from_star)
        rec.left_ball = rec.left_ball or sub.left_ball
        rec.stage_log.append(
            {
                "stage": stage.index,
                "k_t": stage.k_t,
                "eps_t": stage.eps_t,
                "achieved_gap": sub.final_metric,
                "within_target": sub.final_metric <= stage.eps_t,
                "left_stage_ball": sub.left_ball,
            }
        )
        rec.record(calls, sub.final_metric)
    rec.final_metric = rec.values[-1]
    rec.oracle_calls = calls
    return _finalize(rec, x_hat)


# ---------------------------------------------------------------------------
# operator methods
# ---------------------------------------------------------------------------


def run_clipped_seg(
    problem: VipProblem,
    noise: NoiseModel,
    schedule: Schedule,
    n_steps: int,
    rng: RngStream,
    keep_iterates: bool = False,
) -> TrialRecord:
    """Clipped extragradient: extrapolate, then update, two fresh samples.

    Monotone regime records the restricted gap of the running average of the
    extrapolation points; qsm records the squared distance of the iterate.
    Containment uses 3R for iterates and 4R for extrapolation points.
    """
    if schedule.method != "clipped_seg":
        raise ConfigError("schedule was built for a different method")
    case = schedule.case
    metric = "gap_avg" if case == "monotone" else "dist_sq"
    checkpoints = set(checkpoint_steps(n_steps))
    rec = TrialRecord(seed=rng.seed, method="clipped_seg", case=case, metric_name=metric)
    if keep_iterates:
        rec.iterates = {}
    r = problem.radius
    gamma = schedule.gamma

    x = problem.x0.copy()
    extr_avg = np.zeros_like(x)
    n_extr = 0

    def current_metric():
        if metric == "dist_sq":
            return problem.dist_to_star(x) ** 2
        point = extr_avg if n_extr > 0 else x
        return restricted_gap(problem, point, r)

    def observe(k):
        d = problem.dist_to_star(x)
        rec.max_dist_from_star = max(rec.max_dist_from_star, d)
        rec.left_ball = rec.left_ball or d > 3.0 * r
        if k in checkpoints:
            rec.record(k, current_metric())
            if rec.iterates is not None:
                rec.iterates[k] = x.copy()

    observe(0)
    for k in range(n_steps):
        lam = schedule.lambda_at(k)
        g1 = problem.operator(x) + sample_noise(noise, k, problem.dim, rng)
        x_extr = x - gamma * clip(g1, lam)
        g2 = problem.operator(x_extr) + sample_noise(noise, k, problem.dim, rng)
        x = x - gamma * clip(g2, lam)
        n_extr += 1
        extr_avg = extr_avg + (x_extr - extr_avg) / n_extr
        d_extr = problem.dist_to_star(x_extr)
        rec.max_dist_from_star = max(rec.max_dist_from_star, d_extr)
        rec.left_ball = rec.left_ball or d_extr > 4.0 * r
        observe(k + 1)
    rec.final_metric = current_metric()
    rec.oracle_calls = 2 * n_steps
    return _finalize(rec, x)


_SGDA_METRICS = {
    "monotone_star_coco": "gap_avg",
    "star_coco": "op_sq_mean",
    "qsm": "dist_sq",
}


def run_clipped_sgda(
    problem: VipProblem,
    noise: NoiseModel,
    schedule: Schedule,
    n_steps: int,
    rng: RngStream,
    keep_iterates: bool = False,
) -> TrialRecord:
    """Clipped forward step on the operator, one fresh sample per iteration."""
    if schedule.method != "clipped_sgda":
        raise ConfigError("schedule was built for a different method")
    case = schedule.case
    metric = _SGDA_METRICS[case]
    checkpoints = set(checkpoint_steps(n_steps))
    rec = TrialRecord(seed=rng.seed, method="clipped_sgda", case=case, metric_name=metric)
    if keep_iterates:
        rec.iterates = {}
    ball = 2.0 * problem.radius
    gamma = schedule.gamma

    x = problem.x0.copy()
    x_avg = x.copy()
    op_clean = problem.operator(x)
    op_sq_sum = 0.0

    def current_metric(k):
        nonlocal op_sq_sum
        if case == "star_coco":
            op_sq_sum += float(op_clean @ op_clean)
            return op_sq_sum / (k + 1)
        if case == "monotone_star_coco":
            return restricted_gap(problem, x_avg, problem.radius)
        return problem.dist_to_star(x) ** 2

    def observe(k):
        d = problem.dist_to_star(x)
        rec.max_dist_from_star = max(rec.max_dist_from_star, d)
        rec.left_ball = rec.left_ball or d > ball
        m = current_metric(k)
        if k in checkpoints:
            rec.record(k, m)
            if rec.iterates is not None:
                rec.iterates[k] = x.copy()
        return m

    last = observe(0)
    for k in range(n_steps):
        g = op_clean + sample_noise(noise, k, problem.dim, rng)
        x = x - gamma * clip(g, schedule.lambda_at(k))
        x_avg = x_avg + (x - x_avg) / (k + 2)
        op_clean = problem.operator(x)
        last = observe(k + 1)
    rec.final_metric = last
    rec.oracle_calls = n_steps
    return _finalize(rec, x)


# ---------------------------------------------------------------------------
# deterministic unclipped references
# ---------------------------------------------------------------------------


def run_extragradient(
    problem: VipProblem, gamma: float, n_steps: int, keep_iterates: bool = False
) -> TrialRecord:
    """Deterministic extragradient, the zero-noise reference for clipped-SEG."""
    checkpoints = set(checkpoint_steps(n_steps))
    rec = TrialRecord(seed=0, method="extragradient", case="qsm", metric_name="dist_sq")
    if keep_iterates:
        rec.iterates = {}
    x = problem.x0.copy()

    def observe(k):
        d = problem.dist_to_star(x)
        rec.max_dist_from_star = max(rec.max_dist_from_star, d)
        if k in checkpoints:
            rec.record(k, d * d)
            if rec.iterates is not None:
                rec.iterates[k] = x.copy()

    observe(0)
    for k in range(n_steps):
        x_extr = x - gamma * problem.operator(x)
        x = x - gamma * problem.operator(x_extr)
        observe(k + 1)
    rec.final_metric = problem.dist_to_star(x) ** 2
    rec.oracle_calls = 2 * n_steps
    return _finalize(rec, x)


def run_forward(
    problem: VipProblem, gamma: float, n_steps: int, keep_iterates: bool = False
) -> TrialRecord:
    """Deterministic forward iteration, the zero-noise reference for clipped-SGDA."""
    checkpoints = set(checkpoint_steps(n_steps))
    rec = TrialRecord(seed=0, method="forward", case="qsm", metric_name="dist_sq")
    if keep_iterates:
        rec.iterates = {}
    x = problem.x0.copy()

    def observe(k):
        d = problem.dist_to_star(x)
        rec.max_dist_from_star = max(rec.max_dist_from_star, d)
        if k in checkpoints:
            rec.record(k, d * d)
            if rec.iterates is not None:
                rec.iterates[k] = x.copy()

    observe(0)
    for k in range(n_steps):
        x = x - gamma * problem.operator(x)
        observe(k + 1)
    rec.final_metric = problem.dist_to_star(x) ** 2
    rec.oracle_calls = n_steps
    return _finalize(rec, x)
