"""Parameter packs (step size, clipping levels, acceleration and restarts).

Every constructor evaluates the explicit-constant displays verbatim; the
`theory` fidelity sets the step size to the exact maximum its display allows
(equality in one branch of the min).  `practical` fidelity multiplies the
step size by a user factor and recomputes the clipping level from the same
closed form, so the coupling between step size and clipping level survives.

With sigma = 0 the noise-dependent branch of every min/max is treated as
absent (its analytic limit), and the implicit fixed point B is +inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .core import ConfigError, ContractError, HypothesisError

METHODS = ("sgd", "clipped_sgd", "clipped_sstm", "r_clipped_sstm", "clipped_seg", "clipped_sgda")
CASES = (
    "nonconvex",
    "pl",
    "convex",
    "qsc",
    "monotone",
    "qsm",
    "star_coco",
    "monotone_star_coco",
)
LAMBDA_KINDS = ("constant", "exp_decay", "inv_alpha")


@dataclass(frozen=True)
class Schedule:
    """A method's full parameter pack for one horizon.

    lambda_kind:
      constant   -> lambda_k = lambda_scale
      exp_decay  -> lambda_k = lambda_scale * exp(-gamma * decay_rate * (1 + k/2))
      inv_alpha  -> lambda_k = lambda_scale / alpha_{k+1} (accelerated method,
                    alpha_{k+1} = (k+2) / (2 a L) supplied by the caller)
    """

    method: str
    case: str
    gamma: float
    lambda_kind: str
    lambda_scale: float
    decay_rate: float
    a_param: float | None
    b_k: float | None
    horizon_k: int
    beta: float
    log_term: float
    fidelity: str = "theory"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.case not in CASES:
            raise ConfigError(f"unknown case {self.case!r}")
        if self.lambda_kind not in LAMBDA_KINDS:
            raise ConfigError(f"unknown lambda kind {self.lambda_kind!r}")
        if self.log_term < 1.0:
            raise HypothesisError(
                f"log term {self.log_term:.6f} < 1; enlarge K or beta"
            )
        if self.gamma <= 0 and self.method != "clipped_sstm":
            raise ConfigError("gamma must be positive")
        if self.lambda_scale <= 0:
            raise ConfigError("lambda scale must be positive")

    def lambda_at(self, k: int, alpha_next: float | None = None) -> float:
        if self.lambda_kind == "constant":
            return self.lambda_scale
        if self.lambda_kind == "exp_decay":
            return self.lambda_scale * math.exp(
                -self.gamma * self.decay_rate * (1.0 + 0.5 * k)
            )
        if alpha_next is None:
            raise ContractError("inv_alpha clipping needs alpha_{k+1}")
        return self.lambda_scale / alpha_next

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "case": self.case,
            "gamma": self.gamma,
            "lambda_kind": self.lambda_kind,
            "lambda_scale": self.lambda_scale,
            "decay_rate": self.decay_rate,
            "a_param": self.a_param,
            "b_k": None if self.b_k is None or math.isinf(self.b_k) else self.b_k,
            "horizon_k": self.horizon_k,
            "beta": self.beta,
            "log_term": self.log_term,
            "fidelity": self.fidelity,
        }


def log_term(multiplier: int, k: int, beta: float) -> float:
    """ln(multiplier * (K+1) / beta); constructors require it to be >= 1."""
    if not (0 < beta <= 1):
        raise ConfigError("beta must lie in (0, 1]")
    return math.log(multiplier * (k + 1) / beta)


def _require(cond: bool, msg: str, exc=ConfigError):
    if not cond:
        raise exc(msg)


def _check_log(a: float):
    if a < 1.0:
        raise HypothesisError(f"log term {a:.6f} < 1; enlarge K or beta")


# ---------------------------------------------------------------------------
# implicit fixed point B = max(2, C / ln^2 B)
# ---------------------------------------------------------------------------

_BK_CASES = {
    # case -> (denominator base, constant prefactor, log multiplier, uses L)
    "sgd_pl": (264600.0, 1.0, 4, True),
    "sgd_qsc": (5400.0, 4.0, 4, False),
    "seg_qsm": (264600.0, 1.0, 6, False),
    "sgda_qsm": (5400.0, 1.0, 4, False),
}


def bk_coefficient(
    case: str,
    k: int,
    mu: float,
    scale_sq: float,
    sigma: float,
    alpha: float,
    beta: float,
    lipschitz_l: float | None = None,
) -> float:
    """The constant C in the fixed point B = max(2, C / ln^2 B).

    `scale_sq` is R^2 (distance cases) or the initial gap bound (gradient
    domination case, which also divides by L inside).
    """
    if case not in _BK_CASES:
        raise ConfigError(f"unknown B_K case {case!r}")
    base, prefactor, mult, uses_l = _BK_CASES[case]
    _require(sigma > 0, "B_K is defined for sigma > 0")
    _require(mu > 0 and scale_sq > 0, "mu and the scale must be positive")
    a = log_term(mult, k, beta)
    _check_log(a)
    denom = prefactor * base ** (2.0 / alpha) * sigma**2 * a ** (2.0 * (alpha - 1.0) / alpha)
    if uses_l:
        _require(lipschitz_l is not None and lipschitz_l > 0, "this case needs L")
        denom *= lipschitz_l
    return (k + 1) ** (2.0 * (alpha - 1.0) / alpha) * mu**2 * scale_sq / denom


def _bk_fixed_point(coef: float) -> float:
    """Solve B = max(2, coef / ln^2 B), B >= 2, to relative residual 1e-8.

    Damped iteration on the log, with a bisection fallback for the rare
    slow-oscillation region just above B = 2.
    """
    ln2 = math.log(2.0)
    if coef <= 2.0 * ln2 * ln2:
        return 2.0

    def rhs(b: float) -> float:
        return max(2.0, coef / math.log(b) ** 2)

    t = ln2
    for _ in range(200):
        b = math.exp(t)
        if abs(b - rhs(b)) / b <= 1e-8:
            return b
        t = 0.5 * t + 0.5 * math.log(rhs(b))
    # bisection on the increasing h(B) = B - coef / ln^2 B
    lo, hi = 2.0, max(2.0, coef / (ln2 * ln2))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid - coef / math.log(mid) ** 2 >= 0:
            hi = mid
        else:
            lo = mid
        if abs(hi - rhs(hi)) / hi <= 1e-8:
            return hi
    raise ArithmeticError("B_K fixed point did not converge")


def solve_bk(
    case: str,
    k: int,
    mu: float,
    scale_sq: float,
    sigma: float,
    alpha: float,
    beta: float,
    lipschitz_l: float | None = None,
) -> float:
    """Solve the implicit B for the given theorem case; +inf when sigma = 0."""
    if sigma == 0.0:
        return math.inf
    coef = bk_coefficient(case, k, mu, scale_sq, sigma, alpha, beta, lipschitz_l)
    return _bk_fixed_point(coef)


# ---------------------------------------------------------------------------
# plain and clipped SGD
# ---------------------------------------------------------------------------


def _apply_fidelity(gamma: float, fidelity: str, gamma_factor: float) -> float:
    if fidelity == "theory":
        return gamma
    if fidelity == "practical":
        _require(gamma_factor > 0, "gamma factor must be positive")
        return gamma * gamma_factor
    raise ConfigError(f"unknown fidelity {fidelity!r}")


def sgd_schedule(
    case: str,
    *,
    lipschitz_l: float,
    sigma: float,
    alpha: float,
    k: int,
    beta: float,
    mu: float = 0.0,
    radius: float | None = None,
    delta: float | None = None,
    fidelity: str = "theory",
    gamma_factor: float = 20.0,
) -> Schedule:
    """Clipped-SGD parameter pack for one of the four regimes.

    nonconvex and pl size the clipping by sqrt(delta / L) where delta bounds
    the initial objective gap; convex and qsc size it by the initial distance
    bound `radius`.
    """
    _require(lipschitz_l > 0, "L must be positive")
    _require(1.0 < alpha <= 2.0, "alpha must lie in (1, 2]")
    _require(sigma >= 0, "sigma must be nonnegative")
    _require(k >= 1, "horizon must be at least 1")
    a = log_term(4, k, beta)
    _check_log(a)

    if case == "nonconvex":
        _require(delta is not None and delta > 0, "nonconvex case needs delta > 0")
        g_smooth = 1.0 / (80.0 * lipschitz_l * a)
        branches = [g_smooth]
        if sigma > 0:
            branches.append(
                math.sqrt(delta)
                / (
                    27.0 ** (1.0 / alpha)
                    * 20.0
                    * sigma
                    * math.sqrt(lipschitz_l)
                    * k ** (1.0 / alpha)
                    * a ** ((alpha - 1.0) / alpha)
                )
            )
        gamma = _apply_fidelity(min(branches), fidelity, gamma_factor)
        lam = math.sqrt(delta) / (20.0 * math.sqrt(lipschitz_l) * gamma * a)
        return Schedule(
            "clipped_sgd", case, gamma, "constant", lam, 0.0, None, None, k, beta, a, fidelity
        )

    if case == "convex":
        _require(radius is not None and radius > 0, "convex case needs radius > 0")
        branches = [1.0 / (80.0 * lipschitz_l * a)]
        if sigma > 0:
            branches.append(
                radius
                / (
                    108.0 ** (1.0 / alpha)
                    * 20.0
                    * sigma
                    * k ** (1.0 / alpha)
                    * a ** ((alpha - 1.0) / alpha)
                )
            )
        gamma = _apply_fidelity(min(branches), fidelity, gamma_factor)
        lam = radius / (40.0 * gamma * a)
        return Schedule(
            "clipped_sgd", case, gamma, "constant", lam, 0.0, None, None, k, beta, a, fidelity
        )

    if case == "pl":
        _require(mu > 0, "pl case needs mu > 0")
        _require(delta is not None and delta > 0, "pl case needs delta > 0")
        branches = [1.0 / (250.0 * lipschitz_l * a)]
        b = solve_bk("sgd_pl", k, mu, delta, sigma, alpha, beta, lipschitz_l)
        if sigma > 0:
            branches.append(math.log(b) / (mu * (k + 1)))
        gamma = _apply_fidelity(min(branches), fidelity, gamma_factor)
        scale = math.sqrt(delta) / (120.0 * math.sqrt(lipschitz_l) * gamma * a)
        return Schedule(
            "clipped_sgd", case, gamma, "exp_decay", scale, mu, None, b, k, beta, a, fidelity
        )

    if case == "qsc":
        _require(mu > 0, "qsc case needs mu > 0")
        _require(radius is not None and radius > 0, "qsc case needs radius > 0")
        branches = [1.0 / (800.0 * lipschitz_l * a)]
        b = solve_bk("sgd_qsc", k, mu, radius**2, sigma, alpha, beta)
        if sigma > 0:
            branches.append(2.0 * math.log(b) / (mu * (k + 1)))
        gamma = _apply_fidelity(min(branches), fidelity, gamma_factor)
        scale = radius / (120.0 * gamma * a)
        return Schedule(
            "clipped_sgd", case, gamma, "exp_decay", scale, mu / 2.0, None, b, k, beta, a, fidelity
        )

    raise ConfigError(f"unknown clipped-SGD case {case!r}")


# ---------------------------------------------------------------------------
# accelerated method
# ---------------------------------------------------------------------------


def sstm_schedule(
    *,
    lipschitz_l: float,
    radius: float,
    sigma: float,
    alpha: float,
    k: int,
    beta: float,
    fidelity: str = "theory",
    gamma_factor: float = 20.0,
    log_term_override: float | None = None,
) -> Schedule:
    """Accelerated pack: the coefficient a, with clipping tied to alpha_{k+1}.

    lambda_k * alpha_{k+1} = radius / (30 * log term) is constant in k.
    `log_term_override` lets the restart wrapper substitute its staged log
    term ln(4 K_t tau / beta).
    """
    _require(lipschitz_l > 0 and radius > 0, "need L > 0 and radius > 0")
    _require(1.0 < alpha <= 2.0, "alpha must lie in (1, 2]")
    _require(k >= 1, "horizon must be at least 1")
    a_log = math.log(4.0 * k / beta) if log_term_override is None else log_term_override
    _check_log(a_log)
    a_param = 48600.0 * a_log**2
    if sigma > 0:
        a_param = max(
            a_param,
            900.0
            * sigma
            * (k + 1)
            * k ** (1.0 / alpha)
            * a_log ** ((alpha - 1.0) / alpha)
            / (lipschitz_l * radius),
        )
    if fidelity == "practical":
        a_param = max(1.0, a_param / gamma_factor)
    elif fidelity != "theory":
        raise ConfigError(f"unknown fidelity {fidelity!r}")
    scale = radius / (30.0 * a_log)
    return Schedule(
        "clipped_sstm",
        "convex",
        1.0,  # the accelerated method has no single step size; a drives the steps
        "inv_alpha",
        scale,
        0.0,
        a_param,
        None,
        k,
        beta,
        a_log,
        fidelity,
    )


@dataclass(frozen=True)
class RestartStage:
    index: int
    k_t: int
    a_t: float
    r_prev: float
    r_t: float
    eps_t: float
    lambda_scale: float
    log_term: float


@dataclass(frozen=True)
class RestartPlan:
    tau: int
    stages: tuple
    beta: float
    sigma: float
    alpha: float
    lipschitz_l: float
    mu: float
    radius: float
    epsilon: float

    @property
    def total_oracle_calls(self) -> int:
        return sum(s.k_t for s in self.stages)


def restart_plan(
    *,
    lipschitz_l: float,
    mu: float,
    radius: float,
    sigma: float,
    alpha: float,
    epsilon: float,
    beta: float,
) -> RestartPlan:
    """Stage plan for the restarted accelerated method.

    tau = ceil(log2(mu R^2 / (2 eps))) stages; stage t shrinks the radius to
    R_t = R / 2^(t/2) and targets eps_t = mu R_{t-1}^2 / 4.
    """
    _require(mu > 0 and radius > 0 and lipschitz_l > 0, "need positive mu, R, L")
    _require(epsilon > 0, "epsilon must be positive")
    if epsilon >= mu * radius**2 / 2.0:
        raise ConfigError("target epsilon already met by the initial radius bound")
    tau = math.ceil(math.log2(mu * radius**2 / (2.0 * epsilon)))
    stages = []
    for t in range(1, tau + 1):
        r_prev = radius / 2.0 ** ((t - 1) / 2.0)
        r_t = radius / 2.0 ** (t / 2.0)
        eps_t = mu * r_prev**2 / 4.0
        first = 1080.0 * math.sqrt(lipschitz_l * r_prev**2 / eps_t) * math.log(
            2160.0 * math.sqrt(lipschitz_l * r_prev**2) * tau / (math.sqrt(eps_t) * beta)
        )
        candidates = [first]
        if sigma > 0:
            ratio = (5400.0 * sigma * r_prev / eps_t) ** (alpha / (alpha - 1.0))
            candidates.append(2.0 * ratio * math.log(4.0 * tau * ratio / beta))
        k_t = max(1, math.ceil(max(candidates)))
        a_log = math.log(4.0 * k_t * tau / beta)
        _check_log(a_log)
        a_t = 48600.0 * a_log**2
        if sigma > 0:
            a_t = max(
                a_t,
                900.0
                * sigma
                * (k_t + 1)
                * k_t ** (1.0 / alpha)
                * a_log ** ((alpha - 1.0) / alpha)
                / (lipschitz_l * r_t),
            )
        stages.append(
            RestartStage(
                index=t,
                k_t=k_t,
                a_t=a_t,
                r_prev=r_prev,
                r_t=r_t,
                eps_t=eps_t,
                lambda_scale=r_t / (30.0 * a_log),
                log_term=a_log,
            )
        )
    return RestartPlan(
        tau=tau,
        stages=tuple(stages),
        beta=beta,
        sigma=sigma,
        alpha=alpha,
        lipschitz_l=lipschitz_l,
        mu=mu,
        radius=radius,
        epsilon=epsilon,
    )


def stage_schedule(plan: RestartPlan, stage: RestartStage) -> Schedule:
    """The accelerated pack an individual restart stage runs with."""
    return Schedule(
        "clipped_sstm",
        "convex",
        1.0,
        "inv_alpha",
        stage.lambda_scale,
        0.0,
        stage.a_t,
        None,
        stage.k_t,
        plan.beta,
        stage.log_term,
        "theory",
    )


# ---------------------------------------------------------------------------
# extragradient and forward methods for operators
# ---------------------------------------------------------------------------


def seg_schedule(
    case: str,
    *,
    lipschitz_l: float,
    sigma: float,
    alpha: float,
    k: int,
    beta: float,
    radius: float,
    mu: float = 0.0,
    fidelity: str = "theory",
    gamma_factor: float = 20.0,
) -> Schedule:
    """Clipped extragradient pack; log multiplier is 6 in both regimes."""
    _require(lipschitz_l > 0 and radius > 0, "need L > 0 and radius > 0")
    _require(1.0 < alpha <= 2.0, "alpha must lie in (1, 2]")
    _require(k >= 1, "horizon must be at least 1")
    a = log_term(6, k, beta)
    _check_log(a)

    if case == "monotone":
        branches = [1.0 / (160.0 * lipschitz_l * a)]
        if sigma > 0:
            branches.append(
                20.0 ** ((2.0 - alpha) / alpha)
                * radius
                / (
                    10800.0 ** (1.0 / alpha)
                    * (k + 1) ** (1.0 / alpha)
                    * sigma
                    * a ** ((alpha - 1.0) / alpha)
                )
            )
        gamma = _apply_fidelity(min(branches), fidelity, gamma_factor)
        lam = radius / (20.0 * gamma * a)
        return Schedule(
            "clipped_seg", case, gamma, "constant", lam, 0.0, None, None, k, beta, a, fidelity
        )

    if case == "qsm":
        _require(mu > 0, "qsm case needs mu > 0")
        branches = [1.0 / (650.0 * lipschitz_l * a)]
        b = solve_bk("seg_qsm", k, mu, radius**2, sigma, alpha, beta)
        if sigma > 0:
            branches.append(math.log(b) / (mu * (k + 1)))
        gamma = _apply_fidelity(min(branches), fidelity, gamma_factor)
        scale = radius / (120.0 * gamma * a)
        return Schedule(
            "clipped_seg", case, gamma, "exp_decay", scale, mu, None, b, k, beta, a, fidelity
        )

    raise ConfigError(f"unknown clipped-SEG case {case!r}")


def sgda_schedule(
    case: str,
    *,
    ell: float,
    sigma: float,
    alpha: float,
    k: int,
    beta: float,
    radius: float,
    mu: float = 0.0,
    fidelity: str = "theory",
    gamma_factor: float = 20.0,
) -> Schedule:
    """Clipped forward-step pack for cocoercive operators.

    The monotone + cocoercive regime uses log multiplier 6; the plain
    cocoercive and the quasi-strongly monotone regimes use multiplier 4.
    """
    _require(ell > 0 and radius > 0, "need ell > 0 and radius > 0")
    _require(1.0 < alpha <= 2.0, "alpha must lie in (1, 2]")
    _require(k >= 1, "horizon must be at least 1")

    if case in ("monotone_star_coco", "star_coco"):
        mult = 6 if case == "monotone_star_coco" else 4
        a = log_term(mult, k, beta)
        _check_log(a)
        branches = [1.0 / (170.0 * ell * a)]
        if sigma > 0:
            branches.append(
                radius
                / (
                    97200.0 ** (1.0 / alpha)
                    * (k + 1) ** (1.0 / alpha)
                    * sigma
                    * a ** ((alpha - 1.0) / alpha)
                )
            )
        gamma = _apply_fidelity(min(branches), fidelity, gamma_factor)
        lam = radius / (60.0 * gamma * a)
        return Schedule(
            "clipped_sgda", case, gamma, "constant", lam, 0.0, None, None, k, beta, a, fidelity
        )

    if case == "qsm":
        _require(mu > 0, "qsm case needs mu > 0")
        a = log_term(4, k, beta)
        _check_log(a)
        branches = [1.0 / (400.0 * ell * a)]
        b = solve_bk("sgda_qsm", k, mu, radius**2, sigma, alpha, beta)
        if sigma > 0:
            branches.append(math.log(b) / (mu * (k + 1)))
        gamma = _apply_fidelity(min(branches), fidelity, gamma_factor)
        scale = radius / (120.0 * gamma * a)
        return Schedule(
            "clipped_sgda", case, gamma, "exp_decay", scale, mu, None, b, k, beta, a, fidelity
        )

    raise ConfigError(f"unknown clipped-SGDA case {case!r}")


# ---------------------------------------------------------------------------
# horizon solvers
# ---------------------------------------------------------------------------


def qsc_distance_bound(schedule: Schedule, radius: float) -> float:
    """Guaranteed ||x^{K+1} - x*||^2 for a qsc pack run for K+1 steps."""
    _require(schedule.case == "qsc", "bound applies to the qsc pack")
    return 2.0 * math.exp(-schedule.gamma * schedule.decay_rate * (schedule.horizon_k + 1)) * radius**2


def qsc_horizon_for_target(
    *,
    lipschitz_l: float,
    mu: float,
    radius: float,
    sigma: float,
    alpha: float,
    beta: float,
    epsilon: float,
) -> int:
    """Smallest K whose qsc pack guarantees squared distance <= epsilon.

    The guarantee improves monotonically in K, so a doubling search followed
    by bisection finds the exact threshold.
    """
    _require(epsilon > 0, "epsilon must be positive")

    def bound(k: int) -> float:
        sched = sgd_schedule(
            "qsc",
            lipschitz_l=lipschitz_l,
            mu=mu,
            radius=radius,
            sigma=sigma,
            alpha=alpha,
            k=k,
            beta=beta,
        )
        return qsc_distance_bound(sched, radius)

    k = 1
    while bound(k) > epsilon:
        k *= 2
        if k > 2**62:
            raise ArithmeticError("no horizon reaches the target")
    lo, hi = max(1, k // 2), k
    while lo < hi:
        mid = (lo + hi) // 2
        if bound(mid) <= epsilon:
            hi = mid
        else:
            lo = mid + 1
    return hi
