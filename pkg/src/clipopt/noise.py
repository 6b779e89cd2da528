"""Perturbation models with certified bounded alpha-th moment.

Every model is zero mean with E||xi||^alpha <= sigma^alpha.  The heavy-tail
model is an isotropic direction times a Pareto radius whose scale is
calibrated so the alpha-th moment equals sigma^alpha exactly; with tail index
below 2 its variance is infinite, which is exactly the regime the clipped
methods are built for.  The three-point model reproduces the adversarial
construction that defeats plain SGD: it stays silent until the last step of
its horizon, then fires a symmetric two-sided kick sized against the step
size and target accuracy it was built from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, ContractError, RngStream

KINDS = ("none", "gaussian", "heavy_tail_radial", "three_point_adversarial")


@dataclass(frozen=True)
class ThreePointParams:
    """Parameters the adversarial two-sided kick is sized against.

    The kick magnitude is sigma * A with A = max(2 sqrt(eps) / (gamma sigma), 1)
    and fires only at step horizon_k - 1, provided the deterministic recursion
    (1 - gamma mu)^k |x0| has dropped to sqrt(eps) by the horizon.
    """

    gamma_step: float
    epsilon_target: float
    horizon_k: int
    mu_problem: float
    x0_abs: float


@dataclass(frozen=True)
class NoiseModel:
    kind: str
    sigma: float
    alpha: float
    tail_index: float | None = None
    three_point: ThreePointParams | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        if not (1.0 < self.alpha <= 2.0):
            raise ConfigError("alpha must lie in (1, 2]")
        if self.kind == "gaussian" and self.alpha != 2.0:
            raise ConfigError("gaussian noise certifies alpha = 2 only")
        if self.kind == "heavy_tail_radial":
            if self.tail_index is None or self.tail_index <= self.alpha:
                raise ConfigError("heavy-tail index must exceed alpha")
        if self.kind == "three_point_adversarial":
            if self.three_point is None:
                raise ConfigError("three-point model needs its parameters")
            if self.alpha != 2.0:
                raise ConfigError("three-point model certifies alpha = 2")

    # -- three-point helpers -------------------------------------------------

    def a_value(self) -> float:
        """Kick size multiplier A = max(2 sqrt(eps) / (gamma sigma), 1)."""
        if self.kind != "three_point_adversarial":
            raise ContractError("a_value is defined for the three-point model only")
        p = self.three_point
        return max(2.0 * math.sqrt(p.epsilon_target) / (p.gamma_step * self.sigma), 1.0)

    def gate_open(self) -> bool:
        """True when the deterministic recursion reaches sqrt(eps) by the horizon.

        Evaluated from the closed-form deterministic iterate, not a stochastic
        trajectory.  When the gate is closed the model is identically zero.
        """
        if self.kind != "three_point_adversarial":
            raise ContractError("gate_open is defined for the three-point model only")
        p = self.three_point
        contracted = (1.0 - p.gamma_step * p.mu_problem) ** p.horizon_k * p.x0_abs
        return contracted <= math.sqrt(p.epsilon_target)

    def fire_step(self) -> int:
        if self.kind != "three_point_adversarial":
            raise ContractError("fire_step is defined for the three-point model only")
        return self.three_point.horizon_k - 1


def no_noise() -> NoiseModel:
    return NoiseModel(kind="none", sigma=0.0, alpha=2.0)


def gaussian_noise(sigma: float) -> NoiseModel:
    """Isotropic normal scaled so E||xi||^2 = sigma^2 in any dimension."""
    return NoiseModel(kind="gaussian", sigma=sigma, alpha=2.0)


def default_tail_index(alpha: float) -> float:
    """(alpha + 2) / 2 keeps the variance infinite whenever alpha < 2."""
    return (alpha + 2.0) / 2.0 if alpha < 2.0 else 3.0


def heavy_tail_noise(sigma: float, alpha: float, tail_index: float | None = None) -> NoiseModel:
    """Uniform direction times Pareto radius with E r^alpha = sigma^alpha exactly."""
    p = default_tail_index(alpha) if tail_index is None else tail_index
    return NoiseModel(kind="heavy_tail_radial", sigma=sigma, alpha=alpha, tail_index=p)


def three_point_noise(
    sigma: float,
    gamma_step: float,
    epsilon_target: float,
    horizon_k: int,
    mu_problem: float,
    x0_abs: float,
) -> NoiseModel:
    if gamma_step <= 0 or epsilon_target <= 0 or horizon_k < 1:
        raise ConfigError("three-point model needs gamma > 0, eps > 0, horizon >= 1")
    params = ThreePointParams(
        gamma_step=gamma_step,
        epsilon_target=epsilon_target,
        horizon_k=horizon_k,
        mu_problem=mu_problem,
        x0_abs=abs(x0_abs),
    )
    return NoiseModel(
        kind="three_point_adversarial", sigma=sigma, alpha=2.0, three_point=params
    )


def pareto_scale(sigma: float, alpha: float, tail_index: float) -> float:
    """Pareto minimum x_m with E r^alpha = sigma^alpha for shape `tail_index`."""
    return sigma * ((tail_index - alpha) / tail_index) ** (1.0 / alpha)


def _unit_directions(n: int, dim: int, gen: np.random.Generator) -> np.ndarray:
    g = gen.standard_normal((n, dim))
    norms = np.linalg.norm(g, axis=-1, keepdims=True)
    bad = norms[:, 0] == 0.0
    while np.any(bad):
        g[bad] = gen.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(g, axis=-1, keepdims=True)
        bad = norms[:, 0] == 0.0
    return g / norms


def sample_noise_batch(
    model: NoiseModel, k: int, dim: int, n: int, rng: RngStream
) -> np.ndarray:
    """Draw n independent perturbations for step k as an (n, dim) array."""
    if dim < 1:
        raise ContractError("dimension must be at least 1")
    gen = rng.gen
    if model.kind == "none" or model.sigma == 0.0:
        return np.zeros((n, dim))
    if model.kind == "gaussian":
        return (model.sigma / math.sqrt(dim)) * gen.standard_normal((n, dim))
    if model.kind == "heavy_tail_radial":
        xm = pareto_scale(model.sigma, model.alpha, model.tail_index)
        # inverse CDF with 1-U in (0, 1] so the radius is always finite
        r = xm * (1.0 - gen.random(n)) ** (-1.0 / model.tail_index)
        return _unit_directions(n, dim, gen) * r[:, None]
    if model.kind == "three_point_adversarial":
        if dim != 1:
            raise ConfigError("three-point model is one-dimensional")
        p = model.three_point
        if k >= p.horizon_k:
            raise ContractError("three-point model sampled past its horizon")
        out = np.zeros((n, 1))
        if k == model.fire_step() and model.gate_open():
            a = model.a_value()
            u = gen.random(n)
            kick = model.sigma * a
            out[u < 0.5 / a**2, 0] = -kick
            out[(u >= 0.5 / a**2) & (u < 1.0 / a**2), 0] = kick
        return out
    raise ConfigError(f"unknown noise kind {model.kind!r}")


def sample_noise(model: NoiseModel, k: int, dim: int, rng: RngStream) -> np.ndarray:
    """Draw one perturbation vector for step k."""
    return sample_noise_batch(model, k, dim, 1, rng)[0]


@dataclass(frozen=True)
class MomentCertificate:
    empirical_moment: float
    bound: float
    standard_error: float
    n_samples: int
    passed: bool


def certify_moment(
    model: NoiseModel,
    n_samples: int,
    rng: RngStream,
    dim: int = 1,
    batch_size: int = 500_000,
) -> MomentCertificate:
    """Estimate E||xi||^alpha and compare against sigma^alpha.

    Passes when the estimate is at most sigma^alpha plus three standard
    errors; the bound is exact (zero estimate) for the `none` model and tight
    by construction for the calibrated models.
    """
    if n_samples < 1000:
        raise ContractError("certify_moment needs at least 1000 samples")
    k = model.fire_step() if model.kind == "three_point_adversarial" else 0
    total = 0.0
    total_sq = 0.0
    drawn = 0
    i = 0
    while drawn < n_samples:
        m = min(batch_size, n_samples - drawn)
        xi = sample_noise_batch(model, k, dim, m, rng.child("certify", i))
        moments = np.linalg.norm(xi, axis=-1) ** model.alpha
        total += float(moments.sum())
        total_sq += float((moments**2).sum())
        drawn += m
        i += 1
    emp = total / n_samples
    var = max(total_sq / n_samples - emp**2, 0.0)
    se = math.sqrt(var / n_samples)
    bound = model.sigma**model.alpha
    return MomentCertificate(
        empirical_moment=emp,
        bound=bound,
        standard_error=se,
        n_samples=n_samples,
        passed=emp <= bound + 3 * se,
    )
