"""Norm clipping and analytic moment envelopes for clipped noisy vectors.

`clip` shrinks a vector to norm at most `lam` while preserving direction.
`lemma_bounds` evaluates the closed-form bias / second-moment / deviation
envelopes that hold for any clipped random vector whose mean has norm at most
``lam / 2`` and whose alpha-th central moment is at most ``sigma ** alpha``;
`verify_lemma` checks those envelopes against a Monte Carlo estimate for a
concrete noise model.

Only clipping ships here, but the verifier depends on nothing except the
clipped samples themselves, so any other level-bounded nonlinearity could be
validated through the same interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ContractError, HypothesisError, RngStream, as_vector, norm
from .noise import NoiseModel, sample_noise_batch


def clip(x, lam: float):
    """Scale `x` down to norm at most `lam`; the zero vector stays zero.

    Returns `x` itself when no scaling is needed so that a run with inactive
    clipping is bit-identical to the unclipped recursion.
    """
    if lam <= 0:
        raise ContractError("clipping level must be positive")
    x = np.asarray(x, dtype=np.float64)
    n = float(np.linalg.norm(x))
    if n <= lam:
        return x
    return (lam / n) * x


def clip_batch(xs: np.ndarray, lam: float) -> np.ndarray:
    """Row-wise clip of an (n, d) sample matrix."""
    if lam <= 0:
        raise ContractError("clipping level must be positive")
    ns = np.linalg.norm(xs, axis=-1, keepdims=True)
    scale = np.minimum(1.0, lam / np.maximum(ns, 1e-300))
    return xs * scale


@dataclass(frozen=True)
class ClipMomentBounds:
    """Closed-form envelopes for a clipped random vector."""

    bias_bound: float
    second_moment_bound: float
    dev_bound: float
    lam: float
    sigma: float
    alpha: float


def lemma_bounds(sigma: float, alpha: float, lam: float) -> ClipMomentBounds:
    """Evaluate the analytic envelopes for given (sigma, alpha, lambda).

    bias <= 2^alpha sigma^alpha / lambda^(alpha-1),
    E||clip(X) - x||^2 <= 18 lambda^(2-alpha) sigma^alpha,
    ||clip(X) - E clip(X)|| <= 2 lambda  (almost surely, no moment needed).
    """
    if not (1.0 < alpha <= 2.0):
        raise ContractError("alpha must lie in (1, 2]")
    if sigma < 0:
        raise ContractError("sigma must be nonnegative")
    if lam <= 0:
        raise ContractError("clipping level must be positive")
    bias = (2.0**alpha) * (sigma**alpha) / (lam ** (alpha - 1.0))
    second = 18.0 * (lam ** (2.0 - alpha)) * (sigma**alpha)
    return ClipMomentBounds(
        bias_bound=bias,
        second_moment_bound=second,
        dev_bound=2.0 * lam,
        lam=lam,
        sigma=sigma,
        alpha=alpha,
    )


@dataclass(frozen=True)
class ClipMomentEstimate:
    """Monte Carlo counterparts of the analytic envelopes."""

    empirical_bias: float
    empirical_second_moment: float
    empirical_max_dev: float
    n_samples: int
    bias_se: float
    second_moment_se: float


def verify_lemma(
    noise: NoiseModel,
    mean_point,
    lam: float,
    n_samples: int,
    rng: RngStream,
    batch_size: int = 200_000,
) -> tuple[ClipMomentEstimate, ClipMomentBounds, bool]:
    """Check the clipped-moment envelopes on X = mean_point + xi by sampling.

    Requires ||mean_point|| <= lam / 2 (the envelope hypothesis).  Statistical
    estimates get a 3 standard-error slack; the almost-sure deviation bound
    2*lambda is checked sample by sample with no slack.

    Samples are drawn in batches from child streams keyed by batch index, so
    the result does not depend on the batch size and batches may be fanned out
    across workers.
    """
    x = as_vector(mean_point)
    if norm(x) > lam / 2.0:
        raise HypothesisError("mean point must have norm at most lambda / 2")
    if n_samples < 1:
        raise ContractError("need at least one sample")
    bounds = lemma_bounds(noise.sigma, noise.alpha, lam)

    dim = x.shape[0]
    n_batches = (n_samples + batch_size - 1) // batch_size

    def batches():
        drawn = 0
        for i in range(n_batches):
            m = min(batch_size, n_samples - drawn)
            drawn += m
            xi = sample_noise_batch(noise, 0, dim, m, rng.child("batch", i))
            yield clip_batch(x + xi, lam)

    # pass 1: mean of the clipped samples plus scalar moments
    total = np.zeros(dim)
    sum_sq = 0.0  # sum of ||X~ - x||^2
    sum_quad = 0.0  # sum of ||X~ - x||^4, for the second-moment SE
    sum_norm_sq = 0.0  # sum of ||X~||^2, for the bias SE via trace covariance
    for clipped in batches():
        total += clipped.sum(axis=0)
        dev = clipped - x
        sq = np.sum(dev * dev, axis=-1)
        sum_sq += float(sq.sum())
        sum_quad += float((sq * sq).sum())
        sum_norm_sq += float(np.sum(clipped * clipped))
    mean = total / n_samples

    empirical_bias = float(np.linalg.norm(mean - x))
    empirical_second = sum_sq / n_samples
    # SE of the mean vector's norm: sqrt(trace covariance / n)
    trace_cov = max(sum_norm_sq / n_samples - float(mean @ mean), 0.0)
    bias_se = float(np.sqrt(trace_cov / n_samples))
    var_sq = max(sum_quad / n_samples - empirical_second**2, 0.0)
    second_se = float(np.sqrt(var_sq / n_samples))

    # pass 2: regenerate the same batches for the max deviation from the mean
    max_dev = 0.0
    for clipped in batches():
        d = np.linalg.norm(clipped - mean, axis=-1)
        max_dev = max(max_dev, float(d.max()))

    estimate = ClipMomentEstimate(
        empirical_bias=empirical_bias,
        empirical_second_moment=empirical_second,
        empirical_max_dev=max_dev,
        n_samples=n_samples,
        bias_se=bias_se,
        second_moment_se=second_se,
    )
    passed = (
        empirical_bias <= bounds.bias_bound + 3 * bias_se
        and empirical_second <= bounds.second_moment_bound + 3 * second_se
        and max_dev <= bounds.dev_bound
    )
    return estimate, bounds, passed
