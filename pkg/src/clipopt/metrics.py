"""Convergence criteria, including the restricted gap with a dual oracle.

For a skew-symmetric affine operator the restricted gap over the ball of
radius R around the solution reduces to a linear maximization with the closed
form R * ||A (x - x*)||.  A grid-based brute force (dimension at most 3)
cross-checks the closed form and covers non-skew affine operators.
"""

from __future__ import annotations

import numpy as np

from .core import ConfigError, ContractError, as_vector

_SKEW_TOL = 1e-10


def is_skew(matrix: np.ndarray) -> bool:
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError("operator matrix must be square")
    scale = max(float(np.abs(m).max()), 1.0)
    return float(np.abs(m + m.T).max()) <= _SKEW_TOL * scale


def gap_restricted_affine(matrix, x_star, x, radius: float, grid_resolution: float | None = None) -> float:
    """Restricted gap of F(y) = A (y - x*) at x over the ball B_R(x*).

    Skew A: closed form R * ||A (x - x*)|| (the quadratic term vanishes and
    the maximum of the remaining linear form over the ball is attained on the
    sphere).  Non-skew A falls through to the brute-force grid.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError("operator matrix must be square")
    if radius <= 0:
        raise ContractError("radius must be positive")
    x_star = as_vector(x_star)
    x = as_vector(x)
    if is_skew(m):
        return radius * float(np.linalg.norm(m @ (x - x_star)))

    def operator(y):
        return (np.asarray(y, dtype=float) - x_star) @ m.T

    return gap_bruteforce(operator, x_star, x, radius, grid_resolution or radius / 100.0)


def gap_bruteforce(operator, x_star, x, radius: float, grid_resolution: float) -> float:
    """max over a grid covering B_R(x*) of <F(y), x - y>; dim <= 3 only.

    The grid is a uniform lattice over the bounding cube intersected with the
    ball; halving the resolution refines the lattice in place, so the result
    is monotone nondecreasing under refinement.  `operator` must accept
    batched points of shape (..., d).
    """
    x_star = as_vector(x_star)
    x = as_vector(x)
    d = x_star.shape[0]
    if d > 3:
        raise ConfigError("brute-force gap supports dimension at most 3")
    if radius <= 0 or grid_resolution <= 0:
        raise ContractError("radius and resolution must be positive")
    # number of intervals per axis; refining by halving doubles it
    n_axis = max(2, int(round(2.0 * radius / grid_resolution)))
    axis = np.linspace(-radius, radius, n_axis + 1)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=-1)
    points = points[np.linalg.norm(points, axis=-1) <= radius]
    ys = x_star + points
    vals = np.sum(np.asarray(operator(ys)) * (x - ys), axis=-1)
    return float(vals.max())


def restricted_gap(problem, x, radius: float | None = None) -> float:
    """Gap oracle for a zoo operator problem (affine representation required)."""
    if getattr(problem, "matrix", None) is None:
        raise ConfigError("gap is available for affine operator problems only")
    r = problem.radius if radius is None else radius
    return gap_restricted_affine(problem.matrix, problem.x_star, x, r)


# ---------------------------------------------------------------------------
# trajectory series
# ---------------------------------------------------------------------------


def checkpoint_steps(n_steps: int, ratio: float = 1.1) -> list[int]:
    """Geometrically thinned checkpoint indices: 0, ..., n_steps."""
    if n_steps < 0:
        raise ContractError("n_steps must be nonnegative")
    ks = {0, n_steps}
    k = 1.0
    while k < n_steps:
        ks.add(int(round(k)))
        k *= ratio
    return sorted(ks)


def metric_series(record, kind: str) -> list[tuple[int, float]]:
    """Extract the (step, value) series of the requested kind from a record."""
    if kind != record.metric_name:
        raise ConfigError(
            f"record carries metric {record.metric_name!r}, not {kind!r}"
        )
    return list(zip(record.steps, record.values))
