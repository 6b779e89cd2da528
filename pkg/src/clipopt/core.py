"""Dense vector helpers, splittable seeded randomness, and problem contracts.

Vectors are plain 1-d float64 numpy arrays throughout the package.  Problems
are immutable records bundling closed-form callables with their certified
constants; `verify_min_problem` / `verify_vip_problem` check the declared
constants by Monte Carlo sampling inside the problem's declared ball.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Vector = np.ndarray

_U64 = 2**64 - 1


class ContractError(ValueError):
    """An operation was called outside its stated contract."""


class ConfigError(ValueError):
    """Invalid configuration values."""


class HypothesisError(ValueError):
    """A schedule or estimator hypothesis (e.g. log-term >= 1) fails."""


# ---------------------------------------------------------------------------
# vector ops
# ---------------------------------------------------------------------------


def as_vector(x) -> Vector:
    """Coerce to a 1-d float64 array."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise ContractError(f"expected a 1-d vector, got shape {v.shape}")
    return v


def dot(a: Vector, b: Vector) -> float:
    """Euclidean inner product; dimensions must match."""
    a = as_vector(a)
    b = as_vector(b)
    if a.shape[0] != b.shape[0]:
        raise ContractError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(a @ b)


def norm(a: Vector) -> float:
    """Euclidean norm."""
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64)))


def check_finite(a: Vector, what: str = "vector") -> Vector:
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{what} contains non-finite entries")
    return a


def sample_in_ball(center: Vector, radius: float, rng: "RngStream") -> Vector:
    """Uniform sample from the closed ball around `center`.

    Radius zero returns the center exactly.
    """
    if radius < 0:
        raise ContractError("radius must be nonnegative")
    center = as_vector(center)
    if radius == 0.0:
        return center.copy()
    d = center.shape[0]
    g = rng.gen.standard_normal(d)
    n = np.linalg.norm(g)
    while n == 0.0:  # probability zero, but keep the contract airtight
        g = rng.gen.standard_normal(d)
        n = np.linalg.norm(g)
    r = radius * rng.gen.random() ** (1.0 / d)
    return center + (r / n) * g


# ---------------------------------------------------------------------------
# splittable seeded randomness
# ---------------------------------------------------------------------------


def _label_to_int(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & _U64
    if isinstance(label, str):
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise ContractError(f"stream labels must be int or str, got {type(label)!r}")


class RngStream:
    """Deterministic splittable random stream.

    Same seed and label path always reproduce the same draws, across runs and
    platforms.  Child streams are statistically independent of the parent and
    of each other, and do not depend on how much the parent has consumed.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        self.seed = int(seed) & _U64
        self.path = tuple(int(p) & _U64 for p in _path)
        self.gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, *self.path]))
        )

    def child(self, *labels) -> "RngStream":
        """Derive an independent stream keyed by the given labels."""
        if not labels:
            raise ContractError("child() needs at least one label")
        return RngStream(self.seed, self.path + tuple(_label_to_int(x) for x in labels))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"


# ---------------------------------------------------------------------------
# problem records
# ---------------------------------------------------------------------------

MIN_TAGS = {"nonconvex", "pl", "convex", "quasi_strongly_convex", "strongly_convex"}
VIP_TAGS = {"monotone", "quasi_strongly_monotone", "star_cocoercive", "lipschitz"}


@dataclass(frozen=True)
class MinProblem:
    """Minimization problem with closed-form solution and certified constants.

    `value` and `gradient` accept arrays with any leading batch dimensions.
    `radius` is a certified upper bound on ||x0 - x_star||; assumption checks
    sample inside the ball of radius ``4 * radius`` around the solution.
    """

    dim: int
    value: Callable[[Vector], float]
    gradient: Callable[[Vector], Vector]
    x_star: Vector
    f_star: float
    lipschitz_l: float
    mu_pl: float
    mu_sc: float
    class_tags: frozenset
    x0: Vector
    radius: float
    name: str = ""
    quad_diag: Vector | None = None

    def __post_init__(self):
        unknown = set(self.class_tags) - MIN_TAGS
        if unknown:
            raise ConfigError(f"unknown minimization tags: {sorted(unknown)}")

    def suboptimality(self, x: Vector) -> float:
        return float(self.value(x)) - self.f_star

    def dist_to_star(self, x: Vector) -> float:
        return norm(np.asarray(x) - self.x_star)


@dataclass(frozen=True)
class VipProblem:
    """Root-finding problem for an operator with certified structure constants.

    For all shipped problems the operator is affine, F(x) = matrix @ (x - x_star),
    so `matrix` carries the exact representation used by the gap oracle.
    """

    dim: int
    operator: Callable[[Vector], Vector]
    x_star: Vector
    lipschitz_l: float
    mu_qsm: float
    ell_coco: float
    class_tags: frozenset
    x0: Vector
    radius: float
    name: str = ""
    matrix: Vector | None = None

    def __post_init__(self):
        unknown = set(self.class_tags) - VIP_TAGS
        if unknown:
            raise ConfigError(f"unknown VIP tags: {sorted(unknown)}")

    def dist_to_star(self, x: Vector) -> float:
        return norm(np.asarray(x) - self.x_star)


# ---------------------------------------------------------------------------
# sampled assumption checks
# ---------------------------------------------------------------------------

_REL = 1e-7
_ABS = 1e-9


def _pairs_in_ball(center, radius, n, rng):
    xs = np.stack([sample_in_ball(center, radius, rng) for _ in range(n)])
    ys = np.stack([sample_in_ball(center, radius, rng) for _ in range(n)])
    return xs, ys


def verify_min_problem(
    problem: MinProblem,
    n_samples: int = 1000,
    rng: RngStream | None = None,
    ball_factor: float = 4.0,
) -> dict:
    """Monte-Carlo check of the declared constants on B_{4R}(x*).

    Returns a dict of per-assumption booleans plus worst observed slacks;
    key "ok" aggregates everything the problem's tags claim.
    """
    rng = rng or RngStream(0)
    r = ball_factor * max(problem.radius, 1.0)
    out: dict = {"details": {}}

    out["stationary_point"] = (
        abs(float(problem.value(problem.x_star)) - problem.f_star) <= 1e-9
        and norm(problem.gradient(problem.x_star)) <= 1e-9
    )

    xs, ys = _pairs_in_ball(problem.x_star, r, n_samples, rng.child("pairs"))
    gx = problem.gradient(xs)
    gy = problem.gradient(ys)
    lhs = np.linalg.norm(gx - gy, axis=-1)
    rhs = problem.lipschitz_l * np.linalg.norm(xs - ys, axis=-1)
    out["smoothness"] = bool(np.all(lhs <= rhs * (1 + _REL) + _ABS))
    out["details"]["smoothness_max_ratio"] = float(
        np.max(lhs / np.maximum(rhs, 1e-300))
    )

    fx = np.asarray(problem.value(xs), dtype=float)
    if "pl" in problem.class_tags and problem.mu_pl > 0:
        gap = fx - problem.f_star
        sq = np.sum(gx * gx, axis=-1)
        out["pl"] = bool(np.all(sq >= 2 * problem.mu_pl * gap * (1 - _REL) - _ABS))
    if "quasi_strongly_convex" in problem.class_tags and problem.mu_sc > 0:
        inner = np.sum(gx * (problem.x_star - xs), axis=-1)
        d2 = np.sum((xs - problem.x_star) ** 2, axis=-1)
        lhs_q = fx + inner + 0.5 * problem.mu_sc * d2
        out["quasi_strongly_convex"] = bool(
            np.all(problem.f_star >= lhs_q - _REL * np.abs(lhs_q) - _ABS)
        )

    checked = [v for k, v in out.items() if k != "details"]
    out["ok"] = all(checked)
    return out


def verify_vip_problem(
    problem: VipProblem,
    n_samples: int = 1000,
    rng: RngStream | None = None,
    ball_factor: float = 4.0,
) -> dict:
    """Monte-Carlo check of the declared operator constants on B_{4R}(x*)."""
    rng = rng or RngStream(0)
    r = ball_factor * max(problem.radius, 1.0)
    out: dict = {"details": {}}

    out["zero_at_solution"] = norm(problem.operator(problem.x_star)) <= 1e-9

    xs, ys = _pairs_in_ball(problem.x_star, r, n_samples, rng.child("pairs"))
    fx = problem.operator(xs)
    fy = problem.operator(ys)

    if "lipschitz" in problem.class_tags:
        lhs = np.linalg.norm(fx - fy, axis=-1)
        rhs = problem.lipschitz_l * np.linalg.norm(xs - ys, axis=-1)
        out["lipschitz"] = bool(np.all(lhs <= rhs * (1 + _REL) + _ABS))
        out["details"]["lipschitz_max_ratio"] = float(
            np.max(lhs / np.maximum(rhs, 1e-300))
        )
    if "monotone" in problem.class_tags:
        inner = np.sum((fx - fy) * (xs - ys), axis=-1)
        scale = np.linalg.norm(fx - fy, axis=-1) * np.linalg.norm(xs - ys, axis=-1)
        out["monotone"] = bool(np.all(inner >= -_REL * scale - _ABS))
    if "quasi_strongly_monotone" in problem.class_tags and problem.mu_qsm > 0:
        inner = np.sum(fx * (xs - problem.x_star), axis=-1)
        d2 = np.sum((xs - problem.x_star) ** 2, axis=-1)
        out["quasi_strongly_monotone"] = bool(
            np.all(inner >= problem.mu_qsm * d2 * (1 - _REL) - _ABS)
        )
    if "star_cocoercive" in problem.class_tags and problem.ell_coco > 0:
        sq = np.sum(fx * fx, axis=-1)
        inner = np.sum(fx * (xs - problem.x_star), axis=-1)
        out["star_cocoercive"] = bool(
            np.all(sq <= problem.ell_coco * inner * (1 + _REL) + _ABS)
        )

    checked = [v for k, v in out.items() if k != "details"]
    out["ok"] = all(checked)
    return out
