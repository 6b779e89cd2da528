"""Problem zoo: closed-form instances with exact certified constants.

Minimization: diagonal quadratics (with the one-dimensional mu x^2 / 2
special case) and a separable sine-perturbed quadratic that is non-convex but
gradient dominated.  Operators: skew bilinear games, strongly monotone affine
operators with a rotational part, and symmetric positive definite affine
operators that are cocoercive.  All constants (L, mu, ell) are exact by
construction so that schedule computations have honest inputs.
"""

from __future__ import annotations

import dataclasses
import functools

import numpy as np

from .core import (
    ConfigError,
    MinProblem,
    RngStream,
    VipProblem,
    as_vector,
    norm,
    sample_in_ball,
)

# ---------------------------------------------------------------------------
# quadratic minimization
# ---------------------------------------------------------------------------


def _declared_radius(radius, x0, x_star) -> float:
    """Radius must upper bound the initial distance; default is the exact one."""
    exact = norm(as_vector(x0) - as_vector(x_star))
    if radius is None:
        return exact
    if radius < exact:
        raise ConfigError(
            f"declared radius {radius} is below the initial distance {exact}"
        )
    return float(radius)


def make_quadratic_min(
    dim: int,
    mu: float,
    lipschitz_l: float,
    x0,
    rng: RngStream | None = None,
    x_star=None,
    radius: float | None = None,
) -> MinProblem:
    """f(x) = 1/2 (x - x*)^T D (x - x*) with diagonal spectrum in [mu, L].

    Both endpoints of the spectrum are realized, so L and mu are tight.  The
    solution is drawn uniformly from the unit ball unless given explicitly.
    `radius` may declare any upper bound on ||x0 - x*|| (default: the exact
    distance).
    """
    if not (0 <= mu <= lipschitz_l) or lipschitz_l <= 0:
        raise ConfigError("need 0 <= mu <= L with L > 0")
    if dim < 1:
        raise ConfigError("dim must be at least 1")
    if dim == 1 and mu != lipschitz_l:
        raise ConfigError("a 1-d spectrum cannot realize distinct mu and L")

    if x_star is None:
        rng = rng or RngStream(0)
        x_star = sample_in_ball(np.zeros(dim), 1.0, rng.child("x_star"))
    x_star = as_vector(x_star)

    diag = np.empty(dim)
    diag[0] = lipschitz_l
    if dim >= 2:
        diag[1] = mu
        if dim > 2:
            gen = (rng or RngStream(0)).child("spectrum").gen
            diag[2:] = gen.uniform(mu, lipschitz_l, size=dim - 2)

    def value(x):
        e = np.asarray(x, dtype=float) - x_star
        return 0.5 * np.sum(diag * e * e, axis=-1)

    def gradient(x):
        e = np.asarray(x, dtype=float) - x_star
        return diag * e

    tags = {"convex"}
    if mu > 0:
        tags |= {"strongly_convex", "quasi_strongly_convex", "pl"}
    x0 = as_vector(x0)
    if x0.shape[0] != dim:
        raise ConfigError("x0 has the wrong dimension")
    return MinProblem(
        dim=dim,
        value=value,
        gradient=gradient,
        x_star=x_star,
        f_star=0.0,
        lipschitz_l=float(lipschitz_l),
        mu_pl=float(mu),
        mu_sc=float(mu),
        class_tags=frozenset(tags),
        x0=x0,
        radius=_declared_radius(radius, x0, x_star),
        name="quadratic_min",
        quad_diag=diag,
    )


def make_counterexample_1d(mu: float, x0: float) -> MinProblem:
    """The 1-d problem mu x^2 / 2 with solution at zero (L = mu)."""
    if mu <= 0:
        raise ConfigError("mu must be positive")
    p = make_quadratic_min(1, mu, mu, [float(x0)], x_star=[0.0])
    return dataclasses.replace(p, name="counterexample_1d")


# ---------------------------------------------------------------------------
# gradient-dominated sine
# ---------------------------------------------------------------------------

_PL_GRID_HALF_WIDTH = 10.0
_PL_GRID_STEP = 1e-4
_PL_SAFETY = 0.9


@functools.lru_cache(maxsize=1)
def pl_sine_constant() -> float:
    """Grid-certified gradient domination constant for x^2 + 3 sin^2 x.

    Minimum of f'(x)^2 / (2 f(x)) over [-10, 10] at step 1e-4, cut by a 10%
    safety margin.  The separable sum inherits the same constant in any
    dimension.
    """
    x = np.arange(_PL_GRID_STEP, _PL_GRID_HALF_WIDTH + _PL_GRID_STEP, _PL_GRID_STEP)
    f = x * x + 3.0 * np.sin(x) ** 2
    g = 2.0 * x + 3.0 * np.sin(2.0 * x)
    ratio = g * g / (2.0 * f)
    return _PL_SAFETY * float(ratio.min())


def make_pl_sine(dim: int, x0) -> MinProblem:
    """Separable f(x) = sum_i (x_i^2 + 3 sin^2 x_i): non-convex, gradient dominated.

    L = 8 from f'' in [-4, 8]; the domination constant is grid-certified.
    """
    if dim < 1:
        raise ConfigError("dim must be at least 1")

    def value(x):
        x = np.asarray(x, dtype=float)
        return np.sum(x * x + 3.0 * np.sin(x) ** 2, axis=-1)

    def gradient(x):
        x = np.asarray(x, dtype=float)
        return 2.0 * x + 3.0 * np.sin(2.0 * x)

    x0 = as_vector(x0)
    if x0.shape[0] != dim:
        raise ConfigError("x0 has the wrong dimension")
    x_star = np.zeros(dim)
    return MinProblem(
        dim=dim,
        value=value,
        gradient=gradient,
        x_star=x_star,
        f_star=0.0,
        lipschitz_l=8.0,
        mu_pl=pl_sine_constant(),
        mu_sc=0.0,
        class_tags=frozenset({"nonconvex", "pl"}),
        x0=x0,
        radius=norm(x0),
        name="pl_sine",
    )


# ---------------------------------------------------------------------------
# affine operators
# ---------------------------------------------------------------------------


def _skew_blocks(dim: int, max_coeff: float, gen) -> np.ndarray:
    """Block-diagonal skew matrix from 2x2 rotations; norm equals max_coeff."""
    s = np.zeros((dim, dim))
    n_blocks = dim // 2
    if n_blocks == 0 or max_coeff == 0.0:
        return s
    coeffs = gen.uniform(0.5 * max_coeff, max_coeff, size=n_blocks)
    coeffs[0] = max_coeff
    for b, c in enumerate(coeffs):
        i = 2 * b
        s[i, i + 1] = c
        s[i + 1, i] = -c
    return s


def _affine_vip(matrix: np.ndarray, x_star, x0, tags, lip, mu_qsm, ell, name, radius=None):
    x_star = as_vector(x_star)
    x0 = as_vector(x0)
    if x0.shape[0] != x_star.shape[0]:
        raise ConfigError("x0 has the wrong dimension")

    def operator(x):
        e = np.asarray(x, dtype=float) - x_star
        return e @ matrix.T

    return VipProblem(
        dim=x_star.shape[0],
        operator=operator,
        x_star=x_star,
        lipschitz_l=float(lip),
        mu_qsm=float(mu_qsm),
        ell_coco=float(ell),
        class_tags=frozenset(tags),
        x0=x0,
        radius=_declared_radius(radius, x0, x_star),
        name=name,
        matrix=matrix,
    )


def make_skew_bilinear(
    dim: int, scale_l: float, x0, rng: RngStream | None = None, x_star=None,
    radius: float | None = None,
) -> VipProblem:
    """F(x) = A (x - x*) with A skew-symmetric in rotation blocks, ||A|| = L.

    Monotone (the symmetric part vanishes) but in no way contractive; this is
    the bilinear game operator in disguise.
    """
    if dim < 2 or dim % 2 != 0:
        raise ConfigError("skew bilinear operator needs even dim >= 2")
    if scale_l <= 0:
        raise ConfigError("L must be positive")
    rng = rng or RngStream(0)
    if x_star is None:
        x_star = sample_in_ball(np.zeros(dim), 1.0, rng.child("x_star"))
    a = _skew_blocks(dim, scale_l, rng.child("blocks").gen)
    return _affine_vip(
        a, x_star, x0, {"monotone", "lipschitz"}, scale_l, 0.0, 0.0, "skew_bilinear",
        radius=radius,
    )


def make_strong_affine_vip(
    dim: int, mu: float, lipschitz_l: float, x0, rng: RngStream | None = None,
    x_star=None, radius: float | None = None,
) -> VipProblem:
    """F(x) = (mu I + S)(x - x*) with S skew and ||mu I + S|| = L exactly.

    <F(x), x - x*> = mu ||x - x*||^2 holds with equality: the skew part drops
    out of the inner product, so mu is tight.
    """
    if not (0 < mu <= lipschitz_l):
        raise ConfigError("need 0 < mu <= L")
    rng = rng or RngStream(0)
    if x_star is None:
        x_star = sample_in_ball(np.zeros(dim), 1.0, rng.child("x_star"))
    skew_norm = float(np.sqrt(max(lipschitz_l**2 - mu**2, 0.0)))
    if dim == 1 and skew_norm > 0:
        raise ConfigError("1-d operators cannot carry a rotational part; use L = mu")
    m = mu * np.eye(dim) + _skew_blocks(dim, skew_norm, rng.child("blocks").gen)
    # ||mu I + S||^2 = mu^2 + ||S||^2 for skew S
    lip = float(np.sqrt(mu**2 + skew_norm**2))
    return _affine_vip(
        m,
        x_star,
        x0,
        {"quasi_strongly_monotone", "monotone", "lipschitz"},
        lip,
        mu,
        0.0,
        "strong_affine_vip",
        radius=radius,
    )


def make_cocoercive_affine_vip(
    dim: int, ell: float, x0, rng: RngStream | None = None, x_star=None,
    radius: float | None = None,
) -> VipProblem:
    """F(x) = M (x - x*) with M symmetric positive definite, spectrum in (0, ell].

    M^2 <= ell M gives ||F(x)||^2 <= ell <F(x), x - x*> everywhere, with
    equality when M = ell I.
    """
    if ell <= 0:
        raise ConfigError("ell must be positive")
    rng = rng or RngStream(0)
    if x_star is None:
        x_star = sample_in_ball(np.zeros(dim), 1.0, rng.child("x_star"))
    diag = np.empty(dim)
    diag[0] = ell
    if dim > 1:
        diag[1:] = rng.child("spectrum").gen.uniform(0.1 * ell, ell, size=dim - 1)
    m = np.diag(diag)
    return _affine_vip(
        m,
        x_star,
        x0,
        {"star_cocoercive", "quasi_strongly_monotone", "monotone", "lipschitz"},
        float(diag.max()),
        float(diag.min()),
        ell,
        "cocoercive_affine_vip",
        radius=radius,
    )


# ---------------------------------------------------------------------------
# config plumbing (harness JSON schema lives in clipopt.harness)
# ---------------------------------------------------------------------------

FAMILIES = (
    "quadratic_min",
    "pl_sine",
    "counterexample_1d",
    "skew_bilinear",
    "strong_affine_vip",
    "cocoercive_affine_vip",
)


def problem_from_config(cfg: dict, rng: RngStream):
    """Build a problem instance from its JSON-config dict."""
    cfg = dict(cfg)
    family = cfg.pop("family", None)
    if family not in FAMILIES:
        raise ConfigError(f"unknown problem family {family!r}")
    x0 = cfg.pop("x0", None)
    if x0 is None:
        raise ConfigError("problem config needs x0")
    x_star = cfg.pop("x_star", None)
    radius = cfg.pop("radius", None)
    known = {
        "quadratic_min": ("dim", "mu", "l"),
        "pl_sine": ("dim",),
        "counterexample_1d": ("mu",),
        "skew_bilinear": ("dim", "l"),
        "strong_affine_vip": ("dim", "mu", "l"),
        "cocoercive_affine_vip": ("dim", "ell"),
    }[family]
    extra = set(cfg) - set(known)
    if extra:
        raise ConfigError(f"unknown problem keys for {family}: {sorted(extra)}")
    missing = set(known) - set(cfg)
    if missing:
        raise ConfigError(f"missing problem keys for {family}: {sorted(missing)}")
    if family == "quadratic_min":
        return make_quadratic_min(
            cfg["dim"], cfg["mu"], cfg["l"], x0, rng, x_star=x_star, radius=radius
        )
    if family == "pl_sine":
        return make_pl_sine(cfg["dim"], x0)
    if family == "counterexample_1d":
        return make_counterexample_1d(cfg["mu"], x0[0] if np.ndim(x0) else x0)
    if family == "skew_bilinear":
        return make_skew_bilinear(
            cfg["dim"], cfg["l"], x0, rng, x_star=x_star, radius=radius
        )
    if family == "strong_affine_vip":
        return make_strong_affine_vip(
            cfg["dim"], cfg["mu"], cfg["l"], x0, rng, x_star=x_star, radius=radius
        )
    return make_cocoercive_affine_vip(
        cfg["dim"], cfg["ell"], x0, rng, x_star=x_star, radius=radius
    )
