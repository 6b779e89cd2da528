"""Clipped stochastic first-order methods under heavy-tailed gradient noise.

Library layout:

- `core`: vectors, splittable seeded streams, problem records, assumption checks
- `clipping`: the clip operator and its moment envelopes plus a Monte Carlo verifier
- `noise`: calibrated perturbation models (gaussian, Pareto-radial, adversarial)
- `problems`: closed-form problem zoo with exact constants
- `schedules`: theorem-faithful parameter packs and restart plans
- `optimizers`: the clipped methods and their deterministic references
- `metrics`: restricted gap oracles and trajectory series
- `harness`: seeded trial sweeps, quantile reports, the adversarial comparison
- `cli`: the `clipopt` command line entry point
"""

__version__ = "0.1.0"

from .core import (
    ConfigError,
    ContractError,
    HypothesisError,
    MinProblem,
    RngStream,
    VipProblem,
    dot,
    norm,
    sample_in_ball,
    verify_min_problem,
    verify_vip_problem,
)
from .clipping import ClipMomentBounds, ClipMomentEstimate, clip, lemma_bounds, verify_lemma
from .noise import (
    NoiseModel,
    certify_moment,
    gaussian_noise,
    heavy_tail_noise,
    no_noise,
    sample_noise,
    three_point_noise,
)
from .problems import (
    make_cocoercive_affine_vip,
    make_counterexample_1d,
    make_pl_sine,
    make_quadratic_min,
    make_skew_bilinear,
    make_strong_affine_vip,
)
from .schedules import (
    RestartPlan,
    Schedule,
    restart_plan,
    seg_schedule,
    sgd_schedule,
    sgda_schedule,
    solve_bk,
    sstm_schedule,
)
from .optimizers import (
    TrialRecord,
    run_clipped_seg,
    run_clipped_sgd,
    run_clipped_sgda,
    run_clipped_sstm,
    run_extragradient,
    run_forward,
    run_r_clipped_sstm,
    run_sgd,
)
from .metrics import gap_bruteforce, gap_restricted_affine, metric_series, restricted_gap
from .harness import (
    ExperimentConfig,
    QuantileReport,
    counterexample_experiment,
    emit_report,
    fit_loglog_slope,
    run_trials,
)

__all__ = [name for name in dir() if not name.startswith("_")]
