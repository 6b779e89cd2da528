"""Command line entry point.

Subcommands: run (single trial trajectory), trials (quantile report),
counterexample, verify-clip (envelope self-test over a grid), rates
(horizon sweep plus slope fit), schedule (print a pack as JSON).

Exit codes: 0 success, 2 config error, 3 hypothesis violation with every
horizon skipped, 4 self-test failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from .core import ConfigError, ContractError, HypothesisError, RngStream
from .clipping import verify_lemma
from .harness import (
    build_schedule,
    config_from_json_dict,
    counterexample_experiment,
    emit_report,
    fit_loglog_slope,
    load_config,
    noise_from_config,
    run_trials,
)
from .noise import heavy_tail_noise
from .optimizers import (
    run_clipped_seg,
    run_clipped_sgd,
    run_clipped_sgda,
    run_clipped_sstm,
    run_r_clipped_sstm,
    run_sgd,
)
from .problems import problem_from_config
from .schedules import restart_plan, seg_schedule, sgd_schedule, sgda_schedule, sstm_schedule

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HYPOTHESIS = 3
EXIT_SELFTEST = 4


def _add_common(parser):
    parser.add_argument("--config", help="path to the experiment JSON config")
    parser.add_argument("--seed", type=int, default=None, help="seed base override")
    parser.add_argument("--threads", type=int, default=None, help="worker processes")
    parser.add_argument("--out", help="output path (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default="json")


def _load(args):
    if not args.config:
        raise ConfigError("--config is required for this subcommand")
    config = load_config(args.config)
    if args.seed is not None:
        config.seed_base = args.seed
    if args.threads is not None:
        config.threads = args.threads
    return config


def _write_text(args, text: str):
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_run(args) -> int:
    config = _load(args)
    root = RngStream(config.seed_base)
    problem = problem_from_config(config.problem, root.child("problem"))
    noise = noise_from_config(config.noise)
    stream = root.child("run")
    k = config.ks[0]
    if config.method == "sgd":
        rec = run_sgd(problem, noise, config.gamma, k, stream)
    elif config.method == "r_clipped_sstm":
        if config.epsilon is None:
            raise ConfigError("r_clipped_sstm needs a target epsilon in the config")
        plan = restart_plan(
            lipschitz_l=problem.lipschitz_l,
            mu=problem.mu_sc,
            radius=problem.radius,
            sigma=float(config.noise.get("sigma", 0.0)),
            alpha=float(config.noise.get("alpha", 2.0)),
            epsilon=config.epsilon,
            beta=config.beta,
        )
        rec = run_r_clipped_sstm(problem, noise, plan, stream)
    else:
        schedule = build_schedule(config, problem, k)
        runner = {
            "clipped_sgd": run_clipped_sgd,
            "clipped_sstm": run_clipped_sstm,
            "clipped_seg": run_clipped_seg,
            "clipped_sgda": run_clipped_sgda,
        }[config.method]
        rec = runner(problem, noise, schedule, k, stream)
    if args.format == "csv":
        import io

        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["seed", "method", "case", "k", "metric"])
        writer.writerows(rec.to_csv_rows())
        _write_text(args, buf.getvalue())
    else:
        _write_text(args, json.dumps(rec.to_json_dict(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _cmd_trials(args) -> int:
    config = _load(args)
    report = run_trials(config)
    if not report.entries:
        sys.stderr.write("every horizon was skipped (hypothesis violations)\n")
        for item in report.skipped:
            sys.stderr.write(f"  K={item['k']}: {item['reason']}\n")
        return EXIT_HYPOTHESIS
    if args.out:
        emit_report(report, args.out, args.format)
    else:
        text = report.to_csv() if args.format == "csv" else json.dumps(
            report.to_json_dict(), indent=2, sort_keys=True
        ) + "\n"
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_rates(args) -> int:
    config = _load(args)
    report = run_trials(config)
    if not report.entries:
        return EXIT_HYPOTHESIS
    points = [(e.k, e.quantile) for e in report.entries if e.quantile > 0]
    fit = fit_loglog_slope(points) if len(points) >= 4 else None
    payload = {"report": report.to_json_dict(), "fit": fit}
    _write_text(args, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _cmd_counterexample(args) -> int:
    rng = RngStream(args.seed if args.seed is not None else 0)
    result = counterexample_experiment(
        epsilon=args.epsilon,
        mu=args.mu,
        sigma=args.sigma,
        x0=args.x0,
        n_steps=args.k,
        gamma=args.gamma,
        n_trials=args.trials,
        rng=rng,
        beta=args.beta,
        clipped_k=args.clipped_k,
    )
    _write_text(args, json.dumps(result, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _cmd_verify_clip(args) -> int:
    rng = RngStream(args.seed if args.seed is not None else 0)
    alphas = [float(a) for a in args.alphas.split(",")]
    sigmas = [float(s) for s in args.sigmas.split(",")]
    lambda_factors = [float(f) for f in args.lambda_factors.split(",")]
    rows = []
    all_ok = True
    for alpha in alphas:
        for sigma in sigmas:
            for factor in lambda_factors:
                lam = factor * sigma
                noise = heavy_tail_noise(sigma, alpha)
                mean_point = [lam / 4.0] + [0.0] * (args.dim - 1)
                est, bounds, ok = verify_lemma(
                    noise,
                    mean_point,
                    lam,
                    args.samples,
                    rng.child("grid", f"{alpha}/{sigma}/{factor}"),
                )
                all_ok = all_ok and ok
                rows.append(
                    {
                        "alpha": alpha,
                        "sigma": sigma,
                        "lambda": lam,
                        "bias": est.empirical_bias,
                        "bias_bound": bounds.bias_bound,
                        "second_moment": est.empirical_second_moment,
                        "second_moment_bound": bounds.second_moment_bound,
                        "max_dev": est.empirical_max_dev,
                        "dev_bound": bounds.dev_bound,
                        "pass": ok,
                    }
                )
    _write_text(args, json.dumps({"grid": rows, "all_pass": all_ok}, indent=2) + "\n")
    return EXIT_OK if all_ok else EXIT_SELFTEST


def _cmd_schedule(args) -> int:
    kwargs = dict(sigma=args.sigma, alpha=args.alpha, k=args.k, beta=args.beta, fidelity=args.fidelity)
    if args.method == "clipped_sgd":
        sched = sgd_schedule(
            args.case,
            lipschitz_l=args.l,
            mu=args.mu,
            radius=args.r,
            delta=args.delta,
            **kwargs,
        )
    elif args.method == "clipped_sstm":
        sched = sstm_schedule(lipschitz_l=args.l, radius=args.r, **kwargs)
    elif args.method == "clipped_seg":
        sched = seg_schedule(args.case, lipschitz_l=args.l, mu=args.mu, radius=args.r, **kwargs)
    elif args.method == "clipped_sgda":
        sched = sgda_schedule(args.case, ell=args.l, mu=args.mu, radius=args.r, **kwargs)
    else:
        raise ConfigError(f"schedule printing does not support {args.method!r}")
    _write_text(args, json.dumps(sched.to_json_dict(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clipopt",
        description="clipped stochastic methods under heavy-tailed noise",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single trial, trajectory output")
    _add_common(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_trials = sub.add_parser("trials", help="seeded trial sweep, quantile report")
    _add_common(p_trials)
    p_trials.set_defaults(fn=_cmd_trials)

    p_rates = sub.add_parser("rates", help="trial sweep plus log-log slope fit")
    _add_common(p_rates)
    p_rates.set_defaults(fn=_cmd_rates)

    p_cx = sub.add_parser("counterexample", help="adversarial-noise comparison")
    _add_common(p_cx)
    p_cx.add_argument("--epsilon", type=float, required=True)
    p_cx.add_argument("--mu", type=float, default=1.0)
    p_cx.add_argument("--sigma", type=float, default=1.0)
    p_cx.add_argument("--x0", type=float, default=1.0)
    p_cx.add_argument("--k", type=int, required=True)
    p_cx.add_argument("--gamma", type=float, required=True)
    p_cx.add_argument("--trials", type=int, default=10_000)
    p_cx.add_argument("--beta", type=float, default=0.05)
    p_cx.add_argument("--clipped-k", type=int, default=None, dest="clipped_k")
    p_cx.set_defaults(fn=_cmd_counterexample)

    p_clip = sub.add_parser("verify-clip", help="clipped-moment envelope self-test")
    _add_common(p_clip)
    p_clip.add_argument("--alphas", default="1.2,1.5,2.0")
    p_clip.add_argument("--sigmas", default="0.5,1.0")
    p_clip.add_argument("--lambda-factors", default="4,16", dest="lambda_factors")
    p_clip.add_argument("--dim", type=int, default=4)
    p_clip.add_argument("--samples", type=int, default=200_000)
    p_clip.set_defaults(fn=_cmd_verify_clip)

    p_sched = sub.add_parser("schedule", help="print a theorem pack as JSON")
    _add_common(p_sched)
    p_sched.add_argument("--method", required=True)
    p_sched.add_argument("--case", default="convex")
    p_sched.add_argument("--l", type=float, required=True, help="L or ell")
    p_sched.add_argument("--mu", type=float, default=0.0)
    p_sched.add_argument("--r", type=float, default=None)
    p_sched.add_argument("--delta", type=float, default=None)
    p_sched.add_argument("--sigma", type=float, default=0.0)
    p_sched.add_argument("--alpha", type=float, default=2.0)
    p_sched.add_argument("--k", type=int, required=True)
    p_sched.add_argument("--beta", type=float, default=0.05)
    p_sched.add_argument("--fidelity", choices=("theory", "practical"), default="theory")
    p_sched.set_defaults(fn=_cmd_schedule)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except HypothesisError as exc:
        sys.stderr.write(f"hypothesis violation: {exc}\n")
        return EXIT_HYPOTHESIS
    except (ConfigError, ContractError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
