"""Command-line front end.

Subcommands: ``denoise`` (shrink a matrix file), ``activeset`` (report the
selected singular-value indices), ``experiment`` (run a replication sweep
from a JSON config), and ``asymptotics`` (query the large-dimension
reference formulas).  Exit codes: 0 success, 1 usage error, 2 domain or
numerical error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import activeset, experiments, linalg, matrixio, risk, rmt, shrinkage
from .errors import SvshrinkError
from .models import Gamma, Gaussian, Poisson
from .shrinkage import VALID_OBJECTIVES

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DOMAIN = 2

REPORT_MC_SAMPLES = 64  # probe directions for reported (not optimized) risks


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1 here
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="svshrink", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    den = sub.add_parser("denoise", help="denoise a matrix file by singular-value shrinkage")
    den.add_argument("--input", required=True)
    den.add_argument("--family", required=True, choices=["gaussian", "gamma", "poisson"])
    den.add_argument("--tau", type=float)
    den.add_argument("--L", type=float)
    den.add_argument("--method", required=True, choices=["pca", "soft", "weights"])
    den.add_argument("--objective", choices=["sure", "gsure", "sukls", "pure", "pukla"])
    den.add_argument("--rank", type=int)
    den.add_argument("--active-set", choices=["bulk", "greedy", "all"])
    den.add_argument("--epsilon", type=float, default=1e-6)
    den.add_argument("--seed", type=int, default=0)
    den.add_argument("--output", required=True)

    act = sub.add_parser("activeset", help="report the selected active set of singular values")
    act.add_argument("--input", required=True)
    act.add_argument("--family", required=True, choices=["gaussian", "gamma", "poisson"])
    act.add_argument("--tau", type=float)
    act.add_argument("--L", type=float)
    act.add_argument("--method", choices=["bulk", "greedy"])
    act.add_argument("--epsilon", type=float, default=1e-6)
    act.add_argument("--output")

    exp = sub.add_parser("experiment", help="run a seeded replication sweep from a JSON config")
    exp.add_argument("--config", required=True)
    exp.add_argument("--out-dir", required=True)
    exp.add_argument("--threads", type=int, default=1)

    asym = sub.add_parser("asymptotics", help="query the large-dimension reference formulas")
    asym.add_argument("--c", type=float, required=True)
    group = asym.add_mutually_exclusive_group(required=True)
    group.add_argument("--sigma", type=float)
    group.add_argument("--y", type=float)
    return parser


def _model_from_args(args) -> Gaussian | Gamma | Poisson:
    if args.family == "gaussian":
        if args.tau is None:
            raise UsageError("--family gaussian requires --tau")
        if args.L is not None:
            raise UsageError("--L applies to the gamma family only")
        return Gaussian(tau=args.tau)
    if args.family == "gamma":
        if args.L is None:
            raise UsageError("--family gamma requires --L")
        if args.tau is not None:
            raise UsageError("--tau applies to the gaussian family only")
        return Gamma(shape=args.L)
    if args.tau is not None or args.L is not None:
        raise UsageError("--tau/--L do not apply to the poisson family")
    return Poisson()


def _resolve_objective(args, model) -> str:
    objective = args.objective or shrinkage.default_objective(model)
    if objective not in VALID_OBJECTIVES[model.family]:
        raise UsageError(
            f"--objective {objective} is not defined for --family {model.family}; "
            f"valid pairings: " + "; ".join(f"{k}: {', '.join(v)}" for k, v in VALID_OBJECTIVES.items())
        )
    return objective


def _resolve_active(args, y, fact, model, epsilon) -> tuple[int, ...]:
    if args.rank is not None and args.active_set is not None:
        raise UsageError("--rank and --active-set are mutually exclusive")
    if args.rank is not None:
        if args.rank < 0 or args.rank > fact.rank_bound:
            raise UsageError(f"--rank must be in [0, {fact.rank_bound}]")
        return tuple(range(1, args.rank + 1))
    choice = args.active_set or ("bulk" if model.family == "gaussian" else "greedy")
    if choice == "bulk":
        if model.family != "gaussian":
            raise UsageError("--active-set bulk needs --family gaussian; use greedy")
        return activeset.active_set_gaussian(fact, model.tau).selected
    if choice == "greedy":
        return activeset.active_set_greedy(y, model, clamp_floor=epsilon, fact=fact).selected
    return tuple(range(1, fact.rank_bound + 1))


def _reported_risk(y, fact, model, objective, fn, rng):
    """Risk estimate of the final fit, with low-variance settings."""
    estimate = fn.apply_to_factorization(fact)
    if objective == "sure":
        div = risk.divergence_closed_form(fact, fn.values(fact.singular_values), fn.derivs(fact.singular_values))
        return risk.sure_gaussian(y, estimate, model.tau, div)
    if objective == "sukls":
        div = risk.divergence_closed_form(fact, fn.values(fact.singular_values), fn.derivs(fact.singular_values))
        return risk.sukls_gamma(y, estimate, model.shape, div)
    if objective == "gsure":
        theta_div = risk.mc_theta_divergence_gamma(fn, y, model.shape, REPORT_MC_SAMPLES, rng)
        return risk.gsure_gamma(y, estimate, model.shape, theta_div)
    mode = "exact" if y.size <= risk.EXACT_DOWNDATE_CAP else "approx"
    kwargs = {} if mode == "exact" else {"samples": REPORT_MC_SAMPLES, "rng": rng}
    if objective == "pure":
        return risk.pure_poisson(y, fn, mode=mode, **kwargs)
    return risk.pukla_poisson(y, fn, mode=mode, **kwargs)


def _cmd_denoise(args) -> int:
    started = time.perf_counter()
    path = Path(args.input)
    if not path.exists():
        raise UsageError(f"input file not found: {path}")
    model = _model_from_args(args)
    # Flag validation happens before any data-dependent work so that bad
    # combinations exit as usage errors, not domain errors.
    if args.method in ("soft", "weights") or args.objective is not None:
        objective = _resolve_objective(args, model)
    else:
        objective = "sure" if model.family == "gaussian" else None
    y = matrixio.read_matrix(path)
    rng = np.random.default_rng(args.seed)
    epsilon = args.epsilon
    floor = None if model.family == "gaussian" else epsilon
    fact = linalg.svd(y)
    active = _resolve_active(args, y, fact, model, epsilon)
    sidecar: dict = {"active_set": list(active)}

    if args.method == "pca":
        values = np.zeros_like(fact.singular_values)
        derivs = np.zeros_like(fact.singular_values)
        for k in active:
            values[k - 1] = fact.singular_values[k - 1]
            derivs[k - 1] = 1.0
        fn = linalg.SpectralFunction(lambda s, v=values: v, lambda s, d=derivs: d, floor)
    elif args.method == "soft":
        lam = shrinkage.soft_threshold_fit(
            y, model, objective, clamp_floor=floor, rng=rng, fact=fact
        )
        sidecar["lambda"] = lam
        fn = linalg.soft_threshold_function(lam, floor)
    else:
        plan = experiments.fit_weighted_plan(
            y, fact, model, objective, active, clamp_floor=floor, rng=rng
        )
        sidecar["weights"] = plan.to_json()["weights"]
        values = plan.values(fact.singular_values)
        derivs = plan.derivs(fact.singular_values)
        fn = linalg.SpectralFunction(lambda s, v=values: v, lambda s, d=derivs: d, floor)

    denoised = fn.apply_to_factorization(fact)
    if objective is not None:
        sidecar["risk"] = _reported_risk(y, fact, model, objective, fn, rng).to_json()

    matrixio.write_matrix_csv(args.output, denoised, header="denoised matrix")
    sidecar["timing_seconds"] = time.perf_counter() - started
    sidecar_path = Path(args.output).with_suffix(Path(args.output).suffix + ".json")
    sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_activeset(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise UsageError(f"input file not found: {path}")
    y = matrixio.read_matrix(path)
    model = _model_from_args(args)
    method = args.method or ("bulk" if model.family == "gaussian" else "greedy")
    if method == "bulk":
        if model.family != "gaussian":
            raise UsageError("--method bulk needs --family gaussian; use greedy")
        report = activeset.active_set_gaussian(linalg.svd(y), model.tau)
    else:
        report = activeset.active_set_greedy(y, model, clamp_floor=args.epsilon)
    payload = json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    return EXIT_OK


def _cmd_experiment(args) -> int:
    config_path = Path(args.config)
    if not config_path.exists():
        raise UsageError(f"config file not found: {config_path}")
    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from exc
    try:
        config = experiments.ExperimentConfig.from_config(raw)
    except SvshrinkError as exc:
        raise UsageError(str(exc)) from exc
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = experiments.run_experiment(config, threads=args.threads)
    result.write_csv(out_dir / "records.csv")
    result.write_summary(out_dir / "summary.json")
    return EXIT_OK


def _cmd_asymptotics(args) -> int:
    regime = rmt.SpikedRegime(args.c)  # validates the aspect ratio
    c = regime.c
    if args.sigma is not None:
        sigma = args.sigma
        if sigma <= 0:
            raise UsageError("--sigma must be positive")
        y = rmt.rho(sigma, c)
    else:
        y = args.y
        if y < 0:
            raise UsageError("--y must be nonnegative")
        sigma = rmt.sigma_from_rho(y, c) if y > regime.edge else None

    detectable = sigma is not None and sigma > regime.detectability
    gd = rmt.shrinker_gd(y, c)
    out = {
        "c": c,
        "bulk_edge": regime.edge,
        "sigma": sigma,
        "rho": y,
        "shrinker_gd": gd,
        "shrinker_sigma": rmt.shrinker_sigma(sigma, c) if sigma is not None else gd,
        "optimal_weight": rmt.asymptotic_optimal_weight(sigma, c) if detectable else 0.0,
        "g_mp_at_rho_sq": rmt.mp_cauchy(y**2, c) if y > regime.edge else None,
        "dof_term": rmt.asymptotic_dof([gd], [sigma], c) if detectable else 0.0,
    }
    sys.stdout.write(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


_COMMANDS = {
    "denoise": _cmd_denoise,
    "activeset": _cmd_activeset,
    "experiment": _cmd_experiment,
    "asymptotics": _cmd_asymptotics,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SvshrinkError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
