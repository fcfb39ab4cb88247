"""Command-line surface: instance generation, single estimates, experiment
sweeps, KKT inspection, and corpus evaluation.

Subcommands
-----------
gen-instance   write a synthetic instance (interior or planted-boundary) to JSON
check-kkt      maximize a stored instance and print/write its KKT report
estimate       run one estimator (mc | is | cv) on a stored instance
experiment     sweep a grid: mse-ratio | cv-correlation | bias | sparsity
eval-corpus    score every document of a corpus against a topic matrix

Every result file embeds a run manifest (command, full configuration, seed,
package version, reference policy).  Timestamps are only recorded when
SOURCE_DATE_EPOCH or DIRMC_TIMESTAMP is set, so identical invocations
produce byte-identical files.  A JSON config file can pre-load any flag
(``--config``); explicit flags win.  DIRMC_SEED sets the default seed.

Exit codes: 0 success, 2 input validation, 3 generation/convergence
failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ConvergenceError,
    GenerationError,
    KktViolationError,
    NumericalError,
    ValidationError,
)
from .estimators import (
    EstimatorConfig,
    control_variate,
    empirical_rho_squared,
    importance_sampling,
    is_weighted_prior_moments,
    plain_mc,
)
from .experiments import (
    REFERENCE_EPSILON,
    REFERENCE_GAMMA,
    bias_diagnostic,
    cv_correlation_gap,
    mse_ratio_experiment,
)
from .instances import (
    GeneratorConfig,
    PlantedInstance,
    gen_boundary_instance,
    gen_interior_instance,
    gen_sparsity_controlled_phi,
    load_corpus,
    load_instance,
    load_topic_matrix,
    sample_document,
    save_instance,
    to_lda_instance,
)
from .laplace import limiting_rho_squared, sparsity_report
from .maximizer import CoverConfig, cover_maximize, kkt_report
from .objectives import KlObjective, LdaObjective
from .simplex import (
    DirichletParams,
    RandomStream,
    SimplexPoint,
    TruncationSpec,
    derive_seed,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_GENERATION = 3
EXIT_NUMERICAL = 4


# ---------------------------------------------------------------------------
# plumbing


def _timestamp() -> str | None:
    raw = os.environ.get("DIRMC_TIMESTAMP") or os.environ.get("SOURCE_DATE_EPOCH")
    if raw is None:
        return None
    try:
        import datetime

        return datetime.datetime.fromtimestamp(
            int(raw), tz=datetime.timezone.utc).isoformat()
    except (ValueError, OverflowError):
        return str(raw)


# output destinations and worker counts do not influence the numbers, so
# they stay out of the manifest: identical computations give identical files
_MANIFEST_EXCLUDE = {"out", "out_csv", "out_summary", "json", "emit_gnuplot",
                     "emit_svg", "config", "threads", "command", "func"}


def _manifest(command: str, config: dict, seed: int,
              reference_policy: str | None = None) -> dict:
    clean = {k: v for k, v in sorted(config.items())
             if v is not None and k not in _MANIFEST_EXCLUDE
             and isinstance(v, (bool, int, float, str, list))}
    return {
        "command": command,
        "config": clean,
        "seed": seed,
        "version": __version__,
        "timestamp": _timestamp(),
        "reference_policy": reference_policy,
    }


def _write_json(path: str | None, payload: dict) -> None:
    text = json.dumps(payload, sort_keys=True, indent=1) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _parse_alpha(text: str, dim: int) -> DirichletParams:
    parts = [float(v) for v in text.split(",") if v.strip()]
    if len(parts) == 1:
        return DirichletParams.symmetric(parts[0], dim)
    if len(parts) != dim:
        raise ValidationError(f"alpha needs 1 or {dim} entries, got {len(parts)}")
    return DirichletParams(np.asarray(parts))


def _parse_grid(text: str) -> list[float]:
    """'lo:hi:count' (log-spaced integers) or a comma list."""
    if ":" in text:
        lo, hi, count = text.split(":")
        grid = np.geomspace(float(lo), float(hi), int(count))
        return sorted(set(float(round(v)) for v in grid))
    return sorted(float(v) for v in text.split(",") if v.strip())


def _default_seed() -> int:
    return int(os.environ.get("DIRMC_SEED", "0"))


def _load_config_defaults(argv: list[str], parser: argparse.ArgumentParser) -> list[str]:
    """Apply --config file values as parser defaults (flags still win).

    Subparsers parse into a fresh namespace, so the defaults must be pushed
    onto every subcommand parser, restricted to the flags it actually owns.
    """
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if known.config:
        data = json.loads(Path(known.config).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValidationError("config file must hold a JSON object")
        values = {k.replace("-", "_"): v for k, v in data.items()}
        parser.set_defaults(**values)
        for action in parser._actions:
            if isinstance(action, argparse._SubParsersAction):
                for sub in action.choices.values():
                    owned = {a.dest for a in sub._actions}
                    sub.set_defaults(**{k: v for k, v in values.items() if k in owned})
    return argv


def _resolve_theta_star(planted: PlantedInstance, cover_cfg: CoverConfig):
    """(theta_star, report, source) using the stored maximizer when present."""
    if planted.theta_star is not None:
        report = kkt_report(planted.instance, planted.theta_star, cover_cfg)
        return report.theta_star, report, "stored"
    result = cover_maximize(planted.instance, cover_cfg)
    report = kkt_report(planted.instance, result.theta, cover_cfg)
    return report.theta_star, report, "maximized"


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen_instance(args) -> int:
    cfg = GeneratorConfig(
        num_topics=args.K, vocab_size=args.V, phi_prior=args.phi_prior,
        planted_zeros=args.m, lambda_min=args.lambda_min, lambda_max=args.lambda_max,
        max_retries=args.max_retries, seed=args.seed)
    stream = RandomStream(cfg.seed)
    planted = (gen_interior_instance(cfg, stream) if cfg.planted_zeros == 0
               else gen_boundary_instance(cfg, stream))
    manifest = _manifest("gen-instance", vars(args), args.seed)
    save_instance(args.out, planted, manifest=manifest)
    print(f"wrote {args.out} (K={args.K}, V={args.V}, m={planted.num_active})")
    return EXIT_OK


def _cmd_check_kkt(args) -> int:
    planted = load_instance(args.instance)
    cover_cfg = CoverConfig()
    result = cover_maximize(planted.instance, cover_cfg)
    report = kkt_report(planted.instance, result.theta, cover_cfg)
    payload = report.to_dict()
    payload["iterations"] = result.iterations
    payload["converged"] = result.converged
    payload["final_value"] = float(result.values[-1])
    if planted.theta_star is not None:
        dev = float(np.abs(report.theta_star.coords - planted.theta_star.coords).max())
        payload["planted_active_set"] = list(planted.active_set)
        payload["planted_recovered"] = report.active_set == planted.active_set
        payload["theta_star_deviation"] = dev
    payload["manifest"] = _manifest("check-kkt", vars(args), _default_seed())
    _write_json(args.json, payload)
    return EXIT_OK


def _estimator_config(args, theta_star: SimplexPoint | None) -> EstimatorConfig:
    truncation = None
    if args.method == "is" and theta_star is not None:
        truncation = TruncationSpec.for_theta_star(theta_star, args.epsilon,
                                                   args.truncation_mode)
    return EstimatorConfig(
        num_samples=args.N, seed=args.seed,
        gamma=args.gamma if args.method == "is" else None,
        truncation=truncation, cv_coefficient_mode=args.cv_mode,
        chunk_size=args.chunk_size, threads=args.threads,
        allow_unstable_gamma=args.allow_unstable_gamma)


def _cmd_estimate(args) -> int:
    planted = load_instance(args.instance)
    objective = LdaObjective(planted.instance)
    alpha = _parse_alpha(args.alpha, planted.instance.num_topics)
    cover_cfg = CoverConfig()

    payload: dict = {"method": args.method, "n": args.n}
    if args.method == "mc":
        cfg = _estimator_config(args, None)
        estimate = plain_mc(objective, alpha, args.n, cfg)
    else:
        theta_star, report, source = _resolve_theta_star(planted, cover_cfg)
        payload["maximizer"] = {"m": report.num_active, "min_lambda": report.min_lambda,
                                "source": source}
        if args.method == "is":
            cfg = _estimator_config(args, theta_star)
            estimate = importance_sampling(objective, alpha, args.n, theta_star, cfg)
        else:
            cfg = _estimator_config(args, None)
            kl_obj = KlObjective(theta_star=theta_star,
                                 h_at_star=objective.value(theta_star))
            estimate, cv_report = control_variate(objective, kl_obj, alpha, args.n, cfg)
            payload["cv"] = cv_report.to_dict()
    payload["estimate"] = estimate.to_dict()
    payload["manifest"] = _manifest("estimate", vars(args), args.seed)
    _write_json(args.out, payload)
    return EXIT_OK


def _make_planted(kind_m: int, cfg_gen: GeneratorConfig, stream: RandomStream,
                  require_strict: bool = True) -> PlantedInstance:
    """Generate an instance, regenerating when strict complementarity is shaky."""
    for attempt in range(50):
        seed_cfg = replace(cfg_gen, seed=derive_seed(cfg_gen.seed, attempt))
        sub = RandomStream(seed_cfg.seed)
        planted = (gen_interior_instance(seed_cfg, sub) if kind_m == 0
                   else gen_boundary_instance(seed_cfg, sub))
        if not require_strict or kind_m == 0:
            return planted
        try:
            report = kkt_report(planted.instance, planted.theta_star)
        except KktViolationError:
            continue
        if report.strict_complementarity and report.active_set == planted.active_set:
            return planted
    raise GenerationError("could not generate a strictly-complementary instance")


def _experiment_rows_mse(args, alpha_text: str) -> tuple[list, dict]:
    n_grid = _parse_grid(args.n_grid)
    rows: list[list] = []
    fitted = []
    per_n: dict[float, list[float]] = {float(n): [] for n in n_grid}
    theoretical = None
    for inst_id in range(args.instances):
        cfg_gen = GeneratorConfig(num_topics=args.K, vocab_size=args.V,
                                  phi_prior=args.phi_prior, planted_zeros=args.m,
                                  lambda_min=args.lambda_min, lambda_max=args.lambda_max,
                                  seed=derive_seed(args.seed, 100, inst_id))
        planted = _make_planted(args.m, cfg_gen, RandomStream(cfg_gen.seed))
        objective = LdaObjective(planted.instance)
        alpha = _parse_alpha(alpha_text, args.K)
        cfg_is = EstimatorConfig(
            num_samples=args.N, seed=derive_seed(args.seed, 200, inst_id),
            gamma=args.gamma,
            truncation=TruncationSpec.for_theta_star(planted.theta_star, args.epsilon,
                                                     args.truncation_mode),
            chunk_size=args.chunk_size, threads=1)
        cfg_mc = None
        if args.mc_policy == "auto":
            cfg_mc = replace(cfg_is, gamma=None, truncation=None)
        result = mse_ratio_experiment(
            objective, alpha, planted.theta_star,
            alpha.alpha[list(planted.active_set)], n_grid, cfg_is, cfg_mc)
        theoretical = result.theoretical_slope
        fitted.append(result.fitted_slope)
        for point in result.points:
            rows.append([inst_id, point.n, "log_mse_ratio", repr(point.log_mse_ratio),
                         point.variance_policy])
            per_n[point.n].append(point.log_mse_ratio)
    summary = {
        "kind": "mse-ratio",
        "theoretical_slope": theoretical,
        "median_fitted_slope": float(np.median(fitted)),
        "fitted_slopes": [float(v) for v in fitted],
        "per_n": _quartile_summary(per_n),
    }
    return rows, summary


def _quartile_summary(per_n: dict[float, list[float]]) -> list[dict]:
    out = []
    for n in sorted(per_n):
        vals = np.asarray(per_n[n])
        out.append({"n": n, "median": float(np.median(vals)),
                    "q25": float(np.quantile(vals, 0.25)),
                    "q75": float(np.quantile(vals, 0.75))})
    return out


def _experiment_rows_cv(args, alpha_text: str) -> tuple[list, dict]:
    n_grid = _parse_grid(args.n_grid)
    rows: list[list] = []
    per_n: dict[float, list[float]] = {float(n): [] for n in n_grid}
    for inst_id in range(args.instances):
        cfg_gen = GeneratorConfig(num_topics=args.K, vocab_size=args.V,
                                  phi_prior=args.phi_prior, planted_zeros=args.m,
                                  lambda_min=args.lambda_min, lambda_max=args.lambda_max,
                                  seed=derive_seed(args.seed, 100, inst_id))
        planted = _make_planted(args.m, cfg_gen, RandomStream(cfg_gen.seed))
        objective = LdaObjective(planted.instance)
        alpha = _parse_alpha(alpha_text, args.K)
        report = kkt_report(planted.instance, planted.theta_star)
        kl_obj = KlObjective(theta_star=report.theta_star,
                             h_at_star=objective.value(report.theta_star))
        rho_limit = limiting_rho_squared(report, alpha)
        for n_idx, n in enumerate(n_grid):
            cfg = EstimatorConfig(
                num_samples=args.N, seed=derive_seed(args.seed, 200, inst_id, n_idx),
                gamma=args.gamma,
                truncation=TruncationSpec.for_theta_star(report.theta_star, args.epsilon,
                                                         args.truncation_mode),
                chunk_size=args.chunk_size, threads=1)
            _, gap = cv_correlation_gap(objective, kl_obj, alpha, n, cfg, rho_limit)
            rows.append([inst_id, n, "log_var_ratio_gap", repr(gap), "is_weighted"])
            per_n[float(n)].append(gap)
    summary = {"kind": "cv-correlation", "per_n": _quartile_summary(per_n)}
    return rows, summary


def _experiment_rows_bias(args, alpha_text: str) -> tuple[list, dict]:
    n_grid = _parse_grid(args.n_grid)
    rows: list[list] = []
    per_n: dict[float, list[float]] = {float(n): [] for n in n_grid}
    zero_frac: dict[float, list[bool]] = {float(n): [] for n in n_grid}
    for inst_id in range(args.instances):
        cfg_gen = GeneratorConfig(num_topics=args.K, vocab_size=args.V,
                                  phi_prior=args.phi_prior, planted_zeros=args.m,
                                  lambda_min=args.lambda_min, lambda_max=args.lambda_max,
                                  seed=derive_seed(args.seed, 100, inst_id))
        planted = _make_planted(args.m, cfg_gen, RandomStream(cfg_gen.seed))
        objective = LdaObjective(planted.instance)
        alpha = _parse_alpha(alpha_text, args.K)
        cfg_is = EstimatorConfig(
            num_samples=args.N, seed=derive_seed(args.seed, 200, inst_id),
            gamma=args.gamma,
            truncation=TruncationSpec.for_theta_star(planted.theta_star, args.epsilon,
                                                     args.truncation_mode),
            chunk_size=args.chunk_size, threads=1)
        diag = bias_diagnostic(objective, alpha, planted.theta_star, n_grid, cfg_is)
        for point in diag.points:
            rows.append([inst_id, point.n, "log_bias_sq_over_mse",
                         repr(point.log_bias_sq_over_mse), "is_weighted"])
            rows.append([inst_id, point.n, "zero_truncation",
                         repr(float(point.zero_truncation)), "is_weighted"])
            per_n[point.n].append(point.log_bias_sq_over_mse)
            zero_frac[point.n].append(point.zero_truncation)
    summary = {
        "kind": "bias",
        "per_n": _quartile_summary(per_n),
        "zero_truncation_fraction": [
            {"n": n, "fraction": float(np.mean(zero_frac[n]))} for n in sorted(zero_frac)],
    }
    return rows, summary


def _experiment_rows_sparsity(args, alpha_text: str) -> tuple[list, dict]:
    eps_grid = sorted(float(v) for v in args.epsilon_grid.split(","))
    rows: list[list] = []
    means = []
    for eps_idx, eps in enumerate(eps_grid):
        values = []
        for run in range(args.runs_per_epsilon):
            run_seed = derive_seed(args.seed, 300, eps_idx, run)
            stream = RandomStream(run_seed)
            phi = gen_sparsity_controlled_phi(args.K, args.V, eps, stream.child(0))
            theta_doc = np.asarray(stream.child(1).generator().dirichlet(np.ones(args.K)))
            doc = sample_document(phi, SimplexPoint(theta_doc), int(args.n), stream.child(2))
            inst = to_lda_instance(phi, doc)
            objective = LdaObjective(inst)
            result = cover_maximize(inst)
            try:
                report = kkt_report(inst, result.theta)
            except KktViolationError:
                rows.append([f"{eps_idx}:{run}", args.n, "skipped_degenerate", repr(1.0),
                             "prior"])
                continue
            if report.num_active > 0:
                rows.append([f"{eps_idx}:{run}", args.n, "skipped_boundary", repr(1.0), "prior"])
                continue
            alpha = _parse_alpha(alpha_text, args.K)
            kl_obj = KlObjective(theta_star=report.theta_star,
                                 h_at_star=objective.value(report.theta_star))
            cfg = EstimatorConfig(num_samples=args.N, seed=derive_seed(run_seed, 1),
                                  chunk_size=args.chunk_size, threads=1)
            rho_sq = empirical_rho_squared(objective, kl_obj, alpha, args.n, cfg)
            sp_report = sparsity_report(inst, report)
            rows.append([f"{eps_idx}:{run}", args.n, "rho_sq_hat", repr(rho_sq), "prior"])
            rows.append([f"{eps_idx}:{run}", args.n, "measured_epsilon",
                         repr(sp_report.epsilon), "prior"])
            rows.append([f"{eps_idx}:{run}", args.n, "lower_bound",
                         repr(sp_report.lower_bound), "prior"])
            values.append(rho_sq)
        if values:
            means.append({"epsilon": eps, "mean_rho_sq": float(np.mean(values)),
                          "runs": len(values)})
    summary = {"kind": "sparsity", "per_epsilon": means}
    return rows, summary


def _cmd_experiment(args) -> int:
    builders = {
        "mse-ratio": _experiment_rows_mse,
        "cv-correlation": _experiment_rows_cv,
        "bias": _experiment_rows_bias,
        "sparsity": _experiment_rows_sparsity,
    }
    rows, summary = builders[args.kind](args, args.alpha)
    header = ["instance_id", "n", "quantity", "value", "reference_policy"]
    _write_csv(args.out_csv, header, rows)
    summary["manifest"] = _manifest(f"experiment:{args.kind}", vars(args), args.seed,
                                    reference_policy="is_weighted")
    _write_json(args.out_summary, summary)
    if args.emit_gnuplot:
        _emit_gnuplot(args.emit_gnuplot, args.out_csv, args.kind)
    if args.emit_svg:
        _emit_svg(args.emit_svg, rows, args.kind)
    print(f"wrote {args.out_csv} and {args.out_summary}")
    return EXIT_OK


def _emit_gnuplot(path: str, csv_path: str, kind: str) -> None:
    script = "\n".join([
        "set datafile separator ','",
        "set logscale x",
        f"set title '{kind}'",
        "set xlabel 'n'",
        f"plot '{csv_path}' every ::1 using 2:4 with points title '{kind}'",
        "",
    ])
    Path(path).write_text(script, encoding="utf-8")


def _emit_svg(path: str, rows: list[list], kind: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "dirmc"
    import matplotlib.pyplot as plt

    skip = ("zero_truncation", "skipped_boundary", "skipped_degenerate")
    xs = [float(r[1]) for r in rows if r[2] not in skip]
    ys = [float(r[3]) for r in rows if r[2] not in skip]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogx(xs, ys, ".", alpha=0.6)
    ax.set_xlabel("n")
    ax.set_title(kind)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _cmd_eval_corpus(args) -> int:
    phi = load_topic_matrix(args.topics)
    docs = load_corpus(args.corpus)
    alpha = _parse_alpha(args.alpha, phi.shape[0])
    rows = []
    for doc_id, doc in enumerate(docs):
        inst = to_lda_instance(phi, doc)
        objective = LdaObjective(inst)
        result = cover_maximize(inst)
        report = kkt_report(inst, result.theta)
        theta_star = report.theta_star
        n = float(doc.n)
        seed = derive_seed(args.seed, doc_id)
        trunc = TruncationSpec.for_theta_star(theta_star, args.epsilon, args.truncation_mode)
        cfg = EstimatorConfig(num_samples=args.N, seed=seed, gamma=args.gamma,
                              truncation=trunc, chunk_size=args.chunk_size, threads=1)
        moments = is_weighted_prior_moments(objective, alpha, n, theta_star, cfg)
        log_mse_mc = moments.log_variance - math.log(args.N)

        if args.method == "is":
            est = moments.is_estimate
            log_mse = est.log_variance - math.log(args.N)
            extra = est.truncated_fraction
        else:
            kl_obj = KlObjective(theta_star=theta_star,
                                 h_at_star=objective.value(theta_star))
            cfg_cv = EstimatorConfig(num_samples=args.N, seed=derive_seed(seed, 1),
                                     chunk_size=args.chunk_size, threads=1)
            est, cv_report = control_variate(objective, kl_obj, alpha, n, cfg_cv)
            log_mse = est.log_variance - math.log(args.N)
            extra = cv_report.rho_sq
        rows.append([doc_id, doc.n, report.num_active, repr(report.min_lambda),
                     repr(est.log_mean), repr(est.log_variance),
                     repr(log_mse - log_mse_mc), repr(extra), "is_weighted"])
    header = ["doc_id", "n", "m", "min_lambda", "log_mean", "log_variance",
              "log_mse_ratio", "truncated_fraction_or_rho_sq", "reference_policy"]
    _write_csv(args.out_csv, header, rows)
    print(f"wrote {args.out_csv} ({len(rows)} documents)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common_estimator_flags(sub, with_method: bool = True):
    if with_method:
        sub.add_argument("--method", choices=["mc", "is", "cv"], required=True)
    sub.add_argument("--N", type=int, default=10_000, help="number of samples")
    sub.add_argument("--alpha", default="0.1",
                     help="Dirichlet prior: scalar (symmetric) or comma list")
    sub.add_argument("--gamma", type=float, default=0.9,
                     help="proposal shift exponent, in (0,1)")
    sub.add_argument("--epsilon", type=float, default=0.1, help="truncation level")
    sub.add_argument("--truncation-mode", choices=["relative", "absolute"],
                     default="relative")
    sub.add_argument("--allow-unstable-gamma", action="store_true",
                     help="permit gamma >= 1 (second moment diverges with n)")
    sub.add_argument("--cv-mode", choices=["pooled", "pilot"], default="pooled")
    sub.add_argument("--chunk-size", type=int, default=16384)
    sub.add_argument("--threads", type=int, default=1)
    sub.add_argument("--seed", type=int, default=_default_seed())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dirmc",
        description="Estimate Dirichlet expectations E[exp(n H)] with variance reduction")
    parser.add_argument("--config", help="JSON file of default flag values")
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("gen-instance", help="generate a synthetic instance")
    gen.add_argument("--K", type=int, required=True)
    gen.add_argument("--V", type=int, default=1000)
    gen.add_argument("--m", type=int, default=0, help="planted zero coordinates")
    gen.add_argument("--phi-prior", type=float, default=0.1)
    gen.add_argument("--lambda-min", type=float, default=0.2)
    gen.add_argument("--lambda-max", type=float, default=1.0)
    gen.add_argument("--max-retries", type=int, default=2000)
    gen.add_argument("--seed", type=int, default=_default_seed())
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_gen_instance)

    chk = subs.add_parser("check-kkt", help="maximize an instance and report KKT data")
    chk.add_argument("--instance", required=True)
    chk.add_argument("--json", help="write the report here instead of stdout")
    chk.set_defaults(func=_cmd_check_kkt)

    est = subs.add_parser("estimate", help="run one estimator on an instance")
    est.add_argument("--instance", required=True)
    est.add_argument("--n", type=float, required=True, help="exponent scale")
    _add_common_estimator_flags(est)
    est.add_argument("--out", help="result JSON (stdout when omitted)")
    est.set_defaults(func=_cmd_estimate)

    exp = subs.add_parser("experiment", help="sweep a grid of estimations")
    exp.add_argument("--kind", choices=["mse-ratio", "cv-correlation", "bias", "sparsity"],
                     required=True)
    exp.add_argument("--K", type=int, default=5)
    exp.add_argument("--V", type=int, default=250)
    exp.add_argument("--m", type=int, default=0)
    exp.add_argument("--phi-prior", type=float, default=0.1)
    exp.add_argument("--lambda-min", type=float, default=0.2)
    exp.add_argument("--lambda-max", type=float, default=1.0)
    exp.add_argument("--instances", type=int, default=20)
    exp.add_argument("--n-grid", default="1000:15000:8",
                     help="'lo:hi:count' log grid or comma list")
    exp.add_argument("--n", type=float, default=1000, help="sparsity kind: document length")
    exp.add_argument("--epsilon-grid", default="1e-6,1e-4,1e-2,0.5,2",
                     help="sparsity kind: targets")
    exp.add_argument("--runs-per-epsilon", type=int, default=10)
    exp.add_argument("--mc-policy", choices=["auto", "is-weighted"], default="is-weighted",
                     help="how the plain-MC variance is obtained")
    _add_common_estimator_flags(exp, with_method=False)
    exp.add_argument("--out-csv", required=True)
    exp.add_argument("--out-summary", required=True)
    exp.add_argument("--emit-gnuplot", help="write a gnuplot script next to the CSV")
    exp.add_argument("--emit-svg", help="write a log-log scatter SVG")
    exp.set_defaults(func=_cmd_experiment)

    ev = subs.add_parser("eval-corpus", help="score every document of a corpus")
    ev.add_argument("--topics", required=True)
    ev.add_argument("--corpus", required=True)
    _add_common_estimator_flags(ev)
    ev.add_argument("--out-csv", required=True)
    ev.set_defaults(func=_cmd_eval_corpus)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _load_config_defaults(argv, parser)
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (GenerationError, ConvergenceError, KktViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
