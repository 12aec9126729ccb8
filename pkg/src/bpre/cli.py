"""Command-line front end tying configuration, simulation, bounds, oracles,
and estimation into reproducible experiments with machine-readable reports.

Every command is deterministic given (config bytes, flags, seed). With --out
DIR the convention is manifest.json + result.json + result.csv (plus numbered
CSVs for multi-trajectory simulate runs); without --out the JSON result goes
to stdout. Exit codes: 0 pass, 1 verdict or assumption failure, 2 usage or
parse error, 3 resource cap.
"""
from __future__ import annotations

import argparse
import hashlib
import math
import json
import os
import shlex
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .bounds import (BoundQuery, H, H_upper, Theorem1Params, log_H,
                     sn_tail_bound, theorem1_bound)
from .env import (ConfigError, EnvDistribution, ModelMoments, ResourceCapError,
                  check_assumptions, compute_moments, parse_env_config)
from .estimate import (convergence_report, fit_geometric_decay,
                       mc_logw_increments, mc_tail_logzn, mc_tail_sn,
                       theorem1_candidates)
from .oracle import exact_logZn_tail, exact_sn_tail
from .simulate import (DOMAIN_SIMULATE, RNG_ID, SimConfig, simulate_trajectory,
                       stream)

_SEED_MAX = 1 << 64

# Incidental exact cross-checks inside verify runs stay within this many
# enumerated sequences; larger enumerations are the oracle commands' job.
_INCIDENTAL_SEQUENCES = 1 << 14
_INCIDENTAL_POPULATION = 1 << 10

# simulate writes one CSV per trajectory; keep runs to a sane file count.
_MAX_TRAJECTORY_FILES = 1024

TAIL_CSV_HEADER = "n,x,M_kind,hits,trials,point,ci_low,ci_high,bound_H,bound_thm1"
INCREMENT_CSV_HEADER = "k,mean_abs_increment,stderr"
ORACLE_CSV_HEADER = "n,x,M_kind,exact_tail,bound_H,dominated"
CONVERGE_CSV_HEADER = "n,y,hits,trials,point,ci_low,ci_high"
TRAJECTORY_CSV_HEADER = "gen,Z,log2_Z,S,logW"


def fmt(value: float) -> str:
    """17 significant digits: doubles survive a text round-trip exactly."""
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.17g}"


def render_json(value, indent: int = 0) -> str:
    """JSON with floats at 17 significant digits.

    Non-finite floats become the strings "inf"/"-inf"/"nan" since JSON has
    no number for them.
    """
    pad = " " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        inner = ",\n".join(
            f"{pad}  {json.dumps(str(k))}: {render_json(v, indent + 2)}"
            for k, v in value.items())
        return "{\n" + inner + "\n" + pad + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        inner = ",\n".join(f"{pad}  {render_json(v, indent + 2)}" for v in value)
        return "[\n" + inner + "\n" + pad + "]"
    if isinstance(value, float):
        return fmt(value) if math.isfinite(value) else json.dumps(fmt(value))
    if isinstance(value, (bool, int, str)) or value is None:
        return json.dumps(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _csv(header: str, rows: list[list[str]]) -> str:
    return "\n".join([header] + [",".join(cells) for cells in rows]) + "\n"


def emit(args, result: dict, csv_text: str | None = None,
         extra_csvs: dict[str, str] | None = None,
         config_sha: str | None = None, seed: int | None = None) -> None:
    """Write the --out directory convention, or print the JSON to stdout."""
    if args.out is None:
        print(render_json(result))
        return
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    outputs = ["result.json"]
    if csv_text is not None:
        outputs.append("result.csv")
    outputs.extend(sorted(extra_csvs or ()))
    manifest = {
        "command": "bpre " + shlex.join(args.argv),
        "env_config_sha256": config_sha,
        "seed": seed,
        "rng_id": RNG_ID,
        "version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "outputs": outputs,
    }
    (outdir / "manifest.json").write_text(render_json(manifest) + "\n",
                                          encoding="utf-8")
    (outdir / "result.json").write_text(
        render_json({**result, "manifest": "manifest.json"}) + "\n",
        encoding="utf-8")
    if csv_text is not None:
        (outdir / "result.csv").write_text(csv_text, encoding="utf-8")
    for name, text in (extra_csvs or {}).items():
        (outdir / name).write_text(text, encoding="utf-8")


def resolve_seed(args) -> int:
    seed = getattr(args, "seed", None)
    if seed is None:
        raw = os.environ.get("BPRE_SEED", "")
        seed = int(raw) if raw else 0
    if not 0 <= seed < _SEED_MAX:
        raise ValueError(f"seed={seed} outside the unsigned 64-bit range")
    return seed


def load_env(path: str) -> tuple[EnvDistribution, str]:
    data = Path(path).read_bytes()
    return parse_env_config(data), hashlib.sha256(data).hexdigest()


def _pick_M(moments: ModelMoments, kind: str) -> float:
    return moments.M_tight if kind == "tight" else moments.M_paper


def _workers(args) -> int:
    return args.workers if args.workers is not None else (os.cpu_count() or 1)


def cmd_env_check(args) -> int:
    env, sha = load_env(args.config)
    report = check_assumptions(env, p=args.p, q=args.q)
    result = {"checks": report.to_json(), "all_pass": report.all_pass}
    emit(args, result, config_sha=sha)
    return 0 if report.all_pass else 1


def cmd_bound(args) -> int:
    if args.v is not None:
        if args.sigma is not None or args.M is not None:
            raise ValueError("give either --v or the pair --sigma/--M, not both")
        v = args.v
    else:
        if args.sigma is None or args.M is None:
            raise ValueError("give either --v or both --sigma and --M")
        if not args.M > 0.0:
            raise ValueError(f"M={args.M!r} must be > 0")
        v = math.sqrt(args.n) * args.sigma / args.M
    query = BoundQuery(n=args.n, x=args.x, v=v)
    result = {"n": args.n, "x": args.x, "v": v, "log_H": log_H(query),
              "H": H(query), "H_upper": H_upper(args.x, v)}
    emit(args, result)
    return 0


def cmd_simulate(args) -> int:
    env, sha = load_env(args.config)
    # Simulation itself relies on supercriticality and no-extinction; the
    # variance checks A2/H1 matter for bounds, not for stepping populations,
    # and would wrongly reject deterministic models.
    report = check_assumptions(env)
    failed = [c.check for c in report.checks
              if not c.passed and c.check in ("A1", "P0_ZERO")]
    if failed:
        print(f"env-check failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    if args.out is None:
        raise ValueError("simulate writes files; --out DIR is required")
    if args.trials > _MAX_TRAJECTORY_FILES:
        raise ValueError(
            f"simulate writes one CSV per trajectory; --trials {args.trials} "
            f"exceeds {_MAX_TRAJECTORY_FILES}")
    seed = resolve_seed(args)
    cfg = SimConfig(n=args.n, seed=seed,
                    exact_sampling_threshold=args.exact_threshold)

    csvs: dict[str, str] = {}
    approx_any = False
    for t in range(args.trials):
        traj = simulate_trajectory(env, cfg, rng=stream(seed, DOMAIN_SIMULATE, t))
        approx_any = approx_any or traj.approx_sampling_used
        rows = []
        for gen, rec in enumerate(traj.records):
            log2_z = "-inf" if rec.Z == 0 else fmt(math.log2(rec.Z))
            rows.append([str(gen), str(rec.Z), log2_z, fmt(rec.S), fmt(rec.logW)])
        name = "result.csv" if args.trials == 1 else f"result_{t:04d}.csv"
        csvs[name] = _csv(TRAJECTORY_CSV_HEADER, rows)

    result = {"env_config_sha256": sha, "seed": seed, "rng_id": RNG_ID,
              "n": args.n, "trials": args.trials,
              "approx_sampling_used": approx_any,
              "files": sorted(csvs)}
    single = csvs.pop("result.csv", None)
    emit(args, result, csv_text=single, extra_csvs=csvs, config_sha=sha,
         seed=seed)
    return 0


def cmd_oracle(args) -> int:
    env, sha = load_env(args.config)
    moments = compute_moments(env)
    M = _pick_M(moments, args.m_kind)
    exact = exact_sn_tail(env, args.n, args.x, M, moments.mu)
    bound = sn_tail_bound(args.n, args.x, math.sqrt(moments.sigma2), M)
    dominated = exact <= bound
    result = {"n": args.n, "x": args.x, "M": args.m_kind,
              "exact_tail": exact, "bound": bound, "dominated": dominated}
    emit(args, result, config_sha=sha)
    return 0 if dominated else 1


def _verdict_line(args, mode: str, passed: bool) -> None:
    if args.out is not None:
        print(f"verify {mode}: {'PASS' if passed else 'FAIL'}")


def _verify_sn(args, env: EnvDistribution, sha: str,
               moments: ModelMoments) -> int:
    if args.x is None:
        raise ValueError("verify sn requires --x")
    kind = args.m_kind or "tight"
    M = _pick_M(moments, kind)
    seed = resolve_seed(args)
    est = mc_tail_sn(env, args.n, args.x, M, args.trials, seed,
                     level=args.level, workers=_workers(args))
    bound = sn_tail_bound(args.n, args.x, math.sqrt(moments.sigma2), M)
    exact = None
    if len(env.states) ** args.n <= _INCIDENTAL_SEQUENCES:
        exact = exact_sn_tail(env, args.n, args.x, M, moments.mu)
    passed = est.ci_low <= bound and (exact is None or exact <= bound)

    row = [str(args.n), fmt(args.x), kind, str(est.hits), str(est.trials),
           fmt(est.point), fmt(est.ci_low), fmt(est.ci_high), fmt(bound), ""]
    result = {"mode": "sn", "n": args.n, "x": args.x, "M_kind": kind,
              "hits": est.hits, "trials": est.trials, "point": est.point,
              "ci_low": est.ci_low, "ci_high": est.ci_high,
              "level": est.level, "bound_H": bound, "exact_tail": exact,
              "dominated": passed, "pass": passed, "seed": seed,
              "rng_id": RNG_ID}
    emit(args, result, csv_text=_csv(TAIL_CSV_HEADER, [row]), config_sha=sha,
         seed=seed)
    _verdict_line(args, "sn", passed)
    return 0 if passed else 1


def _verify_theorem1(args, env: EnvDistribution, sha: str,
                     moments: ModelMoments) -> int:
    x = 3.0 if args.x is None else args.x
    m = args.n if args.m is None else args.m
    kind = args.m_kind or "paper"
    M = _pick_M(moments, kind)
    seed = resolve_seed(args)
    workers = _workers(args)
    est = mc_tail_logzn(env, args.n, x, M, args.trials, seed,
                        level=args.level, workers=workers)

    # Constants are fitted from increment decay at the same horizon; the
    # fit needs far fewer trials than the tail estimate.
    fit_trials = max(1000, min(args.trials, 10 ** 5))
    incs = mc_logw_increments(env, args.n, fit_trials, seed, workers=workers)
    fit = fit_geometric_decay(
        [(k, mean) for k, mean, _ in incs if 2 <= k <= args.n - 1])
    failure = None
    bound = None
    try:
        C_hat, delta_hat = theorem1_candidates(fit)
        bound = theorem1_bound(Theorem1Params(n=args.n, m=m, M=M,
                                              C=C_hat, delta=delta_hat))
    except ValueError as exc:
        C_hat, delta_hat = None, fit.delta_hat
        failure = str(exc)

    exact = None
    if (len(env.states) ** args.n <= _INCIDENTAL_SEQUENCES
            and env.k_max ** args.n <= _INCIDENTAL_POPULATION):
        exact = exact_logZn_tail(env, args.n, x, moments, M)
    passed = (bound is not None and est.point <= bound
              and (exact is None or exact <= bound))

    row = [str(args.n), fmt(x), kind, str(est.hits), str(est.trials),
           fmt(est.point), fmt(est.ci_low), fmt(est.ci_high), "",
           fmt(bound) if bound is not None else ""]
    result = {"mode": "theorem1", "n": args.n, "x": x, "m": m, "M_kind": kind,
              "hits": est.hits, "trials": est.trials, "point": est.point,
              "ci_low": est.ci_low, "ci_high": est.ci_high,
              "level": est.level, "bound_thm1": bound, "C_hat": C_hat,
              "delta_hat": delta_hat, "fit_r2": fit.r2,
              "fit_trials": fit_trials, "exact_tail": exact,
              "failure": failure, "pass": passed, "seed": seed,
              "rng_id": RNG_ID}
    emit(args, result, csv_text=_csv(TAIL_CSV_HEADER, [row]), config_sha=sha,
         seed=seed)
    _verdict_line(args, "theorem1", passed)
    return 0 if passed else 1


def _verify_increments(args, env: EnvDistribution, sha: str,
                       moments: ModelMoments) -> int:
    seed = resolve_seed(args)
    incs = mc_logw_increments(env, args.n, args.trials, seed,
                              workers=_workers(args))
    lo = args.fit_lo
    hi = args.n - 1 if args.fit_hi is None else args.fit_hi
    if not 0 <= lo < hi <= args.n - 1:
        raise ValueError(f"fit window [{lo}, {hi}] outside [0, {args.n - 1}]")
    fit = fit_geometric_decay(
        [(k, mean) for k, mean, _ in incs if lo <= k <= hi])
    passed = 0.0 < fit.delta_hat < 1.0
    C_hat = fit.c_hat / (1.0 - fit.delta_hat) if passed else None

    rows = [[str(k), fmt(mean), fmt(stderr)] for k, mean, stderr in incs]
    result = {"mode": "increments", "n": args.n, "trials": args.trials,
              "delta_hat": fit.delta_hat, "c_hat": fit.c_hat, "r2": fit.r2,
              "C_hat": C_hat, "fit_k_lo": lo, "fit_k_hi": hi,
              "pass": passed, "seed": seed, "rng_id": RNG_ID}
    emit(args, result, csv_text=_csv(INCREMENT_CSV_HEADER, rows),
         config_sha=sha, seed=seed)
    _verdict_line(args, "increments", passed)
    return 0 if passed else 1


def _verify_oracle(args, env: EnvDistribution, sha: str,
                   moments: ModelMoments) -> int:
    kind = args.m_kind or "tight"
    M = _pick_M(moments, kind)
    sigma = math.sqrt(moments.sigma2)
    if args.grid_points < 2:
        raise ValueError("--grid-points must be >= 2")
    rows = []
    violations = 0
    for i in range(args.grid_points):
        x = args.n * i / (args.grid_points - 1)
        exact = exact_sn_tail(env, args.n, x, M, moments.mu)
        bound = sn_tail_bound(args.n, x, sigma, M)
        dominated = exact <= bound
        violations += 0 if dominated else 1
        rows.append([str(args.n), fmt(x), kind, fmt(exact), fmt(bound),
                     "true" if dominated else "false"])
    passed = violations == 0
    result = {"mode": "oracle", "n": args.n, "M_kind": kind,
              "grid_points": args.grid_points, "violations": violations,
              "pass": passed}
    emit(args, result, csv_text=_csv(ORACLE_CSV_HEADER, rows), config_sha=sha)
    _verdict_line(args, "oracle", passed)
    return 0 if passed else 1


def cmd_verify(args) -> int:
    env, sha = load_env(args.config)
    moments = compute_moments(env)
    handler = {"sn": _verify_sn, "theorem1": _verify_theorem1,
               "increments": _verify_increments, "oracle": _verify_oracle}
    return handler[args.mode](args, env, sha, moments)


def cmd_converge(args) -> int:
    env, sha = load_env(args.config)
    seed = resolve_seed(args)
    rows = convergence_report(env, args.n_values, args.y_values, args.trials,
                              seed, level=args.level, workers=_workers(args))
    csv_rows = [[str(r.n), fmt(r.threshold_x), str(r.hits), str(r.trials),
                 fmt(r.point), fmt(r.ci_low), fmt(r.ci_high)] for r in rows]
    result = {"n_values": list(args.n_values), "y_values": list(args.y_values),
              "trials": args.trials, "level": args.level, "seed": seed,
              "rng_id": RNG_ID,
              "rows": [{"n": r.n, "y": r.threshold_x, "hits": r.hits,
                        "point": r.point, "ci_low": r.ci_low,
                        "ci_high": r.ci_high} for r in rows]}
    emit(args, result, csv_text=_csv(CONVERGE_CSV_HEADER, csv_rows),
         config_sha=sha, seed=seed)
    return 0


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text!r} must be >= 1")
    return value


def _trials(text: str) -> int:
    # accepts scientific notation: --trials 1e6
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not value.is_integer() or value < 1:
        raise argparse.ArgumentTypeError(f"{text!r} must be a positive integer")
    return int(value)


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if not 0 <= value < _SEED_MAX:
        raise argparse.ArgumentTypeError(f"{text!r} outside the unsigned 64-bit range")
    return value


def _int_list(text: str) -> list[int]:
    return [_positive_int(part) for part in text.split(",") if part]


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated "
                                         "list of numbers") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bpre",
        description="Branching processes in random environments: simulation, "
                    "tail bounds, exact oracles, Monte Carlo verification.")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("env-check", help="validate a model config against the "
                                         "six standing assumptions")
    p.add_argument("config")
    p.add_argument("--p", type=float, default=2.0,
                   help="moment order for the offspring check (default 2)")
    p.add_argument("--q", type=float, default=3.0,
                   help="moment order for the log-mean check (default 3)")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_env_check)

    p = sub.add_parser("bound", help="evaluate the Hoeffding-type tail bound")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--v", type=float, help="variance parameter, given directly")
    p.add_argument("--sigma", type=float,
                   help="with --M, forms v = sqrt(n)*sigma/M")
    p.add_argument("--M", type=float, help="scale constant, used with --sigma")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("simulate", help="simulate trajectories to CSV")
    p.add_argument("config")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--trials", type=_trials, default=1,
                   help="number of trajectories (default 1)")
    p.add_argument("--seed", type=_seed, default=None,
                   help="master seed (default: $BPRE_SEED, else 0)")
    p.add_argument("--exact-threshold", dest="exact_threshold",
                   type=_positive_int, default=SimConfig.exact_sampling_threshold,
                   help="population size above which offspring draws switch "
                        "to the Gaussian approximation")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="exact walk tail vs the H bound at one point")
    p.add_argument("config")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--M-kind", dest="m_kind", choices=["tight", "paper"],
                   default="tight")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("verify", help="Monte Carlo / exact verification runs")
    p.add_argument("mode", choices=["sn", "theorem1", "increments", "oracle"])
    p.add_argument("config")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--x", type=float, default=None,
                   help="tail threshold (sn: required; theorem1: default 3)")
    p.add_argument("--m", type=_positive_int, default=None,
                   help="theorem1 exponent, 1 <= m <= n (default n)")
    p.add_argument("--trials", type=_trials, default=10 ** 5)
    p.add_argument("--seed", type=_seed, default=None,
                   help="master seed (default: $BPRE_SEED, else 0)")
    p.add_argument("--level", type=float, default=0.99,
                   help="confidence level (default 0.99)")
    p.add_argument("--M-kind", dest="m_kind", choices=["tight", "paper"],
                   default=None,
                   help="H1 constant (default: tight; theorem1 uses paper)")
    p.add_argument("--grid-points", dest="grid_points", type=_positive_int,
                   default=101, help="oracle mode: x-grid size on [0, n]")
    p.add_argument("--fit-lo", dest="fit_lo", type=int, default=2,
                   help="increments mode: first k in the decay fit")
    p.add_argument("--fit-hi", dest="fit_hi", type=int, default=None,
                   help="increments mode: last k in the decay fit (default n-1)")
    p.add_argument("--workers", type=_positive_int, default=None,
                   help="worker threads (default: available parallelism); "
                        "results are identical for any value")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("converge", help="tail of |log Z_n / n - mu| over an "
                                        "(n, y) grid")
    p.add_argument("config")
    p.add_argument("--n-values", dest="n_values", type=_int_list, required=True,
                   help="comma-separated horizons, e.g. 8,16,32")
    p.add_argument("--y-values", dest="y_values", type=_float_list,
                   required=True, help="comma-separated deviations")
    p.add_argument("--trials", type=_trials, default=10 ** 4)
    p.add_argument("--seed", type=_seed, default=None)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--workers", type=_positive_int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_converge)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ResourceCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
