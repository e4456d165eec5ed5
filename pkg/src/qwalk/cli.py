"""Command-line entry point: ``qwalk {env,analytic,sim,dist,report}``.

Output files
------------
sim writes, for ``--out-prefix P``:
  P.summary.json   scalar statistics (model, n, count, mean, cov, label_mass, stopped, seed, ...)
  P.hist.csv       1D: tile,count,frequency,label   2D: k1,k2,count,frequency,label
  P.ecdf.csv       1D: z,ecdf,gaussian_cdf          2D: z1,z2,ecdf,gaussian_cdf (grid)
  P.samples.csv    scaled fluctuations (v_n - nD)/sqrt(n); 1D: z  2D: z1,z2 (--retain-samples)
  P.trace.csv      step,V,V_over_n for a single 1D deterministic trajectory (--count 1)
  P.manifest.json  run manifest (not part of the byte-identical outputs)
dist writes tile,probability rows (exact fractions, or decimal floats with --mode float)
and a JSON file with mean, variance, mean/n, variance/n.
"""

import argparse
import csv
import io
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from . import environment as envmod
from . import model1d, model2d, stats
from .bigrat import DEFAULT_DENOMINATOR_1D, DEFAULT_DENOMINATOR_2D, sample_point, to_decimal
from .errors import EnvironmentExhausted, InvalidInput, QWalkError, StoppedProcess
from .rng import Substream

DIGITS = 15


class UsageError(Exception):
    pass


def _frac(x):
    return str(Fraction(x))


def _dec(x, digits=DIGITS):
    return to_decimal(Fraction(x), digits)


def _fmt(x):
    return f"{float(x):.17g}"


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _params_1d(args, p0):
    try:
        return model1d.Params1D(int(args.A0), int(args.A1), p0)
    except (ValueError, InvalidInput) as exc:
        raise UsageError(str(exc)) from exc


def _params_2d(args, p0):
    try:
        return model2d.Params2D(model2d.parse_matrix(args.A0), model2d.parse_matrix(args.A1), p0)
    except InvalidInput as exc:
        raise UsageError(str(exc)) from exc


def _default_matrices(args):
    if args.A0 is None:
        args.A0 = "2" if args.model == "1d" else "2,1;1,1"
    if args.A1 is None:
        args.A1 = "3" if args.model == "1d" else "3,1;2,1"


# -- env ---------------------------------------------------------------------

def cmd_env(args):
    try:
        p0 = envmod.as_fraction(args.p0)
        extent = [int(v) for v in str(args.extent).split(",")]
        if len(extent) == 1:
            extent = extent * args.dim
        env = envmod.generate(args.seed, p0, args.dim, extent)
    except (InvalidInput, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    envmod.save(env, args.out)
    frac = envmod.label_fraction(env)
    print(json.dumps({
        "out": str(args.out),
        "extent": list(env.extent),
        "label_bytes": len(env.labels),
        "label_fraction": _frac(frac),
        "label_fraction_decimal": _dec(frac, 6),
        "sha256": env.sha256(),
    }, sort_keys=True))
    return 0


# -- analytic ----------------------------------------------------------------

def analytic_report(model, A0, A1, p0):
    """Closed-form constants as a JSON-ready dict of exact fraction strings."""
    p0 = envmod.as_fraction(p0)
    if model == "1d":
        params = model1d.Params1D(int(A0), int(A1), p0)
        a = model1d.analytic_1d(params)
        return {
            "model": "1d",
            "A0": params.A0,
            "A1": params.A1,
            "p0": _frac(p0),
            "p": _frac(a.p),
            "D": _frac(a.D),
            "sigma2": _frac(a.sigma2),
            "lambda": a.lam,
            "alpha_star": [[_frac(v) for v in row] for row in a.alpha_star],
            "decimal": {
                "p": _dec(a.p), "D": _dec(a.D), "sigma2": _dec(a.sigma2),
                "lambda": f"{a.lam:.15f}",
                "alpha_star": [[_dec(v) for v in row] for row in a.alpha_star],
            },
        }
    params = model2d.Params2D(A0, A1, p0)
    a = model2d.analytic_2d(params)
    vec = lambda v: [_frac(c) for c in v]  # noqa: E731
    dvec = lambda v: [_dec(c) for c in v]  # noqa: E731
    return {
        "model": "2d",
        "A0": [list(r) for r in params.A0],
        "A1": [list(r) for r in params.A1],
        "p0": _frac(p0),
        "p": _frac(a.p),
        "D": vec(a.D),
        "D0": vec(a.D0),
        "D1": vec(a.D1),
        "self_overlap": vec(a.self_overlap),
        "alpha_star": [vec(r) for r in a.alpha_star],
        "decimal": {
            "p": _dec(a.p), "D": dvec(a.D), "D0": dvec(a.D0), "D1": dvec(a.D1),
            "self_overlap": dvec(a.self_overlap),
            "alpha_star": [dvec(r) for r in a.alpha_star],
        },
    }


def cmd_analytic(args):
    _default_matrices(args)
    try:
        if args.model == "2d":
            A0, A1 = model2d.parse_matrix(args.A0), model2d.parse_matrix(args.A1)
        else:
            A0, A1 = int(args.A0), int(args.A1)
        report = analytic_report(args.model, A0, A1, args.p0)
    except (InvalidInput, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


# -- sim -----------------------------------------------------------------------

def _load_env(path):
    try:
        return envmod.load(path)
    except (InvalidInput, OSError) as exc:
        raise UsageError(f"cannot load environment {path}: {exc}") from exc


def _sim_1d(args, env, prefix):
    params = _params_1d(args, env.p0)
    need = model1d.required_extent(params, args.n)
    if env.dim != 1 or env.extent[0] < need:
        raise UsageError(f"environment too small for n={args.n}: 1D extent >= {need} required, "
                         f"file has dim={env.dim} extent={list(env.extent)}")
    mode = "deterministic" if args.mode == "det" else "markov"
    an = model1d.analytic_1d(params)
    alpha_step = args.alpha_step if args.alpha_step is not None and args.alpha_step < args.n else None
    summary = model1d.run_ensemble_1d(env, params, args.n, args.count, mode, args.seed,
                                      denominator=args.denominator, workers=args.threads,
                                      alpha_step=alpha_step, retain_samples=args.retain_samples)
    files = {"hist": f"{prefix.name}.hist.csv"}
    total = summary.count
    _write_csv(f"{prefix}.hist.csv", ["tile", "count", "frequency", "label"],
               [(k, c, _fmt(c / total), env.label_at(k)) for k, c in summary.tile_histogram.items()])
    extra = {
        "mode": mode,
        "seed": args.seed,
        "A0": params.A0, "A1": params.A1, "p0": _frac(params.p0),
        "D": _frac(an.D), "sigma2": _frac(an.sigma2), "p": _frac(an.p),
        "env_sha256": env.sha256(),
        "occupation_label0": summary.occupation_fraction() if summary.steps_total else None,
        "lyapunov_estimate": summary.lyapunov_estimate(params.A0, params.A1) if summary.steps_total else None,
    }
    if alpha_step is not None:
        extra["alpha_step"] = alpha_step
        extra["empirical_alpha"] = stats.empirical_alpha(summary.transitions)
    if summary.completed and args.n > 0:
        ecdf = stats.EmpiricalCdf.from_histogram(summary.tile_histogram, args.n, an.D)
        model_cdf = lambda y: stats.gaussian_cdf_1d(y, float(an.sigma2))  # noqa: E731
        extra["ks_distance"] = stats.ks_distance(ecdf, model_cdf)
        extra["var_over_n"] = float(summary.covariance[0, 0]) / args.n if summary.completed > 1 else None
        h0, h1, m0, m1 = stats.conditional_label_histograms(summary, env)
        extra["label_curve_l1"] = (stats.label_curve_distance(h0, h1, an.p / (1 - an.p))
                                   if h0 and h1 else None)
        _write_csv(f"{prefix}.ecdf.csv", ["z", "ecdf", "gaussian_cdf"],
                   [(_fmt(z), _fmt(f), _fmt(model_cdf(float(z)))) for z, f in zip(ecdf.points, ecdf.after)])
        files["ecdf"] = f"{prefix.name}.ecdf.csv"
    if args.retain_samples and summary.completed and args.n > 0:
        z = summary.scaled_samples(an.D)[:, 0]
        _write_csv(f"{prefix}.samples.csv", ["z"], [(_fmt(v),) for v in z])
        files["samples"] = f"{prefix.name}.samples.csv"
    if mode == "deterministic" and args.count == 1 and args.n > 0:
        q = args.denominator or DEFAULT_DENOMINATOR_1D
        x = sample_point(Substream(args.seed, 0), 1, q)
        every = args.trace_every or max(1, args.n // 1000)
        try:
            _, trace = model1d.trajectory_1d(env, params, x, args.n, every)
        except StoppedProcess as exc:
            trace = [(exc.state.step_count, exc.state.V)]
        _write_csv(f"{prefix}.trace.csv", ["step", "V", "V_over_n"],
                   [(s, V, _fmt(V / s)) for s, V in trace])
        files["trace"] = f"{prefix.name}.trace.csv"
    return summary, extra, files


def _sim_2d(args, env, prefix):
    if args.mode == "markov":
        raise UsageError("markov mode is unavailable in 2D: unit-square tiles are not a Markov "
                         "partition for toral automorphisms; use --mode det")
    params = _params_2d(args, env.p0)
    need = model2d.required_extent(params, args.n)
    if env.dim != 2 or min(env.extent) < need:
        raise UsageError(f"environment too small for n={args.n}: 2D extent >= {need} per axis required, "
                         f"file has dim={env.dim} extent={list(env.extent)}")
    an = model2d.analytic_2d(params)
    summary = model2d.run_ensemble_2d(env, params, args.n, args.count, args.seed,
                                      denominator=args.denominator, workers=args.threads,
                                      retain_samples=True)
    files = {"hist": f"{prefix.name}.hist.csv"}
    total = summary.count
    _write_csv(f"{prefix}.hist.csv", ["k1", "k2", "count", "frequency", "label"],
               [(k[0], k[1], c, _fmt(c / total), env.label_at(k)) for k, c in summary.tile_histogram.items()])
    extra = {
        "mode": "deterministic",
        "seed": args.seed,
        "A0": [list(r) for r in params.A0], "A1": [list(r) for r in params.A1], "p0": _frac(params.p0),
        "D": [_frac(d) for d in an.D], "p": _frac(an.p),
        "env_sha256": env.sha256(),
        "denominator": str(args.denominator or DEFAULT_DENOMINATOR_2D),
    }
    if summary.completed > 2 and args.n > 0:
        z = summary.scaled_samples(an.D)
        cov = np.cov(z.T)
        extra["scaled_mean"] = z.mean(axis=0).tolist()
        extra["scaled_cov"] = cov.tolist()
        dist, (g1, g2, emp, model) = stats.ks_distance_2d(z, cov, grid=args.grid)
        extra["cdf_max_diff"] = dist
        # same comparison about the sample mean: separates shape from centring
        extra["cdf_max_diff_recentred"] = stats.ks_distance_2d(z - z.mean(axis=0), cov, grid=args.grid)[0]
        rows = [(_fmt(a), _fmt(b), _fmt(emp[i, j]), _fmt(model[i, j]))
                for i, a in enumerate(g1) for j, b in enumerate(g2)]
        _write_csv(f"{prefix}.ecdf.csv", ["z1", "z2", "ecdf", "gaussian_cdf"], rows)
        files["ecdf"] = f"{prefix.name}.ecdf.csv"
        if args.retain_samples:
            _write_csv(f"{prefix}.samples.csv", ["z1", "z2"], [(_fmt(a), _fmt(b)) for a, b in z])
            files["samples"] = f"{prefix.name}.samples.csv"
    summary = summary if args.retain_samples else _drop_samples(summary)
    return summary, extra, files


def _drop_samples(summary):
    from dataclasses import replace
    return replace(summary, samples=None)


def cmd_sim(args):
    _default_matrices(args)
    if args.count < 0 or args.n < 0:
        raise UsageError("--n and --count must be nonnegative")
    env = _load_env(args.env)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        if args.model == "1d":
            summary, extra, files = _sim_1d(args, env, prefix)
        else:
            summary, extra, files = _sim_2d(args, env, prefix)
    except (InvalidInput, EnvironmentExhausted) as exc:
        raise UsageError(str(exc)) from exc
    extra["files"] = files
    extra["env"] = str(args.env)
    _write_json(f"{prefix}.summary.json", summary.to_json(**extra))
    _write_json(f"{prefix}.manifest.json", {
        "command": "sim",
        "params": {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "threads")},
        "master_seed": args.seed,
        "env_sha256": extra["env_sha256"],
        "version": __version__,
        "wall_clock_s": time.perf_counter() - start,
        "workers": args.threads,
    })
    print(json.dumps({"summary": f"{prefix}.summary.json", "count": summary.count,
                      "stopped": summary.stopped}))
    return 0


# -- dist ----------------------------------------------------------------------

def cmd_dist(args):
    env = _load_env(args.env)
    if env.dim != 1:
        raise UsageError("dist works on 1D environments only")
    params = _params_1d(args, env.p0)
    if args.mode == "exact" and args.n > args.max_exact_n:
        raise UsageError(f"exact mode is capped at n={args.max_exact_n} (rational denominators grow "
                         "exponentially); rerun with --mode float or raise --max-exact-n")
    try:
        dist = model1d.propagate_distribution(env, params, model1d.DistributionVector.point_mass(0), args.n,
                                              mode=args.mode, max_exact_steps=None)
    except (InvalidInput, EnvironmentExhausted) as exc:
        raise UsageError(str(exc)) from exc
    if args.mode == "exact":
        rows = [(k, _frac(w)) for k, w in dist.items()]
    else:
        rows = [(k, str(w)) for k, w in dist.items()]
    _write_csv(args.out, ["tile", "probability"], rows)
    mean, var = dist.mean(), dist.variance()
    info = {
        "n": args.n,
        "mode": args.mode,
        "exact": dist.exact,
        "total": _frac(dist.total()) if dist.exact else str(dist.total()),
        "mean": _fmt(mean),
        "variance": _fmt(var),
        "mean_over_n": _fmt(mean / args.n) if args.n else None,
        "variance_over_n": _fmt(var / args.n) if args.n else None,
        "env_sha256": env.sha256(),
    }
    if dist.exact:
        info["mean_exact"] = _frac(mean)
        info["variance_exact"] = _frac(var)
    stats_path = args.stats_out or str(Path(args.out).with_suffix(".json"))
    _write_json(stats_path, info)
    print(json.dumps(info, sort_keys=True))
    return 0


# -- report --------------------------------------------------------------------

def _check(name, value, target, tol, relative=False):
    if value is None:
        return {"name": name, "value": None, "target": target, "tol": tol, "pass": False}
    delta = abs(value - target)
    if relative:
        delta /= abs(target)
    return {"name": name, "value": value, "target": target, "tol": tol, "delta": delta,
            "relative": relative, "pass": bool(delta <= tol)}


def cmd_report(args):
    try:
        summary = json.loads(Path(args.summary).read_text())
        analytic = json.loads(Path(args.analytic).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read inputs: {exc}") from exc
    if summary.get("model") != analytic.get("model"):
        raise UsageError(f"summary is for model {summary.get('model')!r} but analytic file is for "
                         f"{analytic.get('model')!r}")
    n = summary["n"]
    checks = []
    if summary["model"] == "1d":
        D = float(Fraction(analytic["D"]))
        sigma2 = float(Fraction(analytic["sigma2"]))
        p = float(Fraction(analytic["p"]))
        checks.append(_check("ks_vs_gaussian", summary.get("ks_distance"), 0.0, args.ks_tol))
        checks.append(_check("label0_mass", summary["label_mass"][0], p, args.mass_tol))
        checks.append(_check("label_curve_l1", summary.get("label_curve_l1"), 0.0, args.l1_tol))
        drift = summary["mean"][0] / n if summary["mean"] and n else None
        checks.append(_check("drift", drift, D, args.drift_tol, relative=True))
        checks.append(_check("variance_over_n", summary.get("var_over_n"), sigma2, args.var_tol, relative=True))
    else:
        D = [float(Fraction(d)) for d in analytic["D"]]
        for i, d in enumerate(D):
            value = summary["mean"][i] / n if summary["mean"] and n else None
            checks.append(_check(f"drift_{i + 1}", value, d, args.drift_tol, relative=True))
        checks.append(_check("cdf_max_diff", summary.get("cdf_max_diff"), 0.0, args.cdf_tol))
    ok = all(c["pass"] for c in checks)
    report = {"model": summary["model"], "n": n, "count": summary["count"], "checks": checks, "pass": ok}
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    for c in checks:
        value = "missing" if c["value"] is None else f"{c['value']:.6g}"
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: {value} (target {c['target']:.6g}, tol {c['tol']})")
    return 0 if ok else 1


# -- parser ----------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="qwalk", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("env", help="generate a QWENV1 environment file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--p0", default="1/2")
    p.add_argument("--dim", type=int, choices=(1, 2), default=1)
    p.add_argument("--extent", required=True, help="tile count, or 'e1,e2' in 2D")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_env)

    p = sub.add_parser("analytic", help="closed-form constants as exact fractions")
    p.add_argument("--model", choices=("1d", "2d"), default="1d")
    p.add_argument("--A0", help="integer (1d) or matrix 'a,b;c,d' (2d)")
    p.add_argument("--A1")
    p.add_argument("--p0", default="1/2")
    p.add_argument("--format", choices=("json",), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("sim", help="run an ensemble of trajectories",
                       description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--model", choices=("1d", "2d"), default="1d")
    p.add_argument("--mode", choices=("det", "markov"), default="markov")
    p.add_argument("--env", required=True)
    p.add_argument("--A0")
    p.add_argument("--A1")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--denominator", type=int, help="grid denominator for sampled initial points")
    p.add_argument("--alpha-step", type=int, help="record label transitions at this step (1d)")
    p.add_argument("--trace-every", type=int, help="trace spacing for --count 1 deterministic 1d runs")
    p.add_argument("--grid", type=int, default=201, help="2d CDF comparison grid size per axis")
    p.add_argument("--retain-samples", action="store_true")
    p.add_argument("--threads", type=int, default=1, help="worker processes; never changes output bytes")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("dist", help="exact tile distribution rho0 Gamma^n (1d)")
    p.add_argument("--env", required=True)
    p.add_argument("--A0", default="2")
    p.add_argument("--A1", default="3")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mode", choices=("exact", "float"), default="exact")
    p.add_argument("--max-exact-n", type=int, default=model1d.EXACT_MAX_STEPS)
    p.add_argument("--out", required=True)
    p.add_argument("--stats-out")
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("report", help="compare a sim summary against analytic values")
    p.add_argument("--summary", required=True)
    p.add_argument("--analytic", required=True)
    p.add_argument("--out")
    p.add_argument("--ks-tol", type=float, default=0.012)
    p.add_argument("--mass-tol", type=float, default=0.01)
    p.add_argument("--l1-tol", type=float, default=0.05)
    p.add_argument("--drift-tol", type=float, default=0.02, help="relative")
    p.add_argument("--var-tol", type=float, default=0.05, help="relative")
    p.add_argument("--cdf-tol", type=float, default=0.05)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"qwalk {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except QWalkError as exc:
        print(f"qwalk {args.command}: error: {exc}", file=sys.stderr)
        return 1
