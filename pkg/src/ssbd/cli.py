"""Command-line interface.

Subcommands: gen, deconv, landscape, params, grid, initrate, conc. Options
resolve as: built-in defaults, overridden by a flat key=value config file
(--config), overridden by explicit flags. Every run writes a .meta file with
the full effective configuration. Exit codes: 0 success, 1 usage or input
error, 2 numerical failure.
"""

import argparse
import sys

import numpy as np

from . import __version__
from .errors import FileFormatError, SsbdError
from .experiments import (
    GridSpec,
    KERNEL_FAMILIES,
    THETA_RULE,
    make_kernel,
    run_concentration_sweep,
    run_init_region_rate,
    run_param_sweep,
    run_recovery_grid,
    write_csv,
    write_meta,
)
from .landscape import (
    ObservationModel,
    classify_stationary,
    min_tangent_eig,
    region_check,
    sample_gradient,
    sample_hess_vec,
    sample_objective,
)
from .optimizer import SolveOptions
from .pipeline import deconvolve
from .shiftmodel import ShiftModel
from .signals import convolve, derive_rng, read_vector, sample_bg, write_vector


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


SOLVER_KEYS = (
    ("max_iters", int),
    ("grad_tol", float),
    ("curvature_tol", float),
    ("armijo_c", float),
    ("backtrack_factor", float),
    ("initial_step", float),
    ("escape_check_period", int),
    ("min_eig_tol", float),
)


def load_config(path):
    cfg = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            if "=" not in s:
                raise FileFormatError(f"{path}:{lineno}: expected 'key = value', got {s!r}")
            key, _, value = s.partition("=")
            cfg[key.strip()] = value.strip()
    return cfg


def _resolve(args, config, key, typ, default):
    """Flag > config file > default."""
    cli_val = getattr(args, key, None)
    if cli_val is not None:
        return cli_val
    if key in config:
        try:
            return typ(config[key])
        except ValueError:
            raise FileFormatError(f"config key {key}: cannot parse {config[key]!r} as {typ.__name__}")
    return default


def _solver_options(args, config, seed):
    kwargs = {"seed": seed}
    for key, typ in SOLVER_KEYS:
        val = _resolve(args, config, key, typ, None)
        if val is not None:
            kwargs[key] = val
    return SolveOptions(**kwargs)


def _add_solver_flags(p):
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--grad-tol", dest="grad_tol", type=float)
    p.add_argument("--curvature-tol", dest="curvature_tol", type=float)
    p.add_argument("--armijo-c", dest="armijo_c", type=float)
    p.add_argument("--backtrack-factor", dest="backtrack_factor", type=float)
    p.add_argument("--initial-step", dest="initial_step", type=float)
    p.add_argument("--escape-check-period", dest="escape_check_period", type=int)
    p.add_argument("--min-eig-tol", dest="min_eig_tol", type=float)


def _int_list(text):
    return tuple(int(x) for x in text.split(","))


def _float_list(text):
    return tuple(float(x) for x in text.split(","))


def build_parser():
    parser = _Parser(prog="ssbd", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic observation")
    p.add_argument("--config")
    p.add_argument("--k", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--family", choices=KERNEL_FAMILIES)
    p.add_argument("-o", "--out", dest="out")
    p.add_argument("--kernel-out", dest="kernel_out")
    p.add_argument("--activation-out", dest="activation_out")

    p = sub.add_parser("deconv", help="recover a shift-truncated kernel")
    p.add_argument("--config")
    p.add_argument("-i", "--input", dest="input")
    p.add_argument("--k", type=int)
    p.add_argument("--truth")
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--out", dest="out")
    _add_solver_flags(p)

    p = sub.add_parser("landscape", help="audit objective values at sphere points")
    p.add_argument("--config")
    p.add_argument("-i", "--input", dest="input")
    p.add_argument("--k", type=int)
    p.add_argument("--truth")
    p.add_argument("--points", help="file with one whitespace-separated point per line")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--c-star", dest="c_star", type=float)
    p.add_argument("-o", "--out", dest="out")

    p = sub.add_parser("params", help="averaged kernel statistics per k")
    p.add_argument("--config")
    p.add_argument("--k", type=_int_list)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--family", choices=KERNEL_FAMILIES)
    p.add_argument("-o", "--out", dest="out")

    p = sub.add_parser("grid", help="recovery-error grid over (k, theta, m)")
    p.add_argument("--config")
    p.add_argument("--k", type=_int_list)
    p.add_argument("--theta", help="comma list of rates or the rule k^-2/3")
    p.add_argument("--m", type=_int_list)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--family", choices=KERNEL_FAMILIES)
    p.add_argument("--workers", type=int)
    p.add_argument("--flop-cap", dest="flop_cap", type=float)
    p.add_argument("--outdir")
    _add_solver_flags(p)

    p = sub.add_parser("initrate", help="fraction of initializations in the sub-level region")
    p.add_argument("--config")
    p.add_argument("--k", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--c-star", dest="c_star", type=float)
    p.add_argument("--family", choices=KERNEL_FAMILIES)
    p.add_argument("--outdir")

    p = sub.add_parser("conc", help="sample-vs-population concentration sweep")
    p.add_argument("--config")
    p.add_argument("--k", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--m", type=_int_list)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--c-star", dest="c_star", type=float)
    p.add_argument("--family", choices=KERNEL_FAMILIES)
    p.add_argument("--outdir")

    return parser


def _require(value, name):
    if value is None:
        raise _UsageError(f"missing required option --{name.replace('_', '-')}")
    return value


def _meta(path, command, effective):
    meta = {"command": command, "version": __version__}
    meta.update(effective)
    write_meta(path, meta)


def _cmd_gen(args, cfg):
    k = _require(_resolve(args, cfg, "k", int, None), "k")
    m = _require(_resolve(args, cfg, "m", int, None), "m")
    theta = _require(_resolve(args, cfg, "theta", float, None), "theta")
    seed = _resolve(args, cfg, "seed", int, 0)
    family = _resolve(args, cfg, "family", str, "generic")
    out = _resolve(args, cfg, "out", str, "y.txt")
    kernel_out = _resolve(args, cfg, "kernel_out", str, _stem(out) + "_kernel.txt")
    activation_out = _resolve(args, cfg, "activation_out", str, None)

    a0 = make_kernel(family, k, derive_rng(seed, 0))
    x0 = sample_bg(m, theta, seed)
    y = convolve(a0, x0.values)
    write_vector(out, y)
    write_vector(kernel_out, a0)
    if activation_out:
        write_vector(activation_out, x0.values)
    eff = {"k": k, "m": m, "theta": theta, "seed": seed, "family": family,
           "out": out, "kernel_out": kernel_out,
           "activation_out": activation_out or "", "support_count": x0.support_count}
    _meta(_stem(out) + ".meta", "gen", eff)
    return 0


def _stem(path):
    return path[: -len(".txt")] if path.endswith(".txt") else path


def _cmd_deconv(args, cfg):
    inp = _require(_resolve(args, cfg, "input", str, None), "input")
    k = _require(_resolve(args, cfg, "k", int, None), "k")
    truth_path = _resolve(args, cfg, "truth", str, None)
    seed = _resolve(args, cfg, "seed", int, 0)
    out = _resolve(args, cfg, "out", str, "deconv")
    opts = _solver_options(args, cfg, seed)

    y = read_vector(inp)
    truth = read_vector(truth_path) if truth_path else None
    res = deconvolve(y, k, opts, truth=truth, seed=seed)
    write_vector(out + "_q.txt", res.q_bar)
    write_vector(out + "_kernel.txt", res.a_bar)
    row = {
        "seed": seed, "k": k, "m": len(y),
        "status": res.report.status.value,
        "iters": res.report.iterations,
        "escapes": len(res.report.escape_events),
        "err": res.err, "best_shift": res.best_shift, "sign": res.sign,
        "psi_final": res.psi_final,
    }
    write_csv(out + ".csv",
              ["seed", "k", "m", "status", "iters", "escapes", "err",
               "best_shift", "sign", "psi_final"], [row])
    eff = {"input": inp, "k": k, "truth": truth_path or "", "seed": seed, "out": out}
    eff.update({key: getattr(opts, key) for key, _ in SOLVER_KEYS})
    _meta(out + ".meta", "deconv", eff)
    return 0


def _read_points(path, k):
    pts = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            try:
                vals = [float(x) for x in s.split()]
            except ValueError:
                raise FileFormatError(f"{path}:{lineno}: not a point") from None
            if len(vals) != k:
                raise FileFormatError(f"{path}:{lineno}: expected {k} values, got {len(vals)}")
            pts.append(np.array(vals))
    return pts


def _cmd_landscape(args, cfg):
    inp = _require(_resolve(args, cfg, "input", str, None), "input")
    k = _require(_resolve(args, cfg, "k", int, None), "k")
    truth_path = _resolve(args, cfg, "truth", str, None)
    points_path = _resolve(args, cfg, "points", str, None)
    samples = _resolve(args, cfg, "samples", int, 0)
    seed = _resolve(args, cfg, "seed", int, 0)
    c_star = _resolve(args, cfg, "c_star", float, 10.0)
    out = _resolve(args, cfg, "out", str, "landscape.csv")

    y = read_vector(inp)
    obs = ObservationModel.from_signal(y, k)
    shift = ShiftModel.from_kernel(read_vector(truth_path)) if truth_path else None

    if points_path:
        points = _read_points(points_path, k)
    elif samples > 0:
        rng = derive_rng(seed, 0xA11)
        points = [q / np.linalg.norm(q) for q in rng.standard_normal((samples, k))]
    else:
        raise _UsageError("supply --points or --samples")

    m = obs.m
    rows = []
    for idx, q in enumerate(points):
        q = q / np.linalg.norm(q)
        val = sample_objective(obs, q)
        gn = float(np.linalg.norm(sample_gradient(obs, q)))
        lam, _ = min_tangent_eig(
            lambda v: m * sample_hess_vec(obs, q, v), q, tol=1e-8, seed=seed + idx
        )
        row = {"index": idx, "psi": val, "grad_norm": gn, "lambda_min": lam / m,
               "in_region": None, "in_sublevel": None, "kind": None}
        if shift is not None:
            rc = region_check(shift, q, c_star)
            rep = classify_stationary(shift, q, c_star, grad_tol=float("inf"))
            row.update(in_region=int(rc.in_region), in_sublevel=int(rc.in_sublevel),
                       kind=rep.kind)
        rows.append(row)
    write_csv(out, ["index", "psi", "grad_norm", "lambda_min",
                    "in_region", "in_sublevel", "kind"], rows)
    eff = {"input": inp, "k": k, "truth": truth_path or "", "points": points_path or "",
           "samples": samples, "seed": seed, "c_star": c_star, "out": out}
    _meta(_stem_csv(out) + ".meta", "landscape", eff)
    return 0


def _stem_csv(path):
    return path[: -len(".csv")] if path.endswith(".csv") else path


def _cmd_params(args, cfg):
    ks = _require(_resolve(args, cfg, "k", _int_list, None), "k")
    trials = _resolve(args, cfg, "trials", int, 50)
    seed = _resolve(args, cfg, "seed", int, 0)
    family = _resolve(args, cfg, "family", str, "generic")
    out = _resolve(args, cfg, "out", str, "params.csv")
    rows = run_param_sweep(ks, trials, seed, family)
    write_csv(out, ["k", "sigma_min_avg", "kappa_avg", "mu_avg", "trials", "seed",
                    "ref_sigma_min", "ref_kappa", "ref_mu"], rows)
    _meta(_stem_csv(out) + ".meta", "params",
          {"k": ",".join(map(str, ks)), "trials": trials, "seed": seed,
           "family": family, "out": out})
    return 0


def _cmd_grid(args, cfg):
    ks = _require(_resolve(args, cfg, "k", _int_list, None), "k")
    theta_raw = _require(_resolve(args, cfg, "theta", str, None), "theta")
    ms = _require(_resolve(args, cfg, "m", _int_list, None), "m")
    trials = _resolve(args, cfg, "trials", int, 10)
    seed = _resolve(args, cfg, "seed", int, 0)
    family = _resolve(args, cfg, "family", str, "generic")
    workers = _resolve(args, cfg, "workers", int, 1)
    flop_cap = _resolve(args, cfg, "flop_cap", float, 1e11)
    outdir = _resolve(args, cfg, "outdir", str, ".")
    opts = _solver_options(args, cfg, seed)

    thetas = THETA_RULE if theta_raw.strip() == THETA_RULE else _float_list(theta_raw)
    spec = GridSpec(ks=tuple(ks), thetas=thetas, ms=tuple(ms), trials=trials,
                    master_seed=seed, family=family, flop_cap=flop_cap,
                    workers=workers, solve=opts)
    result = run_recovery_grid(spec)
    for row in result.rows:
        row["overlap"] = row["k"] * row["theta"]  # spikes per window, the natural x-axis
    write_csv(f"{outdir}/grid.csv",
              ["k", "theta", "m", "trial", "err", "status", "iters", "escapes", "overlap"],
              result.rows)
    eff = {"k": ",".join(map(str, ks)), "theta": theta_raw, "m": ",".join(map(str, ms)),
           "trials": trials, "seed": seed, "family": family, "workers": workers,
           "flop_cap": flop_cap, "outdir": outdir}
    eff.update({key: getattr(opts, key) for key, _ in SOLVER_KEYS})
    _meta(f"{outdir}/grid.meta", "grid", eff)
    return 0


def _cmd_initrate(args, cfg):
    k = _require(_resolve(args, cfg, "k", int, None), "k")
    theta = _require(_resolve(args, cfg, "theta", float, None), "theta")
    m = _require(_resolve(args, cfg, "m", int, None), "m")
    trials = _resolve(args, cfg, "trials", int, 100)
    seed = _resolve(args, cfg, "seed", int, 0)
    c_star = _resolve(args, cfg, "c_star", float, 10.0)
    family = _resolve(args, cfg, "family", str, "generic")
    outdir = _resolve(args, cfg, "outdir", str, ".")
    rows, fraction = run_init_region_rate(k, theta, m, trials, seed, c_star, family)
    write_csv(f"{outdir}/initrate.csv",
              ["k", "theta", "m", "trial", "spikiness", "threshold", "in_region"], rows)
    _meta(f"{outdir}/initrate.meta", "initrate",
          {"k": k, "theta": theta, "m": m, "trials": trials, "seed": seed,
           "c_star": c_star, "family": family, "fraction": fraction, "outdir": outdir})
    print("%.17g" % fraction)
    return 0


def _cmd_conc(args, cfg):
    k = _require(_resolve(args, cfg, "k", int, None), "k")
    theta = _require(_resolve(args, cfg, "theta", float, None), "theta")
    ms = _require(_resolve(args, cfg, "m", _int_list, None), "m")
    samples = _resolve(args, cfg, "samples", int, 10)
    seed = _resolve(args, cfg, "seed", int, 0)
    c_star = _resolve(args, cfg, "c_star", float, 10.0)
    family = _resolve(args, cfg, "family", str, "generic")
    outdir = _resolve(args, cfg, "outdir", str, ".")
    rows = run_concentration_sweep(k, theta, ms, samples, seed, c_star, family)
    write_csv(f"{outdir}/conc.csv",
              ["m", "sample", "sampled", "grad_deviation", "grad_bound", "grad_ratio",
               "hess_deviation", "hess_bound", "hess_ratio",
               "whitening_delta", "whitening_bound"], rows)
    _meta(f"{outdir}/conc.meta", "conc",
          {"k": k, "theta": theta, "m": ",".join(map(str, ms)), "samples": samples,
           "seed": seed, "c_star": c_star, "family": family, "outdir": outdir})
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "deconv": _cmd_deconv,
    "landscape": _cmd_landscape,
    "params": _cmd_params,
    "grid": _cmd_grid,
    "initrate": _cmd_initrate,
    "conc": _cmd_conc,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return 0 if exc.code in (0, None) else 1
    try:
        cfg = load_config(args.config) if getattr(args, "config", None) else {}
        return _COMMANDS[args.command](args, cfg)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except SsbdError as exc:
        stage = type(exc).__name__
        print(f"{args.command}: {stage}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1


def app():
    sys.exit(main())


if __name__ == "__main__":
    app()
