"""Command line interface.

Subcommands: ``generate-data``, ``train``, ``map-estimate``, ``experiment``
and ``metrics``.  Global flags (``--config``, ``--seed``, ``--out``,
``--threads``) go before the subcommand.  Failures print one JSON line
``{"error": ..., "message": ...}`` to stderr and exit nonzero.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .bench import ExperimentConfig, compute_restart_stats, reference_for, run_experiment, with_overrides
from .data import (
    BoundarySpec,
    Field,
    SolverError,
    VanGenuchtenParams,
    read_field,
    read_points,
    write_field,
    write_points,
)
from .map_baseline import MapConfig, map_estimate
from .network import save_params
from .problems import MeasurementSet, relative_error
from .training import (
    LinearReference,
    NonlinearReference,
    collocation_points,
    evaluate_linear,
    evaluate_nonlinear,
    linear_measurements,
    nonlinear_measurements,
    predict_linear,
    predict_u_nonlinear,
    train_linear,
    train_nonlinear,
)

EXIT_USAGE = 2
EXIT_FAILURE = 1


class CliError(Exception):
    def __init__(self, kind, message, code=EXIT_FAILURE):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


def _emit_error(kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


# -- data directory layout -------------------------------------------------

FILES = {
    "k": "k.txt",
    "log_k": "log_k.txt",
    "u": "u.txt",
    "k_obs": "k_obs.txt",
    "u_obs": "u_obs.txt",
    "dirichlet": "dirichlet.txt",
    "neumann": "neumann.txt",
}


def write_measurements(out, meas):
    out = Path(out)
    if len(meas.k_values):
        write_points(out / FILES["k_obs"], meas.k_points, meas.k_values)
    write_points(out / FILES["u_obs"], meas.u_points, meas.u_values)
    write_points(out / FILES["dirichlet"], meas.dirichlet_points, meas.dirichlet_values)
    write_points(out / FILES["neumann"], meas.neumann_points, meas.neumann_values)


def _read_optional(path):
    path = Path(path)
    if not path.exists():
        return np.zeros((0, 2)), np.zeros(0)
    return read_points(path)


def read_measurements(directory, domain):
    """Load a measurement set written by :func:`write_measurements`.

    Flux points carry no axis column; it follows from which edge they lie on.
    """
    d = Path(directory)
    kp, kv = _read_optional(d / FILES["k_obs"])
    up, uv = _read_optional(d / FILES["u_obs"])
    dp, dv = _read_optional(d / FILES["dirichlet"])
    npts, nv = _read_optional(d / FILES["neumann"])
    tol = 1e-9 * max(domain)
    on_x1_edge = (np.abs(npts[:, 0]) <= tol) | (np.abs(npts[:, 0] - domain[0]) <= tol)
    return MeasurementSet(kp, kv, up, uv, dp, dv, npts, nv, np.where(on_x1_edge, 0, 1))


# -- subcommands ---------------------------------------------------------------


def _config(args):
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    if getattr(args, "kind", None):
        cfg = with_overrides(cfg, kind=args.kind)
    return with_overrides(cfg, master_seed=args.seed, out=args.out, threads=args.threads)


def cmd_generate_data(args):
    cfg = _config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ref = reference_for(cfg)
    seed = cfg.fixed_measurement_seed
    write_field(out / FILES["u"], ref.u)
    if cfg.nonlinear:
        meas = nonlinear_measurements(ref, cfg.n_u, seed, cfg.measurement_scheme, cfg.noise_level, cfg.noise_kind)
    else:
        write_field(out / FILES["k"], ref.k)
        write_field(out / FILES["log_k"], ref.log_k)
        meas = linear_measurements(ref, cfg.n_k, cfg.n_u, seed, cfg.measurement_scheme)
    write_measurements(out, meas)
    return {"out": str(out), "counts": meas.counts}


def _reference_from_dir(cfg, directory):
    d = Path(directory)
    u = read_field(d / FILES["u"])
    if cfg.nonlinear:
        return NonlinearReference(u.grid, u, VanGenuchtenParams(**cfg.vg))
    k = read_field(d / FILES["k"])
    return LinearReference(u.grid, k.map(np.log), k, u)


def cmd_train(args):
    cfg = _config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.data:
        ref = _reference_from_dir(cfg, args.data)
        meas = read_measurements(args.data, (ref.grid.lx, ref.grid.ly))
    else:
        ref = reference_for(cfg)
        seed = cfg.fixed_measurement_seed
        if cfg.nonlinear:
            meas = nonlinear_measurements(ref, cfg.n_u, seed, cfg.measurement_scheme, cfg.noise_level, cfg.noise_kind)
        else:
            meas = linear_measurements(ref, cfg.n_k, cfg.n_u, seed, cfg.measurement_scheme)
    coll = collocation_points(ref.grid, cfg.n_c, cfg.fixed_measurement_seed, cfg.collocation_scheme)
    train_cfg = cfg.train_config(cfg.master_seed)
    if cfg.nonlinear:
        fit = train_nonlinear(ref, meas, coll, train_cfg)
        err = evaluate_nonlinear(fit, ref)
        write_field(out / "u_hat.txt", Field(ref.grid, predict_u_nonlinear(fit, ref.grid.centroids())))
    else:
        fit = train_linear(ref, meas, coll, train_cfg)
        err = evaluate_linear(fit, ref)
        u_hat, k_hat = predict_linear(fit, ref.grid)
        write_field(out / "u_hat.txt", u_hat)
        write_field(out / "k_hat.txt", k_hat)
    save_params(fit.u_net, out / "u_net.txt")
    save_params(fit.k_net, out / "k_net.txt")
    fit.report.to_csv(out / "trace.csv")
    result = {
        "eps_u": err.eps_u,
        "eps_K": err.eps_k,
        "iterations": fit.report.iterations,
        "reason": fit.report.reason,
    }
    (out / "metrics.json").write_text(json.dumps(result, indent=2) + "\n")
    return result


def cmd_map_estimate(args):
    cfg = _config(args)
    grid = read_field(args.grid).grid
    kp, kv = _read_optional(args.k_obs) if args.k_obs else (np.zeros((0, 2)), np.zeros(0))
    up, uv = read_points(args.u_obs)
    meas = MeasurementSet(k_points=kp, k_values=kv, u_points=up, u_values=uv)
    gamma = cfg.gamma_reg if args.gamma is None else args.gamma
    res = map_estimate(grid, meas, BoundarySpec.linear_default(), MapConfig(gamma_reg=gamma))
    k_out = Path(args.k_out or Path(cfg.out) / "k_map.txt")
    k_out.parent.mkdir(parents=True, exist_ok=True)
    write_field(k_out, res.k_hat)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "objective"])
            for i, f in enumerate(res.objective):
                w.writerow([i, repr(float(f))])
    return {"k_out": str(k_out), "objective": res.objective[-1], "iterations": res.iterations,
            "converged": res.converged}


def cmd_experiment(args):
    cfg = _config(args)
    report = run_experiment(cfg)
    rows = [
        {"sweep_var": r.sweep_value, "eps_u_mean": r.eps_u_mean, "eps_K_mean": r.eps_k_mean,
         "n_runs": r.n_runs, "n_failed": r.n_failed}
        for r in report.rows
    ]
    return {"out": cfg.out, "rows": rows}


def cmd_metrics(args):
    if args.runs:
        groups = {}
        with open(args.runs, newline="") as fh:
            for row in csv.DictReader(fh):
                if row["status"] == "ok" and row["method"] == args.method:
                    groups.setdefault(row["sweep_var"], []).append((float(row["eps_u"]), float(row["eps_K"])))
        result = {}
        for key, errs in groups.items():
            e = np.array(errs)
            mu, su = compute_restart_stats(e[:, 0])
            mk, sk = compute_restart_stats(e[:, 1])
            result[key] = {"eps_u_mean": mu, "eps_u_std": su, "eps_K_mean": mk, "eps_K_std": sk, "n_runs": len(e)}
        return result
    if not (args.estimate and args.reference):
        raise CliError("usage", "metrics needs --estimate and --reference, or --runs", EXIT_USAGE)
    est, ref = read_field(args.estimate), read_field(args.reference)
    if est.grid != ref.grid:
        raise CliError("grid-mismatch", "estimate and reference are on different grids")
    return {"relative_error": relative_error(est, ref, ref.grid)}


def build_parser():
    p = _Parser(prog="pinn-inverse", description="PINN and MAP estimation of conductivity fields.")
    p.add_argument("--config", help="experiment configuration (JSON)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker processes for experiments, BLAS threads otherwise")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate-data", help="reference fields and measurement files")
    g.add_argument("--kind", choices=("single-run", "nonlinear", "nonlinear-noisy"))
    g.set_defaults(func=cmd_generate_data)

    t = sub.add_parser("train", help="train one PINN pair")
    t.add_argument("--kind", choices=("single-run", "nonlinear", "nonlinear-noisy"))
    t.add_argument("--data", help="directory written by generate-data")
    t.set_defaults(func=cmd_train)

    m = sub.add_parser("map-estimate", help="regularised least-squares estimate of K")
    m.add_argument("--grid", required=True, help="any field file on the target grid")
    m.add_argument("--u-obs", required=True)
    m.add_argument("--k-obs")
    m.add_argument("--gamma", type=float, help="gradient penalty weight")
    m.add_argument("--k-out", help="output field file")
    m.add_argument("--trace", help="objective trajectory CSV")
    m.set_defaults(func=cmd_map_estimate)

    e = sub.add_parser("experiment", help="restart studies and sweeps")
    e.set_defaults(func=cmd_experiment)

    r = sub.add_parser("metrics", help="relative errors of fields or a runs table")
    r.add_argument("--estimate")
    r.add_argument("--reference")
    r.add_argument("--runs", help="runs.csv written by experiment")
    r.add_argument("--method", default="pinn")
    r.set_defaults(func=cmd_metrics)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.threads is not None and args.threads < 1:
            raise CliError("usage", "--threads must be positive", EXIT_USAGE)
        limit = 1 if args.command == "experiment" else args.threads
        with threadpool_limits(limits=limit):
            result = args.func(args)
    except CliError as exc:
        _emit_error(exc.kind, str(exc))
        return exc.code
    except (OSError, ValueError, KeyError, SolverError, FloatingPointError, json.JSONDecodeError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_FAILURE
    print(json.dumps(result, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
