"""Experiment orchestration: restarts, sweeps, MAP comparison, nonlinear runs.

Every run gets ``seed = master_seed + k`` where ``k`` is its index within the
experiment, so no two runs share a seed.  Results are written in run-index
order whatever order the workers finish in, and CSV files contain no timing
information, which makes them byte-reproducible.
"""

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .data import Field, VanGenuchtenParams, fv_solve_linear, van_genuchten_k, write_field
from .map_baseline import MapConfig, map_estimate
from .optim import LbfgsConfig
from .problems import LossSpec, relative_error
from .training import (
    LinearSetup,
    NonlinearSetup,
    TrainConfig,
    collocation_points,
    evaluate_linear,
    evaluate_nonlinear,
    linear_measurements,
    linear_reference,
    nonlinear_measurements,
    nonlinear_reference,
    predict_k_of_u,
    predict_linear,
    predict_u_nonlinear,
    train_linear,
    train_nonlinear,
)

__all__ = [
    "KINDS",
    "SUMMARY_COLUMNS",
    "ExperimentConfig",
    "RunSpec",
    "RunResult",
    "SweepRow",
    "SweepReport",
    "compute_restart_stats",
    "plan_runs",
    "reference_for",
    "run_experiment",
]

KINDS = (
    "single-run",
    "restart-study",
    "collocation-sweep",
    "nK-sweep",
    "nU-sweep",
    "map-vs-pinn",
    "nonlinear",
    "nonlinear-noisy",
)
SUMMARY_COLUMNS = ("sweep_var", "eps_u_mean", "eps_u_std", "eps_K_mean", "eps_K_std", "n_runs", "n_failed")
RUN_COLUMNS = ("run", "sweep_var", "seed", "method", "status", "eps_u", "eps_K", "iterations", "reason")

# u locations of a redrawn measurement set use a stream far from any run seed
U_SEED_OFFSET = 2**31


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "single-run"
    nx: int = 32
    ny: int = 32
    sigma: float = 1.0
    lam: float = 0.15
    gp_seed: int = 0
    lx: float = 10.0
    ly: float = 10.0
    vg: dict = field(default_factory=dict)
    n_k: int = 250
    n_u: int = 100
    n_c: int = 1024
    sweep: tuple = ()
    n_restarts: int = 1
    master_seed: int = 0
    measurement_seed: int = None
    measurement_scheme: str = "random-centroids"
    collocation_scheme: str = "latin-hypercube"
    max_iterations: int = 20000
    noise: float = None
    noise_kind: str = "multiplicative"
    gamma_reg: float = 1e-6
    k_output: str = "raw"
    loss_terms: dict = field(default_factory=dict)
    loss_weights: dict = field(default_factory=dict)
    u_layers: tuple = (2, 50, 50, 1)
    k_layers: tuple = None
    out: str = "results"
    threads: int = 1
    write_fields: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be at least 1")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        object.__setattr__(self, "sweep", tuple(int(v) for v in self.sweep))
        if self.kind.endswith("-sweep") or self.kind == "map-vs-pinn":
            if not self.sweep:
                raise ValueError(f"{self.kind} needs a nonempty sweep list")
        if any(v < 0 for v in self.sweep):
            raise ValueError("sweep values must be non-negative")
        object.__setattr__(self, "u_layers", tuple(self.u_layers))
        if self.k_layers is not None:
            object.__setattr__(self, "k_layers", tuple(self.k_layers))
        VanGenuchtenParams(**self.vg)
        LossSpec(dict(self.loss_terms), dict(self.loss_weights))

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self):
        d = asdict(self)
        d["sweep"] = list(self.sweep)
        d["u_layers"] = list(self.u_layers)
        d["k_layers"] = None if self.k_layers is None else list(self.k_layers)
        return d

    @property
    def nonlinear(self):
        return self.kind.startswith("nonlinear")

    @property
    def noise_level(self):
        if self.noise is not None:
            return float(self.noise)
        return 0.01 if self.kind == "nonlinear-noisy" else 0.0

    @property
    def fixed_measurement_seed(self):
        return self.master_seed if self.measurement_seed is None else self.measurement_seed

    def sweep_values(self):
        if self.sweep:
            return self.sweep
        return (self.n_u,) if self.nonlinear else (self.n_c,)

    def train_config(self, seed):
        k_layers = self.k_layers or ((1, 50, 50, 1) if self.nonlinear else (2, 50, 50, 1))
        return TrainConfig(
            u_layers=self.u_layers,
            k_layers=k_layers,
            seed=seed,
            lbfgs=LbfgsConfig(max_iterations=self.max_iterations),
            k_output=self.k_output,
            loss_spec=LossSpec(dict(self.loss_terms), dict(self.loss_weights)),
        )


@dataclass(frozen=True)
class RunSpec:
    index: int
    sweep_value: int
    seed: int
    n_k: int
    n_u: int
    n_c: int
    measurement_seed: int
    u_seed: int
    measurement_scheme: str
    collocation_seed: int


def plan_runs(config):
    """Expand a config into run specifications (in run-index order)."""
    base = config.master_seed
    fixed = config.fixed_measurement_seed
    specs = []
    k = 0
    for value in config.sweep_values():
        for _ in range(config.n_restarts if config.kind != "single-run" else 1):
            seed = base + k
            n_k, n_u, n_c = config.n_k, config.n_u, config.n_c
            m_seed, u_seed, scheme, c_seed = fixed, fixed + 1, config.measurement_scheme, fixed
            if config.kind in ("single-run", "restart-study", "collocation-sweep"):
                n_c = value
            if config.kind == "collocation-sweep":
                c_seed = seed
            elif config.kind in ("nK-sweep", "nU-sweep", "map-vs-pinn"):
                m_seed, u_seed = seed, seed + U_SEED_OFFSET
                if config.kind == "nK-sweep":
                    n_k, scheme = value, "latin-hypercube"
                elif config.kind == "nU-sweep":
                    n_u, scheme = value, "latin-hypercube"
                else:
                    n_k = n_u = value
            elif config.nonlinear:
                n_u = value
            specs.append(RunSpec(k, value, seed, n_k, n_u, n_c, m_seed, u_seed, scheme, c_seed))
            k += 1
        if config.kind == "single-run":
            break
    return specs


@dataclass
class RunResult:
    spec: RunSpec
    method: str
    status: str
    eps_u: float = math.nan
    eps_k: float = math.nan
    iterations: int = 0
    reason: str = ""
    wall_time: float = 0.0
    outputs: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == "ok"


def compute_restart_stats(raw_errors):
    """Mean and population standard deviation (divide by N, not N - 1)."""
    e = np.asarray(raw_errors, dtype=float).ravel()
    if len(e) == 0:
        raise ValueError("no errors to aggregate")
    # shifting by the first value keeps identical errors exactly identical
    mean = float(e[0] + math.fsum(e - e[0]) / len(e))
    return mean, float(np.sqrt(math.fsum((e - mean) ** 2) / len(e)))


@dataclass
class SweepRow:
    sweep_value: int
    eps_u_mean: float
    eps_u_std: float
    eps_k_mean: float
    eps_k_std: float
    n_runs: int
    n_failed: int
    raw_eps_u: list
    raw_eps_k: list
    wall_time: float


@dataclass
class SweepReport:
    config: ExperimentConfig
    rows: list
    runs: list
    map_rows: list = None

    @property
    def any_failed(self):
        return any(r.n_failed for r in self.rows + (self.map_rows or []))


def _aggregate(results):
    rows = []
    for value in dict.fromkeys(r.spec.sweep_value for r in results):
        group = [r for r in results if r.spec.sweep_value == value]
        ok = [r for r in group if r.ok]
        if ok:
            mu, su = compute_restart_stats([r.eps_u for r in ok])
            mk, sk = compute_restart_stats([r.eps_k for r in ok])
        else:
            mu = su = mk = sk = math.nan
        rows.append(
            SweepRow(
                value, mu, su, mk, sk, len(ok), len(group) - len(ok),
                [r.eps_u for r in ok], [r.eps_k for r in ok], sum(r.wall_time for r in group),
            )
        )
    return rows


# -- single runs -------------------------------------------------------------


def reference_for(config):
    """Reference data set described by ``config``."""
    if config.nonlinear:
        setup = NonlinearSetup(config.nx, config.ny, config.lx, config.ly, VanGenuchtenParams(**config.vg))
        return nonlinear_reference(setup)
    return linear_reference(LinearSetup(config.nx, config.ny, config.sigma, config.lam, config.gp_seed))


def _linear_run(config, ref, spec):
    meas = linear_measurements(ref, spec.n_k, spec.n_u, spec.measurement_seed, spec.measurement_scheme, spec.u_seed)
    coll = collocation_points(ref.grid, spec.n_c, spec.collocation_seed, config.collocation_scheme)
    t0 = time.perf_counter()
    fit = train_linear(ref, meas, coll, config.train_config(spec.seed))
    wall = time.perf_counter() - t0
    err = evaluate_linear(fit, ref)
    u_hat, k_hat = predict_linear(fit, ref.grid)
    results = [
        RunResult(spec, "pinn", "ok", err.eps_u, err.eps_k, fit.report.iterations, fit.report.reason, wall,
                  {"u": u_hat, "k": k_hat})
    ]
    if config.kind == "map-vs-pinn":
        t0 = time.perf_counter()
        res = map_estimate(ref.grid, meas, config=MapConfig(gamma_reg=config.gamma_reg))
        u_map = fv_solve_linear(ref.grid, res.k_hat)
        wall = time.perf_counter() - t0
        results.append(
            RunResult(
                spec, "map", "ok", relative_error(u_map, ref.u, ref.grid), relative_error(res.k_hat, ref.k, ref.grid),
                res.iterations, "converged" if res.converged else ("stagnated" if res.stagnated else "max-iter"),
                wall, {"u": u_map, "k": res.k_hat},
            )
        )
    return results


def _nonlinear_run(config, ref, spec):
    meas = nonlinear_measurements(ref, spec.n_u, spec.measurement_seed, spec.measurement_scheme,
                                  config.noise_level, config.noise_kind)
    coll = collocation_points(ref.grid, spec.n_c, spec.collocation_seed, config.collocation_scheme)
    t0 = time.perf_counter()
    fit = train_nonlinear(ref, meas, coll, config.train_config(spec.seed))
    wall = time.perf_counter() - t0
    err = evaluate_nonlinear(fit, ref)
    u_hat = Field(ref.grid, predict_u_nonlinear(fit, ref.grid.centroids()))
    us = np.linspace(*ref.u_range, 1000)
    curve = np.column_stack([us, predict_k_of_u(fit, us), van_genuchten_k(us, ref.vg)])
    return [RunResult(spec, "pinn", "ok", err.eps_u, err.eps_k, fit.report.iterations, fit.report.reason, wall,
                      {"u": u_hat, "k_of_u": curve})]


def execute_run(config, ref, spec):
    """One run; failures are recorded rather than raised."""
    methods = ("pinn", "map") if config.kind == "map-vs-pinn" else ("pinn",)
    try:
        if config.nonlinear:
            return _nonlinear_run(config, ref, spec)
        return _linear_run(config, ref, spec)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError, RuntimeError) as exc:
        return [RunResult(spec, m, f"failed:{type(exc).__name__}", reason=str(exc)) for m in methods]


def _execute_packed(args):
    return execute_run(*args)


# -- output ------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_summary(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([r.sweep_value, _fmt(r.eps_u_mean), _fmt(r.eps_u_std), _fmt(r.eps_k_mean),
                        _fmt(r.eps_k_std), r.n_runs, r.n_failed])


def write_runs(path, results):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for r in results:
            w.writerow([r.spec.index, r.spec.sweep_value, r.spec.seed, r.method, r.status,
                        _fmt(float(r.eps_u)), _fmt(float(r.eps_k)), r.iterations, r.reason])


def _write_outputs(out, results):
    fdir = out / "fields"
    fdir.mkdir(exist_ok=True)
    for r in results:
        stem = f"run{r.spec.index:04d}_{r.method}"
        for name, value in r.outputs.items():
            if isinstance(value, Field):
                write_field(fdir / f"{stem}_{name}.txt", value)
            else:
                np.savetxt(fdir / f"{stem}_{name}.csv", value, fmt="%.17g", delimiter=",",
                           header="u,K_hat,K_ref", comments="")


def run_experiment(config, out=None, progress=None):
    """Execute the study described by ``config``; returns a :class:`SweepReport`.

    Files written under ``out`` (default ``config.out``): ``summary.csv``
    (and ``map_summary.csv`` for ``map-vs-pinn``), ``runs.csv``, ``config.json``,
    ``timing.json`` and, if enabled, estimated fields under ``fields/``.
    """
    out = Path(config.out if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    ref = reference_for(config)
    specs = plan_runs(config)
    jobs = [(config, ref, s) for s in specs]
    results = []
    if config.threads > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            for batch in pool.map(_execute_packed, jobs):
                results.extend(batch)
                if progress:
                    progress(batch)
    else:
        for job in jobs:
            batch = _execute_packed(job)
            results.extend(batch)
            if progress:
                progress(batch)

    pinn = [r for r in results if r.method == "pinn"]
    mapped = [r for r in results if r.method == "map"]
    report = SweepReport(config, _aggregate(pinn), results, _aggregate(mapped) if mapped else None)

    write_summary(out / "summary.csv", report.rows)
    if report.map_rows is not None:
        write_summary(out / "map_summary.csv", report.map_rows)
    write_runs(out / "runs.csv", results)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    timing = {f"{r.spec.index}:{r.method}": r.wall_time for r in results}
    (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    if config.write_fields:
        _write_outputs(out, results)
    return report


def with_overrides(config, **changes):
    """Copy of ``config`` with the non-None entries of ``changes`` applied."""
    return replace(config, **{k: v for k, v in changes.items() if v is not None})
