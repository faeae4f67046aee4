"""End-to-end acceptance checks.

Each test prints one line ``criterion N | PASS/FAIL | details`` at the
documented tolerance and then asserts it.  The training-based criteria are
expensive (about 1.5 h in total on one core); the restart runs shared by
criteria 5-7 are computed once per session.
"""

import time

import numpy as np
import pytest

from pinn_inverse.bench import ExperimentConfig, run_experiment
from pinn_inverse.data import (
    BoundarySpec,
    GpConfig,
    Grid2D,
    fv_solve_linear,
    sample_gp_lnk,
)
from pinn_inverse.data.fv import face_fluxes, linear_flux_balance, linear_transmissibilities
from pinn_inverse.map_baseline import (
    MapConfig,
    ObservationOperators,
    adjoint_gradient,
    discrete_gradient_operator,
    map_estimate,
)
from pinn_inverse.network import MlpParams, eval_grad, eval_jet, forward, init_xavier, param_count
from pinn_inverse.optim import LbfgsConfig, lbfgs_minimize
from pinn_inverse.problems import CollocationSet, MeasurementSet, PinnProblem, assemble_loss, make_objective

from oracles import brute_force_map_2x2


def report(capsys, number, ok, details):
    with capsys.disabled():
        print(f"\ncriterion {number:>2} | {'PASS' if ok else 'FAIL'} | {details}")
    return ok


def diff6(fn, x, h):
    """Sixth-order central difference; accurate enough for 1e-6 relative checks."""
    return (fn(x + 3 * h) - 9 * fn(x + 2 * h) + 45 * fn(x + h) - 45 * fn(x - h) + 9 * fn(x - 2 * h) - fn(x - 3 * h)) / (
        60 * h
    )


def max_rel(est, ref, floor=1e-8):
    est, ref = np.ravel(est), np.ravel(ref)
    mask = np.abs(ref) > floor
    return float(np.max(np.abs(est[mask] - ref[mask]) / np.abs(ref[mask]), initial=0.0))


# -- 1: derivatives ---------------------------------------------------------------


def random_objective(rng, trial):
    width = int(rng.integers(3, 7))
    nonlinear = trial % 2 == 1
    u_sizes = (2, width, width, 1)
    k_sizes = (1 if nonlinear else 2, width, 1)
    x = lambda n: rng.uniform(0.05, 0.95, (n, 2))
    nb = 4
    t = (np.arange(nb) + 0.5) / nb
    meas = MeasurementSet(
        k_points=np.zeros((0, 2)) if nonlinear else x(4),
        k_values=np.zeros(0) if nonlinear else rng.uniform(0.5, 2, 4),
        u_points=x(5),
        u_values=rng.uniform(-1, 1, 5),
        dirichlet_points=np.column_stack([np.ones(nb), t]),
        dirichlet_values=rng.uniform(-1, 1, nb),
        neumann_points=np.column_stack([np.zeros(nb), t]),
        neumann_values=rng.uniform(-1, 1, nb),
        neumann_axes=np.zeros(nb, int),
    )
    problem = PinnProblem.nonlinear((1.0, 1.0), (-1.0, 1.0)) if nonlinear else PinnProblem.linear()
    coll = CollocationSet(x(6))
    objective = make_objective(problem, (u_sizes, k_sizes), meas, coll)

    def loss(w):
        return assemble_loss(problem, objective.split(w), meas, coll)[0]

    w = np.concatenate([init_xavier(u_sizes, trial).flatten(), init_xavier(k_sizes, trial + 500).flatten()])
    return objective, loss, w, u_sizes


def test_criterion_01_derivatives(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_grad = worst_hess = worst_param = 0.0
    for trial in range(100):
        objective, loss, w, u_sizes = random_objective(rng, trial)
        net = MlpParams.unflatten(u_sizes, w[: param_count(u_sizes)])
        p = rng.uniform(-1, 1, 2)
        jet = eval_jet(net, p)
        for i in range(2):
            e = np.eye(2)[i]
            fd_g = diff6(lambda s: forward(net, p + s * e), 0.0, 5e-3)
            fd_h = diff6(lambda s: eval_grad(net, p + s * e)[1], 0.0, 5e-3)
            worst_grad = max(worst_grad, max_rel(jet.grad[i], fd_g))
            worst_hess = max(worst_hess, max_rel(jet.hess[i], fd_h))
        _, g = objective(w)
        fd = np.array([diff6(lambda s: loss(w + s * e), 0.0, 5e-3) for e in np.eye(len(w))])
        worst_param = max(worst_param, max_rel(g, fd))
    elapsed = time.perf_counter() - t0
    ok = worst_grad <= 1e-6 and worst_hess <= 1e-6 and worst_param <= 1e-5 and elapsed < 60
    report(capsys, 1, ok, f"max rel err grad {worst_grad:.1e}, hess {worst_hess:.1e} (<= 1e-6), "
           f"loss gradient {worst_param:.1e} (<= 1e-5); {elapsed:.0f} s (< 60 s)")
    assert ok


# -- 2: finite volumes -------------------------------------------------------------


def test_criterion_02_fv_exactness(capsys):
    g = Grid2D(32, 32)
    bc = BoundarySpec.linear_default()
    const = np.max(np.abs(fv_solve_linear(g, np.full(g.n_cells, 2.5)).values - (1 - g.centroids()[:, 1])))

    k1, k2 = 0.2, 5.0
    k = np.where(g.centroids()[:, 1] < 0.5, k1, k2)
    u = fv_solve_linear(g, k)
    _, bnd = face_fluxes(g, u.values, *linear_transmissibilities(g, k, bc), bc)
    series = abs(bnd["top"].sum() / (1.0 / (0.5 / k1 + 0.5 / k2)) - 1)

    k = np.exp(sample_gp_lnk(g, GpConfig(1.0, 0.15, 0)).values)
    u = fv_solve_linear(g, k)
    _, bnd = face_fluxes(g, u.values, *linear_transmissibilities(g, k, bc), bc)
    cons = np.max(np.abs(linear_flux_balance(g, k, u))) / np.abs(bnd["top"]).sum()

    ok = const <= 1e-10 and series <= 1e-8 and cons <= 1e-10
    report(capsys, 2, ok, f"constant-K error {const:.1e} (<= 1e-10), series flux rel {series:.1e} (<= 1e-8), "
           f"cell imbalance rel {cons:.1e} (<= 1e-10)")
    assert ok


# -- 3: GP statistics ---------------------------------------------------------------


def test_criterion_03_gp_statistics(capsys):
    t0 = time.perf_counter()
    g = Grid2D(32, 32)
    # realisation k uses seed k, the package-wide run seed rule
    samples = np.array([sample_gp_lnk(g, GpConfig(1.0, 0.15, k)).values for k in range(200)])
    var = samples.var(axis=0)
    c = g.centroids()
    d = np.linalg.norm(c[:, None] - c[None], axis=-1)
    i, j = np.nonzero(np.abs(d - 0.15) <= 0.5 / 32)
    corr = np.mean(np.mean(samples[:, i] * samples[:, j], axis=0) / np.sqrt(var[i] * var[j]))
    elapsed = time.perf_counter() - t0
    inside = np.mean((var >= 0.7) & (var <= 1.3))
    ok = var.min() >= 0.7 and var.max() <= 1.3 and abs(corr - 0.607) <= 0.12 and elapsed < 120
    report(capsys, 3, ok, f"pointwise variance in [{var.min():.3f}, {var.max():.3f}] (need [0.7, 1.3]; "
           f"{100 * inside:.1f}% of cells inside, mean {var.mean():.3f}), correlation at lambda {corr:.3f} "
           f"(0.607 +- 0.12); {elapsed:.0f} s (< 120 s)")
    assert ok


# -- 4: headline linear experiment ----------------------------------------------------


def test_criterion_04_headline(tmp_path, capsys):
    cfg = ExperimentConfig(kind="single-run", out=str(tmp_path))
    t0 = time.perf_counter()
    row = run_experiment(cfg).rows[0]
    elapsed = time.perf_counter() - t0
    ok = row.n_failed == 0 and row.eps_u_mean <= 0.02 and row.eps_k_mean <= 0.05 and elapsed <= 900
    report(capsys, 4, ok, f"eps_u {row.eps_u_mean:.4f} (<= 0.02), eps_K {row.eps_k_mean:.4f} (<= 0.05); "
           f"{elapsed:.0f} s (<= 900 s)")
    assert ok


# -- 5-7: restart study at N_K = N_u = 20 ------------------------------------------------

# largest cap that keeps the N_c = 0 and 1024 groups well inside the hour on one core
RESTART_ITERATIONS = 7000


@pytest.fixture(scope="session")
def restart_study(tmp_path_factory):
    cfg = ExperimentConfig(
        kind="restart-study", n_k=20, n_u=20, sweep=(0, 512, 1024), n_restarts=11,
        max_iterations=RESTART_ITERATIONS, write_fields=False, out=str(tmp_path_factory.mktemp("restarts")),
    )
    report_ = run_experiment(cfg)
    return {r.sweep_value: r for r in report_.rows}


def test_criterion_05_pde_constraint_benefit(restart_study, capsys):
    free, constrained = restart_study[0], restart_study[1024]
    elapsed = free.wall_time + constrained.wall_time
    gain = 1 - constrained.eps_k_mean / free.eps_k_mean
    ok = gain >= 0.25 and elapsed <= 3600 and free.n_failed == constrained.n_failed == 0
    report(capsys, 5, ok, f"mean eps_K {free.eps_k_mean:.4f} (N_c=0) vs {constrained.eps_k_mean:.4f} (N_c=1024): "
           f"{100 * gain:.1f}% lower (need >= 25%); {elapsed:.0f} s (<= 3600 s)")
    assert ok


def test_criterion_06_collocation_asymptote(restart_study, capsys):
    a, b = restart_study[512], restart_study[1024]
    rel = abs(b.eps_k_mean - a.eps_k_mean) / a.eps_k_mean
    ok = rel < 0.10
    report(capsys, 6, ok, f"mean eps_K {a.eps_k_mean:.4f} (N_c=512) vs {b.eps_k_mean:.4f} (N_c=1024): "
           f"{100 * rel:.1f}% apart (need < 10%)")
    assert ok


def test_criterion_07_restart_robustness(restart_study, capsys):
    row = restart_study[1024]
    cv = row.eps_k_std / row.eps_k_mean
    ok = cv <= 0.3 and row.n_runs == 11
    report(capsys, 7, ok, f"sigma/mean of eps_K over {row.n_runs} restarts = {cv:.3f} (<= 0.3)")
    assert ok


# -- 8: MAP comparison ----------------------------------------------------------------


def test_criterion_08_map_comparison(tmp_path, capsys):
    g = Grid2D(8, 8)
    rng = np.random.default_rng(8)
    log_k = sample_gp_lnk(g, GpConfig(1.0, 0.3, 8)).values
    u = fv_solve_linear(g, np.exp(log_k)).values
    c = g.centroids()
    cells = rng.choice(64, 20, replace=False)
    meas = MeasurementSet(u_points=c[cells], u_values=u[cells] + 0.01 * rng.normal(size=20))
    k0 = np.exp(log_k + 0.3 * rng.normal(size=64))
    grad, _ = adjoint_gradient(g, k0, None, meas, include_k_term=False)
    misfit = lambda v: adjoint_gradient(g, np.exp(v), None, meas, include_k_term=False)[1]
    fd = np.array([diff6(lambda s: misfit(np.log(k0) + s * e), 0.0, 1e-3) for e in np.eye(64)])
    fd_err = max_rel(grad, fd)

    cfg = ExperimentConfig(kind="map-vs-pinn", sweep=(50,), n_restarts=5, gamma_reg=1e-6,
                           max_iterations=RESTART_ITERATIONS, write_fields=False, out=str(tmp_path))
    rep = run_experiment(cfg)
    pinn = {r.spec.index: r.eps_k for r in rep.runs if r.method == "pinn" and r.ok}
    mapk = {r.spec.index: r.eps_k for r in rep.runs if r.method == "map" and r.ok}
    wins = sum(pinn[k] <= mapk[k] for k in pinn if k in mapk)
    pairs = ", ".join(f"{pinn[k]:.3f}/{mapk[k]:.3f}" for k in sorted(pinn) if k in mapk)
    ok = wins >= 3 and fd_err <= 1e-5
    report(capsys, 8, ok, f"PINN beats MAP in {wins}/5 trials (need >= 3; eps_K PINN/MAP {pairs}); "
           f"adjoint gradient FD rel err {fd_err:.1e} (<= 1e-5)")
    assert ok


# -- 9-10: nonlinear constitutive learning ---------------------------------------------

NONLINEAR_ITERATIONS = 10000


@pytest.fixture(scope="session")
def nonlinear_runs(tmp_path_factory):
    runs = {}
    for kind in ("nonlinear", "nonlinear-noisy"):
        cfg = ExperimentConfig(kind=kind, max_iterations=NONLINEAR_ITERATIONS, write_fields=False,
                               out=str(tmp_path_factory.mktemp(kind)))
        t0 = time.perf_counter()
        row = run_experiment(cfg).rows[0]
        runs[kind] = (row, time.perf_counter() - t0)
    return runs


def test_criterion_09_nonlinear(nonlinear_runs, capsys):
    row, elapsed = nonlinear_runs["nonlinear"]
    ok = row.n_failed == 0 and row.eps_k_mean <= 5e-2 and elapsed <= 900
    report(capsys, 9, ok, f"K(u) error {row.eps_k_mean:.2e} (<= 5e-2), u error {row.eps_u_mean:.2e}; "
           f"{elapsed:.0f} s (<= 900 s)")
    assert ok


def test_criterion_10_noise(nonlinear_runs, capsys):
    clean, _ = nonlinear_runs["nonlinear"]
    noisy, elapsed = nonlinear_runs["nonlinear-noisy"]
    ratio = noisy.eps_k_mean / clean.eps_k_mean
    ok = noisy.n_failed == 0 and ratio <= 3.0
    report(capsys, 10, ok, f"K(u) error with 1% noise {noisy.eps_k_mean:.2e} vs {clean.eps_k_mean:.2e} "
           f"noiseless: ratio {ratio:.2f} (<= 3); {elapsed:.0f} s")
    assert ok


# -- 11: optimiser ---------------------------------------------------------------------


def test_criterion_11_optimizer(capsys):
    xs_, srep = lbfgs_minimize(lambda x: (float(x @ x), 2 * x), np.array([3.0, 4.0]))
    sphere = float(np.linalg.norm(xs_))

    def rosen(x):
        a, b = x
        return (1 - a) ** 2 + 100 * (b - a * a) ** 2, np.array(
            [-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)]
        )

    cfg = LbfgsConfig()
    violations = []
    prev = {}

    def check(it, x, f):
        if prev:
            d = x - prev["x"]
            g1 = rosen(x)[1]
            gd = prev["g"] @ d
            violations.append(f > prev["f"] + cfg.c1 * gd * (1 + 1e-12) or abs(g1 @ d) > cfg.c2 * abs(gd) * (1 + 1e-12))
        prev.update(x=x.copy(), f=f, g=rosen(x)[1])
        return False

    x0 = np.array([-1.2, 1.0])
    prev.update(x=x0, f=rosen(x0)[0], g=rosen(x0)[1])
    x, rep = lbfgs_minimize(rosen, x0, cfg, check)
    rosen_err = float(np.max(np.abs(x - 1)))

    rng = np.random.default_rng(11)
    quad_err = 0.0
    for n in range(1, 11):
        Q = np.linalg.qr(rng.normal(size=(n, n)))[0]
        A = Q @ np.diag(rng.uniform(0.5, 5.0, n)) @ Q.T
        xs = rng.normal(size=n)
        xq, _ = lbfgs_minimize(lambda v: (0.5 * (v - xs) @ A @ (v - xs), A @ (v - xs)), np.zeros(n),
                               LbfgsConfig(max_iterations=n + 2, c2=1e-3, grad_tolerance=1e-13))
        quad_err = max(quad_err, float(np.linalg.norm(xq - xs)))

    ok = sphere <= 1e-8 and srep.iterations <= 25 and rosen_err <= 1e-6 and not any(violations) and quad_err <= 1e-10
    report(capsys, 11, ok, f"sphere |x| {sphere:.1e} (<= 1e-8) in {srep.iterations} iterations (<= 25); "
           f"Rosenbrock err {rosen_err:.1e} (<= 1e-6), Wolfe violations {sum(violations)}, "
           f"quadratics (n <= 10, n+2 iters) err {quad_err:.1e} (<= 1e-10)")
    assert ok


# -- 12: MAP brute force ---------------------------------------------------------------


def test_criterion_12_map_brute_force(capsys):
    g = Grid2D(2, 2)
    truth = np.array([0.4, -0.7, 1.1, 0.2])
    u = fv_solve_linear(g, np.exp(truth)).values
    c = g.centroids()
    meas = MeasurementSet(u_points=c[[0, 3]], u_values=u[[0, 3]] + [0.01, -0.02], k_points=c[[1]],
                          k_values=np.exp(truth[[1]]))
    gamma = 0.05
    obs = ObservationOperators.from_measurements(g, meas)
    L = discrete_gradient_operator(g).toarray()
    best, f_best, _ = brute_force_map_2x2(obs.u_cells, obs.u_values, obs.k_cells, obs.log_k_values, L, gamma)
    res = map_estimate(g, meas, config=MapConfig(gamma_reg=gamma))
    err = float(np.max(np.abs(np.log(res.k_hat.values) - best)))
    ok = err <= 0.01 and res.objective[-1] <= f_best + 1e-12
    report(capsys, 12, ok, f"max |ln k_MAP - ln k_grid| {err:.1e} (<= 0.01 grid resolution), "
           f"objective {res.objective[-1]:.6e} vs grid {f_best:.6e}")
    assert ok
