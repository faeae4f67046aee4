import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinn_inverse.data import Field, Grid2D
from pinn_inverse.network import MlpParams, eval_jet, forward, init_xavier, param_count
from pinn_inverse.problems import (
    CollocationSet,
    LossSpec,
    MeasurementSet,
    PinnProblem,
    assemble_loss,
    error_report,
    linear_neumann_flux,
    linear_residual,
    make_objective,
    nonlinear_neumann_flux,
    nonlinear_residual,
    relative_error,
)

LIN = PinnProblem.linear()
NONLIN = PinnProblem.nonlinear((1.0, 1.0), (-1.0, 1.0))


def constant_net(sizes, c):
    p = MlpParams.unflatten(sizes, np.zeros(param_count(sizes)))
    p.biases[-1][0] = c
    return p


def affine_net(coeffs, c=0.0):
    return MlpParams([len(coeffs), 1], [np.array([coeffs], float)], [np.array([c])])


def stencil_divergence(k_at, u_at, x, h=1e-4):
    """Five-point conservative stencil for div(K grad u)."""
    out = np.zeros(len(x))
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        flux_p = k_at(x + e / 2) * (u_at(x + e) - u_at(x))
        flux_m = k_at(x - e / 2) * (u_at(x) - u_at(x - e))
        out += (flux_p - flux_m) / h**2
    return out


def test_residual_vanishes_for_constant_state():
    u = constant_net([2, 6, 1], 0.7)
    k = init_xavier([2, 6, 1], 1)
    x = np.random.default_rng(0).uniform(0, 1, (8, 2))
    assert np.all(linear_residual(u, k, x, LIN) == 0)
    assert np.all(nonlinear_residual(u, init_xavier([1, 6, 1], 2), x, NONLIN) == 0)


def test_constant_conductivity_gives_scaled_laplacian():
    u = init_xavier([2, 8, 1], 3)
    x = np.random.default_rng(1).uniform(0, 1, (8, 2))
    r = linear_residual(u, constant_net([2, 5, 1], 2.5), x, LIN)
    lap = eval_jet(u, x, LIN.u_shift, LIN.u_scale).laplacian()
    np.testing.assert_allclose(r, 2.5 * lap, rtol=1e-14)


def test_linear_residual_matches_stencil():
    rng = np.random.default_rng(2)
    u, k = init_xavier([2, 8, 8, 1], 4), init_xavier([2, 8, 8, 1], 5)
    x = rng.uniform(0.1, 0.9, (20, 2))
    exact = linear_residual(u, k, x, LIN)
    ref = stencil_divergence(
        lambda p: forward(k, p, LIN.k_shift, LIN.k_scale), lambda p: forward(u, p, LIN.u_shift, LIN.u_scale), x
    )
    np.testing.assert_allclose(exact, ref, rtol=1e-4, atol=1e-6 * np.abs(ref).max())


def test_nonlinear_residual_matches_stencil():
    rng = np.random.default_rng(3)
    u, k = init_xavier([2, 8, 8, 1], 6), init_xavier([1, 8, 8, 1], 7)
    x = rng.uniform(0.1, 0.9, (20, 2))
    exact = nonlinear_residual(u, k, x, NONLIN)

    def u_at(p):
        return forward(u, p, NONLIN.u_shift, NONLIN.u_scale)

    def k_at(p):
        return forward(k, u_at(p)[:, None], NONLIN.k_shift, NONLIN.k_scale)

    ref = stencil_divergence(k_at, u_at, x)
    np.testing.assert_allclose(exact, ref, rtol=1e-4, atol=1e-6 * np.abs(ref).max())


def test_nonlinear_reduces_to_linear_for_constant_conductivity():
    u = init_xavier([2, 8, 8, 1], 8)
    x = np.random.default_rng(4).uniform(0, 1, (30, 2))
    a = nonlinear_residual(u, constant_net([1, 4, 1], 1.7), x, NONLIN)
    b = linear_residual(u, constant_net([2, 4, 1], 1.7), x, LIN)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-14 * np.abs(b).max())


def test_linear_neumann_flux():
    pts = np.array([[0.0, 0.3], [1.0, 0.8]])
    assert np.all(linear_neumann_flux(constant_net([2, 3, 1], 0.0), pts) == 0)
    plain = PinnProblem.linear(normalize_inputs=False)
    np.testing.assert_allclose(linear_neumann_flux(affine_net([1.0, 2.0]), pts, plain), 1.0, rtol=1e-15)
    u = init_xavier([2, 8, 1], 9)
    jet = eval_jet(u, pts, LIN.u_shift, LIN.u_scale)
    np.testing.assert_array_equal(linear_neumann_flux(u, pts, LIN), jet.grad[:, 0])
    with pytest.raises(ValueError):
        linear_neumann_flux(u, np.array([[0.5, 0.5]]), LIN)


def test_nonlinear_neumann_flux():
    plain = PinnProblem.nonlinear((1.0, 1.0), (-1.0, 1.0), normalize_inputs=False)
    pts = np.array([[0.0, 0.25], [0.0, 0.75]])
    one = constant_net([1, 3, 1], 1.0)
    np.testing.assert_allclose(nonlinear_neumann_flux(affine_net([-0.4, 3.0]), one, pts, "x1", plain), 0.4)
    np.testing.assert_allclose(nonlinear_neumann_flux(affine_net([-0.4, 3.0]), one, pts[:, ::-1], "x2", plain), -3.0)
    assert np.all(nonlinear_neumann_flux(constant_net([2, 3, 1], 2.0), one, pts, 0, plain) == 0)

    u, k = init_xavier([2, 6, 1], 1), init_xavier([1, 6, 1], 2)
    jet = eval_jet(u, pts, NONLIN.u_shift, NONLIN.u_scale)
    kv = forward(k, jet.value[:, None], NONLIN.k_shift, NONLIN.k_scale)
    np.testing.assert_allclose(nonlinear_neumann_flux(u, k, pts, "x1", NONLIN), -kv * jet.grad[:, 0], rtol=1e-15)
    with pytest.raises(ValueError):
        nonlinear_neumann_flux(u, k, pts, "x2", NONLIN)
    with pytest.raises(ValueError):
        nonlinear_neumann_flux(u, k, pts, "x3", NONLIN)


def random_measurements(rng, n=6):
    side = rng.uniform(0, 1, n)
    return MeasurementSet(
        k_points=rng.uniform(0, 1, (n, 2)),
        k_values=rng.uniform(0.5, 2, n),
        u_points=rng.uniform(0, 1, (n, 2)),
        u_values=rng.uniform(0, 1, n),
        dirichlet_points=np.column_stack([side, np.zeros(n)]),
        dirichlet_values=np.ones(n),
        neumann_points=np.column_stack([np.ones(n), side]),
        neumann_values=rng.normal(size=n),
        neumann_axes=np.zeros(n, int),
    )


def test_exact_interpolation_gives_zero_loss():
    u, k = constant_net([2, 5, 1], 0.4), constant_net([2, 5, 1], 1.3)
    rng = np.random.default_rng(0)
    m = random_measurements(rng)
    m = m.replace(
        k_values=np.full(6, 1.3), u_values=np.full(6, 0.4), dirichlet_values=np.full(6, 0.4), neumann_values=np.zeros(6)
    )
    coll = CollocationSet(rng.uniform(0.1, 0.9, (10, 2)))
    total, terms = assemble_loss(LIN, (u, k), m, coll)
    assert total == 0.0
    assert set(terms) == {"data_k", "data_u", "dirichlet", "neumann", "residual"}

    sizes = ([2, 5, 1], [2, 5, 1])
    obj = make_objective(LIN, sizes, m, coll)
    w0 = np.concatenate([u.flatten(), k.flatten()])
    f0, g0 = obj(w0)
    _, g1 = obj(w0 + 1e-2 * rng.normal(size=w0.shape))
    assert f0 == 0.0
    assert np.linalg.norm(g0) <= 1e-10 * np.linalg.norm(g1)


def test_single_observation_term():
    u = constant_net([2, 3, 1], 0.25)
    m = MeasurementSet(u_points=[[0.5, 0.5]], u_values=[0.25 + 0.1])
    total, terms = assemble_loss(LIN, (u, constant_net([2, 3, 1], 1.0)), m, CollocationSet())
    assert total == pytest.approx(0.01, rel=1e-14)
    assert list(terms) == ["data_u"]


def brute_force_loss(problem, u, k, m, coll):
    def uval(p):
        return forward(u, p, problem.u_shift, problem.u_scale)

    total = 0.0
    if len(m.k_values):
        total += np.mean([(forward(k, p, problem.k_shift, problem.k_scale) - v) ** 2 for p, v in zip(m.k_points, m.k_values)])
    total += np.mean([(uval(p) - v) ** 2 for p, v in zip(m.u_points, m.u_values)])
    total += np.mean([(uval(p) - v) ** 2 for p, v in zip(m.dirichlet_points, m.dirichlet_values)])
    flux = []
    for p, v in zip(m.neumann_points, m.neumann_values):
        g = eval_jet(u, p, problem.u_shift, problem.u_scale).grad
        flux.append((g[0] - v) ** 2)
    total += np.mean(flux)
    res = []
    for p in coll.interior:
        ju = eval_jet(u, p, problem.u_shift, problem.u_scale)
        jk = eval_jet(k, p, problem.k_shift, problem.k_scale)
        res.append((jk.grad @ ju.grad + jk.value * np.trace(ju.hess)) ** 2)
    return total + np.mean(res)


def test_loss_matches_pointwise_summation():
    rng = np.random.default_rng(7)
    m = random_measurements(rng)
    coll = CollocationSet(rng.uniform(0.05, 0.95, (12, 2)))
    u, k = init_xavier([2, 7, 7, 1], 1), init_xavier([2, 7, 7, 1], 2)
    total, _ = assemble_loss(LIN, (u, k), m, coll)
    assert total == pytest.approx(brute_force_loss(LIN, u, k, m, coll), rel=1e-12)


def test_nonlinear_loss_has_separate_flux_terms():
    rng = np.random.default_rng(8)
    n = 4
    m = MeasurementSet(
        u_points=rng.uniform(0, 1, (n, 2)),
        u_values=rng.normal(size=n),
        dirichlet_points=np.column_stack([np.ones(n), rng.uniform(0, 1, n)]),
        dirichlet_values=-np.ones(n),
        neumann_points=np.vstack([np.column_stack([np.zeros(n), rng.uniform(0, 1, n)]), [[0.5, 0.0], [0.5, 1.0]]]),
        neumann_values=np.concatenate([np.ones(n), np.zeros(2)]),
        neumann_axes=np.concatenate([np.zeros(n, int), np.ones(2, int)]),
    )
    coll = CollocationSet(rng.uniform(0.1, 0.9, (5, 2)))
    u, k = init_xavier([2, 5, 1], 3), init_xavier([1, 5, 1], 4)
    total, terms = assemble_loss(NONLIN, (u, k), m, coll)
    assert set(terms) == {"data_u", "dirichlet", "neumann_x1", "neumann_x2", "residual"}
    assert total == pytest.approx(sum(terms.values()), rel=1e-14)
    fx1 = nonlinear_neumann_flux(u, k, m.neumann_points[:n], 0, NONLIN)
    assert terms["neumann_x1"] == pytest.approx(np.mean((fx1 - 1) ** 2), rel=1e-14)


def test_weights_and_toggles():
    rng = np.random.default_rng(9)
    m = random_measurements(rng)
    coll = CollocationSet(rng.uniform(0.1, 0.9, (5, 2)))
    nets = (init_xavier([2, 4, 1], 0), init_xavier([2, 4, 1], 1))
    _, terms = assemble_loss(LIN, nets, m, coll)
    spec = LossSpec(terms={"residual": False}, weights={"data_u": 3.0})
    total, sub = assemble_loss(LIN, nets, m, coll, spec)
    assert "residual" not in sub
    expected = sum(v for name, v in terms.items() if name != "residual") + 2.0 * terms["data_u"]
    assert total == pytest.approx(expected, rel=1e-14)


def test_loss_spec_errors():
    with pytest.raises(ValueError):
        LossSpec(weights={"data_u": -1.0})
    with pytest.raises(ValueError):
        LossSpec(terms={t: False for t in ("data_k", "data_u", "dirichlet", "neumann", "residual")})
    with pytest.raises(ValueError):
        LossSpec(terms={"bogus": True})
    nets = (init_xavier([2, 4, 1], 0), init_xavier([2, 4, 1], 1))
    m = MeasurementSet(u_points=[[0.5, 0.5]], u_values=[1.0])
    with pytest.raises(ValueError):
        assemble_loss(LIN, nets, m, CollocationSet(), LossSpec(terms={"data_k": True}))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_loss_terms_are_non_negative(seed):
    rng = np.random.default_rng(seed)
    m = random_measurements(rng, 3)
    coll = CollocationSet(rng.uniform(0.1, 0.9, (4, 2)))
    total, terms = assemble_loss(LIN, (init_xavier([2, 4, 1], seed), init_xavier([2, 4, 1], seed + 1)), m, coll)
    assert total >= 0 and all(v >= 0 for v in terms.values())


def test_measurement_validation():
    with pytest.raises(ValueError):
        MeasurementSet(u_points=[[0.1, 0.2]], u_values=[1.0, 2.0])
    with pytest.raises(ValueError):
        MeasurementSet(neumann_points=[[0.0, 0.5]], neumann_values=[0.0], neumann_axes=[2])
    m = MeasurementSet(neumann_points=[[0.3, 0.5]], neumann_values=[0.0], neumann_axes=[0])
    with pytest.raises(ValueError):
        m.check_domain((1.0, 1.0))
    with pytest.raises(ValueError):
        MeasurementSet(u_points=[[1.5, 0.5]], u_values=[0.0]).check_domain((1.0, 1.0))
    with pytest.raises(ValueError):
        CollocationSet([[0.0, 0.5]]).check_domain((1.0, 1.0))


def test_relative_error_examples():
    g = Grid2D(2, 2)
    ref = Field(g, np.ones(4))
    assert relative_error(ref, ref, g) == 0.0
    assert relative_error(Field(g, np.zeros(4)), ref, g) == 1.0
    assert relative_error(Field(g, np.array([1.0, 1.0, 1.0, 0.0])), ref, g) == 0.25
    with pytest.raises(ZeroDivisionError):
        relative_error(ref, Field(g, np.zeros(4)), g)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(-4, 4))
def test_relative_error_scaling(seed, c):
    g = Grid2D(3, 5)
    ref = Field(g, np.random.default_rng(seed).normal(size=15) + 0.1)
    assert relative_error(Field(g, c * ref.values), ref, g) == pytest.approx((c - 1) ** 2, rel=1e-12, abs=1e-15)


def test_error_report():
    g = Grid2D(2, 2)
    r = error_report(np.array([1.0, 1.0, 1.0, 0.0]), Field(g, np.ones(4)), np.ones(4), Field(g, np.ones(4)), g)
    assert r.eps_u == 0.25 and r.eps_k == 0.0
    np.testing.assert_array_equal(r.abs_error_u, [0, 0, 0, 1])
