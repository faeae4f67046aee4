"""Physics-informed losses for the linear K(x) and nonlinear K(u) problems.

A pair of networks approximates the state ``u`` and the conductivity ``K``.
Auxiliary quantities (PDE residual, boundary fluxes) are formed from exact
input jets, and :func:`assemble_loss` combines mean-square data, boundary
and residual terms.  Everything is written with :mod:`autodiff` operations,
so the loss can be differentiated with respect to both networks.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .network import MlpParams, eval_grad, eval_jet, forward, param_count, value_and_param_gradient

__all__ = [
    "PinnProblem",
    "MeasurementSet",
    "CollocationSet",
    "LossSpec",
    "ErrorReport",
    "linear_residual",
    "linear_neumann_flux",
    "nonlinear_residual",
    "nonlinear_neumann_flux",
    "assemble_loss",
    "make_objective",
    "relative_error",
    "error_report",
]

LINEAR = "linear"
NONLINEAR = "nonlinear"
TERMS = ("data_k", "data_u", "dirichlet", "neumann", "residual")
BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class PinnProblem:
    """Problem kind, domain and the fixed input/output maps of both networks.

    Inputs are mapped as ``(x - shift) * scale`` before the first layer.
    For the linear problem both networks see ``x``; for the nonlinear one
    the K network sees ``u``.  ``k_output`` is ``"raw"`` or ``"softplus"``.
    """

    kind: str = LINEAR
    domain: tuple = (1.0, 1.0)
    u_shift: object = None
    u_scale: object = None
    k_shift: object = None
    k_scale: object = None
    k_output: str = "raw"

    def __post_init__(self):
        if self.kind not in (LINEAR, NONLINEAR):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.k_output not in ("raw", "softplus"):
            raise ValueError(f"unknown K output transform {self.k_output!r}")

    @classmethod
    def linear(cls, domain=(1.0, 1.0), normalize_inputs=True, k_output="raw"):
        """Linear problem; inputs mapped from the domain box to [-1, 1]^2."""
        if not normalize_inputs:
            return cls(LINEAR, tuple(domain), k_output=k_output)
        shift = 0.5 * np.asarray(domain, float)
        scale = 2.0 / np.asarray(domain, float)
        return cls(LINEAR, tuple(domain), shift, scale, shift, scale, k_output)

    @classmethod
    def nonlinear(cls, domain, u_range, normalize_inputs=True, k_output="raw"):
        """Nonlinear problem; the K network input spans ``u_range`` -> [-1, 1]."""
        lo, hi = (float(v) for v in u_range)
        if not hi > lo:
            raise ValueError("u_range must be increasing")
        k_shift, k_scale = 0.5 * (lo + hi), 2.0 / (hi - lo)
        if not normalize_inputs:
            return cls(NONLINEAR, tuple(domain), k_shift=k_shift, k_scale=k_scale, k_output=k_output)
        shift = 0.5 * np.asarray(domain, float)
        scale = 2.0 / np.asarray(domain, float)
        return cls(NONLINEAR, tuple(domain), shift, scale, k_shift, k_scale, k_output)

    def k_input_dim(self):
        return 2 if self.kind == LINEAR else 1


@dataclass(frozen=True)
class MeasurementSet:
    """Observations of K and u, Dirichlet samples and prescribed fluxes.

    ``neumann_axes[i]`` is 0 for a face normal to x1, 1 for x2; the points
    double as the boundary collocation points of the flux terms.
    """

    k_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    k_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    u_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    u_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dirichlet_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    dirichlet_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    neumann_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    neumann_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    neumann_axes: np.ndarray = field(default_factory=lambda: np.zeros(0, int))

    def __post_init__(self):
        for name in ("k", "u", "dirichlet", "neumann"):
            pts = np.asarray(getattr(self, f"{name}_points"), dtype=float).reshape(-1, 2)
            vals = np.asarray(getattr(self, f"{name}_values"), dtype=float).ravel()
            if len(pts) != len(vals):
                raise ValueError(f"{name}: {len(pts)} points but {len(vals)} values")
            object.__setattr__(self, f"{name}_points", pts)
            object.__setattr__(self, f"{name}_values", vals)
        axes = np.asarray(self.neumann_axes, dtype=int).ravel()
        if len(axes) != len(self.neumann_points):
            raise ValueError("one axis id per Neumann point required")
        if np.any((axes != 0) & (axes != 1)):
            raise ValueError("Neumann axis ids must be 0 (x1) or 1 (x2)")
        object.__setattr__(self, "neumann_axes", axes)

    @property
    def counts(self):
        return {
            "k": len(self.k_values),
            "u": len(self.u_values),
            "dirichlet": len(self.dirichlet_values),
            "neumann": len(self.neumann_values),
        }

    def check_domain(self, domain, tol=BOUNDARY_TOL):
        lx, ly = domain
        for name in ("k", "u", "dirichlet", "neumann"):
            pts = getattr(self, f"{name}_points")
            if np.any(pts < -tol) or np.any(pts[:, 0] > lx + tol) or np.any(pts[:, 1] > ly + tol):
                raise ValueError(f"{name} points outside the closed domain")
        for pts, axes in ((self.neumann_points, self.neumann_axes),):
            for p, ax in zip(pts, axes):
                _require_on_boundary(p, ax, domain, tol)

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class CollocationSet:
    """Interior points where the PDE residual is penalised."""

    interior: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        object.__setattr__(self, "interior", np.asarray(self.interior, dtype=float).reshape(-1, 2))

    @property
    def count(self):
        return len(self.interior)

    def check_domain(self, domain):
        pts = self.interior
        lx, ly = domain
        if np.any(pts <= 0) or np.any(pts[:, 0] >= lx) or np.any(pts[:, 1] >= ly):
            raise ValueError("collocation points must lie strictly inside the domain")


@dataclass(frozen=True)
class LossSpec:
    """Which loss terms are used and how they are weighted.

    A toggle of ``None`` means "use the term if it has points".  Explicitly
    enabling a term without points is an error.
    """

    terms: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        unknown = (set(self.terms) | set(self.weights)) - set(TERMS)
        if unknown:
            raise ValueError(f"unknown loss terms {sorted(unknown)}")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("loss weights must be non-negative")
        if self.terms and not any(v is not False for v in (self.terms.get(t) for t in TERMS)):
            raise ValueError("at least one loss term must be enabled")

    def weight(self, term):
        return float(self.weights.get(term, 1.0))

    def active(self, term, n_points):
        flag = self.terms.get(term)
        if flag is None:
            return n_points > 0
        if flag and n_points == 0:
            raise ValueError(f"loss term {term!r} is enabled but has no points")
        return bool(flag)


# -- pointwise auxiliary quantities ----------------------------------------


def _on_boundary(x, axis, domain, tol):
    x = np.atleast_2d(ad.value_of(x))
    c = x[:, axis]
    return np.all((np.abs(c) <= tol) | (np.abs(c - domain[axis]) <= tol))


def _require_on_boundary(x, axis, domain, tol=BOUNDARY_TOL):
    if not _on_boundary(x, axis, domain, tol):
        raise ValueError(f"point(s) not on the x{axis + 1} = 0 or x{axis + 1} = {domain[axis]} boundary")


def _k_transform(problem, value, slope):
    """Apply the K output map to raw network value and input derivative."""
    if problem.k_output == "raw":
        return value, slope
    k = ad.softplus(value)
    if slope is None:
        return k, None
    dk = ad.sigmoid(value)
    if ad.value_of(slope).ndim > ad.value_of(dk).ndim:
        dk = ad.reshape(dk, ad.value_of(dk).shape + (1,))
    return k, dk * slope


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(ad.value_of(a))):
            raise FloatingPointError("non-finite jet component")


def u_value(problem, u_net, x):
    return forward(u_net, x, problem.u_shift, problem.u_scale)


def k_value_linear(problem, k_net, x):
    return _k_transform(problem, forward(k_net, x, problem.k_shift, problem.k_scale), None)[0]


def k_of_u(problem, k_net, u):
    """K(u) and dK/du for the nonlinear problem (``u`` of shape (N,))."""
    raw, du = eval_grad(k_net, u, problem.k_shift, problem.k_scale)
    return _k_transform(problem, raw, du[..., 0])


def linear_residual(theta_net, gamma_net, x, problem=PinnProblem()):
    """``grad K . grad u + K lap u`` from the jets of both networks."""
    ju = eval_jet(theta_net, x, problem.u_shift, problem.u_scale)
    kv, kg = eval_grad(gamma_net, x, problem.k_shift, problem.k_scale)
    kv, kg = _k_transform(problem, kv, kg)
    _finite(ju.value, ju.grad, ju.hess, kv, kg)
    return _dot_last(kg, ju.grad) + kv * ju.laplacian()


def _dot_last(a, b):
    if ad.value_of(a).ndim == 1:
        return ad.sum(a * b)
    return ad.einsum("nd,nd->n", a, b)


def linear_neumann_flux(theta_net, x, problem=PinnProblem(), tol=BOUNDARY_TOL):
    """``du/dx1`` on the lateral boundaries x1 in {0, L1}."""
    _require_on_boundary(x, 0, problem.domain, tol)
    _, g = eval_grad(theta_net, x, problem.u_shift, problem.u_scale)
    return g[..., 0]


def nonlinear_residual(theta_net, gamma_net, x, problem=None):
    """``K'(u) |grad u|^2 + K(u) lap u`` with ``u`` the state network."""
    problem = problem or PinnProblem(NONLINEAR)
    ju = eval_jet(theta_net, x, problem.u_shift, problem.u_scale)
    k, dk = k_of_u(problem, gamma_net, _as_batch(ju.value))
    k, dk = _unbatch_like(k, ju.value), _unbatch_like(dk, ju.value)
    _finite(ju.value, ju.grad, ju.hess, k, dk)
    return dk * _dot_last(ju.grad, ju.grad) + k * ju.laplacian()


def nonlinear_neumann_flux(theta_net, gamma_net, x, direction, problem=None, tol=BOUNDARY_TOL):
    """``-K(u) du/dx_direction`` on the boundary normal to ``direction``.

    ``direction`` is 0/1 or ``"x1"``/``"x2"``.
    """
    problem = problem or PinnProblem(NONLINEAR)
    axis = _axis(direction)
    _require_on_boundary(x, axis, problem.domain, tol)
    u, g = eval_grad(theta_net, x, problem.u_shift, problem.u_scale)
    k, _ = k_of_u(problem, gamma_net, _as_batch(u))
    k = _unbatch_like(k, u)
    return -(k * g[..., axis])


def _axis(direction):
    if direction in (0, "x1"):
        return 0
    if direction in (1, "x2"):
        return 1
    raise ValueError(f"direction must be x1 or x2, got {direction!r}")


def _as_batch(v):
    return ad.reshape(v, (-1,)) if ad.value_of(v).ndim == 0 else v


def _unbatch_like(v, like):
    return v[0] if ad.value_of(like).ndim == 0 else v


# -- loss ------------------------------------------------------------------


def _msq(r):
    return ad.mean(r * r)


def loss_terms(problem, nets, measurements, collocation, loss_spec=LossSpec()):
    """Dict of the active mean-square terms (Var or float values)."""
    u_net, k_net = nets
    m, c = measurements, collocation
    terms = {}
    if loss_spec.active("data_k", m.counts["k"]):
        if problem.kind == LINEAR:
            kh = k_value_linear(problem, k_net, m.k_points)
        else:
            kh, _ = k_of_u(problem, k_net, u_value(problem, u_net, m.k_points))
        terms["data_k"] = _msq(kh - m.k_values)
    if loss_spec.active("data_u", m.counts["u"]):
        terms["data_u"] = _msq(u_value(problem, u_net, m.u_points) - m.u_values)
    if loss_spec.active("dirichlet", m.counts["dirichlet"]):
        terms["dirichlet"] = _msq(u_value(problem, u_net, m.dirichlet_points) - m.dirichlet_values)
    if loss_spec.active("neumann", m.counts["neumann"]):
        if problem.kind == LINEAR:
            flux = linear_neumann_flux(u_net, m.neumann_points, problem)
            terms["neumann"] = _msq(flux - m.neumann_values)
        else:
            for axis in (0, 1):
                sel = m.neumann_axes == axis
                if not np.any(sel):
                    continue
                flux = nonlinear_neumann_flux(u_net, k_net, m.neumann_points[sel], axis, problem)
                terms[f"neumann_x{axis + 1}"] = _msq(flux - m.neumann_values[sel])
    if loss_spec.active("residual", c.count):
        if problem.kind == LINEAR:
            r = linear_residual(u_net, k_net, c.interior, problem)
        else:
            r = nonlinear_residual(u_net, k_net, c.interior, problem)
        terms["residual"] = _msq(r)
    if not terms:
        raise ValueError("no loss term is active")
    return terms


def _term_weight(loss_spec, name):
    return loss_spec.weight("neumann" if name.startswith("neumann") else name)


def _total(terms, loss_spec):
    total = 0.0
    for name in sorted(terms):
        total = terms[name] * _term_weight(loss_spec, name) + total
    return total


def assemble_loss(problem, nets, measurements, collocation, loss_spec=LossSpec()):
    """Composite loss and the value of each mean-square term."""
    terms = loss_terms(problem, nets, measurements, collocation, loss_spec)
    total = _total(terms, loss_spec)
    return float(ad.value_of(total)), {k: float(ad.value_of(v)) for k, v in terms.items()}


def make_objective(problem, layer_sizes, measurements, collocation, loss_spec=LossSpec()):
    """``f(w) -> (loss, gradient)`` over the concatenated parameter vector.

    ``layer_sizes`` is ``(u_sizes, k_sizes)``; ``w`` is the u-network
    parameters followed by the K-network parameters.
    """
    u_sizes, k_sizes = (tuple(s) for s in layer_sizes)
    n_u = param_count(u_sizes)

    def split(w):
        return MlpParams.unflatten(u_sizes, w[:n_u]), MlpParams.unflatten(k_sizes, w[n_u:])

    def loss_fn(u_net, k_net):
        return _total(loss_terms(problem, (u_net, k_net), measurements, collocation, loss_spec), loss_spec)

    def objective(w):
        value, grads = value_and_param_gradient(loss_fn, split(np.asarray(w, dtype=float)))
        return value, np.concatenate([g.flat for g in grads])

    objective.split = split
    return objective


# -- error metrics ---------------------------------------------------------


def relative_error(estimate_field, reference_field, grid=None):
    """Squared relative L2 error: int (ref - est)^2 / int ref^2.

    Integrals are cell-area weighted sums over ``grid`` (uniform cells when
    no grid is given).
    """
    est = np.asarray(getattr(estimate_field, "values", estimate_field), dtype=float).ravel()
    ref = np.asarray(getattr(reference_field, "values", reference_field), dtype=float).ravel()
    if est.shape != ref.shape:
        raise ValueError("fields must live on the same grid")
    if grid is None:
        grid = getattr(reference_field, "grid", None)
    w = grid.cell_areas() if grid is not None else np.ones_like(ref)
    denom = np.sum(w * ref * ref)
    if denom == 0.0:
        raise ZeroDivisionError("reference field has zero norm")
    return float(np.sum(w * (ref - est) ** 2) / denom)


@dataclass
class ErrorReport:
    eps_u: float
    eps_k: float
    abs_error_u: np.ndarray = None
    abs_error_k: np.ndarray = None
    mean_eps_u: float = None
    std_eps_u: float = None
    mean_eps_k: float = None
    std_eps_k: float = None


def error_report(u_est, u_ref, k_est, k_ref, grid=None):
    return ErrorReport(
        eps_u=relative_error(u_est, u_ref, grid),
        eps_k=relative_error(k_est, k_ref, grid),
        abs_error_u=np.abs(np.asarray(getattr(u_ref, "values", u_ref)) - np.asarray(getattr(u_est, "values", u_est))),
        abs_error_k=np.abs(np.asarray(getattr(k_ref, "values", k_ref)) - np.asarray(getattr(k_est, "values", k_est))),
    )
