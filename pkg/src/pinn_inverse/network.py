"""Feed-forward tanh networks with exact second-order input jets.

Networks are plain parameter containers (:class:`MlpParams`); evaluation is
done by free functions.  :func:`eval_jet` pushes (value, gradient, Hessian)
triples through the layers with the chain rule, and every operation goes
through :mod:`pinn_inverse.autodiff`, so any scalar built from jets can be
differentiated with respect to the weights by :func:`loss_param_gradient`.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad

__all__ = [
    "MlpParams",
    "Jet2",
    "ParamGradient",
    "init_xavier",
    "forward",
    "eval_jet",
    "loss_param_gradient",
    "value_and_param_gradient",
    "save_params",
    "load_params",
]


@dataclass(frozen=True)
class MlpParams:
    """Weights ``W[l]`` of shape (fan_out, fan_in) and biases ``b[l]``.

    Entries are ndarrays normally and :class:`~pinn_inverse.autodiff.Var`
    leaves while a loss is being differentiated.
    """

    layer_sizes: tuple
    weights: tuple
    biases: tuple

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", tuple(self.weights))
        object.__setattr__(self, "biases", tuple(self.biases))
        _check_sizes(sizes)
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("need one weight matrix and one bias vector per layer")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (sizes[l + 1], sizes[l]):
                raise ValueError(f"layer {l}: weight shape {W.shape}, expected {(sizes[l + 1], sizes[l])}")
            if b.shape != (sizes[l + 1],):
                raise ValueError(f"layer {l}: bias shape {b.shape}, expected {(sizes[l + 1],)}")

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def n_params(self):
        return param_count(self.layer_sizes)

    def flatten(self):
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(ad.value_of(W).ravel())
            parts.append(ad.value_of(b).ravel())
        return np.concatenate(parts)

    @classmethod
    def unflatten(cls, layer_sizes, flat):
        layer_sizes = tuple(int(n) for n in layer_sizes)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (param_count(layer_sizes),):
            raise ValueError(f"expected {param_count(layer_sizes)} parameters, got {flat.shape}")
        weights, biases = [], []
        pos = 0
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            weights.append(flat[pos : pos + fan_in * fan_out].reshape(fan_out, fan_in).copy())
            pos += fan_in * fan_out
            biases.append(flat[pos : pos + fan_out].copy())
            pos += fan_out
        return cls(layer_sizes, weights, biases)

    def traced(self):
        """Copy whose arrays are gradient-tracking leaves."""
        return MlpParams(
            self.layer_sizes,
            [ad.Var(ad.value_of(W), requires_grad=True) for W in self.weights],
            [ad.Var(ad.value_of(b), requires_grad=True) for b in self.biases],
        )


@dataclass(frozen=True)
class Jet2:
    """Value, input gradient and input Hessian of a scalar network output.

    For a batch of N points the fields have shapes (N,), (N, d), (N, d, d).
    """

    value: object
    grad: object
    hess: object

    def laplacian(self):
        h = self.hess
        total = h[..., 0, 0]
        for i in range(1, ad.value_of(h).shape[-1]):
            total = total + h[..., i, i]
        return total


@dataclass(frozen=True)
class ParamGradient:
    flat: np.ndarray

    def __len__(self):
        return len(self.flat)

    def norm(self):
        return float(np.linalg.norm(self.flat))


def param_count(layer_sizes):
    return sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))


def _check_sizes(layer_sizes):
    if len(layer_sizes) < 2:
        raise ValueError("a network needs at least an input and an output layer")
    if any(n <= 0 for n in layer_sizes):
        raise ValueError(f"layer sizes must be positive, got {layer_sizes}")


def init_xavier(layer_sizes, seed):
    """Xavier (Glorot) normal weights, zero biases."""
    layer_sizes = tuple(int(n) for n in layer_sizes)
    _check_sizes(layer_sizes)
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        std = np.sqrt(2.0 / (fan_in + fan_out))
        weights.append(rng.normal(0.0, std, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(layer_sizes, weights, biases)


def _prepare_input(params, x, shift, scale):
    if not isinstance(x, ad.Var):
        x = np.asarray(x, dtype=float)
    xv = ad.value_of(x)
    single = False
    if xv.ndim == 0:
        x, single = ad.reshape(x, (1, 1)), True
    elif xv.ndim == 1 and params.input_dim == 1:
        x = ad.reshape(x, (-1, 1))
    elif xv.ndim == 1:
        x, single = ad.reshape(x, (1, -1)), True
    if ad.value_of(x).shape[1] != params.input_dim:
        raise ValueError(f"input dimension {ad.value_of(x).shape[1]} != network input {params.input_dim}")
    d = params.input_dim
    scale = np.ones(d) if scale is None else np.broadcast_to(np.asarray(scale, float), (d,))
    if shift is not None:
        x = x - np.broadcast_to(np.asarray(shift, float), (d,))
    if not np.all(scale == 1.0):
        x = x * scale
    return x, scale, single


def _pairs(d):
    """Upper-triangle index pairs (i <= j) of a d x d Hessian."""
    return [(i, j) for i in range(d) for j in range(i, d)]


def _tanh_jet(z, d):
    """tanh applied to a packed jet ``z`` of shape (C, n, k).

    Component 0 is the value, 1..d the gradient and the rest the upper
    Hessian triangle.  With t = tanh(z0), s = 1 - t^2 and c = -2 t s:
    value -> t, grad_i -> s g_i, hess_ij -> s h_ij + c g_i g_j.
    """
    zv = ad.value_of(z)
    n_comp = zv.shape[0]
    t = np.tanh(zv[0])
    s = 1.0 - t * t
    c = -2.0 * t * s
    g = zv[1 : 1 + d]
    pairs = _pairs(d) if n_comp > 1 + d else []
    out = np.empty_like(zv)
    out[0] = t
    if n_comp > 1:
        np.multiply(g, s, out=out[1 : 1 + d])
    for p, (i, j) in enumerate(pairs):
        out[1 + d + p] = s * zv[1 + d + p] + c * g[i] * g[j]
    if not isinstance(z, ad.Var):
        return out

    def back(G):
        dz = np.empty_like(zv)
        dz0 = G[0] * s
        if n_comp > 1:
            Gg = G[1 : 1 + d]
            dg = dz[1 : 1 + d]
            np.multiply(Gg, s, out=dg)
            # ds/dz0 = c
            dz0 += c * np.einsum("i...,i...->...", Gg, g)
        if pairs:
            dc = s * (4.0 * t * t - 2.0 * s)
            for p, (i, j) in enumerate(pairs):
                Gp = G[1 + d + p]
                np.multiply(Gp, s, out=dz[1 + d + p])
                cg = Gp * c
                dg[i] += cg * g[j]
                dg[j] += cg * g[i]
                dz0 += Gp * (c * zv[1 + d + p] + dc * g[i] * g[j])
        dz[0] = dz0
        return (dz,)

    return ad.Var(out, _parents=(z,), _backward=back)


def _add_bias(z, b):
    """Add ``b`` to the value component only."""
    if not isinstance(z, ad.Var) and not isinstance(b, ad.Var):
        z[0] += b  # z is a fresh GEMM result
        return z
    z, b = ad.asvar(z), ad.asvar(b)
    out = z.value.copy()
    out[0] += b.value
    return ad.Var(out, _parents=(z, b), _backward=lambda G: (G, G[0].sum(axis=0)))


def _propagate(params, x, shift, scale, order):
    # Packed jet layout (C, n, k): C = 1 value + d gradient + d(d+1)/2
    # Hessian components, so each layer is a single matrix product and
    # every component slice is contiguous.
    a, scale, single = _prepare_input(params, x, shift, scale)
    n, d = ad.value_of(a).shape
    n_comp = 1 + (d if order >= 1 else 0) + (d * (d + 1) // 2 if order >= 2 else 0)
    seed = np.zeros((n_comp - 1, n, d))
    for i in range(min(d, n_comp - 1)):
        seed[i, :, i] = scale[i]
    jet = _stack_value(a, seed)
    last = len(params.weights) - 1
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        jet = _add_bias(ad.linear(jet, W), b)
        if l < last:
            jet = _tanh_jet(jet, d)
    out = jet[:, :, 0]  # (C, n)
    value = out[0]
    grad = hess = None
    if order >= 1:
        grad = out[1 : 1 + d].T
    if order >= 2:
        lookup = np.empty((d, d), dtype=int)
        for p, (i, j) in enumerate(_pairs(d)):
            lookup[i, j] = lookup[j, i] = 1 + d + p
        hess = _transpose_to_last(out[lookup])
    if single:
        value = value[0]
        grad = grad[0] if grad is not None else None
        hess = hess[0] if hess is not None else None
    return value, grad, hess


def _transpose_to_last(h):
    """(d, d, n) -> (n, d, d)."""
    if isinstance(h, ad.Var):
        return ad.Var(np.transpose(h.value, (2, 0, 1)), _parents=(h,), _backward=lambda g: (np.transpose(g, (1, 2, 0)),))
    return np.transpose(h, (2, 0, 1))


def _stack_value(a, rest):
    """Put the (n, d) value block in front of the constant (C-1, n, d) seed."""
    av = ad.value_of(a)
    out = np.concatenate([av[None], rest], axis=0)
    if not isinstance(a, ad.Var):
        return out
    return ad.Var(out, _parents=(a,), _backward=lambda G: (G[0],))


def forward(params, x, input_shift=None, input_scale=None):
    """Network value at ``x`` (shape (d,) or a batch (N, d))."""
    value, _, _ = _propagate(params, x, input_shift, input_scale, order=0)
    if isinstance(value, np.ndarray) and value.ndim == 0:
        return float(value)
    return value


def eval_jet(params, x, input_shift=None, input_scale=None):
    """Exact value, gradient and Hessian with respect to ``x``.

    ``input_shift``/``input_scale`` apply the fixed affine map
    ``(x - shift) * scale`` before the first layer; derivatives are with
    respect to the unmapped ``x``.
    """
    return Jet2(*_propagate(params, x, input_shift, input_scale, order=2))


def eval_grad(params, x, input_shift=None, input_scale=None):
    """Value and input gradient only (cheaper than :func:`eval_jet`)."""
    value, grad, _ = _propagate(params, x, input_shift, input_scale, order=1)
    return value, grad


def value_and_param_gradient(loss_evaluator, params_list):
    """Evaluate ``loss_evaluator(*nets)`` and its gradient for every net."""
    traced = [p.traced() for p in params_list]
    loss = loss_evaluator(*traced)
    value = float(ad.value_of(loss))
    if not np.isfinite(value):
        raise FloatingPointError(f"loss is not finite: {value}")
    if isinstance(loss, ad.Var) and loss.requires_grad:
        loss.backward()
    grads = []
    for t in traced:
        parts = []
        for W, b in zip(t.weights, t.biases):
            parts.append(np.zeros(W.value.size) if W.grad is None else W.grad.ravel())
            parts.append(np.zeros(b.value.size) if b.grad is None else b.grad.ravel())
        grads.append(ParamGradient(np.concatenate(parts)))
    return value, grads


def loss_param_gradient(loss_evaluator, params_list):
    """Exact gradient of a scalar functional of one or more networks."""
    return value_and_param_gradient(loss_evaluator, params_list)[1]


def save_params(params, path):
    """Plain-text dump: sizes line, then weight rows and bias line per layer."""
    lines = [" ".join(str(n) for n in params.layer_sizes)]
    for W, b in zip(params.weights, params.biases):
        for row in ad.value_of(W):
            lines.append(" ".join(f"{v:.17g}" for v in row))
        lines.append(" ".join(f"{v:.17g}" for v in ad.value_of(b)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_params(path):
    lines = Path(path).read_text().split("\n")
    sizes = tuple(int(v) for v in lines[0].split())
    _check_sizes(sizes)
    rows = iter(lines[1:])
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = np.array([[float(v) for v in next(rows).split()] for _ in range(fan_out)])
        weights.append(W.reshape(fan_out, fan_in))
        biases.append(np.array([float(v) for v in next(rows).split()]))
    return MlpParams(sizes, weights, biases)
