"""Unconstrained L-BFGS with a strong Wolfe line search."""

import csv
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LbfgsConfig",
    "TrainReport",
    "LineSearchError",
    "LineSearchResult",
    "wolfe_line_search",
    "lbfgs_minimize",
]


class LineSearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class LbfgsConfig:
    """Settings for :func:`lbfgs_minimize`.

    ``grad_tolerance=None`` means ``1e-9 * max(1, |g0|)``.  The loss-change
    test compares the loss with its value ``loss_change_window`` iterations
    earlier; with the default tolerance of 0 it only fires on exact
    stagnation.
    """

    memory: int = 10
    max_iterations: int = 50000
    grad_tolerance: float = None
    loss_change_tolerance: float = 0.0
    loss_change_window: int = 5
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search_steps: int = 30

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be at least 1")
        if self.max_iterations < 1 or self.max_line_search_steps < 1:
            raise ValueError("iteration limits must be positive")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.grad_tolerance is not None and self.grad_tolerance <= 0:
            raise ValueError("grad_tolerance must be positive")
        if self.loss_change_tolerance < 0:
            raise ValueError("loss_change_tolerance must be non-negative")


@dataclass
class TrainReport:
    iterations: int = 0
    losses: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    reason: str = ""
    wall_time: float = 0.0
    evaluations: int = 0

    @property
    def final_loss(self):
        return self.losses[-1]

    @property
    def final_grad_norm(self):
        return self.grad_norms[-1]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "loss", "grad_norm"])
            for i, (f, g) in enumerate(zip(self.losses, self.grad_norms)):
                w.writerow([i, repr(float(f)), repr(float(g))])


@dataclass
class LineSearchResult:
    step: float
    value: float
    grad: np.ndarray
    evaluations: int


def _cubic_min(a, fa, da, b, fb, db):
    """Minimiser of the cubic interpolating (f, f') at a and b, or None."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0:
        return None
    d2 = np.copysign(np.sqrt(disc), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def wolfe_line_search(fg, x, direction, config=LbfgsConfig(), f0=None, g0=None, step0=1.0):
    """Step along ``direction`` satisfying the strong Wolfe conditions.

    ``fg(x)`` returns ``(value, gradient)``.  Raises :class:`ValueError` for
    an ascent direction and :class:`LineSearchError` when no admissible step
    is found within ``config.max_line_search_steps`` evaluations.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(direction, dtype=float)
    evals = 0
    if f0 is None or g0 is None:
        f0, g0 = fg(x)
        evals += 1
    dphi0 = float(np.dot(g0, d))
    if not dphi0 < 0:
        raise ValueError(f"not a descent direction (slope {dphi0:.3e})")
    c1, c2 = config.c1, config.c2

    def phi(a):
        nonlocal evals
        evals += 1
        f, g = fg(x + a * d)
        f = float(f)
        if not np.isfinite(f):
            return np.inf, g, np.nan
        return f, g, float(np.dot(g, d))

    def sufficient(a, fa):
        return fa <= f0 + c1 * a * dphi0

    def curvature(da):
        return abs(da) <= -c2 * dphi0

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        while evals < config.max_line_search_steps:
            a = None
            if np.isfinite(f_hi) and np.isfinite(d_hi):
                a = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            width = hi - lo
            if a is None or not np.isfinite(a) or not (min(lo, hi) + 0.1 * abs(width) <= a <= max(lo, hi) - 0.1 * abs(width)):
                a = lo + 0.5 * width
            fa, ga, da = phi(a)
            if not sufficient(a, fa) or fa >= f_lo:
                hi, f_hi, d_hi = a, fa, da
            else:
                if curvature(da):
                    return LineSearchResult(a, fa, ga, evals)
                if da * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = a, fa, da
            if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
                break
        raise LineSearchError("zoom phase exhausted its evaluation budget")

    a_prev, f_prev, d_prev = 0.0, float(f0), dphi0
    a = float(step0)
    first = True
    while evals < config.max_line_search_steps:
        fa, ga, da = phi(a)
        if not sufficient(a, fa) or (not first and fa >= f_prev):
            return zoom(a_prev, f_prev, d_prev, a, fa, da)
        if curvature(da):
            return LineSearchResult(a, fa, ga, evals)
        if da >= 0:
            return zoom(a, fa, da, a_prev, f_prev, d_prev)
        a_prev, f_prev, d_prev = a, fa, da
        a = 2.0 * a
        first = False
    raise LineSearchError("no admissible step found")


def _two_loop(g, history):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    s, y, _ = history[-1]
    q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def lbfgs_minimize(objective_with_gradient, x0, config=LbfgsConfig(), callback=None):
    """Minimise ``f`` from ``x0``; returns ``(x_best, TrainReport)``.

    ``objective_with_gradient(x)`` returns ``(value, gradient)``.  The
    report records the loss after every accepted step (the first entry is
    the loss at ``x0``).  ``callback(iteration, x, value)`` may return True
    to stop early.
    """
    start = time.perf_counter()
    x = np.array(x0, dtype=float)
    f, g = objective_with_gradient(x)
    f = float(f)
    g = np.asarray(g, dtype=float)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise FloatingPointError("objective is not finite at the starting point")
    gnorm = float(np.linalg.norm(g))
    gtol = config.grad_tolerance if config.grad_tolerance is not None else 1e-9 * max(1.0, gnorm)
    report = TrainReport(losses=[f], grad_norms=[gnorm], evaluations=1)
    history = deque(maxlen=config.memory)
    reason = "max-iter"
    for it in range(config.max_iterations):
        if gnorm <= gtol:
            reason = "gradient"
            break
        if history:
            d = _two_loop(g, history)
            if not np.dot(d, g) < 0:
                history.clear()
                d = -g
        else:
            d = -g
        step0 = 1.0 if history else min(1.0, 1.0 / gnorm)
        try:
            ls = wolfe_line_search(objective_with_gradient, x, d, config, f, g, step0)
        except LineSearchError:
            reason = "line-search-failure"
            break
        report.evaluations += ls.evaluations
        s = ls.step * d
        g_new = np.asarray(ls.grad, dtype=float)
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            history.append((s, y, 1.0 / sy))
        x = x + s
        f, g = ls.value, g_new
        gnorm = float(np.linalg.norm(g))
        report.iterations = it + 1
        report.losses.append(f)
        report.grad_norms.append(gnorm)
        report.steps.append(ls.step)
        if callback is not None and callback(it + 1, x, f):
            reason = "callback"
            break
        w = config.loss_change_window
        if len(report.losses) > w:
            old = report.losses[-1 - w]
            if old - f <= config.loss_change_tolerance * max(abs(old), np.finfo(float).tiny):
                reason = "loss-change"
                break
    else:
        if gnorm <= gtol:
            reason = "gradient"
    report.reason = reason
    report.wall_time = time.perf_counter() - start
    return x, report
