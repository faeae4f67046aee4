"""Physics-informed neural networks for conductivity estimation.

Subpackages and modules:

* :mod:`pinn_inverse.autodiff`, :mod:`pinn_inverse.network`: reverse-mode
  autodiff and tanh MLPs with exact spatial jets.
* :mod:`pinn_inverse.problems`: residuals, loss assembly, error metrics.
* :mod:`pinn_inverse.optim`: L-BFGS with a strong Wolfe line search.
* :mod:`pinn_inverse.data`: GP fields, finite-volume reference solutions,
  sampling and noise.
* :mod:`pinn_inverse.map_baseline`: regularised least-squares estimate.
* :mod:`pinn_inverse.training`, :mod:`pinn_inverse.bench`: end-to-end runs
  and studies.
"""

__version__ = "0.1.0"
