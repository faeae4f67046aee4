#!/usr/bin/env python3
"""Learn the conductivity-pressure curve of an unsaturated soil from heads alone.

Water enters a horizontal 10 m x 10 m slab through its left side at a fixed
rate and leaves through the right side, where the pressure is held at -10 m.
The reference heads come from a Picard finite-volume solve with a van
Genuchten K(u).  Only heads are observed; the K network takes the pressure as
input, so after training it *is* the recovered constitutive curve.

    python3 demos/unsaturated_constitutive.py --noise 0.01
"""

import argparse

import numpy as np

from pinn_inverse.data import van_genuchten_k
from pinn_inverse.optim import LbfgsConfig
from pinn_inverse.training import (
    TrainConfig,
    collocation_points,
    evaluate_nonlinear,
    nonlinear_measurements,
    nonlinear_reference,
    predict_k_of_u,
    train_nonlinear,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iterations", type=int, default=6000)
    ap.add_argument("--n-obs", type=int, default=100)
    ap.add_argument("--noise", type=float, default=0.0, help="relative noise level, e.g. 0.01")
    args = ap.parse_args()

    ref = nonlinear_reference()
    lo, hi = ref.u_range
    print(f"reference pressures span [{lo:.2f}, {hi:.2f}] m")

    meas = nonlinear_measurements(ref, args.n_obs, seed=0, noise=args.noise)
    coll = collocation_points(ref.grid, 1024, seed=0)
    cfg = TrainConfig(k_layers=(1, 50, 50, 1), lbfgs=LbfgsConfig(max_iterations=args.iterations))
    fit = train_nonlinear(ref, meas, coll, cfg)
    err = evaluate_nonlinear(fit, ref)
    print(f"{fit.report.iterations} iterations; eps_u = {err.eps_u:.2e}, eps_K = {err.eps_k:.2e}")

    print("\n   u [m]      K_ref [m/s]   K_learned [m/s]")
    for u in np.linspace(lo, hi, 7):
        print(f"  {u:7.2f}   {van_genuchten_k(u, ref.vg):.4e}   {predict_k_of_u(fit, u)[0]:.4e}")


if __name__ == "__main__":
    main()
