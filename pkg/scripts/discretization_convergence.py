"""Orders of convergence of the two discretisations used by the finite-bath simulator.

1. Midpoint mode grid: error of the discretised two-point function as the number
   of modes doubles (expected order 2).
2. Composite Simpson rule in the cocycle-generator check: residual as the step
   count doubles (expected order 4).

Usage: python3 scripts/discretization_convergence.py
"""

import numpy as np

from spinfermion import fockbath as fb
from spinfermion import goldenrule as gr
from spinfermion.model import CouplingChannel, SpectralDensity, simplest_model


def main():
    d = SpectralDensity.flat_exp(1.0, 1.0)
    ch = CouplingChannel(np.array([[0.0, 1.0], [1.0, 0.0]]), d)
    beta, t = 1.0, 1.5
    exact = gr.correlation_function(ch, beta, t)
    print(f"two-point function at t = {t}, beta = {beta}, s_max = 30")
    prev = None
    for n in (30, 60, 120, 240, 480):
        err = abs(fb.discretize(d, beta, n, 30.0).correlation(t) - exact)
        order = "" if prev is None else f"  order {np.log2(prev / err):.2f}"
        print(f"  n = {n:4d}  error {err:.3e}{order}")
        prev = err

    m = simplest_model([0.5, 3.0], SpectralDensity.gauss_window(2.0, 2.0, 1.0), lam=0.2)
    sim = fb.build(m, n=3, s_max=4.0)
    print("\ncocycle generator residual at t = 1 (128-dimensional bath)")
    prev = None
    for steps in (16, 32, 64, 128, 256):
        r = fb.cocycle_generator_check(sim, 1.0, steps).residual
        order = "" if prev is None else f"  order {np.log2(prev / r):.2f}"
        print(f"  steps = {steps:4d}  residual {r:.3e}{order}")
        prev = r


if __name__ == "__main__":
    main()
