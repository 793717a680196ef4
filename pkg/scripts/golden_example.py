"""Two-level model: level-shift blocks and pressure against their closed forms.

Usage: python3 scripts/golden_example.py [--betas 1,2]
"""

import argparse

import numpy as np
from scipy import special

from spinfermion import functionals as fn
from spinfermion import goldenrule as gr
from spinfermion.model import SpectralDensity, simplest_model


def closed_form_pressure(alpha, betas, J2):
    tot = 0.0
    for bj, Jj in zip(betas, J2):
        for bk, Jk in zip(betas, J2):
            tot += (np.tanh(bj) * np.tanh(bk) + np.cosh((bj - bk) * (1 - 2 * alpha)) / (np.cosh(bj) * np.cosh(bk))) * Jj * Jk
    return -np.pi / 2 * (sum(J2) - np.sqrt(tot))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--betas", default="1,2")
    args = ap.parse_args()
    betas = [float(b) for b in args.betas.split(",")]
    J = SpectralDensity.flat_exp(1.0, 1.0)
    m = simplest_model(betas, J)
    pv = -np.exp(-2.0) * special.expi(2.0) - np.exp(2.0) * special.exp1(2.0)

    print(f"betas {betas}, J(u) = exp(-|u|), J(2) = {J(2.0):.6f}, PV int J/(r-2) = {pv:.6f}")
    for a in (0.0, 0.3, 0.5, 1.0):
        blocks, _ = gr.block_decompose(gr.level_shift(m, a), m.system)
        print(f"\nalpha = {a}")
        for u in sorted(blocks):
            print(f"  Bohr frequency {u:+.0f}:\n" + np.array2string(blocks[u].matrix, precision=6, prefix="    "))

    print("\n alpha      F2 (code)         F2 (closed form)   rel. diff")
    for a in np.linspace(-0.5, 1.5, 9):
        got, ref = fn.pressure(m, a), closed_form_pressure(a, betas, [J(2.0)] * len(betas))
        rel = abs(got - ref) / abs(ref) if abs(ref) > 1e-12 else abs(got - ref)
        print(f"{a:6.2f}  {got: .12e}  {ref: .12e}  {rel:.1e}")
    ep = fn.entropy_production(m)
    print(f"\nentropy production: flux {ep.flux:.10f}, -F2'(0) {ep.slope:.10f}")


if __name__ == "__main__":
    main()
