"""Finite-bath growth rates against the weak-coupling prediction for several bath sizes.

Usage: python3 scripts/convergence_study.py [--model models/simplest.yaml] [--modes 2,3,4,5,6]
"""

import argparse
import time
import warnings

import numpy as np

from spinfermion import fockbath as fb
from spinfermion.modelfile import load_model


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", default="models/simplest.yaml")
    ap.add_argument("--modes", default="2,3,4,5,6")
    ap.add_argument("--smax", type=float, default=4.0)
    ap.add_argument("--window", default="0.5,0.95", help="fit window as fractions of the recurrence time")
    args = ap.parse_args()
    model, _ = load_model(args.model)
    lo, hi = (float(x) for x in args.window.split(","))
    alphas = [0.25, 0.5, 0.75]

    print(f"lambda = {model.lam}, s_max = {args.smax}, window = ({lo}, {hi}) x T_rec")
    print("  n     dim   T_rec   " + "  ".join(f"err(a={a})" for a in alphas) + "   median   seconds")
    for n in (int(x) for x in args.modes.split(",")):
        t0 = time.time()
        sim = fb.build(model, n=n, s_max=args.smax)
        T = sim.recurrence_time
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", fb.RecurrenceWarning)
            errs = [fb.growth_rate_comparison(sim, model, a, (lo * T, hi * T)).rel_err for a in alphas]
        print(
            f"{n:3d} {sim.dim:7d} {T:7.3f}   " + "  ".join(f"{e:10.4f}" for e in errs) + f"   {np.median(errs):.4f}   {time.time() - t0:7.1f}"
        )
        del sim


if __name__ == "__main__":
    main()
