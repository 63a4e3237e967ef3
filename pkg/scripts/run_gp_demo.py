#!/usr/bin/env python3
"""End-to-end GP demo on a synthetic smooth 2-D surface: train lengthscales
with analytic gradients, then predict on held-out points in full and
reduced modes.

Emits history.csv, predictions.csv, and metrics files under --out.
"""

import argparse
import sys

from hmatgp.cli import main


def run():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/gp_demo")
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--n-test", type=int, default=200)
    ap.add_argument("--k", type=int, default=40)
    ap.add_argument("--sigma2", type=float, default=1e-2)
    ap.add_argument("--mode", choices=["full", "reduced"], default="full")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    common = ["--n", str(args.n), "--k", str(args.k),
              "--sigma2", str(args.sigma2), "--seed", str(args.seed)]
    rc = main(["train", "--out", f"{args.out}/train", "--maxiter", "25"]
              + common)
    if rc != 0:
        return rc
    return main(["predict", "--out", f"{args.out}/predict",
                 "--n-test", str(args.n_test), "--mode", args.mode,
                 "--ell", "0.3"] + common)


if __name__ == "__main__":
    sys.exit(run())
