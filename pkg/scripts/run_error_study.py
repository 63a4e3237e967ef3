#!/usr/bin/env python3
"""Error study: sampled analytic inversion-error estimates versus empirical
hierarchical solve errors against a dense reference, over many seeds.

Emits err_study.csv and a metrics file with the mean-log comparison.
"""

import argparse
import sys

from hmatgp.cli import main


def run():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/err_study")
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--k", type=int, default=45)
    ap.add_argument("--eta", type=int, default=105)
    ap.add_argument("--sigma2", type=float, default=1e-3)
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    return main(["err-study", "--out", args.out, "--n", str(args.n),
                 "--k", str(args.k), "--eta", str(args.eta),
                 "--sigma2", str(args.sigma2), "--seeds", str(args.seeds),
                 "--seed", str(args.seed)])


if __name__ == "__main__":
    sys.exit(run())
