#!/usr/bin/env python3
"""Wall-clock scaling study: solve times across problem sizes and ranks.

Emits scaling.csv plus fitted log-log slopes against n*log(n) and k.
"""

import argparse
import sys

from hmatgp.cli import main


def run():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/scaling")
    ap.add_argument("--sizes", type=int, nargs="+",
                    default=[10_000, 20_000, 50_000, 100_000])
    ap.add_argument("--ks", type=int, nargs="+", default=[5, 10, 20, 40])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    argv = (["bench-scaling", "--out", args.out, "--seed", str(args.seed),
             "--sizes"] + [str(s) for s in args.sizes]
            + ["--ks"] + [str(k) for k in args.ks])
    return main(argv)


if __name__ == "__main__":
    sys.exit(run())
