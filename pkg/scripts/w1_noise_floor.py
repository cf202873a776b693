"""W1 between two independent samples of the same 2D Gaussian, per sample size.

This is the value a perfect generator would score under the empirical W1 protocol.
"""

import argparse

import numpy as np

from ganlab.transport import w1_exact


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 512, 1024, 2048])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print("n,mean_w1,std_w1")
    for n in args.sizes:
        vals = [w1_exact(rng.standard_normal((n, 2)), rng.standard_normal((n, 2))) for _ in range(args.repeats)]
        print(f"{n},{float(np.mean(vals))!r},{float(np.std(vals))!r}")


if __name__ == "__main__":
    main()
