"""Mean discriminator step |psi_(k+1) - psi_k| of WGAN-GP SimGD over sliding windows."""

import argparse

import numpy as np

from ganlab.dirac import DiracState, MethodSpec, UpdateRule, simulate
from ganlab.objectives import make_loss


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=0.01)
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--g0", type=float, default=1.0)
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--window", type=int, default=100)
    ap.add_argument("--start", type=float, nargs=2, default=[0.5, 0.5])
    args = ap.parse_args()
    traj = simulate(DiracState(*args.start), UpdateRule.simgd(args.h), MethodSpec.wgangp(args.gamma, args.g0),
                    make_loss("linear"), args.steps)
    gaps = np.abs(np.diff(traj.psi))
    print("end_step,mean_gap,radius")
    for end in range(args.window, args.steps + 1, max(args.window, args.steps // 20)):
        print(f"{end},{float(np.mean(gaps[end - args.window:end]))!r},{float(traj.radii[end])!r}")
    print(f"# target h*g0 = {args.h * args.g0!r}")


if __name__ == "__main__":
    main()
