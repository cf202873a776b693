"""Desk-scale 2D GAN runs: R1 on the Gaussian, R1 vs unregularized on the circle.

Prints per-seed final W1 and, with --eval-samples-check, re-scores the final
generators on a larger held-out sample next to the estimator floor.
"""

import argparse
import json
import statistics

import numpy as np

from ganlab.gan2d import Dataset2D, Nets, TrainConfig, sample_data, train
from ganlab.transport import w1_exact


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--iterations", type=int, default=10_000)
    ap.add_argument("--eval-samples-check", type=int, default=0)
    args = ap.parse_args()
    results = {}
    for dataset, method in (("gaussian", "r1"), ("circle", "unregularized"), ("circle", "r1")):
        finals = []
        for seed in args.seeds:
            cfg = TrainConfig(dataset=Dataset2D(dataset), method=method, gamma=10.0, iterations=args.iterations,
                              seed=seed)
            rep = train(cfg)
            row = {"seed": seed, "final_w1": rep.final_w1, "wall_time": round(rep.wall_time, 1)}
            n = args.eval_samples_check
            if n and not rep.diverged:
                rng = np.random.default_rng([seed, 77])
                nets = Nets.from_config(cfg)
                fake = nets.generate(rep.state.gen, rng.standard_normal((n, cfg.latent_dim)))
                row[f"w1_{n}"] = w1_exact(fake, sample_data(cfg.dataset, n, rng))
                row[f"floor_{n}"] = w1_exact(sample_data(cfg.dataset, n, rng), sample_data(cfg.dataset, n, rng))
            print(json.dumps({"dataset": dataset, "method": method, **row}), flush=True)
            finals.append(rep.final_w1)
        results[dataset, method] = finals
    med = {k: statistics.median(float("inf") if v is None else v for v in vals) for k, vals in results.items()}
    print(f"gaussian R1 below 0.2: {sum(v is not None and v < 0.2 for v in results['gaussian', 'r1'])} of "
          f"{len(args.seeds)}")
    print(f"circle median ratio unregularized / R1: {med['circle', 'unregularized'] / med['circle', 'r1']:.3f}")


if __name__ == "__main__":
    main()
