"""CVaR vs plain policy gradient on the two-stage risky/safe chain, scored exactly.

    python scripts/chain_separation.py [--seeds 5] [--iterations 1000]
"""

import argparse

import numpy as np

from cvarsgd.environments.chain import ChainMdpConfig, build_chain
from cvarsgd.optimizer import ProjectionBox, Schedules, cvarsgd
from cvarsgd.oracle import exact_cvar, exact_mean


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--iterations", type=int, default=1000)
    args = ap.parse_args()

    problem = build_chain(ChainMdpConfig(horizon=2, eta=0.05))
    mdp, F, alpha = problem.mdp, problem.features, args.alpha
    box = ProjectionBox.uniform(2, -5.0, 5.0)
    sched = Schedules.default(alpha, eps0=5.0)
    print(f"{'seed':>4} {'estimator':>9} {'theta':>18} {'exact mean':>11} {'exact cvar':>11}")
    for seed in range(args.seeds):
        for est in ("crude", "plain"):
            th = cvarsgd(problem.model(), np.zeros(2), alpha, box, sched, args.iterations,
                         seed=seed, estimator=est).final_theta
            print(f"{seed:>4} {est:>9} {np.array2string(th, precision=2):>18} "
                  f"{exact_mean(mdp, F, th):>11.4f} {exact_cvar(mdp, F, th, alpha):>11.4f}")


if __name__ == "__main__":
    main()
