"""Variance of crude vs importance-sampled CVaR gradients on the Gaussian family.

    python scripts/is_variance.py [--alpha 0.01] [--n 200] [--replications 200]
"""

import argparse

from cvarsgd.importance import GaussianShiftProposal, fit_proposal_saa, variance_comparison
from cvarsgd.models import gaussian_mean_family


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--alpha", type=float, default=0.01)
    ap.add_argument("--theta", type=float, default=0.0)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--replications", type=int, default=200)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    model, prop = gaussian_mean_family(), GaussianShiftProposal()
    fit = fit_proposal_saa(model, prop, [args.theta], args.alpha, 10_000, 100, 1.0, seed=args.seed)
    print(f"SAA proposal shift {fit.omega[0]:.4f}, objective {fit.objective_start:.4g} -> {fit.objective:.4g} "
          f"({fit.accepted_steps} accepted steps)")
    v_crude, v_is = variance_comparison(model, prop, [args.theta], args.alpha, fit.omega, args.n,
                                        args.replications, seed=args.seed + 1)
    print(f"variance crude {v_crude[0]:.4g}  IS {v_is[0]:.4g}  ratio {v_is[0] / v_crude[0]:.4f}")


if __name__ == "__main__":
    main()
