"""Bias of the CVaR gradient estimator against the analytic Gaussian gradient.

    python scripts/bias_study.py [--alpha 0.5] [--replications 200]
"""

import argparse

from cvarsgd.gcvar import bias_study, loglog_slope
from cvarsgd.models import gaussian_mean_family


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--theta", type=float, default=0.0)
    ap.add_argument("--replications", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ns = [10**2, 10**3, 10**4, 10**5]
    rows = bias_study(gaussian_mean_family(), [args.theta], args.alpha, ns, args.replications, args.seed)
    print(f"{'N':>8} {'mean':>10} {'bias':>10} {'mean|err|':>10} {'std err':>10}")
    for r in rows:
        print(f"{r.n:>8} {r.mean_estimate[0]:>10.5f} {r.bias:>10.2e} {r.mean_abs_error:>10.2e} "
              f"{r.std_error:>10.2e}")
    print(f"log-log slope of bias: {loglog_slope(ns, [r.bias for r in rows]):.3f}")
    print(f"log-log slope of mean|err|: {loglog_slope(ns, [r.mean_abs_error for r in rows]):.3f}")


if __name__ == "__main__":
    main()
