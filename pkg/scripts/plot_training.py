"""Plot training curves and return histograms from a run directory.

Needs matplotlib, which is not a package dependency.

    python scripts/plot_training.py runs/tetris/cvar [runs/tetris/plain ...] --out curves.png
"""

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: [float(r[k]) for r in rows] for k in (rows[0] if rows else {})}


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("run_dirs", nargs="+")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="curves.png")
    args = ap.parse_args()

    fig, (ax_mean, ax_cvar, ax_hist) = plt.subplots(1, 3, figsize=(14, 4))
    for d in map(Path, args.run_dirs):
        train = read_csv(d / f"train_seed{args.seed}.csv")
        hist = read_csv(d / f"hist_seed{args.seed}.csv")
        if train:
            ax_mean.plot(train["iteration"], train["mean_return"], label=d.name)
            ax_cvar.plot(train["iteration"], train["cvar_return"], label=d.name)
        if hist:
            centers = [(lo + hi) / 2 for lo, hi in zip(hist["bin_lower"], hist["bin_upper"])]
            total = sum(hist["count"])
            ax_hist.plot(centers, [c / total for c in hist["count"]], drawstyle="steps-mid", label=d.name)
    ax_mean.set(title="batch mean return", xlabel="iteration")
    ax_cvar.set(title="batch CVaR", xlabel="iteration")
    ax_hist.set(title="return distribution", xlabel="return")
    for ax in (ax_mean, ax_cvar, ax_hist):
        ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
