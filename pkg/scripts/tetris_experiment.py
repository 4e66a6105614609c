"""Train CVaR and plain policy-gradient Tetris policies and compare them per seed.

    python scripts/tetris_experiment.py --out runs/tetris [--threads 4]
"""

import argparse
import dataclasses
from pathlib import Path

from cvarsgd.cli import execute
from cvarsgd.config import load_config
from cvarsgd.environments.tetris import FEATURE_NAMES

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", default="runs/tetris")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    runs = {}
    for name in ("cvar", "plain"):
        cfg = load_config(CONFIGS / f"tetris_{name}.json")
        cfg = dataclasses.replace(cfg, output_dir=str(Path(args.out) / name))
        summary, _ = execute(cfg, args.threads)
        runs[name] = {r["seed"]: r for r in summary["runs"]}

    well = FEATURE_NAMES.index("board_wells")
    print(f"{'seed':>4} {'cvar(CVaR-PG)':>14} {'cvar(PG)':>10} {'mean(CVaR-PG)':>14} "
          f"{'mean(PG)':>10} {'well(CVaR-PG)':>14} {'well(PG)':>10}")
    for seed, c in sorted(runs["cvar"].items()):
        p = runs["plain"][seed]
        print(f"{seed:>4} {c['cvar']:>14.3f} {p['cvar']:>10.3f} {c['mean']:>14.2f} {p['mean']:>10.2f} "
              f"{c['final_theta'][well]:>14.3f} {p['final_theta'][well]:>10.3f}")


if __name__ == "__main__":
    main()
