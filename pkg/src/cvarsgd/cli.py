"""Command line runner: ``cvarsgd run | compare | validate-config``.

``run`` executes a config and writes, into the output directory,

* ``train_seed<S>.csv``  per-iteration trace (flushed every iteration)
* ``hist_seed<S>.csv``   evaluation histogram of the final policy
* ``theta_seed<S>.json`` final parameter vector
* study tables (``bias_seed<S>.csv``, ``variance_seed<S>.csv``, ``oracle_seed<S>.csv``)
* ``summary.json`` and ``manifest.json`` (config copy, hashes, seeds, version)

Floats in CSV files carry 17 significant digits. Seeds run concurrently on
``CVARSGD_THREADS`` worker threads (default 1); each seed owns its files, so
the output does not depend on the thread count.

Exit status: 0 success, 1 run failure (estimator error or out of
tolerance), 2 bad config or arguments.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import (ConfigError, ExperimentConfig, build_box, build_model, build_proposal,
                     feature_names, load_config)
from .gcvar import bias_study, gcvar_estimate, loglog_slope
from .importance import fit_proposal_saa, variance_comparison
from .models import make_rng
from .optimizer import Schedules, cvarsgd, evaluate_policy
from .oracle import fd_cvar_gradient

THREADS_ENV = "CVARSGD_THREADS"


def fmt(x) -> str:
    return format(float(x), ".17g")


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1")
    return n


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# experiment kinds; each returns (result dict, ok flag)


_WARM_CACHE: dict = {}
_WARM_LOCK = threading.Lock()


def _initial_theta(cfg: ExperimentConfig, model, box):
    """``theta0``, optionally refined by a fixed-seed plain policy-gradient warm start.

    The warm start depends only on its own settings, so results are cached
    and shared by every seed (and every config) with the same settings.
    """
    theta = np.zeros(model.k) if cfg.theta0 is None else np.array(cfg.theta0, dtype=np.float64)
    ws = cfg.warm_start
    if ws.iterations == 0:
        return theta
    key = json.dumps([cfg.model, list(theta), list(cfg.box), cfg.alpha,
                      dataclasses.asdict(ws)], sort_keys=True)
    with _WARM_LOCK:
        if key not in _WARM_CACHE:
            warm = cvarsgd(model, theta, cfg.alpha, box, Schedules.fixed(ws.step, ws.batch),
                           ws.iterations, seed=ws.seed, estimator="plain")
            if warm.failed_iteration is not None:
                raise RuntimeError(f"warm start failed: {warm.error}")
            _WARM_CACHE[key] = warm.final_theta
        return _WARM_CACHE[key].copy()


def _write_eval(out: Path, seed: int, ev) -> None:
    _write_rows(out / f"hist_seed{seed}.csv", ["bin_lower", "bin_upper", "count"],
                [[fmt(lo), fmt(hi), int(c)] for lo, hi, c in zip(ev.edges[:-1], ev.edges[1:], ev.counts)])


def _theta_json(names, theta) -> dict:
    return {"names": list(names), "theta": [float(v) for v in theta]}


def run_train(cfg: ExperimentConfig, seed: int, out: Path):
    model = build_model(cfg.model)
    box = build_box(cfg, model.k)
    names = feature_names(cfg.model, model.k)
    theta0 = _initial_theta(cfg, model, box)
    cols = ["theta_" + n if not n.startswith("theta_") else n for n in names]
    proposal = build_proposal(cfg.model, model) if cfg.estimator.name == "is" else None
    est = cfg.estimator
    path = out / f"train_seed{seed}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "mean_return", "cvar_return", *cols, "var_used", "tail_count"])
        fh.flush()

        def on_record(rec):
            w.writerow([rec.iteration, fmt(rec.mean_return), fmt(rec.cvar_return),
                        *[fmt(v) for v in rec.theta], fmt(rec.var_used), rec.tail_count])
            fh.flush()

        trace = cvarsgd(model, theta0, cfg.alpha, box, cfg.schedules.build(cfg.alpha),
                        cfg.iterations, seed=seed, estimator=est.name, proposal=proposal,
                        refit_period=est.refit_period, saa_samples=est.saa_samples,
                        saa_steps=est.saa_steps, saa_rate=est.saa_rate, on_record=on_record)
    theta = trace.final_theta
    _write_json(out / f"theta_seed{seed}.json", _theta_json(names, theta))
    ev = evaluate_policy(model, theta, cfg.alpha, cfg.n_eval, seed=cfg.eval_seed, bins=cfg.bins)
    _write_eval(out, seed, ev)
    result = {"seed": seed, "theta0": [float(v) for v in theta0],
              "final_theta": [float(v) for v in theta], "iterations": len(trace),
              "mean": ev.mean, "cvar": ev.cvar,
              "failed_iteration": trace.failed_iteration, "error": trace.error}
    return result, trace.failed_iteration is None


def run_evaluate(cfg: ExperimentConfig, seed: int, out: Path):
    model = build_model(cfg.model)
    theta = np.zeros(model.k) if cfg.theta is None else np.array(cfg.theta, dtype=np.float64)
    ev = evaluate_policy(model, theta, cfg.alpha, cfg.n_eval, seed=seed, bins=cfg.bins)
    _write_eval(out, seed, ev)
    return {"seed": seed, "theta": [float(v) for v in theta], "mean": ev.mean, "cvar": ev.cvar}, True


def run_bias(cfg: ExperimentConfig, seed: int, out: Path):
    model = build_model(cfg.model)
    theta = (0.0,) if cfg.theta is None else cfg.theta
    rows = bias_study(model, theta, cfg.alpha, cfg.batch_sizes, cfg.replications, seed=seed)
    _write_rows(out / f"bias_seed{seed}.csv",
                ["n", "mean_estimate", "bias", "mean_abs_error", "std_error"],
                [[r.n, fmt(r.mean_estimate[0]), fmt(r.bias), fmt(r.mean_abs_error), fmt(r.std_error)]
                 for r in rows])
    result = {"seed": seed, "bias": [r.bias for r in rows]}
    if len(rows) >= 2 and all(r.bias > 0 for r in rows):
        result["slope"] = loglog_slope([r.n for r in rows], [r.bias for r in rows])
    return result, True


def run_variance(cfg: ExperimentConfig, seed: int, out: Path):
    model = build_model(cfg.model)
    proposal = build_proposal(cfg.model, model)
    theta = np.zeros(model.k) if cfg.theta is None else np.array(cfg.theta, dtype=np.float64)
    rng = make_rng(seed)
    est = cfg.estimator
    fit = fit_proposal_saa(model, proposal, theta, cfg.alpha, est.saa_samples, est.saa_steps,
                           est.saa_rate, seed=rng)
    v_crude, v_is = variance_comparison(model, proposal, theta, cfg.alpha, fit.omega, cfg.n,
                                        cfg.replications, seed=rng)
    ratio = v_is / v_crude
    _write_rows(out / f"variance_seed{seed}.csv", ["component", "var_crude", "var_is", "ratio"],
                [[j, fmt(a), fmt(b), fmt(r)] for j, (a, b, r) in enumerate(zip(v_crude, v_is, ratio))])
    return {"seed": seed, "omega": [float(w) for w in fit.omega],
            "ratio": [float(r) for r in ratio]}, True


def run_oracle(cfg: ExperimentConfig, seed: int, out: Path):
    model = build_model(cfg.model)
    theta = np.zeros(model.k) if cfg.theta is None else np.array(cfg.theta, dtype=np.float64)
    if cfg.model["name"] == "gaussian":
        truth = model.cvar_gradient(theta, cfg.alpha)
    else:
        truth = fd_cvar_gradient(model.mdp, model.features, theta, cfg.alpha, h=cfg.h)
    est = gcvar_estimate(model.sample(theta, cfg.n, make_rng(seed)), cfg.alpha).grad
    rows, ok = [], True
    for j, (e, t) in enumerate(zip(est, truth)):
        err = abs(e - t)
        if abs(t) < cfg.abs_tol:
            good, rel = err <= cfg.abs_tol, float("nan")
        else:
            rel = err / abs(t)
            good = rel <= cfg.rel_tol
        ok &= bool(good)
        rows.append([j, fmt(e), fmt(t), fmt(err), fmt(rel), "ok" if good else "FAIL"])
    header = ["component", "estimate", "truth", "abs_error", "rel_error", "status"]
    _write_rows(out / f"oracle_seed{seed}.csv", header, rows)
    print(f"seed {seed}")
    print("  ".join(f"{h:>12}" for h in header))
    for r in rows:
        print("  ".join(f"{str(c)[:12]:>12}" for c in r))
    return {"seed": seed, "estimate": [float(v) for v in est],
            "truth": [float(v) for v in truth], "ok": ok}, ok


RUNNERS = {"train": run_train, "evaluate": run_evaluate, "bias_study": run_bias,
           "variance_comparison": run_variance, "oracle_check": run_oracle}


def execute(cfg: ExperimentConfig, threads: int = 1) -> tuple[dict, bool]:
    """Run every seed of ``cfg`` and write the summary and manifest."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    runner = RUNNERS[cfg.kind]
    if threads > 1 and len(cfg.seeds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda s: runner(cfg, s, out), cfg.seeds))
    else:
        results = [runner(cfg, s, out) for s in cfg.seeds]
    ok = all(flag for _, flag in results)
    summary = {"kind": cfg.kind, "alpha": cfg.alpha, "ok": ok,
               "runs": [r for r, _ in results]}
    if cfg.kind in ("train", "evaluate"):
        summary["mean"] = float(np.mean([r["mean"] for r, _ in results]))
        summary["cvar"] = float(np.mean([r["cvar"] for r, _ in results]))
    _write_json(out / "summary.json", summary)
    artifacts = {p.name: _sha256(p) for p in sorted(out.iterdir())
                 if p.is_file() and p.name != "manifest.json"}
    manifest = {"version": __version__, "numpy": np.__version__, "kind": cfg.kind,
                "config": cfg.to_json(), "config_sha256": cfg.digest(),
                "seeds": list(cfg.seeds), "artifacts": artifacts}
    _write_json(out / "manifest.json", manifest)
    return summary, ok


def compare_dirs(dir_a, dir_b) -> dict:
    """Final mean and CVaR of two run directories and their differences (b - a)."""
    loaded = []
    for d in (Path(dir_a), Path(dir_b)):
        try:
            manifest = json.loads((d / "manifest.json").read_text())
            summary = json.loads((d / "summary.json").read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{d}: missing or unreadable manifest/summary ({exc})") from exc
        if manifest.get("kind") not in ("train", "evaluate") or "cvar" not in summary:
            raise ConfigError(f"{d}: only train or evaluate runs can be compared")
        loaded.append((d, manifest, summary))
    (da, ma, sa), (db, mb, sb) = loaded
    if ma["config"]["alpha"] != mb["config"]["alpha"]:
        raise ConfigError("runs use different alpha; CVaRs are not comparable")
    if ma["config"]["model"] != mb["config"]["model"]:
        raise ConfigError("runs use different models")
    return {
        "alpha": ma["config"]["alpha"],
        "a": {"dir": str(da), "mean": sa["mean"], "cvar": sa["cvar"], "config_sha256": ma["config_sha256"]},
        "b": {"dir": str(db), "mean": sb["mean"], "cvar": sb["cvar"], "config_sha256": mb["config_sha256"]},
        "difference": {"mean": sb["mean"] - sa["mean"], "cvar": sb["cvar"] - sa["cvar"]},
    }


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.output_dir is not None:
        cfg = dataclasses.replace(cfg, output_dir=args.output_dir)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cvarsgd", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute an experiment config")
    r.add_argument("config")
    r.add_argument("--output-dir", "-o", default=None, help="override the config's output_dir")
    r.add_argument("--seed", type=int, default=None, help="run this single seed instead of the config's list")
    c = sub.add_parser("compare", help="compare final mean/CVaR of two run directories")
    c.add_argument("run_dir_a")
    c.add_argument("run_dir_b")
    v = sub.add_parser("validate-config", help="check a config without running it")
    v.add_argument("config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate-config":
            cfg = load_config(args.config)
            print(json.dumps({"valid": True, "kind": cfg.kind, "config_sha256": cfg.digest()}))
            return 0
        if args.command == "compare":
            print(json.dumps(compare_dirs(args.run_dir_a, args.run_dir_b), indent=2))
            return 0
        cfg = _apply_overrides(load_config(args.config), args)
        summary, ok = execute(cfg, thread_count())
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    for run in summary["runs"]:
        if run.get("error"):
            print(f"seed {run['seed']}: stopped at iteration {run['failed_iteration']}: {run['error']}",
                  file=sys.stderr)
    print(json.dumps({k: v for k, v in summary.items() if k != "runs"}))
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
