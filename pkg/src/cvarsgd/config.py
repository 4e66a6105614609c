"""Declarative experiment configs (JSON with a versioned schema).

A config is a JSON object::

    {"schema_version": 1, "kind": "train", "model": {"name": "chain", ...},
     "estimator": {"name": "crude"}, "alpha": 0.1, "seeds": [0, 1], ...}

``load_config`` validates everything up front so that a run never fails
half-way on a typo. ``build_model`` and ``build_proposal`` turn the model
block into live objects.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .environments.chain import ChainMdpConfig, build_chain
from .environments.tetris import FEATURE_NAMES, TetrisConfig, TetrisModel, build_tetris
from .importance import GaussianShiftProposal
from .mdp import MdpProposal
from .models import categorical_softmax_family, gaussian_mean_family
from .optimizer import ProjectionBox, Schedules

SCHEMA_VERSION = 1
KINDS = ("bias_study", "variance_comparison", "train", "evaluate", "oracle_check")
MODELS = ("gaussian", "categorical", "chain", "tetris")
ESTIMATORS = ("crude", "is", "plain")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EstimatorSpec:
    name: str = "crude"
    refit_period: int = 50
    saa_samples: int = 10_000
    saa_steps: int = 100
    saa_rate: float = 1.0


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str = "default"
    eps0: float = 1.0
    n_min: int | None = None
    step: float | None = None
    batch: int | None = None
    decay: bool = False

    def build(self, alpha: float) -> Schedules:
        if self.kind == "default":
            return Schedules.default(alpha, self.eps0, self.n_min)
        return Schedules.fixed(self.step, self.batch, self.decay)


@dataclass(frozen=True)
class WarmStart:
    """Plain policy-gradient iterations from ``theta0`` before the main run."""

    iterations: int = 0
    step: float = 0.01
    batch: int = 1000
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    model: dict
    alpha: float
    seeds: tuple
    output_dir: str = "runs/out"
    estimator: EstimatorSpec = field(default_factory=EstimatorSpec)
    schedules: ScheduleSpec = field(default_factory=ScheduleSpec)
    theta0: tuple | None = None
    theta: tuple | None = None
    box: tuple = (-10.0, 10.0)
    iterations: int = 0
    warm_start: WarmStart = field(default_factory=WarmStart)
    n_eval: int = 10_000
    eval_seed: int = 12345
    bins: int = 50
    batch_sizes: tuple = (100, 1000, 10_000, 100_000)
    replications: int = 200
    n: int = 200
    h: float = 1e-4
    rel_tol: float = 0.02
    abs_tol: float = 1e-3
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def digest(self) -> str:
        return config_hash(self.to_json())


def config_hash(data: dict) -> str:
    text = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _tuple(v):
    return None if v is None else tuple(v) if isinstance(v, (list, tuple)) else (v,)


def _sub(cls, data, where):
    if data is None:
        return cls()
    _require(isinstance(data, dict), f"{where} must be an object")
    known = set(cls.__dataclass_fields__)
    extra = set(data) - known
    _require(not extra, f"unknown keys in {where}: {sorted(extra)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(data: dict) -> ExperimentConfig:
    _require(isinstance(data, dict), "config must be a JSON object")
    _require(data.get("schema_version") == SCHEMA_VERSION,
             f"schema_version must be {SCHEMA_VERSION}")
    known = set(ExperimentConfig.__dataclass_fields__)
    extra = set(data) - known
    _require(not extra, f"unknown keys: {sorted(extra)}")
    for key in ("kind", "model", "alpha", "seeds"):
        _require(key in data, f"missing required key {key!r}")
    kw = dict(data)
    kw["estimator"] = _sub(EstimatorSpec, data.get("estimator"), "estimator")
    kw["schedules"] = _sub(ScheduleSpec, data.get("schedules"), "schedules")
    kw["warm_start"] = _sub(WarmStart, data.get("warm_start"), "warm_start")
    for key in ("seeds", "theta0", "theta", "box", "batch_sizes"):
        if key in kw:
            kw[key] = _tuple(kw[key])
    cfg = ExperimentConfig(**kw)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_config(data)


def validate(cfg: ExperimentConfig) -> None:
    _require(cfg.kind in KINDS, f"kind must be one of {KINDS}")
    _require(isinstance(cfg.alpha, (int, float)) and 0 < cfg.alpha < 1, "alpha must lie in (0, 1)")
    _require(cfg.seeds is not None and len(cfg.seeds) > 0, "seeds must be non-empty")
    _require(all(isinstance(s, int) and s >= 0 for s in cfg.seeds),
             "seeds must be non-negative integers")
    _require(len(set(cfg.seeds)) == len(cfg.seeds), "seeds must be distinct")
    est = cfg.estimator
    _require(est.name in ESTIMATORS, f"estimator must be one of {ESTIMATORS}")
    _require(est.refit_period >= 1, "refit_period must be >= 1")
    _require(est.saa_samples >= 1 and est.saa_steps >= 0 and est.saa_rate > 0,
             "invalid SAA settings")
    sch = cfg.schedules
    _require(sch.kind in ("default", "fixed"), "schedules.kind must be 'default' or 'fixed'")
    if sch.kind == "fixed":
        _require(sch.step is not None and sch.step > 0, "fixed schedule needs step > 0")
        _require(sch.batch is not None and sch.batch >= 1, "fixed schedule needs batch >= 1")
    else:
        _require(sch.eps0 > 0, "eps0 must be positive")
    _require(cfg.iterations >= 0, "iterations must be >= 0")
    ws = cfg.warm_start
    _require(ws.iterations >= 0 and ws.step > 0 and ws.batch >= 1, "invalid warm_start")
    _require(cfg.n_eval >= math.ceil(1 / cfg.alpha), "n_eval must be >= ceil(1/alpha)")
    _require(cfg.bins >= 1, "bins must be >= 1")
    _require(cfg.replications >= 1 and cfg.n >= 1, "replications and n must be >= 1")
    _require(len(cfg.batch_sizes) >= 1 and all(b >= 1 for b in cfg.batch_sizes),
             "batch_sizes must be positive")
    _require(cfg.h > 0 and cfg.rel_tol > 0 and cfg.abs_tol > 0, "h and tolerances must be positive")
    try:
        model = build_model(cfg.model)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"model: {exc}") from exc
    k = model.k
    for key in ("theta0", "theta"):
        v = getattr(cfg, key)
        if v is not None:
            _require(len(v) == k and all(np.isfinite(v)), f"{key} must be {k} finite numbers")
    _require(len(cfg.box) in (2, 2 * k), "box is [low, high] or [lows..., highs...]")
    try:
        build_box(cfg, k)
    except ValueError as exc:
        raise ConfigError(f"box: {exc}") from exc
    if cfg.kind == "variance_comparison" or est.name == "is":
        _require(cfg.model["name"] in ("gaussian", "chain"),
                 "importance sampling needs a gaussian or chain model")
    if cfg.kind == "variance_comparison":
        _require(cfg.replications >= 2, "variance_comparison needs replications >= 2")
    if cfg.kind == "bias_study":
        _require(cfg.model["name"] == "gaussian", "bias_study needs the gaussian model (analytic truth)")
    if cfg.kind == "oracle_check":
        _require(cfg.model["name"] in ("gaussian", "chain"), "oracle_check needs a gaussian or chain model")
        if cfg.model["name"] == "chain":
            _require(cfg.model.get("eta", 0) > 0, "oracle_check on a chain needs eta > 0")


def build_box(cfg: ExperimentConfig, k: int) -> ProjectionBox:
    b = [float(v) for v in cfg.box]
    if len(b) == 2:
        return ProjectionBox.uniform(k, b[0], b[1])
    return ProjectionBox(np.array(b[:k]), np.array(b[k:]))


def _model_kwargs(spec: dict, cls) -> dict:
    kw = {key: val for key, val in spec.items() if key != "name"}
    extra = set(kw) - set(cls.__dataclass_fields__)
    if extra:
        raise ConfigError(f"unknown model keys: {sorted(extra)}")
    return {key: tuple(val) if isinstance(val, list) else val for key, val in kw.items()}


def build_model(spec: dict):
    _require(isinstance(spec, dict) and spec.get("name") in MODELS,
             f"model.name must be one of {MODELS}")
    name = spec["name"]
    if name == "gaussian":
        _require(set(spec) == {"name"}, "gaussian model takes no options")
        return gaussian_mean_family()
    if name == "categorical":
        extra = set(spec) - {"name", "features", "rewards", "eta"}
        _require(not extra, f"unknown model keys: {sorted(extra)}")
        return categorical_softmax_family(np.array(spec["features"], dtype=np.float64),
                                          np.array(spec["rewards"], dtype=np.float64),
                                          float(spec.get("eta", 0.0)))
    if name == "chain":
        return build_chain(ChainMdpConfig(**_model_kwargs(spec, ChainMdpConfig))).model()
    kw = _model_kwargs(spec, TetrisConfig)
    unknown = set(kw.get("features", ())) - set(FEATURE_NAMES)
    _require(not unknown, f"unknown tetris features: {sorted(unknown)}")
    return TetrisModel(build_tetris(TetrisConfig(**kw)))


def build_proposal(spec: dict, model):
    if spec["name"] == "gaussian":
        return GaussianShiftProposal()
    if spec["name"] == "chain":
        return MdpProposal(model.mdp, model.features)
    raise ConfigError(f"no proposal family for model {spec['name']!r}")


def feature_names(spec: dict, k: int) -> list[str]:
    if spec["name"] == "tetris":
        return list(spec.get("features", FEATURE_NAMES))
    return [f"theta_{j}" for j in range(k)]
