"""Run configuration: default learner libraries and TOML config files.

A config file may contain any of these tables; every key is optional and
command-line flags take precedence::

    rng = "philox"
    seed = 1

    [simulate]
    n_grid = [200, 1000, 5000]
    reps = 200
    metalearner = "S"
    bounds = [0.025, 0.975]

    [tmle]
    eps1 = 1e-4
    eps2 = 1e-4
    max_iter = 50000

    [hal]                 # applied to every HAL entry of the libraries
    max_knots = 50

    [learners.outcome]    # also: propensity, projection, cate
    name = "sl"
    folds = 5
    library = [{name = "ols", degree = 2}, {name = "tree"}]
"""
from __future__ import annotations

import copy
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .learners import make_learner
from .pipeline import PipelineConfig
from .sim import RNG_NAME, SimConfig, default_learners
from .tmle import TmleConfig

LEARNER_ROLES = ("outcome", "propensity", "projection", "cate")
SIM_KEYS = {"n_grid", "reps", "estimands", "families", "metalearner", "subset", "seed", "bounds", "null"}
TMLE_KEYS = {"eps1", "eps2", "max_iter"}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def analysis_learners(max_knots: int = 10, folds: int = 5) -> dict:
    """Lighter defaults for many-covariate trial data."""
    tree = {"name": "tree", "max_depth": 4, "min_leaf": 20}
    hal = {"name": "hal", "max_degree": 2, "max_knots": max_knots}
    outcome = {
        "name": "sl",
        "folds": folds,
        "meta": "nnls",
        "library": [{"name": "ols", "degree": 2, "interact_first": True}, tree, hal],
    }
    regression = {"name": "sl", "folds": folds, "meta": "nnls", "library": [{"name": "ols", "degree": 2}, tree, hal]}
    propensity = {
        "name": "sl",
        "folds": folds,
        "meta": "nnls",
        "library": [{"name": "mean"}, {"name": "logistic", "degree": 1}],
    }
    return {"outcome": outcome, "propensity": propensity, "projection": regression, "cate": regression}


def load_config(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    rng = cfg.get("rng", RNG_NAME)
    if rng != RNG_NAME:
        raise ConfigError(f"unsupported rng {rng!r}; only {RNG_NAME!r} is available")
    unknown_roles = set(cfg.get("learners", {})) - set(LEARNER_ROLES)
    if unknown_roles:
        raise ConfigError(f"unknown learner role(s): {', '.join(sorted(unknown_roles))}")
    return cfg


def _apply_hal(spec, overrides: dict):
    if isinstance(spec, dict):
        out = {k: _apply_hal(v, overrides) for k, v in spec.items()}
        if out.get("name") == "hal":
            out.update(overrides)
        return out
    if isinstance(spec, list):
        return [_apply_hal(v, overrides) for v in spec]
    return spec


def resolve_learners(cfg: dict, defaults: dict) -> dict:
    learners = copy.deepcopy(defaults)
    learners.update(copy.deepcopy(cfg.get("learners", {})))
    if cfg.get("hal"):
        learners = _apply_hal(learners, dict(cfg["hal"]))
    for role in LEARNER_ROLES:
        try:
            make_learner(learners[role])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"learner {role!r}: {exc}") from None
    return learners


def sim_config(cfg: dict | None = None, **overrides) -> SimConfig:
    """Build a :class:`SimConfig` from a loaded file plus non-None overrides."""
    cfg = cfg or {}
    unknown = set(cfg.get("simulate", {})) - SIM_KEYS
    if unknown:
        raise ConfigError(f"unknown [simulate] key(s): {', '.join(sorted(unknown))}")
    kwargs = dict(cfg.get("simulate", {}))
    if "seed" in cfg:
        kwargs.setdefault("seed", cfg["seed"])
    kwargs.update(_tmle_kwargs(cfg))
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    kwargs["learners"] = resolve_learners(cfg, default_learners())
    for key in ("n_grid", "estimands", "families", "subset", "bounds"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    try:
        return SimConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _tmle_kwargs(cfg: dict) -> dict:
    tm = dict(cfg.get("tmle", {}))
    unknown = set(tm) - TMLE_KEYS
    if unknown:
        raise ConfigError(f"unknown [tmle] key(s): {', '.join(sorted(unknown))}")
    return tm


def pipeline_config(cfg: dict | None = None, seed: int = 0, metalearner: str = "S", defaults=None) -> PipelineConfig:
    cfg = cfg or {}
    learners = resolve_learners(cfg, defaults or analysis_learners())
    make = lambda role: make_learner(learners[role], seed=seed)  # noqa: E731
    tm = _tmle_kwargs(cfg)
    bounds = tuple(cfg.get("simulate", {}).get("bounds", (0.025, 0.975)))
    return PipelineConfig(
        outcome_learner=make("outcome"),
        propensity_learner=make("propensity"),
        projection_learner=make("projection"),
        cate_learner=make("cate") if metalearner == "DR" else None,
        metalearner=metalearner,
        bounds=bounds,
        tmle=TmleConfig(**tm),
        seed=seed,
    )
