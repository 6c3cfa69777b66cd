"""Regression learners used for nuisance and CATE fits.

Every learner exposes ``fit(X, y, weights=None, task="regression")`` and
returns a fitted model with ``predict(X)``. ``task="binary"`` clips
predictions into (0, 1).
"""
from .base import (
    ConstantLearner,
    FittedModel,
    Learner,
    LearnerError,
    MeanLearner,
    describe,
    make_folds,
)
from .hal import HAL, HalConfig, hal_basis, hal_fit, lasso_path
from .linear import OLS, Logistic, poly_features
from .superlearner import SuperLearner, sl_fit
from .tree import Tree

__all__ = [
    "ConstantLearner",
    "FittedModel",
    "HAL",
    "HalConfig",
    "Learner",
    "LearnerError",
    "Logistic",
    "MeanLearner",
    "OLS",
    "SuperLearner",
    "Tree",
    "describe",
    "hal_basis",
    "hal_fit",
    "lasso_path",
    "make_folds",
    "make_learner",
    "poly_features",
    "sl_fit",
]


def make_learner(spec, seed=None):
    """Build a learner from a name or a ``{"name": ..., **params}`` mapping.

    ``sl`` takes ``library`` (a list of specs), ``folds`` and ``meta``.
    ``seed`` overrides the CV seed of HAL and super learner specs.
    """
    if isinstance(spec, str):
        spec = {"name": spec}
    if not isinstance(spec, dict) or "name" not in spec:
        raise ValueError(f"learner spec needs a name: {spec!r}")
    params = {k: v for k, v in spec.items() if k != "name"}
    name = spec["name"].lower()
    if name == "mean":
        return MeanLearner()
    if name == "constant":
        return ConstantLearner(params["value"])
    if name == "ols":
        return OLS(**params)
    if name == "logistic":
        return Logistic(**params)
    if name == "tree":
        return Tree(**params)
    if name == "hal":
        if "lambda_grid" in params and params["lambda_grid"] is not None:
            params["lambda_grid"] = tuple(params["lambda_grid"])
        if seed is not None:
            params["seed"] = seed
        return HAL(HalConfig(**params))
    if name == "sl":
        library = [make_learner(s, seed) for s in params.pop("library")]
        if seed is not None:
            params["seed"] = seed
        return SuperLearner(library, **params)
    raise ValueError(f"unknown learner {spec['name']!r}")
