"""Outcome regression and propensity score fits, optionally cross-fitted."""
from __future__ import annotations

from typing import Optional, Union

import numpy as np

from .learners import describe, make_folds
from .model import DEFAULT_BOUNDS, Dataset, NuisanceFits, check_estimable, truncate_propensity


def _fold_labels(dataset: Dataset, crossfit, seed, stratify=True) -> Optional[np.ndarray]:
    if crossfit is None or crossfit is False:
        return None
    if isinstance(crossfit, np.ndarray):
        return crossfit.astype(int)
    return make_folds(dataset.n, int(crossfit), seed, strata=dataset.A if stratify else None)


def fit_outcome(dataset: Dataset, learner, crossfit=None, seed: int = 0):
    """Fit E[Y | A, W] once with A as a feature; return predictions at A=0 and A=1.

    ``crossfit`` is a fold count or a fold-label array; each row is then
    predicted by the model trained without its fold.
    """
    X = dataset.design()
    X0, X1 = dataset.design(0), dataset.design(1)
    folds = _fold_labels(dataset, crossfit, seed)
    if folds is None:
        model = learner.fit(X, dataset.Y)
        return model.predict(X0), model.predict(X1)
    q0 = np.empty(dataset.n)
    q1 = np.empty(dataset.n)
    for f in np.unique(folds):
        tr, va = folds != f, folds == f
        model = learner.fit(X[tr], dataset.Y[tr])
        q0[va] = model.predict(X0[va])
        q1[va] = model.predict(X1[va])
    return q0, q1


def fit_propensity(
    dataset: Dataset,
    learner: Union[object, float, np.ndarray],
    crossfit=None,
    bounds=DEFAULT_BOUNDS,
    seed: int = 0,
) -> np.ndarray:
    """P(A=1 | W) clamped to ``bounds``.

    A float or array in place of a learner is a known design (e.g. a
    randomised trial) and is only clamped.
    """
    if isinstance(learner, (int, float, np.ndarray, list, tuple)):
        g1 = np.broadcast_to(np.asarray(learner, dtype=float), (dataset.n,))
        return truncate_propensity(g1, bounds)
    folds = _fold_labels(dataset, crossfit, seed)
    if folds is None:
        g1 = learner.fit(dataset.W, dataset.A, task="binary").predict(dataset.W)
    else:
        g1 = np.empty(dataset.n)
        for f in np.unique(folds):
            tr, va = folds != f, folds == f
            g1[va] = learner.fit(dataset.W[tr], dataset.A[tr], task="binary").predict(dataset.W[va])
    return truncate_propensity(g1, bounds)


def fit_nuisance(
    dataset: Dataset,
    outcome_learner,
    propensity_learner,
    crossfit=None,
    bounds=DEFAULT_BOUNDS,
    seed: int = 0,
) -> NuisanceFits:
    check_estimable(dataset)
    folds = _fold_labels(dataset, crossfit, seed)
    q0, q1 = fit_outcome(dataset, outcome_learner, folds, seed)
    g1 = fit_propensity(dataset, propensity_learner, folds, bounds, seed)
    prop_name = describe(propensity_learner) if hasattr(propensity_learner, "fit") else "known"
    return NuisanceFits(q0, q1, g1, folds, describe(outcome_learner), prop_name)
