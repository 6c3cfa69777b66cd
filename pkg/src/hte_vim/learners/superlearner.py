"""Cross-validated stacking over a library of learners."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .base import LearnerError, as_matrix, check_xy, describe, finish, make_folds

META = ("discrete", "nnls")


def cv_risk(y, pred, w, task) -> float:
    if task == "binary":
        p = np.clip(pred, 1e-15, 1 - 1e-15)
        loss = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    else:
        loss = (y - pred) ** 2
    return float(np.average(loss, weights=w))


def nnls_weights(Z, y, w) -> np.ndarray:
    """Non-negative least squares of ``y`` on the columns of ``Z``, normalised to sum 1."""
    sw = np.sqrt(w / w.sum())
    coef, _ = nnls(Z * sw[:, None], y * sw)
    total = coef.sum()
    if total <= 0:
        return None
    return coef / total


@dataclass
class SuperLearnerModel:
    models: list
    weights: np.ndarray
    names: list
    cv_risk: np.ndarray
    task: str = "regression"

    def predict(self, X):
        X = as_matrix(X)
        pred = np.zeros(X.shape[0])
        for model, weight in zip(self.models, self.weights):
            if weight > 0:
                pred += weight * model.predict(X)
        return finish(pred, self.task)


class SuperLearner:
    def __init__(self, library, folds: int = 10, meta: str = "nnls", seed: int = 0):
        if not library:
            raise ValueError("super learner library is empty")
        if meta not in META:
            raise ValueError(f"meta must be one of {META}")
        self.library = list(library)
        self.folds = folds
        self.meta = meta
        self.seed = seed
        self.name = f"sl[{','.join(describe(l) for l in self.library)}]"

    def fit(self, X, y, weights=None, task="regression"):
        return sl_fit(X, y, weights, self, task)


def sl_fit(X, y, weights, config: SuperLearner, task="regression") -> SuperLearnerModel:
    X, y, w = check_xy(X, y, weights)
    n = len(y)
    folds = make_folds(n, min(config.folds, n), config.seed)
    Z = np.full((n, len(config.library)), np.nan)
    ok = []
    for j, learner in enumerate(config.library):
        try:
            for f in range(folds.max() + 1):
                tr, va = folds != f, folds == f
                Z[va, j] = learner.fit(X[tr], y[tr], w[tr], task).predict(X[va])
            if not np.all(np.isfinite(Z[:, j])):
                raise LearnerError("non-finite cross-validated predictions")
            ok.append(j)
        except Exception as exc:  # noqa: BLE001 - any library failure drops that learner
            warnings.warn(f"dropping learner {describe(learner)}: {exc}", RuntimeWarning, stacklevel=2)
    if not ok:
        raise LearnerError("every learner in the super learner library failed")

    risks = np.full(len(config.library), np.inf)
    for j in ok:
        risks[j] = cv_risk(y, Z[:, j], w, task)
    weights = np.zeros(len(config.library))
    if config.meta == "nnls" and len(ok) > 1:
        fitted = nnls_weights(Z[:, ok], y, w)
        if fitted is None:
            weights[int(np.argmin(risks))] = 1.0
        else:
            weights[ok] = fitted
    else:
        weights[int(np.argmin(risks))] = 1.0

    models = [None] * len(config.library)
    for j in np.flatnonzero(weights > 0):
        models[j] = config.library[j].fit(X, y, w, task)
    return SuperLearnerModel(models, weights, [describe(l) for l in config.library], risks, task)
