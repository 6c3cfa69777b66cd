from __future__ import annotations

from typing import Optional, Protocol

import numpy as np

PROB_CLIP = 1e-6
TASKS = ("regression", "binary")


class LearnerError(RuntimeError):
    pass


class FittedModel(Protocol):
    def predict(self, X) -> np.ndarray: ...


class Learner(Protocol):
    name: str

    def fit(self, X, y, weights=None, task="regression") -> FittedModel: ...


def check_xy(X, y, weights=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if weights is None:
        w = np.ones(len(y))
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != y.shape or np.any(w < 0) or not np.any(w > 0):
            raise ValueError("weights must be non-negative, non-zero and match y")
    return X, y, w


def as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def finish(pred, task) -> np.ndarray:
    if task == "binary":
        return np.clip(pred, PROB_CLIP, 1 - PROB_CLIP)
    return pred


def make_folds(n: int, k: int, seed=0, strata=None) -> np.ndarray:
    """Fold label per row; deterministic in ``seed``. ``strata`` balances groups across folds."""
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= folds <= n, got folds={k}, n={n}")
    rng = np.random.Generator(np.random.Philox(seed))
    folds = np.empty(n, dtype=int)
    if strata is None:
        strata = np.zeros(n)
    offset = 0
    for value in np.unique(strata):
        idx = np.flatnonzero(strata == value)
        idx = idx[rng.permutation(len(idx))]
        folds[idx] = (np.arange(len(idx)) + offset) % k
        offset += len(idx)
    return folds


class MeanLearner:
    name = "mean"

    def fit(self, X, y, weights=None, task="regression"):
        X, y, w = check_xy(X, y, weights)
        return ConstantModel(float(np.average(y, weights=w)), task)


class ConstantModel:
    def __init__(self, value: float, task="regression"):
        self.value = value
        self.task = task

    def predict(self, X):
        return finish(np.full(as_matrix(X).shape[0], self.value), self.task)


class ConstantLearner:
    """Ignores the data and predicts a fixed value (oracle or known-design stubs)."""

    def __init__(self, value: float):
        self.value = float(value)
        self.name = f"constant({self.value:g})"

    def fit(self, X, y=None, weights=None, task="regression"):
        return ConstantModel(self.value, task)


def describe(learner: Optional[Learner]) -> str:
    return "none" if learner is None else getattr(learner, "name", type(learner).__name__)
