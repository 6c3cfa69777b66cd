"""Least squares and logistic regression with an optional quadratic basis."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .base import PROB_CLIP, as_matrix, check_xy, finish

RIDGE_JITTER = 1e-10


def poly_features(X, degree: int = 1) -> np.ndarray:
    """Intercept, main terms and (for degree 2) all squares and pairwise products."""
    if degree not in (1, 2):
        raise ValueError("degree must be 1 or 2")
    X = as_matrix(X)
    cols = [np.ones(X.shape[0])]
    cols.extend(X.T)
    if degree >= 2:
        for i, j in combinations_with_replacement(range(X.shape[1]), 2):
            cols.append(X[:, i] * X[:, j])
    return np.column_stack(cols)


def design_features(X, degree: int = 1, interact_first: bool = False) -> np.ndarray:
    """Polynomial basis; with ``interact_first`` the first column multiplies a basis of the rest.

    For an outcome design ``[A, W]`` this gives ``[poly(W), A * poly(W)]``,
    i.e. a separate polynomial per treatment arm.
    """
    if not interact_first:
        return poly_features(X, degree)
    X = as_matrix(X)
    base = poly_features(X[:, 1:], degree)
    return np.hstack([base, X[:, :1] * base])


def _weighted_lstsq(Z, y, w):
    w = w / w.mean()
    Zw = Z * w[:, None]
    gram = Z.T @ Zw
    gram[np.diag_indices_from(gram)] += RIDGE_JITTER * max(1.0, np.trace(gram) / len(gram))
    return np.linalg.solve(gram, Zw.T @ y)


@dataclass
class LinearModel:
    coef: np.ndarray
    degree: int
    task: str = "regression"
    interact_first: bool = False

    def predict(self, X):
        return finish(design_features(X, self.degree, self.interact_first) @ self.coef, self.task)


class OLS:
    def __init__(self, degree: int = 1, interact_first: bool = False):
        self.degree = degree
        self.interact_first = interact_first
        self.name = ("ols" if degree == 1 else f"ols_poly{degree}") + ("_by_arm" if interact_first else "")

    def fit(self, X, y, weights=None, task="regression"):
        X, y, w = check_xy(X, y, weights)
        if self.interact_first and X.shape[1] < 2:
            raise ValueError("interact_first needs the treatment column plus at least one covariate")
        coef = _weighted_lstsq(design_features(X, self.degree, self.interact_first), y, w)
        return LinearModel(coef, self.degree, task, self.interact_first)


@dataclass
class LogisticModel:
    coef: np.ndarray
    degree: int
    converged: bool
    separated: bool
    iterations: int

    @property
    def warning(self) -> bool:
        return self.separated or not self.converged

    def predict(self, X):
        eta = poly_features(X, self.degree) @ self.coef
        return np.clip(_expit(eta), PROB_CLIP, 1 - PROB_CLIP)


def _expit(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class Logistic:
    """Newton/IRLS fit of a Bernoulli GLM with logit link."""

    def __init__(self, degree: int = 1, max_iter: int = 100, tol: float = 1e-8):
        self.degree = degree
        self.max_iter = max_iter
        self.tol = tol
        self.name = "logistic" if degree == 1 else f"logistic_poly{degree}"

    def fit(self, X, y, weights=None, task="binary"):
        X, y, w = check_xy(X, y, weights)
        Z = poly_features(X, self.degree)
        w = w / w.mean()
        beta = np.zeros(Z.shape[1])
        converged = False
        it = 0
        for it in range(1, self.max_iter + 1):
            p = _expit(Z @ beta)
            grad = Z.T @ (w * (y - p)) / len(y)
            if np.linalg.norm(grad) <= self.tol:
                converged = True
                break
            hess = Z.T @ (Z * (w * p * (1 - p))[:, None]) / len(y)
            hess[np.diag_indices_from(hess)] += RIDGE_JITTER
            step = np.linalg.solve(hess, grad)
            if not np.all(np.isfinite(step)) or np.abs(beta + step).max() > 1e8:
                break
            beta = beta + step
        raw = _expit(Z @ beta)
        separated = bool(np.any(raw < PROB_CLIP) or np.any(raw > 1 - PROB_CLIP))
        if separated or not converged:
            warnings.warn(
                f"logistic fit {'hit probability clipping' if separated else 'did not converge'}"
                f" after {it} iterations",
                RuntimeWarning,
                stacklevel=2,
            )
        return LogisticModel(beta, self.degree, converged, separated, it)
