"""Zeroth-order highly adaptive lasso.

The design has one indicator column ``1{knot <= x_s}`` (componentwise) per
covariate subset ``s`` (up to ``max_degree`` variables) and knot taken from
the observed rows. The lasso over that design is solved by cyclic coordinate
descent in covariance mode, with the penalty chosen by K-fold CV.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numba
import numpy as np

from .base import as_matrix, check_xy, finish, make_folds


@dataclass(frozen=True)
class HalConfig:
    max_degree: int = 2
    max_knots: Optional[int] = 200
    n_lambda: int = 50
    lambda_min_ratio: float = 1e-3
    lambda_grid: Optional[tuple] = None
    cv_folds: int = 5
    tol: float = 1e-7
    max_sweeps: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.max_degree < 1:
            raise ValueError("max_degree must be >= 1")
        if self.lambda_grid is not None:
            grid = tuple(sorted((float(v) for v in self.lambda_grid), reverse=True))
            if not grid or grid[-1] <= 0:
                raise ValueError("lambda_grid must be strictly positive")
            object.__setattr__(self, "lambda_grid", grid)


def _thin_knots(Xs: np.ndarray, max_knots: int) -> np.ndarray:
    """Snap each coordinate down onto a grid of marginal quantiles, then subsample."""
    k = Xs.shape[1]
    distinct = [len(np.unique(Xs[:, j])) for j in range(k)]
    # low-cardinality dimensions keep every value; the rest share the budget
    n_levels = [0] * k
    budget = float(max_knots)
    order = sorted(range(k), key=lambda j: distinct[j])
    for pos, j in enumerate(order):
        share = max(2, math.ceil(budget ** (1.0 / (k - pos))))
        n_levels[j] = min(distinct[j], share)
        budget = max(budget / n_levels[j], 1.0)
    snapped = np.empty_like(Xs)
    for j in range(k):
        q = np.linspace(0.0, 1.0, n_levels[j])
        levels = np.unique(np.quantile(Xs[:, j], q, method="inverted_cdf"))
        pos = np.searchsorted(levels, Xs[:, j], side="right") - 1
        snapped[:, j] = levels[np.maximum(pos, 0)]
    knots = np.unique(snapped, axis=0)
    if len(knots) > max_knots:
        keep = np.unique(np.round(np.linspace(0, len(knots) - 1, max_knots)).astype(int))
        knots = knots[keep]
    return knots


@dataclass
class HalBasis:
    subsets: list
    knots: list  # one (k_s x |s|) array per subset
    columns: list = field(default_factory=list)  # (subset index, knot row) per design column

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    def evaluate(self, X, columns=None) -> np.ndarray:
        X = as_matrix(X)
        cols = self.columns if columns is None else columns
        out = np.empty((X.shape[0], len(cols)), order="F")
        by_subset: dict = {}
        for pos, (si, ki) in enumerate(cols):
            by_subset.setdefault(si, []).append((pos, ki))
        for si, entries in by_subset.items():
            s = list(self.subsets[si])
            pos = [e[0] for e in entries]
            knots = self.knots[si][[e[1] for e in entries]]
            out[:, pos] = np.all(X[:, None, s] >= knots[None, :, :], axis=2)
        return out


def hal_basis(X, config: HalConfig = HalConfig(), dedupe: bool = True):
    """Build the indicator basis on ``X``; returns ``(design, basis)``.

    With ``dedupe=False`` every (subset, row) pair yields a column, so the
    count is ``n * (number of subsets)``.
    """
    X = as_matrix(X)
    n, p = X.shape
    degree = min(config.max_degree, p)
    subsets = [s for k in range(1, degree + 1) for s in combinations(range(p), k)]
    knots = []
    for s in subsets:
        Xs = X[:, list(s)]
        if not dedupe:
            knots.append(Xs.copy())
        elif config.max_knots is not None and n > config.max_knots:
            knots.append(_thin_knots(Xs, config.max_knots))
        else:
            knots.append(np.unique(Xs, axis=0))
    basis = HalBasis(subsets, knots)
    basis.columns = [(si, ki) for si, kn in enumerate(knots) for ki in range(len(kn))]
    design = basis.evaluate(X)
    if dedupe and design.shape[1]:
        packed = np.packbits(design.astype(bool), axis=0)
        seen, keep = set(), []
        for j in range(design.shape[1]):
            key = packed[:, j].tobytes()
            if key not in seen:
                seen.add(key)
                keep.append(j)
        basis.columns = [basis.columns[j] for j in keep]
        design = np.asfortranarray(design[:, keep])
    return design, basis


@numba.njit(cache=True)
def _cd_path(gram, xty, lambdas, tol, max_sweeps):
    """Lasso path in covariance form.

    Minimises ``0.5 b'Gb - b'xty + lam |b|_1`` for each ``lam``, i.e. the
    weighted least-squares lasso on centred data with ``G = Xc' W Xc`` and
    ``xty = Xc' W yc``. A sweep has converged when every weighted squared
    coefficient change ``G_jj * delta_j**2`` is below ``tol`` (already scaled
    by the null deviance). Returns the coefficient path and the number of
    lambdas that hit ``max_sweeps``.
    """
    d = xty.shape[0]
    n_lam = lambdas.shape[0]
    betas = np.zeros((n_lam, d))
    beta = np.zeros(d)
    active = np.empty(d, dtype=np.int64)
    in_active = np.zeros(d, dtype=np.bool_)
    n_active = 0
    g = np.empty(d)
    unconverged = 0
    for lam_i in range(n_lam):
        lam = lambdas[lam_i]
        swept = False
        while True:
            # exact gradient of the smooth part, refreshed before every KKT check
            for m in range(d):
                g[m] = xty[m]
            for k in range(n_active):
                j = active[k]
                b = beta[j]
                if b != 0.0:
                    for m in range(d):
                        g[m] -= gram[j, m] * b
            added = 0
            for j in range(d):
                if not in_active[j] and gram[j, j] > 1e-14 and abs(g[j]) > lam:
                    in_active[j] = True
                    active[n_active] = j
                    n_active += 1
                    added += 1
            if added == 0 and swept:
                break
            converged = False
            for _ in range(max_sweeps):
                max_change = 0.0
                for k in range(n_active):
                    j = active[k]
                    cj = gram[j, j]
                    bj = beta[j]
                    z = g[j] + cj * bj
                    if z > lam:
                        nb = (z - lam) / cj
                    elif z < -lam:
                        nb = (z + lam) / cj
                    else:
                        nb = 0.0
                    delta = nb - bj
                    if delta != 0.0:
                        beta[j] = nb
                        for m in range(d):
                            g[m] -= gram[j, m] * delta
                        change = cj * delta * delta
                        if change > max_change:
                            max_change = change
                if max_change < tol:
                    converged = True
                    break
            if not converged:
                unconverged += 1
            swept = True
        betas[lam_i, :] = beta
    return betas, unconverged


def _weighted_center(D, y, w):
    xbar = w @ D
    ybar = float(w @ y)
    Dc = D - xbar
    return Dc, y - ybar, xbar, ybar


def lasso_path(D, y, w, lambdas, tol=1e-7, max_sweeps=100_000):
    """Weighted lasso path with an unpenalised intercept.

    Returns ``(intercepts, betas)`` with one entry per lambda.
    """
    w = np.asarray(w, dtype=float)
    w = w / w.sum()
    Dc, yc, xbar, ybar = _weighted_center(np.asarray(D, dtype=float), np.asarray(y, dtype=float), w)
    scale = float(w @ yc**2) or 1.0
    Dw = Dc * w[:, None]
    gram = np.ascontiguousarray(Dc.T @ Dw)
    xty = Dw.T @ yc
    betas, _ = _cd_path(gram, xty, np.asarray(lambdas, dtype=float), tol * scale, max_sweeps)
    intercepts = ybar - betas @ xbar
    return intercepts, betas


def lambda_max(D, y, w) -> float:
    w = np.asarray(w, dtype=float) / np.sum(w)
    Dc, yc, _, _ = _weighted_center(D, y, w)
    return float(np.max(np.abs(Dc.T @ (w * yc)))) if D.shape[1] else 0.0


@dataclass
class HalModel:
    basis: HalBasis
    columns: list
    coef: np.ndarray
    intercept: float
    lambda_: float
    cv_risk: Optional[np.ndarray] = None
    lambdas: Optional[np.ndarray] = None
    task: str = "regression"

    def predict(self, X):
        X = as_matrix(X)
        pred = np.full(X.shape[0], self.intercept)
        if self.columns:
            pred = pred + self.basis.evaluate(X, self.columns) @ self.coef
        return finish(pred, self.task)


class HAL:
    def __init__(self, config: HalConfig = HalConfig(), **overrides):
        self.config = HalConfig(**{**config.__dict__, **overrides}) if overrides else config
        self.name = f"hal(d={self.config.max_degree},k={self.config.max_knots})"

    def fit(self, X, y, weights=None, task="regression"):
        return hal_fit(X, y, weights, self.config, task)


def hal_fit(X, y, weights=None, config: HalConfig = HalConfig(), task="regression") -> HalModel:
    X, y, w = check_xy(X, y, weights)
    w = w / w.sum()
    D, basis = hal_basis(X, config)
    ybar = float(w @ y)
    if float(w @ (y - ybar) ** 2) <= 1e-24 or D.shape[1] == 0:
        return HalModel(basis, [], np.zeros(0), ybar, math.inf, task=task)
    if config.lambda_grid is not None:
        lambdas = np.array(config.lambda_grid)
    else:
        lmax = lambda_max(D, y, w)
        if lmax <= 0:
            return HalModel(basis, [], np.zeros(0), ybar, math.inf, task=task)
        lambdas = lmax * np.logspace(0, math.log10(config.lambda_min_ratio), config.n_lambda)

    risk = None
    best = 0
    n = len(y)
    k = min(config.cv_folds, n)
    if len(lambdas) > 1 and k >= 2:
        folds = make_folds(n, k, config.seed)
        sse = np.zeros(len(lambdas))
        for f in range(k):
            tr, va = folds != f, folds == f
            b0, B = lasso_path(D[tr], y[tr], w[tr], lambdas, config.tol, config.max_sweeps)
            pred = b0[:, None] + B @ D[va].T
            sse += ((pred - y[va]) ** 2) @ w[va]
        risk = sse / w.sum()
        best = int(np.argmin(risk))

    b0, B = lasso_path(D, y, w, lambdas[: best + 1], config.tol, config.max_sweeps)
    beta = B[-1]
    nz = np.flatnonzero(beta)
    return HalModel(
        basis,
        [basis.columns[j] for j in nz],
        beta[nz].copy(),
        float(b0[-1]),
        float(lambdas[best]),
        risk,
        lambdas,
        task,
    )
