"""CART-style regression tree with weighted variance-reduction splits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import as_matrix, check_xy, finish


@dataclass
class TreeModel:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    task: str = "regression"

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, X):
        X = as_matrix(X)
        node = np.zeros(X.shape[0], dtype=int)
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                break
            rows = np.flatnonzero(inner)
            f = feat[rows]
            go_left = X[rows, f] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])
        return finish(self.value[node], self.task)


def _best_split(x, y, w, min_leaf):
    order = np.argsort(x, kind="stable")
    xs, ys, ws = x[order], y[order], w[order]
    cw = np.cumsum(ws)
    cwy = np.cumsum(ws * ys)
    tw, twy = cw[-1], cwy[-1]
    n = len(xs)
    # candidate split after position i (left = 0..i)
    i = np.arange(min_leaf - 1, n - min_leaf)
    if len(i) == 0:
        return None
    i = i[xs[i] < xs[i + 1]]
    if len(i) == 0:
        return None
    lw, lwy = cw[i], cwy[i]
    rw, rwy = tw - lw, twy - lwy
    ok = (lw > 0) & (rw > 0)
    if not ok.any():
        return None
    i, lw, lwy, rw, rwy = i[ok], lw[ok], lwy[ok], rw[ok], rwy[ok]
    # weighted SSE reduction = sum_k (sum w y)^2 / sum w  -  (total)^2 / total
    gain = lwy**2 / lw + rwy**2 / rw - twy**2 / tw
    k = int(np.argmax(gain))
    return gain[k], 0.5 * (xs[i[k]] + xs[i[k] + 1])


class Tree:
    """Greedy binary regression tree. ``max_depth=0`` predicts the weighted mean."""

    def __init__(self, max_depth: int = 4, min_leaf: int = 10, min_gain: float = 1e-12):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.min_gain = min_gain
        self.name = f"tree(d={max_depth},leaf={min_leaf})"

    def fit(self, X, y, weights=None, task="regression"):
        X, y, w = check_xy(X, y, weights)
        feature, threshold, left, right, value = [], [], [], [], []
        scale = max(np.average((y - np.average(y, weights=w)) ** 2, weights=w), 1e-300)

        def grow(rows, depth):
            node = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(np.average(y[rows], weights=w[rows])))
            if depth >= self.max_depth or len(rows) < 2 * self.min_leaf:
                return node
            best = None
            for j in range(X.shape[1]):
                found = _best_split(X[rows, j], y[rows], w[rows], self.min_leaf)
                if found is not None and (best is None or found[0] > best[0]):
                    best = (found[0], j, found[1])
            if best is None or best[0] <= self.min_gain * scale * w.sum():
                return node
            _, j, thr = best
            mask = X[rows, j] <= thr
            feature[node] = j
            threshold[node] = thr
            left[node] = grow(rows[mask], depth + 1)
            right[node] = grow(rows[~mask], depth + 1)
            return node

        grow(np.arange(len(y)), 0)
        return TreeModel(
            np.array(feature), np.array(threshold), np.array(left), np.array(right),
            np.array(value), task,
        )
