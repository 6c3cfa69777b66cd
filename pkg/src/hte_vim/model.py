"""Core data containers shared across the estimation pipeline.

Everything here is immutable after construction: arrays are copied and
flagged read-only so fits can be shared across worker processes safely.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

ESTIMANDS = ("VTE", "VIMa", "VIMb")
FAMILIES = ("SS", "EE", "TMLE")
DEFAULT_BOUNDS = (0.025, 0.975)


class DataError(ValueError):
    """Raised when a dataset cannot be used for estimation."""


def _frozen(a, dtype=float, ndim=1) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """n observations of covariates ``W`` (n x p), treatment ``A`` and outcome ``Y``."""

    W: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        if W.ndim == 1:
            W = W[:, None]
        object.__setattr__(self, "W", _frozen(W, ndim=2))
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "Y", _frozen(self.Y))
        n, p = self.W.shape
        if len(self.A) != n or len(self.Y) != n:
            raise ValueError("W, A and Y must have the same number of rows")
        names = tuple(self.names) if len(self.names) else tuple(f"W{j + 1}" for j in range(p))
        if len(names) != p:
            raise ValueError(f"{len(names)} names for {p} covariates")
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def p(self) -> int:
        return self.W.shape[1]

    def design(self, treatment=None) -> np.ndarray:
        """Columns ``[A, W]``; ``treatment`` forces A to a constant."""
        a = self.A if treatment is None else np.full(self.n, float(treatment))
        return np.column_stack([a, self.W])

    def subset_rows(self, idx) -> "Dataset":
        return Dataset(self.W[idx], self.A[idx], self.Y[idx], self.names)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown covariate {name!r}") from None


def validate(dataset: Dataset) -> list[str]:
    """Return a list of violations; an empty list means the dataset is usable."""
    problems = []
    if dataset.n < 2:
        problems.append("fewer than two observations")
    if dataset.p < 1:
        problems.append("no covariates")
    if not np.all(np.isfinite(dataset.W)):
        problems.append("non-finite covariate")
    if not np.all(np.isfinite(dataset.A)):
        problems.append("non-finite treatment")
    elif not np.all((dataset.A == 0) | (dataset.A == 1)):
        problems.append("treatment not binary")
    if not np.all(np.isfinite(dataset.Y)):
        problems.append("non-finite outcome")
    if np.all(dataset.A == 1) or np.all(dataset.A == 0):
        problems.append("single treatment arm")
    return problems


def check_estimable(dataset: Dataset) -> None:
    problems = validate(dataset)
    if problems:
        raise DataError("; ".join(problems))


@dataclass(frozen=True)
class SubsetSpec:
    """Covariate indices (0-based) whose importance is measured."""

    s: tuple

    def __post_init__(self):
        s = tuple(sorted({int(j) for j in self.s}))
        if not s:
            raise ValueError("subset must be non-empty")
        object.__setattr__(self, "s", s)

    def label(self, names: Optional[Sequence[str]] = None) -> str:
        if names is None:
            return "+".join(f"W{j + 1}" for j in self.s)
        return "+".join(names[j] for j in self.s)


def subset_complement(spec: SubsetSpec, p: int) -> tuple:
    """Indices in ``range(p)`` not in ``spec``; empty means marginal-CATE mode."""
    bad = [j for j in spec.s if j < 0 or j >= p]
    if bad:
        raise IndexError(f"subset indices {bad} out of range for p={p}")
    return tuple(j for j in range(p) if j not in spec.s)


def truncate_propensity(g1, bounds=DEFAULT_BOUNDS) -> np.ndarray:
    lo, hi = bounds
    if not 0 < lo <= hi < 1:
        raise ValueError(f"invalid truncation bounds {bounds}")
    return np.clip(np.asarray(g1, dtype=float), lo, hi)


@dataclass(frozen=True)
class NuisanceFits:
    q0: np.ndarray
    q1: np.ndarray
    g1: np.ndarray
    foldmap: Optional[np.ndarray] = None
    outcome_learner: str = ""
    propensity_learner: str = ""

    def __post_init__(self):
        for name in ("q0", "q1", "g1"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not (len(self.q0) == len(self.q1) == len(self.g1)):
            raise ValueError("nuisance vectors must share a length")
        if self.foldmap is not None:
            object.__setattr__(self, "foldmap", _frozen(self.foldmap, dtype=int))

    def qA(self, A) -> np.ndarray:
        A = np.asarray(A)
        return np.where(A == 1, self.q1, self.q0)

    def gA(self, A) -> np.ndarray:
        A = np.asarray(A)
        return np.where(A == 1, self.g1, 1.0 - self.g1)


@dataclass(frozen=True)
class CateFits:
    tau: np.ndarray
    tau_s: np.ndarray
    gamma_s: np.ndarray
    subset: SubsetSpec
    metalearner: str = "S"

    def __post_init__(self):
        for name in ("tau", "tau_s", "gamma_s"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not (len(self.tau) == len(self.tau_s) == len(self.gamma_s)):
            raise ValueError("CATE vectors must share a length")
        if not np.all(np.isfinite(self.gamma_s)):
            raise ValueError("non-finite gamma_s")


@dataclass(frozen=True)
class EstimateReport:
    estimand: str
    family: str
    psi: float
    se: float
    ci_lo: float
    ci_hi: float
    n: int
    subset: str = ""
    iterations: int = 0
    pnd1: float = float("nan")
    pnd2: float = float("nan")
    converged: bool = True
    eic: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    # TMLE stopping thresholds and terminal P_n[tau*^2 - gamma_s*]
    threshold1: float = float("nan")
    threshold2: float = float("nan")
    pn_gamma: float = float("nan")

    def __post_init__(self):
        if self.estimand not in ESTIMANDS:
            raise ValueError(f"unknown estimand {self.estimand!r}")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not (self.se >= 0 or math.isnan(self.se)):
            raise ValueError("negative standard error")

    @property
    def ci(self) -> tuple:
        return (self.ci_lo, self.ci_hi)

    def as_row(self) -> dict:
        return {
            "estimand": self.estimand,
            "family": self.family,
            "subset": self.subset,
            "psi": self.psi,
            "se": self.se,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "n": self.n,
            "iterations": self.iterations,
            "pnd1": self.pnd1,
            "pnd2": self.pnd2,
            "converged": self.converged,
            "threshold1": self.threshold1,
            "threshold2": self.threshold2,
            "pn_gamma": self.pn_gamma,
        }


def write_dataset_csv(dataset: Dataset, path, treatment_col="A", outcome_col="Y") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*dataset.names, treatment_col, outcome_col])
        for w, a, y in zip(dataset.W, dataset.A, dataset.Y):
            writer.writerow([repr(float(v)) for v in w] + [repr(float(a)), repr(float(y))])


def read_dataset_csv(path, outcome_col="Y", treatment_col="A", covariate_cols=None) -> Dataset:
    """Read the CSV interchange format. See :func:`hte_vim.analyze.ingest` for the lenient reader."""
    from .analyze import ingest

    return ingest(Path(path), outcome_col, treatment_col, covariate_cols)
