"""Simulation study: data generation, true parameter values and replicate metrics."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from .inference import Z95
from .learners import make_learner
from .model import ESTIMANDS, FAMILIES, Dataset, SubsetSpec
from .pipeline import PipelineConfig, estimate
from .tmle import TmleConfig

log = logging.getLogger(__name__)

FULL_N_GRID = (200, 500, 1000, 3000, 5000, 10000, 20000)
FULL_REPS = 500
DESK_N_GRID = (200, 1000, 5000)
DESK_REPS = 200
RNG_NAME = "philox"
STUB_FAMILIES = ("oracle", "normal")
STUB_SD = 0.05

METRIC_COLUMNS = (
    "n", "estimand", "family", "metalearner", "mse", "abs_bias", "coverage",
    "oracle_coverage", "ci_width", "n_failed", "truth", "n_ok",
)
REPLICATE_COLUMNS = (
    "n", "rep", "estimand", "family", "metalearner", "subset", "psi", "se", "ci_lo",
    "ci_hi", "truth", "iterations", "converged", "pnd1", "pnd2", "threshold1", "threshold2",
    "pn_gamma", "failed", "error",
)


def default_learners(max_knots: int = 200, folds: int = 5) -> dict:
    """Super learners over {OLS + polynomial basis, regression tree, HAL}.

    The outcome library's OLS fits a quadratic per treatment arm, so the
    S-learner CATE can be non-linear; projections regress on covariates only.
    """
    tree = {"name": "tree", "max_depth": 4, "min_leaf": 10}
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
        "library": [{"name": "logistic", "degree": 1}, {"name": "logistic", "degree": 2}, tree],
    }
    return {"outcome": outcome, "propensity": propensity, "projection": regression, "cate": regression}


def expit(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def make_rng(*key) -> np.random.Generator:
    """Counter-based generator keyed on integers, e.g. ``(seed, n, rep)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def propensity_true(W) -> np.ndarray:
    W = np.atleast_2d(W)
    return expit(0.1 * W[:, 0] * W[:, 1] - 0.4 * W[:, 0])


def tau_true(W) -> np.ndarray:
    W = np.atleast_2d(W)
    return W[:, 0] ** 2 * (W[:, 0] + 7 / 5) + (5 * W[:, 1] / 3) ** 2


def outcome_mean(A, W, null=False) -> np.ndarray:
    W = np.atleast_2d(W)
    base = W[:, 0] * W[:, 1] + 2 * W[:, 1] ** 2 - W[:, 0]
    return base if null else A * tau_true(W) + base


def generate(n: int, seed=0, null: bool = False) -> Dataset:
    """Two Unif(-1, 1) covariates, logistic treatment, Gaussian outcome.

    ``null=True`` removes the treatment effect (tau == 0) while keeping the
    same covariate, treatment and baseline-outcome mechanisms.
    """
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    W = rng.uniform(-1.0, 1.0, size=(n, 2))
    A = (rng.uniform(size=n) < propensity_true(W)).astype(float)
    Y = outcome_mean(A, W, null) + rng.normal(size=n)
    return Dataset(W, A, Y, ("W1", "W2"))


def _uniform_moment(k: int) -> Fraction:
    # E[U^k] for U ~ Unif(-1, 1)
    return Fraction(0) if k % 2 else Fraction(1, k + 1)


def _poly_variance(coefs: dict) -> float:
    """Variance of sum_k c_k U^k for U ~ Unif(-1, 1), computed exactly."""
    mean = sum(c * _uniform_moment(k) for k, c in coefs.items())
    second = sum(c1 * c2 * _uniform_moment(k1 + k2) for k1, c1 in coefs.items() for k2, c2 in coefs.items())
    return float(second - mean**2)


@dataclass(frozen=True)
class TruthValues:
    psi1: float
    psi2: float
    psi3: float

    def for_estimand(self, estimand: str) -> float:
        return {"VTE": self.psi1, "VIMa": self.psi2, "VIMb": self.psi3}[estimand]


# tau = f(W1) + h(W2) with independent covariates, so each variance splits
VAR_F1 = _poly_variance({3: Fraction(1), 2: Fraction(7, 5)})
VAR_H2 = _poly_variance({2: Fraction(25, 9)})


def truths(subset: SubsetSpec, null: bool = False) -> TruthValues:
    if set(subset.s) - {0, 1}:
        raise ValueError(f"unsupported subset {subset.s} for the two-covariate design")
    if null:
        return TruthValues(0.0, 0.0, math.nan)
    psi1 = VAR_F1 + VAR_H2
    psi2 = {(0,): VAR_F1, (1,): VAR_H2, (0, 1): psi1}[subset.s]
    return TruthValues(psi1, psi2, psi2 / psi1)


def truths_monte_carlo(subset: SubsetSpec, draws: int = 10**7, seed: int = 0) -> tuple[TruthValues, TruthValues]:
    """Independent Monte Carlo check of :func:`truths`; returns (estimates, standard errors).

    The subset term uses E[var(tau | W_-s)] = E[(tau(W) - tau(W'))^2] / 2
    where W' redraws the coordinates in ``s`` and keeps the rest, so it
    does not rely on the additive structure of tau.
    """
    rng = make_rng(seed, draws)
    W = rng.uniform(-1.0, 1.0, size=(draws, 2))
    W_alt = W.copy()
    for j in subset.s:
        W_alt[:, j] = rng.uniform(-1.0, 1.0, size=draws)
    t = tau_true(W)
    t_alt = tau_true(W_alt)
    centred = t - t.mean()
    a = centred**2
    b = 0.5 * (t - t_alt) ** 2
    psi1, psi2 = a.mean(), b.mean()
    psi3 = psi2 / psi1
    inf3 = ((b - psi2) - psi3 * (a - psi1)) / psi1
    root = math.sqrt(draws)
    se = TruthValues(a.std(ddof=1) / root, b.std(ddof=1) / root, inf3.std(ddof=1) / root)
    return TruthValues(float(psi1), float(psi2), float(psi3)), se


@dataclass
class SimConfig:
    n_grid: tuple = DESK_N_GRID
    reps: int = DESK_REPS
    estimands: tuple = ESTIMANDS
    families: tuple = FAMILIES
    metalearner: str = "S"
    subset: tuple = (0,)
    seed: int = 1
    learners: dict = field(default_factory=default_learners)
    bounds: tuple = (0.025, 0.975)
    eps1: float = 1e-4
    eps2: float = 1e-4
    max_iter: int = 50_000
    null: bool = False
    rng: str = RNG_NAME

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if any(n < 50 for n in self.n_grid):
            raise ValueError("every sample size must be >= 50")
        if self.rng != RNG_NAME:
            raise ValueError(f"only the {RNG_NAME!r} generator is supported")
        self.n_grid = tuple(int(n) for n in self.n_grid)
        self.subset = tuple(self.subset)
        self.estimands = tuple(self.estimands)
        self.families = tuple(self.families)


def _pipeline(config: SimConfig, learner_seed: int) -> PipelineConfig:
    specs = config.learners
    make = lambda key: make_learner(specs[key], seed=learner_seed)  # noqa: E731
    return PipelineConfig(
        outcome_learner=make("outcome"),
        propensity_learner=make("propensity"),
        projection_learner=make("projection"),
        cate_learner=make("cate") if config.metalearner == "DR" else None,
        metalearner=config.metalearner,
        bounds=tuple(config.bounds),
        tmle=TmleConfig(config.eps1, config.eps2, config.max_iter),
        seed=learner_seed,
    )


def run_replicate(config: SimConfig, n: int, rep: int) -> list[dict]:
    """One simulated dataset, every requested estimator. Never raises."""
    subset = SubsetSpec(config.subset)
    truth = truths(subset, config.null)
    rng = make_rng(config.seed, n, rep)
    learner_seed = int(rng.integers(2**31 - 1))
    base = {"n": n, "rep": rep, "metalearner": config.metalearner, "subset": subset.label()}
    rows = []
    families = tuple(f for f in config.families if f not in STUB_FAMILIES)
    stubs = [f for f in config.families if f in STUB_FAMILIES]
    try:
        with threadpool_limits(1):
            data = generate(n, rng, config.null)
            reports = []
            if families:
                reports = estimate(data, subset, _pipeline(config, learner_seed), config.estimands, families)
        for r in reports:
            rows.append({
                **base, "estimand": r.estimand, "family": r.family, "psi": r.psi, "se": r.se,
                "ci_lo": r.ci_lo, "ci_hi": r.ci_hi, "truth": truth.for_estimand(r.estimand),
                "iterations": r.iterations, "converged": r.converged, "pnd1": r.pnd1, "pnd2": r.pnd2,
                "threshold1": r.threshold1, "threshold2": r.threshold2, "pn_gamma": r.pn_gamma,
                "failed": False, "error": "",
            })
        rows += _stub_rows(base, stubs, config.estimands, truth, rng)
    except Exception as exc:  # noqa: BLE001 - a failed replicate is recorded, not fatal
        log.warning("replicate n=%d rep=%d failed: %s", n, rep, exc)
        rows = [
            {**base, "estimand": e, "family": f, "psi": math.nan, "se": math.nan, "ci_lo": math.nan,
             "ci_hi": math.nan, "truth": truth.for_estimand(e), "iterations": 0, "converged": False,
             "failed": True, "error": f"{type(exc).__name__}: {exc}"}
            for f in config.families for e in config.estimands
        ]
    return rows


def _stub_rows(base, stubs, estimands, truth, rng) -> list[dict]:
    """Reference estimators for checking the harness itself.

    ``oracle`` returns the truth with a zero-width interval; ``normal`` draws
    psi ~ N(truth, STUB_SD^2) with a correctly sized Wald interval.
    """
    rows = []
    for family in stubs:
        for e in estimands:
            t = truth.for_estimand(e)
            psi, se = (t, 0.0) if family == "oracle" else (t + STUB_SD * float(rng.normal()), STUB_SD)
            rows.append({
                **base, "estimand": e, "family": family, "psi": psi, "se": se, "ci_lo": psi - Z95 * se,
                "ci_hi": psi + Z95 * se, "truth": t, "iterations": 0, "converged": True, "failed": False, "error": "",
            })
    return rows


def _run_task(args):
    return run_replicate(*args)


def compute_metrics(records: list[dict], z: float = Z95) -> list[dict]:
    """Aggregate per-replicate rows into one metrics row per (n, estimand, family)."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r["n"], r["estimand"], r["family"], r["metalearner"]), []).append(r)
    rows = []
    order = FAMILIES + STUB_FAMILIES

    def key(k):
        n, estimand, family, meta = k
        return n, ESTIMANDS.index(estimand), order.index(family) if family in order else len(order), family, meta

    for (n, estimand, family, meta), rs in sorted(groups.items(), key=lambda kv: key(kv[0])):
        ok = [r for r in rs if not r["failed"] and math.isfinite(r["psi"])]
        truth = rs[0]["truth"]
        row = {"n": n, "estimand": estimand, "family": family, "metalearner": meta,
               "n_failed": len(rs) - len(ok), "truth": truth, "n_ok": len(ok)}
        if ok and math.isfinite(truth):
            psi = np.array([r["psi"] for r in ok])
            lo = np.array([r["ci_lo"] for r in ok])
            hi = np.array([r["ci_hi"] for r in ok])
            row["mse"] = float(np.mean((psi - truth) ** 2))
            row["abs_bias"] = float(abs(np.mean(psi) - truth))
            row["coverage"] = float(np.mean((lo <= truth) & (truth <= hi)))
            row["ci_width"] = float(np.mean(hi - lo))
            if len(ok) > 1:
                sd = float(np.std(psi, ddof=1))
                row["oracle_coverage"] = float(np.mean(np.abs(psi - truth) <= z * sd))
            else:
                row["oracle_coverage"] = math.nan
        else:
            for key in ("mse", "abs_bias", "coverage", "ci_width", "oracle_coverage"):
                row[key] = math.nan
        rows.append(row)
    return rows


def run_replicates(config: SimConfig, workers: Optional[int] = None, progress=None) -> tuple[list, list]:
    """Run every (n, rep) task; returns (metrics rows, replicate rows).

    Output is independent of ``workers``: each replicate draws from its own
    ``(seed, n, rep)`` stream and results are merged by (n, rep).
    """
    tasks = [(config, n, rep) for n in config.n_grid for rep in range(config.reps)]
    workers = workers or os.cpu_count() or 1
    results: dict = {}
    if workers <= 1:
        for i, task in enumerate(tasks):
            results[task[1:]] = run_replicate(*task)
            if progress:
                progress(i + 1, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, (task, rows) in enumerate(zip(tasks, pool.map(_run_task, tasks, chunksize=1))):
                results[task[1:]] = rows
                if progress:
                    progress(i + 1, len(tasks))
    records = [row for key in sorted(results) for row in results[key]]
    return compute_metrics(records), records


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def write_csv(rows: list[dict], columns, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c, "")) for c in columns])


def write_outputs(config: SimConfig, metrics: list, records: list, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "metrics": out / "metrics.csv",
        "replicates": out / "replicates.csv",
        "run_info": out / "run_info.json",
    }
    write_csv(metrics, METRIC_COLUMNS, paths["metrics"])
    write_csv(records, REPLICATE_COLUMNS, paths["replicates"])
    info = {"config": asdict(config), "truths": asdict(truths(SubsetSpec(config.subset), config.null))}
    paths["run_info"].write_text(json.dumps(info, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return paths
