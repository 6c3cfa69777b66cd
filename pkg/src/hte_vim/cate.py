"""CATE metalearners and projections of the CATE onto covariate subsets."""
from __future__ import annotations

import numpy as np

from .model import CateFits, Dataset, NuisanceFits, SubsetSpec, subset_complement

METALEARNERS = ("S", "DR")


def pseudo_outcome(dataset: Dataset, nuisance: NuisanceFits) -> np.ndarray:
    """AIPW pseudo outcome; its conditional mean given W is the CATE."""
    A = dataset.A
    resid = dataset.Y - nuisance.qA(A)
    return (2 * A - 1) / nuisance.gA(A) * resid + nuisance.q1 - nuisance.q0


def cate_s_learner(nuisance: NuisanceFits) -> np.ndarray:
    return nuisance.q1 - nuisance.q0


def cate_dr_learner(dataset: Dataset, phi, learner) -> np.ndarray:
    return learner.fit(dataset.W, phi).predict(dataset.W)


def _project(dataset, target, subset, learner):
    rest = subset_complement(subset, dataset.p)
    if not rest:
        return np.full(dataset.n, float(np.mean(target)))
    Wr = dataset.W[:, list(rest)]
    return learner.fit(Wr, target).predict(Wr)


def project_tau_s(dataset: Dataset, tau, subset: SubsetSpec, learner) -> np.ndarray:
    """E[tau(W) | W_{-s}] by regressing the fitted CATE on the remaining covariates."""
    return _project(dataset, np.asarray(tau, dtype=float), subset, learner)


def project_gamma_s(dataset: Dataset, tau, subset: SubsetSpec, learner) -> np.ndarray:
    """E[tau(W)^2 | W_{-s}]; regresses the squared fitted CATE, not the squared projection."""
    return _project(dataset, np.asarray(tau, dtype=float) ** 2, subset, learner)


def fit_cate(
    dataset: Dataset,
    nuisance: NuisanceFits,
    subset: SubsetSpec,
    projection_learner,
    metalearner: str = "S",
    cate_learner=None,
    tau=None,
) -> CateFits:
    """Build tau, tau_s and gamma_s for one subset. Pass ``tau`` to reuse a CATE fit."""
    if metalearner not in METALEARNERS:
        raise ValueError(f"metalearner must be one of {METALEARNERS}")
    if tau is None:
        tau = fit_tau(dataset, nuisance, metalearner, cate_learner or projection_learner)
    tau_s = project_tau_s(dataset, tau, subset, projection_learner)
    gamma_s = project_gamma_s(dataset, tau, subset, projection_learner)
    return CateFits(tau, tau_s, gamma_s, subset, metalearner)


def fit_tau(dataset, nuisance, metalearner="S", learner=None) -> np.ndarray:
    if metalearner == "S":
        return cate_s_learner(nuisance)
    if learner is None:
        raise ValueError("the DR-learner needs a regression learner")
    return cate_dr_learner(dataset, pseudo_outcome(dataset, nuisance), learner)
