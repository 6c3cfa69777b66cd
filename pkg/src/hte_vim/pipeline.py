"""End-to-end estimation for one dataset and one covariate subset."""
from __future__ import annotations

from dataclasses import dataclass, field

from .cate import fit_cate, fit_tau, pseudo_outcome
from .estimators import vima_ee, vima_ss, vte_ee, vte_ss
from .inference import eic_for_family, wald_ci
from .model import ESTIMANDS, FAMILIES, Dataset, EstimateReport, NuisanceFits, SubsetSpec
from .nuisance import fit_nuisance
from .tmle import TmleConfig, ratio_report, tmle_vima, tmle_vte


@dataclass
class PipelineConfig:
    outcome_learner: object
    propensity_learner: object
    projection_learner: object
    cate_learner: object = None
    metalearner: str = "S"
    crossfit: object = None
    bounds: tuple = (0.025, 0.975)
    tmle: TmleConfig = field(default_factory=TmleConfig)
    seed: int = 0


def _family_report(family, estimand, psi, eic, n, subset, level):
    se, lo, hi = wald_ci(psi, eic, level)
    return EstimateReport(estimand, family, psi, se, lo, hi, n, subset, eic=eic)


def estimate_from_fits(
    dataset: Dataset,
    nuisance: NuisanceFits,
    tau,
    subset: SubsetSpec,
    config: PipelineConfig,
    estimands=ESTIMANDS,
    families=FAMILIES,
) -> list[EstimateReport]:
    level = config.tmle.level
    cate = fit_cate(dataset, nuisance, subset, config.projection_learner, config.metalearner, tau=tau)
    phi = pseudo_outcome(dataset, nuisance)
    label = subset.label(dataset.names)
    need_vte = "VTE" in estimands or "VIMb" in estimands
    need_vima = "VIMa" in estimands or "VIMb" in estimands
    fits = {"tau": cate.tau, "tau_s": cate.tau_s, "resid": phi - cate.tau}
    out = {}
    for family in families:
        if family == "TMLE":
            if need_vte:
                out[("VTE", family)], _ = tmle_vte(dataset, nuisance, cate.tau, config.tmle)
            if need_vima:
                out[("VIMa", family)], _ = tmle_vima(dataset, nuisance, cate, config.tmle)
        else:
            if need_vte:
                psi = vte_ss(cate.tau) if family == "SS" else vte_ee(cate.tau, phi)
                eic = eic_for_family(family, "VTE", fits, psi)
                out[("VTE", family)] = _family_report(family, "VTE", psi, eic, dataset.n, "", level)
            if need_vima:
                psi = vima_ss(cate) if family == "SS" else vima_ee(cate.tau, cate.tau_s, phi)
                eic = eic_for_family(family, "VIMa", fits, psi)
                out[("VIMa", family)] = _family_report(family, "VIMa", psi, eic, dataset.n, label, level)
        if "VIMb" in estimands:
            out[("VIMb", family)] = ratio_report(out[("VIMa", family)], out[("VTE", family)], level)
    return [out[(e, f)] for f in families for e in estimands]


def estimate(
    dataset: Dataset,
    subset: SubsetSpec,
    config: PipelineConfig,
    estimands=ESTIMANDS,
    families=FAMILIES,
) -> list[EstimateReport]:
    """Fit nuisances and the CATE, then run every requested estimator."""
    nuisance = fit_nuisance(
        dataset,
        config.outcome_learner,
        config.propensity_learner,
        config.crossfit,
        config.bounds,
        config.seed,
    )
    tau = fit_tau(dataset, nuisance, config.metalearner, config.cate_learner or config.projection_learner)
    return estimate_from_fits(dataset, nuisance, tau, subset, config, estimands, families)
