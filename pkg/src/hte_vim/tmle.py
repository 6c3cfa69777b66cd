"""Targeted maximum likelihood estimation of the VTE and the VIMa/VIMb measures.

The VIMa targeting alternates two linear fluctuations until the empirical
means of both score components are below ``sd / (sqrt(n) log n)``:

* the outcome regression moves along ``2 (tau - tau_s)(2A - 1)`` with
  ``1 / g(A|W)`` kept as a loss weight, which targets the ``Y | A, W`` score;
* the subset projection ``tau_s`` moves along ``2 tau_s``, which targets the
  ``2 tau_s (tau - tau_s)`` part of the ``W_s | W_{-s}`` score.

A final intercept shift of the initial ``gamma_s`` solves the remaining
``tau^2 - gamma_s`` piece and the estimate is the plug-in mean of
``gamma_s - tau_s^2``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .inference import wald_ci
from .model import CateFits, Dataset, EstimateReport, NuisanceFits

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TmleConfig:
    eps1: float = 1e-4
    eps2: float = 1e-4
    max_iter: int = 50_000
    level: float = 0.95


@dataclass
class TargetingState:
    q0: np.ndarray
    q1: np.ndarray
    tau: np.ndarray
    tau_s: np.ndarray
    gamma_s0: np.ndarray
    gamma_s: np.ndarray = field(default=None)
    iter: int = 0
    pnd1: float = math.nan
    pnd2: float = math.nan
    sigma1_hat: float = math.nan
    sigma2_hat: float = math.nan
    threshold1: float = math.nan
    threshold2: float = math.nan
    converged: bool = False
    eps1: float = 1e-4
    eps2: float = 1e-4


@dataclass(frozen=True)
class Scores:
    d1: np.ndarray
    d2: np.ndarray
    d_ws: np.ndarray = None
    d_wms: np.ndarray = None


def stop_threshold(sigma: float, n: int) -> float:
    return sigma / (math.sqrt(n) * math.log(n))


def residual_score(g1, A, Y, qA) -> np.ndarray:
    """``(2A - 1) / g(A|W) * (Y - Qbar(A, W))``."""
    A = np.asarray(A, dtype=float)
    gA = np.where(A == 1, g1, 1.0 - np.asarray(g1))
    return (2 * A - 1) / gA * (np.asarray(Y) - qA)


def eic_from_residual(tau, centre, resid, psi) -> np.ndarray:
    diff = np.asarray(tau) - centre
    return 2 * diff * resid + diff**2 - psi


def eic_vima(tau, tau_s, g1, A, Y, qA, psi2) -> np.ndarray:
    return eic_from_residual(tau, tau_s, residual_score(g1, A, Y, qA), psi2)


def eic_vte(tau, g1, A, Y, qA, psi1) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    return eic_from_residual(tau, tau.mean(), residual_score(g1, A, Y, qA), psi1)


def compute_scores(tau, tau_s, g1, A, Y, qA, gamma_s=None, psi2=None) -> Scores:
    """Score components of the VIMa influence curve.

    ``d1`` is the ``Y | A, W`` part, ``d2`` the part targeted through
    ``tau_s``; ``d_ws`` and ``d_wms`` are only formed when ``gamma_s`` (and
    ``psi2``) are given.
    """
    diff = tau - tau_s
    d1 = 2 * diff * residual_score(g1, A, Y, qA)
    d2 = 2 * tau_s * diff
    d_ws = d_wms = None
    if gamma_s is not None:
        d_ws = tau**2 - gamma_s - d2
        if psi2 is not None:
            d_wms = gamma_s - tau_s**2 - psi2
    return Scores(d1, d2, d_ws, d_wms)


def weighted_fluctuation_loss(eps, Y, qA, h_unweighted, gA) -> float:
    """Loss of the linear fluctuation ``Qbar + eps * H`` with ``1/g`` as weights.

    Its derivative at ``eps = 0`` is ``-2 * mean(d1)``; the targeting step is a
    gradient step on this loss.
    """
    return float(np.mean((Y - qA - eps * h_unweighted) ** 2 / gA))


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError("non-finite values during TMLE fluctuation")


def tmle_vima(
    dataset: Dataset,
    nuisance: NuisanceFits,
    cate: CateFits,
    config: TmleConfig = TmleConfig(),
) -> tuple[EstimateReport, TargetingState]:
    A, Y, g1 = dataset.A, dataset.Y, nuisance.g1
    n = dataset.n
    sign = 2 * A - 1
    q0 = nuisance.q0.copy()
    q1 = nuisance.q1.copy()
    qA = np.where(A == 1, q1, q0)
    tau = cate.tau.copy()
    tau_s = cate.tau_s.copy()

    scores = compute_scores(tau, tau_s, g1, A, Y, qA)
    state = TargetingState(q0, q1, tau, tau_s, cate.gamma_s.copy(), eps1=config.eps1, eps2=config.eps2)
    state.sigma1_hat = float(np.std(scores.d1, ddof=1))
    state.sigma2_hat = float(np.std(scores.d2, ddof=1))
    state.threshold1 = stop_threshold(state.sigma1_hat, n)
    state.threshold2 = stop_threshold(state.sigma2_hat, n)
    pnd1 = float(np.mean(scores.d1))
    pnd2 = float(np.mean(scores.d2))

    it = 0
    done = abs(pnd1) <= state.threshold1 and abs(pnd2) <= state.threshold2
    while not done and it < config.max_iter:
        it += 1
        # step 1: outcome regression along 2 (tau - tau_s)(2a - 1), weights 1/g
        shift = config.eps1 * 2 * (tau - tau_s) * pnd1
        q1 += shift
        q0 -= shift
        qA += sign * shift
        tau += 2 * shift
        # step 2: tau_s along 2 tau_s, with the score refreshed after step 1
        pnd2 = float(np.mean(2 * tau_s * (tau - tau_s)))
        tau_s += config.eps2 * 2 * tau_s * pnd2
        # step 3: criterion
        scores = compute_scores(tau, tau_s, g1, A, Y, qA)
        pnd1 = float(np.mean(scores.d1))
        pnd2 = float(np.mean(scores.d2))
        if not (math.isfinite(pnd1) and math.isfinite(pnd2)):
            _check_finite(q1, q0, tau, tau_s)
            raise FloatingPointError("non-finite score during TMLE fluctuation")
        done = abs(pnd1) <= state.threshold1 and abs(pnd2) <= state.threshold2
    _check_finite(q1, q0, tau, tau_s)
    if not done:
        warnings.warn(f"VIMa targeting did not converge in {config.max_iter} iterations", RuntimeWarning)

    # single-step intercept fluctuation of gamma_s solves mean(tau*^2 - gamma_s*) = 0
    eps3 = float(np.mean(tau**2 - state.gamma_s0))
    gamma_s = state.gamma_s0 + eps3
    psi2 = float(np.mean(gamma_s - tau_s**2))

    state.gamma_s = gamma_s
    state.iter, state.pnd1, state.pnd2, state.converged = it, pnd1, pnd2, bool(done)
    eic = eic_vima(tau, tau_s, g1, A, Y, qA, psi2)
    se, lo, hi = wald_ci(psi2, eic, config.level)
    report = EstimateReport(
        "VIMa", "TMLE", psi2, se, lo, hi, n, cate.subset.label(dataset.names),
        it, pnd1, pnd2, bool(done), eic,
        state.threshold1, state.threshold2, float(np.mean(tau**2 - gamma_s)),
    )
    log.debug("VIMa TMLE: %d iterations, psi=%.6g", it, psi2)
    return report, state


def tmle_vte(
    dataset: Dataset,
    nuisance: NuisanceFits,
    tau0,
    config: TmleConfig = TmleConfig(),
) -> tuple[EstimateReport, TargetingState]:
    A, Y, g1 = dataset.A, dataset.Y, nuisance.g1
    n = dataset.n
    sign = 2 * A - 1
    q0 = nuisance.q0.copy()
    q1 = nuisance.q1.copy()
    qA = np.where(A == 1, q1, q0)
    tau = np.array(tau0, dtype=float)

    def score(tau, qA):
        return 2 * (tau - tau.mean()) * residual_score(g1, A, Y, qA)

    d1 = score(tau, qA)
    state = TargetingState(q0, q1, tau, np.full(n, tau.mean()), np.zeros(n), eps1=config.eps1)
    sigma = float(np.std(d1, ddof=1))
    threshold = stop_threshold(sigma, n)
    state.sigma1_hat, state.threshold1 = sigma, threshold
    pnd1 = float(np.mean(d1))

    it = 0
    done = abs(pnd1) <= threshold
    while not done and it < config.max_iter:
        it += 1
        shift = config.eps1 * 2 * (tau - tau.mean()) * pnd1
        q1 += shift
        q0 -= shift
        qA += sign * shift
        tau += 2 * shift
        pnd1 = float(np.mean(score(tau, qA)))
        if not math.isfinite(pnd1):
            raise FloatingPointError("non-finite score during TMLE fluctuation")
        done = abs(pnd1) <= threshold
    if not done:
        warnings.warn(f"VTE targeting did not converge in {config.max_iter} iterations", RuntimeWarning)

    psi1 = float(np.mean((tau - tau.mean()) ** 2))
    state.tau_s = np.full(n, tau.mean())
    state.iter, state.pnd1, state.converged = it, pnd1, bool(done)
    eic = eic_vte(tau, g1, A, Y, qA, psi1)
    se, lo, hi = wald_ci(psi1, eic, config.level)
    report = EstimateReport(
        "VTE", "TMLE", psi1, se, lo, hi, n, "", it, pnd1, math.nan, bool(done), eic, threshold
    )
    return report, state


def ratio_report(report_vima: EstimateReport, report_vte: EstimateReport, level=0.95) -> EstimateReport:
    """VIMb from a VIMa and a VTE report of the same family (delta method)."""
    from .estimators import vimb_point

    psi1 = report_vte.psi
    psi3 = vimb_point(report_vima.psi, psi1)
    eic = (report_vima.eic - psi3 * report_vte.eic) / psi1
    se, lo, hi = wald_ci(psi3, eic, level)
    return EstimateReport(
        "VIMb",
        report_vima.family,
        psi3,
        se,
        lo,
        hi,
        report_vima.n,
        report_vima.subset,
        report_vima.iterations + report_vte.iterations,
        report_vima.pnd1,
        report_vima.pnd2,
        report_vima.converged and report_vte.converged,
        eic,
    )


def tmle_vimb(report_vima: EstimateReport, report_vte: EstimateReport, level=0.95) -> EstimateReport:
    if report_vima.family != "TMLE" or report_vte.family != "TMLE":
        raise ValueError("tmle_vimb combines TMLE reports")
    return ratio_report(report_vima, report_vte, level)
