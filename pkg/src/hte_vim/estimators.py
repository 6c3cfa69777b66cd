"""Simple-substitution (SS) and estimating-equation (EE) point estimators.

``psi1`` is the variance of the CATE (VTE), ``psi2`` the expected conditional
variance of the CATE given the covariates outside ``s`` (VIMa) and ``psi3``
their ratio (VIMb). Variances use the 1/n plug-in convention.
"""
from __future__ import annotations

import numpy as np

from .model import CateFits

DEGENERATE_VTE = 1e-12


def vte_ss(tau) -> float:
    tau = np.asarray(tau, dtype=float)
    return float(np.mean((tau - tau.mean()) ** 2))


def vte_ee(tau, phi) -> float:
    """One-step estimator: plug-in variance plus the mean of the residual score."""
    tau = np.asarray(tau, dtype=float)
    phi = np.asarray(phi, dtype=float)
    centred = tau - tau.mean()
    return vte_ss(tau) + float(np.mean(2 * centred * (phi - tau)))


def vima_ss(cate: CateFits) -> float:
    return float(np.mean(cate.gamma_s - cate.tau_s**2))


def vima_ee(tau, tau_s, phi) -> float:
    tau, tau_s, phi = (np.asarray(v, dtype=float) for v in (tau, tau_s, phi))
    return float(np.mean((phi - tau_s) ** 2 - (phi - tau) ** 2))


def vimb_point(psi2: float, psi1: float) -> float:
    if abs(psi1) < DEGENERATE_VTE:
        raise ZeroDivisionError("degenerate VTE: cannot scale the importance measure")
    return psi2 / psi1
