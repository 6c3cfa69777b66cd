"""Influence-curve standard errors and Wald intervals."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtri

Z95 = 1.959964


def z_value(level: float = 0.95) -> float:
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    if level == 0.95:
        return Z95
    return float(ndtri(0.5 + level / 2))


def wald_ci(psi: float, eic, level: float = 0.95) -> tuple[float, float, float]:
    """``(se, lo, hi)`` with ``se = sd(eic) / sqrt(n)`` (1/(n-1) variance)."""
    eic = np.asarray(eic, dtype=float)
    n = eic.shape[0]
    if n < 2:
        raise ValueError("need at least two influence-curve values")
    if not np.all(np.isfinite(eic)):
        raise ValueError("non-finite influence curve")
    se = float(np.std(eic, ddof=1) / math.sqrt(n))
    z = z_value(level)
    return se, psi - z * se, psi + z * se


def eic_for_family(family: str, estimand: str, fits: dict, psi: float) -> np.ndarray:
    """Influence curve of one estimator.

    ``fits`` holds ``tau`` and the residual score ``resid`` (for SS/EE this is
    ``phi - tau``; for TMLE ``(2A-1)/g * (Y - Qbar*)`` at the targeted fit),
    plus ``tau_s`` for VIMa. VIMb needs ``eic_vima``, ``eic_vte`` and ``psi_vte``.
    """
    from .tmle import eic_from_residual

    if family not in ("SS", "EE", "TMLE"):
        raise ValueError(f"unknown family {family!r}")
    if estimand == "VTE":
        tau = np.asarray(fits["tau"], dtype=float)
        return eic_from_residual(tau, tau.mean(), fits["resid"], psi)
    if estimand == "VIMa":
        return eic_from_residual(fits["tau"], fits["tau_s"], fits["resid"], psi)
    if estimand == "VIMb":
        return (np.asarray(fits["eic_vima"]) - psi * np.asarray(fits["eic_vte"])) / fits["psi_vte"]
    raise ValueError(f"unknown estimand {estimand!r}")
