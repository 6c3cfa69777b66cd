"""Variance of treatment effect (VTE) and treatment-effect variable importance (VIMa, VIMb)."""
from .model import (
    DEFAULT_BOUNDS,
    ESTIMANDS,
    FAMILIES,
    CateFits,
    DataError,
    Dataset,
    EstimateReport,
    NuisanceFits,
    SubsetSpec,
)
from .pipeline import PipelineConfig, estimate, estimate_from_fits
from .tmle import TmleConfig, tmle_vima, tmle_vte

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_BOUNDS",
    "ESTIMANDS",
    "FAMILIES",
    "CateFits",
    "DataError",
    "Dataset",
    "EstimateReport",
    "NuisanceFits",
    "PipelineConfig",
    "SubsetSpec",
    "TmleConfig",
    "estimate",
    "estimate_from_fits",
    "tmle_vima",
    "tmle_vte",
]
