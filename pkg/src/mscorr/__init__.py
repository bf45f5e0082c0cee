"""Multispectral image correlation: projection, spectral distances, fixed-point
models, operation-cost estimates and band-escalating authentication."""

from __future__ import annotations

__version__ = "0.1.0"

from .metrics import DistanceResult, Metric, MetricConfig, Polarity, WeightVector, image_metric
from .pipeline import AuthConfig, AuthVerdict, Decision, ReferenceStore, authenticate
from .spectral import SensitivityKind, SensitivitySet, SpectralImage, WavelengthAxis, load_cube, save_cube

__all__ = [
    "AuthConfig",
    "AuthVerdict",
    "Decision",
    "DistanceResult",
    "Metric",
    "MetricConfig",
    "Polarity",
    "ReferenceStore",
    "SensitivityKind",
    "SensitivitySet",
    "SpectralImage",
    "WavelengthAxis",
    "WeightVector",
    "authenticate",
    "image_metric",
    "load_cube",
    "save_cube",
]
