"""Weakly asymmetric simple exclusion on a segment: simulation, exact analysis and mixing-time estimators."""

import os

# The TBB layer is not available here and numba warns when probing it.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .model import (  # noqa: E402
    ConfigStats,
    HeightFn,
    ModelParams,
    Order,
    ParticleConfig,
    ValidationError,
    compare,
    extremal,
    stats,
    to_height,
    to_particles,
)
from .equilibrium import StateSpaceTooLarge, exact_pi, sample_pi  # noqa: E402
from .spectral import SpectralData, eval_f, spectral_data, weighted_area  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "ConfigStats",
    "HeightFn",
    "ModelParams",
    "Order",
    "ParticleConfig",
    "SpectralData",
    "StateSpaceTooLarge",
    "ValidationError",
    "compare",
    "eval_f",
    "exact_pi",
    "extremal",
    "sample_pi",
    "spectral_data",
    "stats",
    "to_height",
    "to_particles",
    "weighted_area",
]
