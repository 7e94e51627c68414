"""Physics-informed denoising autoencoders for imputing HVAC sensor gaps."""

from .data import Dataset, DailyProfile, NormStats, prepare, read_dataset, write_dataset
from .models import KINDS, DAE, ModelSpec, TrainedModel, TrainLimits, build, impute, train
from .physics import PhysicsCoefficients, fit_coefficients_ols, physics_loss, residual
from .synthetic import generate

__version__ = "0.1.0"

__all__ = [
    "DAE",
    "DailyProfile",
    "Dataset",
    "KINDS",
    "ModelSpec",
    "NormStats",
    "PhysicsCoefficients",
    "TrainLimits",
    "TrainedModel",
    "build",
    "fit_coefficients_ols",
    "generate",
    "impute",
    "physics_loss",
    "prepare",
    "read_dataset",
    "residual",
    "train",
    "write_dataset",
]
