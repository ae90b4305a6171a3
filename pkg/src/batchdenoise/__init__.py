"""Batch-denoising scheduling and bandwidth allocation for multi-user
diffusion-model content generation under end-to-end deadlines."""

from batchdenoise.model import (
    DelayModel,
    QualityModel,
    Scenario,
    ServiceRequest,
    batch_delay,
    generation_budget,
    generation_budgets,
    mean_quality,
    quality,
    spectral_efficiency_from_link,
    transmission_delay,
)
from batchdenoise.scheduler import Batch, Schedule, stacking, stacking_run, validate_schedule

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "DelayModel",
    "QualityModel",
    "Scenario",
    "Schedule",
    "ServiceRequest",
    "batch_delay",
    "generation_budget",
    "generation_budgets",
    "mean_quality",
    "quality",
    "spectral_efficiency_from_link",
    "stacking",
    "stacking_run",
    "transmission_delay",
    "validate_schedule",
]
