"""Closed-form system model: batch latency, link rate, quality surrogate.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Fitted on a DDIM/CIFAR-10 model running on an RTX 3050.
DEFAULT_A = 0.0240
DEFAULT_B = 0.3543

# One 32x32x3 8-bit image.
DEFAULT_CONTENT_SIZE = 24576.0


@dataclass(frozen=True)
class DelayModel:
    """Batch latency law ``g(X) = a*X + b*[X > 0]``.

    Attributes:
        a: marginal seconds per task in the batch.
        b: fixed seconds per launched batch.
    """

    a: float = DEFAULT_A
    b: float = DEFAULT_B

    def __post_init__(self) -> None:
        if not (self.a > 0):
            raise ValueError(f"delay_model.a must be > 0, got {self.a}")
        if not (self.b > 0):
            raise ValueError(f"delay_model.b must be > 0, got {self.b}")
        if self.b <= self.a:
            warnings.warn(
                f"delay_model.b ({self.b}) <= a ({self.a}); batching gains are small",
                stacklevel=3,
            )

    @property
    def solo(self) -> float:
        """Duration of a batch holding one task."""
        return self.a + self.b


@dataclass(frozen=True)
class QualityModel:
    """Power-law FID surrogate, lower is better.

    ``quality(T) = alpha * T**-beta + gamma`` for ``T >= 1`` and ``q_outage``
    when no step completed. The defaults are placeholders with the right
    shape, not measured coefficients.
    """

    alpha: float = 57.0
    beta: float = 0.75
    gamma: float = 3.5
    q_outage: float = 400.0

    def __post_init__(self) -> None:
        if not (self.alpha > 0):
            raise ValueError(f"quality_model.alpha must be > 0, got {self.alpha}")
        if not (self.beta > 0):
            raise ValueError(f"quality_model.beta must be > 0, got {self.beta}")
        if not (self.gamma >= 0):
            raise ValueError(f"quality_model.gamma must be >= 0, got {self.gamma}")
        if not (self.q_outage >= self.alpha + self.gamma):
            raise ValueError(
                "quality_model.q_outage must be >= alpha + gamma "
                f"({self.alpha + self.gamma}), got {self.q_outage}"
            )


@dataclass(frozen=True)
class ServiceRequest:
    id: int
    deadline_tau: float
    spectral_efficiency: float

    def __post_init__(self) -> None:
        if not (self.deadline_tau > 0):
            raise ValueError(f"service {self.id}: deadline_tau must be > 0")
        if not (self.spectral_efficiency > 0):
            raise ValueError(f"service {self.id}: spectral_efficiency must be > 0")


@dataclass(frozen=True)
class Scenario:
    services: tuple[ServiceRequest, ...]
    total_bandwidth: float = 40_000.0
    content_size: float = DEFAULT_CONTENT_SIZE
    delay_model: DelayModel = field(default_factory=DelayModel)
    quality_model: QualityModel = field(default_factory=QualityModel)

    def __post_init__(self) -> None:
        object.__setattr__(self, "services", tuple(self.services))
        if not self.services:
            raise ValueError("scenario needs at least one service")
        ids = [s.id for s in self.services]
        if len(set(ids)) != len(ids):
            raise ValueError("service ids must be unique")
        if not (self.total_bandwidth > 0):
            raise ValueError("total_bandwidth must be > 0")
        if not (self.content_size > 0):
            raise ValueError("content_size must be > 0")

    @property
    def K(self) -> int:
        return len(self.services)

    @property
    def ids(self) -> list[int]:
        return [s.id for s in self.services]

    @property
    def deadlines(self) -> np.ndarray:
        return np.array([s.deadline_tau for s in self.services], dtype=float)

    @property
    def efficiencies(self) -> np.ndarray:
        return np.array([s.spectral_efficiency for s in self.services], dtype=float)

    def to_dict(self) -> dict:
        return {
            "total_bandwidth": self.total_bandwidth,
            "content_size": self.content_size,
            "delay_model": {"a": self.delay_model.a, "b": self.delay_model.b},
            "quality_model": {
                "alpha": self.quality_model.alpha,
                "beta": self.quality_model.beta,
                "gamma": self.quality_model.gamma,
                "q_outage": self.quality_model.q_outage,
            },
            "services": [
                {
                    "id": s.id,
                    "deadline_tau": s.deadline_tau,
                    "spectral_efficiency": s.spectral_efficiency,
                }
                for s in self.services
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(
            services=tuple(ServiceRequest(**s) for s in d["services"]),
            total_bandwidth=d["total_bandwidth"],
            content_size=d["content_size"],
            delay_model=DelayModel(**d["delay_model"]),
            quality_model=QualityModel(**d["quality_model"]),
        )


def batch_delay(X: int, m: DelayModel) -> float:
    """Latency of one batch holding ``X`` denoising tasks; an empty batch is free."""
    if X <= 0:
        return 0.0
    return m.a * X + m.b


def spectral_efficiency_from_link(p_bar: float, h: float, N0: float) -> float:
    if not (N0 > 0):
        raise ValueError(f"noise density N0 must be > 0, got {N0}")
    if p_bar < 0 or h < 0:
        raise ValueError("p_bar and h must be non-negative")
    return math.log2(1.0 + p_bar * h / N0)


def transmission_delay(B_k: float, eta_k: float, S: float) -> float:
    """Seconds to push ``S`` bits over ``B_k`` Hz at ``eta_k`` bit/s/Hz."""
    if not (B_k > 0):
        raise ValueError(f"infeasible link: bandwidth must be > 0, got {B_k}")
    if not (eta_k > 0):
        raise ValueError(f"infeasible link: spectral efficiency must be > 0, got {eta_k}")
    if S < 0:
        raise ValueError("content size must be non-negative")
    return S / (B_k * eta_k)


def quality(T: int, q: QualityModel) -> float:
    if T <= 0:
        return q.q_outage
    return q.alpha * T ** (-q.beta) + q.gamma


def mean_quality(steps: Sequence[int], q: QualityModel) -> float:
    """Average FID over all services, outages included at ``q_outage``.

    Summed left to right so the compiled kernel reproduces it bit for bit.
    """
    total = 0.0
    for t in steps:
        total += quality(int(t), q)
    return total / len(steps)


def generation_budget(tau_k: float, d_ct: float) -> float:
    """Time left for denoising once transmission is paid for; may be negative."""
    return tau_k - d_ct


def generation_budgets(scenario: Scenario, allocation: Sequence[float]) -> np.ndarray:
    """Vectorized ``tau_k - S/(B_k*eta_k)`` for a whole allocation."""
    bw = np.asarray(allocation, dtype=float)
    if bw.shape != (scenario.K,):
        raise ValueError(f"allocation needs {scenario.K} entries, got {bw.shape}")
    if np.any(bw <= 0):
        raise ValueError("infeasible link: every bandwidth entry must be > 0")
    d_ct = scenario.content_size / (bw * scenario.efficiencies)
    return scenario.deadlines - d_ct
