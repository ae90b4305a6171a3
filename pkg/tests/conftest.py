from __future__ import annotations

import numpy as np
import pytest

from batchdenoise.model import DelayModel, QualityModel, Scenario, ServiceRequest

A, B = 0.0240, 0.3543
SOLO = A + B


def make_scenario(deadlines, etas=None, **kw) -> Scenario:
    etas = etas if etas is not None else [8.0] * len(deadlines)
    services = tuple(
        ServiceRequest(id=k, deadline_tau=float(d), spectral_efficiency=float(e))
        for k, (d, e) in enumerate(zip(deadlines, etas))
    )
    return Scenario(services=services, **kw)


def budget_scenario(budgets) -> Scenario:
    """Scenario whose deadlines equal the given budgets (non-positive ones clamped)."""
    return make_scenario([b if b > 0 else 1e-3 for b in budgets])


def random_instance(seed: int, k_max: int = 30, tau_max: float = 20.0):
    """Random scenario plus random feasible allocation; some budgets go negative."""
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, k_max + 1))
    sc = make_scenario(rng.uniform(0.1, tau_max, K), rng.uniform(5.0, 10.0, K))
    alloc = rng.dirichlet(np.ones(K)) * sc.total_bandwidth * rng.uniform(0.2, 1.0)
    alloc = np.maximum(alloc, 1e-6 * sc.total_bandwidth)
    budgets = sc.deadlines - sc.content_size / (alloc * sc.efficiencies)
    return sc, budgets


@pytest.fixture
def dm() -> DelayModel:
    return DelayModel(A, B)


@pytest.fixture
def qm() -> QualityModel:
    return QualityModel()


ACCEPTANCE_LOG: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LOG:
            terminalreporter.write_line(line)
