import numpy as np
import pytest

from cyberalloc.aggregate import LossModel
from cyberalloc.allocate import AllocationProblem, StrategyEvaluator, WeightSet
from cyberalloc.cascade import CascadeModel, InvestmentMenu
from cyberalloc.config import case_study_config
from cyberalloc.dist import FrequencyModel, SeverityModel

EXAMPLE_A = [[0, 1, 0], [0, 1, 0], [0, 1, 1]]
EXAMPLE_B = [[1, 0, 1], [1, 0, 0], [1, 1, 0]]


@pytest.fixture(scope="session")
def case_config():
    return case_study_config()


@pytest.fixture(scope="session")
def case_problem(case_config):
    return case_config.problem()


@pytest.fixture(scope="session")
def case_evaluator(case_problem):
    return StrategyEvaluator(case_problem.losses)


def small_problem(
    lam=(1.0, 0.5),
    mu=(0.5, 0.0),
    sigma=(0.6, 0.8),
    q=(0.3, 0.5),
    costs=(1.0, 2.0),
    theta_low=(0.5, 0.3),
    deductible=3.0,
    weights=None,
    budget=None,
    upper=12.0,
) -> AllocationProblem:
    """Two threats, two controls, one asset, unit lattice; every evaluation is cheap."""
    cascade = CascadeModel(["T1", "T2"], ["V1", "V2"], ["A1"], [[1, 0], [1, 1]], [[1], [1]])
    sev = {
        (0, 0, 0): SeverityModel.lognormal(q[0], mu[0], sigma[0], upper),
        (1, 0, 0): SeverityModel.lognormal(q[1], mu[1], sigma[1], upper),
        (1, 1, 0): SeverityModel.lognormal(q[0], mu[1], sigma[0], upper),
    }
    freq = {(0, 0): FrequencyModel.poisson(lam[0]), (1, 0): FrequencyModel.poisson(lam[1])}
    losses = LossModel(cascade, sev, freq, step=1.0, max_mass_deficit=1e-9)
    w = weights or WeightSet.uniform(2, 2, 1)
    return AllocationProblem(losses, InvestmentMenu(costs, theta_low), w, np.full((2, 1), deductible), budget)
