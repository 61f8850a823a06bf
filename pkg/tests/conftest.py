import numpy as np
import pytest

from colonysim.measures import FiniteMeasure, TestFunction
from colonysim.migration import MigrationIntensity
from colonysim.params import ColonyBranching, InitialSpec, ModelParams


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_measure(rng, max_atoms=12, scale=2.0) -> FiniteMeasure:
    k = int(rng.integers(0, max_atoms + 1))
    if k == 0:
        return FiniteMeasure.empty()
    return FiniteMeasure.from_atoms(
        rng.normal(0.0, scale, k), rng.uniform(0.05, 1.5, k)
    )


def basic_params(
    n=100,
    rate1=10.0,
    rate2=10.0,
    beta1=0.0,
    beta2=0.0,
    sigma_sq=1.0,
    eta=None,
    chi=None,
    h=None,
    init1=None,
    init2=None,
) -> ModelParams:
    return ModelParams(
        n=n,
        colony1=ColonyBranching(rate=rate1, beta=beta1, sigma_sq=sigma_sq),
        colony2=ColonyBranching(rate=rate2, beta=beta2, sigma_sq=sigma_sq),
        eta=eta or MigrationIntensity(model="constant", c=0.0),
        chi=chi or FiniteMeasure.point(0.0, 1.0),
        initial1=init1 or InitialSpec.at(np.zeros(n)),
        initial2=init2 or InitialSpec.at(np.zeros(n)),
        h=h,
    )


@pytest.fixture
def one():
    return TestFunction.constant()
