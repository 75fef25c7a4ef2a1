import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from eqprice import AgentCosts, FeasibleSet, ModelInstance, PriceDomain


def make_combined_1d(p0: float = 4.0) -> ModelInstance:
    """1-D fixture with a unique equilibrium at price 4.

    Supply is clip(p/2, 0, 10), demand sits at its floor value 2 for all
    p >= -4, so the excess map crosses zero exactly at p = 4.
    """
    return ModelInstance.build(
        AgentCosts(C=[[1.0]], B=[[1.0]], l=[1.0], M=2.0),
        FeasibleSet(A=[[1.0]], b=[10.0]),
        PriceDomain.orthant(),
        [p0],
    )


def make_saturated_1d(p0: float = 1.0) -> ModelInstance:
    """1-D fixture whose fixed-point set is the whole ray [4, inf).

    With b = 2 the strategy set is [0, 2]; demand is pinned at 2 and
    supply saturates there for p >= 4, so every price above 4 clears.
    """
    return ModelInstance.build(
        AgentCosts(C=[[1.0]], B=[[1.0]], l=[1.0], M=2.0),
        FeasibleSet(A=[[1.0]], b=[2.0]),
        PriceDomain.orthant(),
        [p0],
    )


@pytest.fixture
def combined_1d() -> ModelInstance:
    return make_combined_1d()


@pytest.fixture
def saturated_1d() -> ModelInstance:
    return make_saturated_1d()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240424)
