import math

import pytest
from hypothesis import settings

from ldlab.distributions import DeltaWindow, Discretized, Pareto

settings.register_profile("ldlab", max_examples=40, deadline=None)
settings.load_profile("ldlab")

INF = DeltaWindow(math.inf)
UNIT = DeltaWindow(1.0)

# closed forms frozen before the build (see the oracle notes in each test)
MU_PARETO2 = 1.0 + math.pi ** 2 / 6  # sum_{k>=1} P(X_up >= k) = 1 + zeta(2)


@pytest.fixture
def pareto2():
    return Discretized(Pareto(2.0), 1.0)
