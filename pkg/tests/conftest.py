import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from proxjadmm.problem import AgentSpec, BoxDomain, CoupledProblem, CouplingConstraint, QuadraticObjective


def scalar_agent(aid, Q=2.0, q=-2.0, c0=1.0, lower=None, upper=None):
    dom = None
    if lower is not None or upper is not None:
        dom = BoxDomain([-np.inf if lower is None else lower], [np.inf if upper is None else upper])
    return AgentSpec(aid, QuadraticObjective([[Q]], [q], c0), dom)


def two_scalar_problem(beta=10.0):
    """``f_i = (x_i - 1)^2`` coupled by ``x_1 + x_2 <= 1``."""
    agents = [scalar_agent(1), scalar_agent(2)]
    c = CouplingConstraint((1, 2), {1: [[1.0]], 2: [[1.0]]}, [1.0])
    return CoupledProblem(agents, [c], beta)


@pytest.fixture
def two_scalar():
    return two_scalar_problem()
