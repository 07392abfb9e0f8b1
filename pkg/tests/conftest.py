from pathlib import Path

import numpy as np
import pytest

from batchlp.model import LpProblem
from batchlp.sparse import build_csr

from .factories import dense_problem

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def tiny() -> LpProblem:
    """`min -x1 - x2` subject to `x1 + x2 <= 1`, `x` in the unit box. Optimum -1."""
    return dense_problem([[1.0, 1.0]], [-1.0, -1.0], [-np.inf], [1.0], [0.0, 0.0], [1.0, 1.0], name="tiny")


@pytest.fixture
def infeasible() -> LpProblem:
    """`x1 + x2 >= 2` over `[0, 0.5]^2`."""
    return dense_problem([[1.0, 1.0]], [1.0, 1.0], [2.0], [np.inf], [0.0, 0.0], [0.5, 0.5], name="infeasible")


@pytest.fixture
def unbounded_ray() -> LpProblem:
    """`min -x` over `x >= 0` with no rows at all."""
    return LpProblem(build_csr([], 0, 1), [-1.0], [], [], [0.0], [np.inf], name="ray")


@pytest.fixture
def knapsack() -> LpProblem:
    """
    `min -5 x1 - 4 x2 - 3 x3` subject to `2 x1 + 3 x2 + x3 <= 5` and
    `4 x1 + x2 + 2 x3 <= 11` over the unit box. The relaxation has the
    fractional optimum `x = (1, 2/3, 1)`.
    """

    return dense_problem(
        [[2.0, 3.0, 1.0], [4.0, 1.0, 2.0]],
        [-5.0, -4.0, -3.0],
        [-np.inf, -np.inf],
        [5.0, 11.0],
        np.zeros(3),
        np.ones(3),
        name="knapsack",
        integer_columns=range(3),
    )
