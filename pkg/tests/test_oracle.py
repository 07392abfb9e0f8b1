import numpy as np
import pytest

from batchlp.exceptions import OracleTooLarge
from batchlp.model import LpProblem
from batchlp.oracle import OracleStatus, enumerate_vertices, oracle_solve
from batchlp.sparse import build_csr

from .factories import dense_problem, random_feasible_lp


def test_tiny_picks_the_smallest_optimal_vertex(tiny):
    result = oracle_solve(tiny)
    assert result.status is OracleStatus.OPTIMAL
    assert result.objective == -1.0
    np.testing.assert_array_equal(result.x, [0.0, 1.0])
    np.testing.assert_array_equal(result.y, [1.0])
    np.testing.assert_array_equal(result.r, [0.0, 0.0])
    assert result.vertices == 3


def test_vertices(tiny):
    vertices = enumerate_vertices(tiny)
    assert [v.tolist() for v in vertices] == [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]


def test_knapsack(knapsack):
    result = oracle_solve(knapsack)
    assert result.objective == pytest.approx(-32.0 / 3.0)
    np.testing.assert_allclose(result.x, [1.0, 2.0 / 3.0, 1.0])

    residual = knapsack.c + knapsack.A.to_dense().T @ result.y + result.r
    np.testing.assert_allclose(residual, 0.0, atol=1e-12)


def test_infeasible(infeasible):
    result = oracle_solve(infeasible)
    assert result.status is OracleStatus.INFEASIBLE
    assert result.objective == np.inf
    assert result.x is None


def test_unbounded(unbounded_ray):
    result = oracle_solve(unbounded_ray)
    assert result.status is OracleStatus.UNBOUNDED
    assert result.objective == -np.inf
    np.testing.assert_array_equal(result.x, [0.0])
    np.testing.assert_array_equal(result.ray, [1.0])


def test_unbounded_along_a_free_direction():
    # x1 - x2 = 0 with both variables free, the objective falls along (1, 1).
    problem = dense_problem([[1.0, -1.0]], [1.0, 1.0], [0.0], [0.0], [-np.inf, -np.inf], [np.inf, np.inf])
    result = oracle_solve(problem)
    assert result.status is OracleStatus.UNBOUNDED
    assert problem.c @ result.ray < 0.0
    assert result.ray[0] == result.ray[1]


def test_refuses_large_instances():
    problem = LpProblem(build_csr([], 0, 15), np.zeros(15), [], [], np.zeros(15), np.ones(15))
    with pytest.raises(OracleTooLarge):
        oracle_solve(problem)


@pytest.mark.parametrize("seed", range(10))
def test_duals_certify_the_optimum(seed):
    problem = random_feasible_lp(seed)
    result = oracle_solve(problem)
    assert result.is_optimal

    A = problem.A.to_dense()
    np.testing.assert_allclose(problem.c + A.T @ result.y + result.r, 0.0, atol=1e-9)
    assert np.all(result.x >= problem.var_lower) and np.all(result.x <= problem.var_upper)
