import numpy as np
import pytest

from batchlp.batch import solve_batch
from batchlp.config import ReducedCostMode, SolverConfig
from batchlp.exceptions import StepSizeError
from batchlp.model import BatchProblem, SolveStatus
from batchlp.oracle import OracleStatus, oracle_solve
from batchlp.pdhg import (
    STEP_FACTOR,
    IterateState,
    RestartReason,
    StepParams,
    apply_T,
    check_infeasibility,
    check_termination,
    evaluate_restart,
    halpern_step,
    m_norm,
    m_norm_residual,
    matrix_norm,
    quadratic_form,
    reduced_cost,
    restart,
    restart_decision,
    smooth_weights,
    solve,
    update_primal_weight,
)
from batchlp.sparse import as_block, from_dense

from .factories import (
    dense_problem,
    random_dual_infeasible_lp,
    random_feasible_lp,
    random_primal_infeasible_lp,
)

inf = np.inf
TIGHT = SolverConfig(eps_opt=1e-6)


def _params(problem, w=1.0):
    return StepParams.from_norm(matrix_norm(problem.A), w)


def test_step_params():
    params = StepParams(eta=0.5, w=2.0)
    assert params.tau == 0.25
    assert params.sigma == 1.0
    assert StepParams.from_norm(2.0).eta == pytest.approx(STEP_FACTOR / 2.0)
    assert params.with_weight(4.0).tau == 0.125


@pytest.mark.parametrize("seed", range(100))
def test_m_norm_matches_dense_form(seed):
    rng = np.random.default_rng(seed)
    dense = rng.standard_normal((4, 3))
    A = from_dense(dense)
    params = StepParams(eta=rng.uniform(0.1, 0.99) / np.linalg.norm(dense, 2), w=rng.uniform(0.1, 10.0))

    dx = rng.standard_normal(3)
    dy = rng.standard_normal(4)
    M = np.block(
        [
            [np.eye(3) / params.tau, dense.T],
            [dense, np.eye(4) / params.sigma],
        ]
    )
    z = np.concatenate([dx, dy])
    assert m_norm(A, dx, dy, params) == pytest.approx(np.sqrt(z @ M @ z), rel=1e-9)


def test_quadratic_form_rejects_oversized_steps():
    dx = as_block(np.array([1.0]))
    dy = as_block(np.array([-1.0]))
    adx = as_block(np.array([10.0]))
    with pytest.raises(StepSizeError):
        quadratic_form(dx, dy, adx, 1.0, 1.0)


def test_smooth_weights():
    # d = ||dy|| / ||dx|| is 4, inf and 0 for the three columns
    w = smooth_weights(np.array([1.0, 2.0, 3.0]), np.array([1.0, 0.0, 1.0]), np.array([4.0, 1.0, 0.0]), 0.5)
    np.testing.assert_allclose(w, [2.0, 2.0, 3.0])

    # a larger dual displacement pushes w up, a larger primal one pulls it down
    assert smooth_weights(np.array([1.0]), np.array([1.0]), np.array([9.0]), 1.0)[0] == pytest.approx(9.0)
    assert smooth_weights(np.array([1.0]), np.array([9.0]), np.array([1.0]), 1.0)[0] == pytest.approx(1.0 / 9.0)


def test_update_primal_weight_follows_the_dual_displacement(tiny):
    state = IterateState(tiny, np.array([1.0, 0.0]), np.array([4.0]))
    state.X0[:] = 0.0
    state.Y0[:] = 0.0

    params = update_primal_weight(state, StepParams(eta=0.5, w=1.0), SolverConfig(theta=0.5))
    assert params.w == pytest.approx(2.0)
    assert params.eta == 0.5


def test_restart_rules():
    config = SolverConfig()
    assert restart_decision(0.1, 1.0, 0.5, 3, 100, config) is RestartReason.SUFFICIENT
    assert restart_decision(0.7, 1.0, 0.5, 3, 100, config) is RestartReason.NECESSARY
    assert restart_decision(0.7, 1.0, 0.9, 3, 100, config) is RestartReason.NONE
    assert restart_decision(0.9, 1.0, 0.5, 40, 100, config) is RestartReason.ARTIFICIAL


def test_sufficient_decay_threshold():
    config = SolverConfig(beta_sufficient=0.5, beta_necessary=0.9)
    assert restart_decision(0.5, 1.0, 0.1, 1, 100, config) is RestartReason.SUFFICIENT
    assert restart_decision(0.45, 1.0, 0.1, 1, 100, config) is RestartReason.SUFFICIENT
    # above the threshold and still decaying
    assert restart_decision(0.51, 1.0, 0.6, 1, 100, config) is RestartReason.NONE
    # the default threshold does not fire on the same residual
    assert restart_decision(0.45, 1.0, 0.5, 1, 100, SolverConfig()) is RestartReason.NONE


def test_necessary_decay_needs_lost_progress():
    config = SolverConfig(beta_sufficient=0.1, beta_necessary=0.6)
    assert restart_decision(0.55, 1.0, 0.5, 1, 100, config) is RestartReason.NECESSARY
    # equal to the previous residual is not an increase
    assert restart_decision(0.55, 1.0, 0.55, 1, 100, config) is RestartReason.NONE
    # increased but above the necessary threshold
    assert restart_decision(0.65, 1.0, 0.5, 1, 100, config) is RestartReason.NONE
    assert restart_decision(0.6, 1.0, 0.5, 1, 100, config) is RestartReason.NECESSARY


def test_artificial_restart_threshold():
    config = SolverConfig(beta_artificial=0.5)
    assert restart_decision(0.9, 1.0, 0.95, 50, 100, config) is RestartReason.NONE
    assert restart_decision(0.9, 1.0, 0.95, 51, 100, config) is RestartReason.ARTIFICIAL
    # sufficient decay wins over an overdue inner loop
    assert restart_decision(0.1, 1.0, 0.95, 51, 100, config) is RestartReason.SUFFICIENT


def test_only_artificial_restarts_with_decay_rules_out_of_reach(knapsack):
    config = SolverConfig(eps_opt=1e-6, beta_sufficient=1e-12, beta_necessary=2e-12, max_iterations=2000)
    result = solve(knapsack, config)
    assert result.restarts_by_reason["artificial"] > 0
    assert sum(result.restarts_by_reason.values()) == result.restarts


def test_no_artificial_restarts_with_an_unreachable_limit(knapsack):
    config = SolverConfig(eps_opt=1e-6, beta_sufficient=0.99, beta_necessary=0.995, beta_artificial=1e9)
    result = solve(knapsack, config)
    assert result.restarts_by_reason["artificial"] == 0
    assert result.restarts_by_reason["sufficient"] > 0


def test_apply_T_projects_onto_the_box(tiny):
    state = IterateState.initial(tiny)
    t = apply_T(state, tiny, _params(tiny))
    x = t.x_vector
    assert np.all(x >= 0.0) and np.all(x <= 1.0)
    # Only the upper row bound is finite, so y cannot go negative.
    assert t.y_vector[0] >= 0.0


def test_single_state_primitives(tiny):
    params = _params(tiny)
    config = SolverConfig()
    state = IterateState.initial(tiny)

    t = apply_T(state, tiny, params)
    residual = m_norm_residual(state, t, params)
    assert residual == pytest.approx(m_norm(tiny.A, t.x_vector - state.x, t.y_vector - state.y, params))

    state.residual = residual
    assert evaluate_restart(state, config) is RestartReason.NONE

    halpern_step(state, t)
    assert state.k == 1 and state.total == 1
    np.testing.assert_allclose(state.AX[:, 0], tiny.A.to_dense() @ state.x, atol=1e-12)

    state.restart_residual = residual
    state.previous_residual = residual
    state.residual = residual
    assert evaluate_restart(state, config) is RestartReason.ARTIFICIAL

    new_params = restart(state, params, config)
    assert state.k == 0 and state.n == 1
    x0, y0 = state.anchor
    np.testing.assert_array_equal(x0, state.x)
    np.testing.assert_array_equal(y0, state.y)
    assert new_params.eta == params.eta


def test_reduced_cost_modes(tiny):
    y = np.array([0.5])
    np.testing.assert_array_equal(reduced_cost(tiny, y), [0.5, 0.5])

    x = np.array([0.9, 0.4])
    np.testing.assert_array_equal(reduced_cost(tiny, y, x, ReducedCostMode.ACTIVE_BOUND), [0.5, 0.0])


def test_termination_at_the_optimum(tiny):
    state = IterateState(tiny, np.array([0.5, 0.5]), np.array([1.0]))
    check = check_termination(state, tiny, SolverConfig())
    assert check.optimal
    assert check.primal_objective == pytest.approx(-1.0)
    assert check.dual_objective == pytest.approx(-1.0)
    np.testing.assert_array_equal(check.r, [0.0, 0.0])


def test_solve_tiny(tiny):
    result = solve(tiny, TIGHT)
    assert result.status is SolveStatus.OPTIMAL
    assert result.objective == pytest.approx(-1.0, abs=1e-4)
    assert result.x.sum() == pytest.approx(1.0, abs=1e-4)
    assert result.relative_gap <= 1e-6
    assert result.iterations % TIGHT.termination_check_period == 0


def test_solve_matches_batch_of_one(knapsack):
    single = solve(knapsack, TIGHT)
    batch = solve_batch(BatchProblem.single(knapsack), TIGHT).results[0]

    assert single.status is batch.status
    assert single.iterations == batch.iterations
    np.testing.assert_array_equal(single.x, batch.x)
    np.testing.assert_array_equal(single.y, batch.y)


def test_knapsack_relaxation(knapsack):
    result = solve(knapsack, TIGHT)
    assert result.is_optimal
    assert result.objective == pytest.approx(-32.0 / 3.0, abs=1e-4 * (1.0 + 32.0 / 3.0))
    np.testing.assert_allclose(result.x, [1.0, 2.0 / 3.0, 1.0], atol=1e-3)


def test_primal_infeasible(infeasible):
    result = solve(infeasible, TIGHT)
    assert result.status is SolveStatus.PRIMAL_INFEASIBLE
    assert result.objective == inf
    assert result.certificate is not None
    assert result.certificate.delta_y[0] < 0.0


def test_dual_infeasible(unbounded_ray):
    result = solve(unbounded_ray, TIGHT)
    assert result.status is SolveStatus.DUAL_INFEASIBLE
    assert result.objective == -inf
    assert result.certificate.delta_x[0] > 0.0


def test_check_infeasibility_on_a_drifting_iterate(unbounded_ray):
    state = IterateState(unbounded_ray, np.array([5.0]), np.zeros(0))
    check = check_infeasibility(state, unbounded_ray, StepParams(eta=1.0, w=1.0), SolverConfig())
    assert check.status is SolveStatus.DUAL_INFEASIBLE
    assert check.probe.delta_x[0] == pytest.approx(1.0)


def test_zero_iterations_returns_the_start(tiny):
    result = solve(tiny, SolverConfig(max_iterations=0))
    assert result.status is SolveStatus.ITERATION_LIMIT
    assert result.iterations == 0
    np.testing.assert_array_equal(result.x, [0.0, 0.0])


def test_iteration_limit_keeps_last_iterate(tiny):
    result = solve(tiny, SolverConfig(max_iterations=1))
    assert result.status is SolveStatus.ITERATION_LIMIT
    assert result.iterations == 1
    assert np.all(result.x > 0.0)


def test_warm_start_at_the_optimum(tiny):
    result = solve(tiny, SolverConfig(max_iterations=0), initial=(np.array([0.5, 0.5]), np.array([1.0])))
    assert result.status is SolveStatus.OPTIMAL
    assert result.objective == pytest.approx(-1.0)


def test_free_and_fixed_variables():
    # min x1 + 2 x2 - x3, x1 + x2 >= 1, x2 - x3 = 0, x1 free, x2 in [0, 4], x3 fixed at 0.5
    problem = dense_problem(
        [[1.0, 1.0, 0.0], [0.0, 1.0, -1.0]],
        [1.0, 2.0, -1.0],
        [1.0, 0.0],
        [inf, 0.0],
        [-inf, 0.0, 0.5],
        [inf, 4.0, 0.5],
    )
    result = solve(problem, TIGHT)
    expected = oracle_solve(problem).objective
    assert result.is_optimal
    assert result.objective == pytest.approx(expected, abs=1e-4 * (1.0 + abs(expected)))


@pytest.mark.parametrize("seed", range(8))
def test_agrees_with_oracle(seed):
    problem = random_feasible_lp(seed)
    expected = oracle_solve(problem)
    result = solve(problem, TIGHT)

    assert result.is_optimal
    assert result.objective == pytest.approx(expected.objective, abs=1e-4 * (1.0 + abs(expected.objective)))


def test_restarts_fire(knapsack):
    result = solve(knapsack, TIGHT)
    assert result.restarts > 0
    assert sum(result.restarts_by_reason.values()) == result.restarts


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(100, 300))
def test_agrees_with_oracle_at_scale(seed):
    problem = random_feasible_lp(seed, m=4, n=5)
    expected = oracle_solve(problem)
    result = solve(problem, TIGHT)

    assert result.is_optimal
    assert result.objective == pytest.approx(expected.objective, abs=1e-4 * (1.0 + abs(expected.objective)))


def test_primal_weight_settles_on_a_hard_instance():
    # diverges when the weight is smoothed towards ||dx|| / ||dy||
    problem = random_feasible_lp(6)
    expected = oracle_solve(problem)
    result = solve(problem, SolverConfig(max_iterations=5000))

    assert result.is_optimal
    assert result.objective == pytest.approx(expected.objective, abs=1e-3 * (1.0 + abs(expected.objective)))

    tight = solve(problem, TIGHT)
    assert tight.is_optimal
    assert tight.objective == pytest.approx(expected.objective, abs=1e-4 * (1.0 + abs(expected.objective)))


def _assert_primal_infeasible(problem):
    assert oracle_solve(problem).status is OracleStatus.INFEASIBLE
    result = solve(problem)
    assert result.status is SolveStatus.PRIMAL_INFEASIBLE
    assert result.certificate is not None


def _assert_dual_infeasible(problem):
    assert oracle_solve(problem).status is OracleStatus.UNBOUNDED
    result = solve(problem)
    assert result.status is SolveStatus.DUAL_INFEASIBLE
    assert result.objective == -inf
    assert np.all(result.certificate.delta_x >= 0.0)


@pytest.mark.parametrize("seed", range(10))
def test_detects_primal_infeasibility(seed):
    _assert_primal_infeasible(random_primal_infeasible_lp(seed))


@pytest.mark.parametrize("seed", range(10))
def test_detects_dual_infeasibility(seed):
    _assert_dual_infeasible(random_dual_infeasible_lp(seed))


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(100, 200))
def test_detects_primal_infeasibility_at_scale(seed):
    _assert_primal_infeasible(random_primal_infeasible_lp(seed, m=4, n=5))


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(100, 200))
def test_detects_dual_infeasibility_at_scale(seed):
    _assert_dual_infeasible(random_dual_infeasible_lp(seed, m=4, n=5))


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(300, 400))
def test_feasible_problems_are_never_declared_infeasible(seed):
    result = solve(random_feasible_lp(seed, m=4, n=5))
    assert result.status is SolveStatus.OPTIMAL


def test_step_size_holds_when_ones_miss_the_top_singular_vector():
    # x0 = x1 = t is a ray along which the objective falls without bound
    problem = dense_problem(
        [[1.0, -1.0, 0.0], [0.0, 0.0, 1.0]],
        [-1.0, -1.0, 0.0],
        [-inf, -inf],
        [1.0, 1.0],
        np.zeros(3),
        np.full(3, inf),
    )
    assert STEP_FACTOR / matrix_norm(problem.A) * np.sqrt(2.0) < 1.0

    result = solve(problem, TIGHT)
    assert result.status is SolveStatus.DUAL_INFEASIBLE
    assert result.certificate.delta_x[0] == pytest.approx(result.certificate.delta_x[1])
