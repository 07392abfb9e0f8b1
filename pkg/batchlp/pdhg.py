from __future__ import annotations

import logging
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, confloat

from batchlp.bounds import (
    project_barrier_cone,
    project_box,
    project_recession_cone,
    support_function,
)
from batchlp.config import ReducedCostMode, SolverConfig
from batchlp.exceptions import StepSizeError
from batchlp.model import BatchProblem, ColumnData, LpProblem, SolveStatus
from batchlp.sparse import (
    SparseMatrix,
    as_block,
    column_dots,
    column_norms,
    new_block,
    spectral_norm,
    spmm,
)

_log = logging.getLogger("batchlp-pdhg")

STEP_FACTOR = 0.998
NEGATIVE_FORM_TOLERANCE = 1e-12


class StepParams(BaseModel):
    """
    The step size `eta` and primal weight `w`, giving `tau = eta / w` and
    `sigma = eta * w`. Together with A they fix the residual metric M.
    """

    eta: confloat(gt=0)
    w: confloat(gt=0)

    class Config:
        allow_mutation = False

    @property
    def tau(self) -> float:
        return self.eta / self.w

    @property
    def sigma(self) -> float:
        return self.eta * self.w

    @classmethod
    def from_norm(cls, norm: float, w: float = 1.0) -> StepParams:
        return cls(eta=STEP_FACTOR / norm, w=w)

    def with_weight(self, w: float) -> StepParams:
        return StepParams(eta=self.eta, w=w)


class RestartReason(Enum):
    NONE = "none"
    SUFFICIENT = "sufficient"
    NECESSARY = "necessary"
    ARTIFICIAL = "artificial"


class InfeasibilityProbe(BaseModel):
    delta_x: np.ndarray
    delta_y: np.ndarray
    delta_r: np.ndarray

    class Config:
        arbitrary_types_allowed = True


class TerminationCheck(BaseModel):
    optimal: bool
    primal_objective: float
    dual_objective: float
    relative_gap: float
    primal_residual: float
    dual_residual: float
    r: np.ndarray

    class Config:
        arbitrary_types_allowed = True


class InfeasibilityCheck(BaseModel):
    status: Optional[SolveStatus] = None
    probe: InfeasibilityProbe

    class Config:
        arbitrary_types_allowed = True


class SolveResult(BaseModel):
    """
    The outcome of one LP.

    `primal_residual` and `dual_residual` are the relative values compared
    against the tolerances, `relative_gap` is `|p - d| / (1 + |p| + |d|)`.
    Iteration limited results carry the last checked iterate.
    """

    status: SolveStatus
    objective: float
    dual_objective: float
    relative_gap: float
    primal_residual: float
    dual_residual: float
    x: np.ndarray
    y: np.ndarray
    r: np.ndarray
    iterations: int
    restarts: int
    restarts_by_reason: Dict[str, int] = {}
    spmv_count: int = 0
    certificate: Optional[InfeasibilityProbe] = None

    class Config:
        arbitrary_types_allowed = True

    @property
    def is_optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


def matrix_norm(A: SparseMatrix) -> float:
    """The ||A||_2 estimate behind the step size, 1 for a matrix without stored entries."""
    if A.nnz == 0:
        return 1.0
    return spectral_norm(A)


def quadratic_form(
    dx: np.ndarray, dy: np.ndarray, adx: np.ndarray, w, eta: float
) -> np.ndarray:
    """
    Per-column `||(dx, dy)||_M` given `adx = A dx`.

    Raises:
        StepSizeError:
            The form is clearly negative, i.e. `eta * ||A||_2 >= 1`.
    """

    primal = (w / eta) * column_dots(dx, dx)
    dual = column_dots(dy, dy) / (eta * w)
    q = primal + dual + 2.0 * column_dots(dy, adx)

    floor = -NEGATIVE_FORM_TOLERANCE * np.maximum(1.0, primal + dual)
    if np.any(q < floor):
        raise StepSizeError(float(np.min(q)))
    return np.sqrt(np.maximum(q, 0.0))


def m_norm(A: SparseMatrix, dx: np.ndarray, dy: np.ndarray, params: StepParams) -> float:
    """`||(dx, dy)||_M` of one displacement pair."""
    adx = spmm(A, as_block(dx))
    return float(quadratic_form(as_block(dx), as_block(dy), adx, params.w, params.eta)[0])


def smooth_weights(w: np.ndarray, dx_norm: np.ndarray, dy_norm: np.ndarray, theta: float) -> np.ndarray:
    """
    Exponential smoothing of per-column primal weights towards
    `d = ||dy|| / ||dx||`, the weight that balances the primal and dual
    displacements under `tau = eta / w`, `sigma = eta * w`. Columns where `d`
    is zero or not finite keep `w`.
    """

    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.asarray(dy_norm, dtype=np.float64) / np.asarray(dx_norm, dtype=np.float64)

    out = np.array(w, dtype=np.float64)
    ok = np.isfinite(d) & (d > 0.0)
    out[ok] = np.exp(theta * np.log(d[ok]) + (1.0 - theta) * np.log(out[ok]))
    return out


def restart_decision(
    residual: float,
    restart_residual: float,
    previous_residual: float,
    k: int,
    total: int,
    config: SolverConfig,
) -> RestartReason:
    if residual <= config.beta_sufficient * restart_residual:
        return RestartReason.SUFFICIENT
    if residual <= config.beta_necessary * restart_residual and residual > previous_residual:
        return RestartReason.NECESSARY
    if k > config.beta_artificial * total:
        return RestartReason.ARTIFICIAL
    return RestartReason.NONE


def _active_bound_cost(g, x, lower, upper):
    near = np.abs(x)
    with np.errstate(invalid="ignore"):
        use_upper = (g > 0.0) & np.isfinite(upper) & (np.abs(x - upper) <= near)
        use_lower = (g < 0.0) & np.isfinite(lower) & (np.abs(x - lower) <= near)
    return np.where(use_upper | use_lower, g, 0.0)


def _halpern(X, Y, AX, X0, Y0, AX0, t: TOutput, k: int, width: int):
    # A X follows by linearity: A(2 T(x) - x) is the reflected product of the step.
    a = (k + 1.0) / (k + 2.0)
    b = 1.0 / (k + 2.0)
    X[:, :width] = a * (2.0 * t.x - X[:, :width]) + b * X0[:, :width]
    Y[:, :width] = a * (2.0 * t.y - Y[:, :width]) + b * Y0[:, :width]
    AX[:, :width] = a * t.a_reflected + b * AX0[:, :width]


class TOutput:
    """Views of `T(Z)` for the active columns plus the two products computed on the way."""

    __slots__ = ("x", "y", "aty", "a_reflected")

    def __init__(self, x: np.ndarray, y: np.ndarray, aty: np.ndarray, a_reflected: np.ndarray):
        self.x = x
        self.y = y
        self.aty = aty
        self.a_reflected = a_reflected

    @property
    def x_vector(self) -> np.ndarray:
        return self.x[:, 0]

    @property
    def y_vector(self) -> np.ndarray:
        return self.y[:, 0]


class ColumnChecks:
    """Termination and infeasibility findings for the active columns of one sweep."""

    def __init__(self, width: int):
        self.width = width
        self.primal_objective = np.zeros(width)
        self.dual_objective = np.zeros(width)
        self.relative_gap = np.zeros(width)
        self.primal_residual = np.zeros(width)
        self.dual_residual = np.zeros(width)
        self.optimal = np.zeros(width, dtype=bool)
        self.primal_infeasible = np.zeros(width, dtype=bool)
        self.dual_infeasible = np.zeros(width, dtype=bool)
        self.r: Optional[np.ndarray] = None
        self.delta_x: Optional[np.ndarray] = None
        self.delta_y: Optional[np.ndarray] = None
        self.delta_r: Optional[np.ndarray] = None

    def status(self, p: int) -> Optional[SolveStatus]:
        if self.optimal[p]:
            return SolveStatus.OPTIMAL
        if self.primal_infeasible[p]:
            return SolveStatus.PRIMAL_INFEASIBLE
        if self.dual_infeasible[p]:
            return SolveStatus.DUAL_INFEASIBLE
        return None

    def probe(self, p: int) -> Optional[InfeasibilityProbe]:
        if self.delta_x is None:
            return None
        return InfeasibilityProbe(
            delta_x=self.delta_x[:, p].copy(),
            delta_y=self.delta_y[:, p].copy(),
            delta_r=self.delta_r[:, p].copy(),
        )


class PdhgKernels:
    """
    The solver arithmetic on the leading `width` columns of iterate blocks.

    Blocks handed in may be wider than `width` (workspace capacity), only their
    leading columns are read or written. Per-column step parameters come in as
    arrays over the active columns, a batch of one runs exactly the code a
    batch of many runs.
    """

    def __init__(self, A: SparseMatrix, data: ColumnData, width: Optional[int] = None):
        self.A = A
        self.data = data
        self.width = data.width if width is None else width
        self.perm = np.arange(data.width)
        self.pos = np.arange(data.width)
        self.spmm_count = 0

    def spmm(self, X: np.ndarray, transpose: bool = False, out: Optional[np.ndarray] = None):
        self.spmm_count += 1
        return spmm(self.A, X, transpose, active_width=self.width, out=out)[:, : self.width]

    def swap(self, p: int, q: int):
        """Exchanges positions p and q of the permutation."""
        a, b = self.perm[p], self.perm[q]
        self.perm[p], self.perm[q] = b, a
        self.pos[a], self.pos[b] = q, p

    def apply_T(
        self,
        X: np.ndarray,
        Y: np.ndarray,
        tau: np.ndarray,
        sigma: np.ndarray,
        out: TOutput,
    ) -> TOutput:
        """
        One application of the PDHG operator, two sparse products in total.

        `out` holds the buffers to write into, the returned `TOutput` holds
        views of their active columns.
        """

        W = self.width
        data = self.data
        x, y = X[:, :W], Y[:, :W]

        aty = self.spmm(Y, True, out=out.aty)
        grad = data.gradient(aty, self.perm, self.pos, W)
        x_new = data.apply(project_box, self.pos, W, x - tau * grad)
        out.x[:, :W] = x_new

        a_reflected = self.spmm(2.0 * x_new - x, out=out.a_reflected)
        shifted = y / sigma + a_reflected
        out.y[:, :W] = (
            y + sigma * a_reflected - sigma * project_box(shifted, data.row_lower, data.row_upper)
        )

        return TOutput(out.x[:, :W], out.y[:, :W], aty, a_reflected)

    def residuals(
        self, X: np.ndarray, Y: np.ndarray, AX: np.ndarray, t: TOutput, w: np.ndarray, eta: float
    ) -> np.ndarray:
        W = self.width
        dx = t.x - X[:, :W]
        dy = t.y - Y[:, :W]
        adx = 0.5 * (t.a_reflected - AX[:, :W])
        return quadratic_form(dx, dy, adx, w[:W], eta)

    def halpern(self, X, Y, AX, X0, Y0, AX0, t: TOutput, k: int):
        _halpern(X, Y, AX, X0, Y0, AX0, t, k, self.width)

    def reduced_cost(self, grad: np.ndarray, x: np.ndarray, mode: ReducedCostMode) -> np.ndarray:
        if mode is ReducedCostMode.ACTIVE_BOUND:
            return self.data.apply(_active_bound_cost, self.pos, self.width, -grad, x)
        return self.data.apply(project_barrier_cone, self.pos, self.width, -grad)

    def optimality(
        self,
        x: np.ndarray,
        y: np.ndarray,
        ax: np.ndarray,
        grad: np.ndarray,
        config: SolverConfig,
        checks: Optional[ColumnChecks] = None,
    ) -> ColumnChecks:
        """Gap, primal residual and dual residual of `(x, y)` given `A x` and `c + A^T y`."""
        W = self.width
        data = self.data
        checks = checks or ColumnChecks(W)

        r = self.reduced_cost(grad, x, config.reduced_cost_mode)
        primal = data.objective_values(x, self.perm, self.pos, W)
        phi = support_function(y, data.row_lower, data.row_upper, axis=0) + data.support(
            r, self.pos, W
        )

        with np.errstate(invalid="ignore"):
            gap = np.abs(primal + phi) / (1.0 + np.abs(primal) + np.abs(phi))

        primal_residual = column_norms(
            ax - project_box(ax, data.row_lower, data.row_upper)
        ) / (1.0 + column_norms(ax))
        dual_residual = column_norms(grad + r) / (1.0 + data.objective_norms(self.perm, W))

        checks.r = r
        checks.primal_objective = primal
        checks.dual_objective = -phi
        checks.relative_gap = gap
        checks.primal_residual = primal_residual
        checks.dual_residual = dual_residual
        checks.optimal = (
            (gap <= config.eps_opt)
            & (primal_residual <= config.eps_opt)
            & (dual_residual <= config.dual_tolerance)
        )
        return checks

    def infeasibility(
        self,
        dx: np.ndarray,
        dy: np.ndarray,
        dr: np.ndarray,
        atdy: np.ndarray,
        adx: np.ndarray,
        config: SolverConfig,
        checks: ColumnChecks,
    ) -> ColumnChecks:
        """Certificate conditions on the displacement vectors, `atdy = A^T dy` and `adx = A dx`."""
        W = self.width
        data = self.data
        eps = config.eps_infeas

        s = support_function(dy, data.row_lower, data.row_upper, axis=0) + data.support(
            dr, self.pos, W
        )
        with np.errstate(invalid="ignore"):
            checks.primal_infeasible = (s < 0.0) & (column_norms(atdy + dr) <= eps * np.abs(s))

        cdx = data.objective_values(dx, self.perm, self.pos, W)
        box_gap = column_norms(dx - data.apply(project_recession_cone, self.pos, W, dx))
        row_gap = column_norms(adx - project_recession_cone(adx, data.row_lower, data.row_upper))
        checks.dual_infeasible = (
            (cdx < 0.0) & (box_gap <= eps * np.abs(cdx)) & (row_gap <= eps * np.abs(cdx))
        )

        checks.delta_x = dx
        checks.delta_y = dy
        checks.delta_r = dr
        return checks

    def probe(
        self,
        x: np.ndarray,
        y: np.ndarray,
        aty: np.ndarray,
        x_new: np.ndarray,
        y_new: np.ndarray,
        r_new: np.ndarray,
        adx: np.ndarray,
        config: SolverConfig,
        checks: ColumnChecks,
        scratch: Optional[np.ndarray] = None,
    ) -> ColumnChecks:
        """
        Builds the displacement vectors of the step `(x, y) -> (x_new, y_new)` and
        evaluates both certificates. `aty` is `A^T y` of the old iterate.
        """

        data = self.data
        W = self.width
        r_old = data.apply(
            project_barrier_cone, self.pos, W, -data.gradient(aty, self.perm, self.pos, W)
        )

        dx = x_new - x
        dy = project_barrier_cone(y_new - y, data.row_lower, data.row_upper)
        dr = data.apply(project_barrier_cone, self.pos, W, r_new - r_old)
        atdy = self.spmm(np.asfortranarray(dy), True, out=scratch)
        return self.infeasibility(dx, dy, dr, atdy, adx, config, checks)


class IterateState:
    """
    The iterate of the single instance solver.

    Vectors are kept as one column blocks so every update runs through the same
    kernels the batched solver uses. `A x` of the iterate and of the anchor are
    carried along so residuals cost no extra products.
    """

    def __init__(self, problem: LpProblem, x: np.ndarray, y: np.ndarray):
        self.X = np.array(as_block(x), order="F")
        self.Y = np.array(as_block(y), order="F")
        self.X0 = self.X.copy(order="F")
        self.Y0 = self.Y.copy(order="F")
        self.AX = spmm(problem.A, self.X)
        self.AX0 = self.AX.copy(order="F")

        self.k = 0
        self.n = 0
        self.total = 0
        self.residual: Optional[float] = None
        self.restart_residual: Optional[float] = None
        self.previous_residual: Optional[float] = None

    @classmethod
    def initial(cls, problem: LpProblem) -> IterateState:
        """The cold start `(proj(0), 0)`."""
        x = project_box(np.zeros(problem.n), problem.var_lower, problem.var_upper)
        return cls(problem, x, np.zeros(problem.m))

    @property
    def x(self) -> np.ndarray:
        return self.X[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.Y[:, 0]

    @property
    def anchor(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.X0[:, 0], self.Y0[:, 0]


def _single_kernels(problem: LpProblem) -> PdhgKernels:
    return PdhgKernels(problem.A, BatchProblem.single(problem).column_data())


def _buffers(n: int, m: int) -> TOutput:
    return TOutput(new_block(n, 1), new_block(m, 1), new_block(n, 1), new_block(m, 1))


def apply_T(state: IterateState, problem: LpProblem, params: StepParams) -> TOutput:
    """
    `x+ = proj_X(x - tau (c + A^T y))` and
    `y+ = y + sigma A(2x+ - x) - sigma proj_[l,u](y / sigma + A(2x+ - x))`.
    """

    kernels = _single_kernels(problem)
    return kernels.apply_T(
        state.X,
        state.Y,
        np.array([params.tau]),
        np.array([params.sigma]),
        _buffers(problem.n, problem.m),
    )


def halpern_step(state: IterateState, t_out: TOutput) -> IterateState:
    """`z+ = (k+1)/(k+2) (2 T(z) - z) + 1/(k+2) z0`, advancing k and K."""
    _halpern(state.X, state.Y, state.AX, state.X0, state.Y0, state.AX0, t_out, state.k, 1)
    state.k += 1
    state.total += 1
    return state


def m_norm_residual(state: IterateState, t_out: TOutput, params: StepParams) -> float:
    """`||T(z) - z||_M` reusing the products of the step, no extra SpMV."""
    dx = t_out.x - state.X
    dy = t_out.y - state.Y
    adx = 0.5 * (t_out.a_reflected - state.AX)
    return float(quadratic_form(dx, dy, adx, params.w, params.eta)[0])


def evaluate_restart(state: IterateState, config: SolverConfig) -> RestartReason:
    """Applies the three restart rules to the residual history of `state`."""
    if state.k == 0 or state.residual is None:
        return RestartReason.NONE
    return restart_decision(
        state.residual,
        state.restart_residual,
        state.previous_residual,
        state.k,
        state.total,
        config,
    )


def update_primal_weight(state: IterateState, params: StepParams, config: SolverConfig) -> StepParams:
    """Smooths w towards the ratio of the dual and primal anchor displacements."""
    dx = np.linalg.norm(state.X - state.X0)
    dy = np.linalg.norm(state.Y - state.Y0)
    w = smooth_weights(np.array([params.w]), np.array([dx]), np.array([dy]), config.theta)
    return params.with_weight(float(w[0]))


def restart(state: IterateState, params: StepParams, config: SolverConfig) -> StepParams:
    """Re-anchors at the current iterate and returns the updated step parameters."""
    params = update_primal_weight(state, params, config)
    state.X0[:] = state.X
    state.Y0[:] = state.Y
    state.AX0[:] = state.AX
    state.restart_residual = state.residual
    state.k = 0
    state.n += 1
    return params


def reduced_cost(
    problem: LpProblem,
    y: np.ndarray,
    x: Optional[np.ndarray] = None,
    mode: ReducedCostMode = ReducedCostMode.BARRIER_CONE,
) -> np.ndarray:
    """
    The reduced cost of `y`. The barrier cone mode projects `-c - A^T y`, the
    active bound mode keeps only the components whose bound is near `x`.
    """

    kernels = _single_kernels(problem)
    grad = kernels.data.gradient(spmm(problem.A, as_block(y), True), kernels.perm, kernels.pos, 1)
    x_block = as_block(x if x is not None else np.zeros(problem.n))
    return kernels.reduced_cost(grad, x_block, mode)[:, 0]


def check_termination(
    state: IterateState, problem: LpProblem, config: SolverConfig
) -> TerminationCheck:
    """Evaluates the optimality conditions at the iterate held by `state`."""
    kernels = _single_kernels(problem)
    aty = spmm(problem.A, state.Y, True)
    ax = spmm(problem.A, state.X)
    grad = kernels.data.gradient(aty, kernels.perm, kernels.pos, 1)
    checks = kernels.optimality(state.X, state.Y, ax, grad, config)
    return TerminationCheck(
        optimal=bool(checks.optimal[0]),
        primal_objective=float(checks.primal_objective[0]),
        dual_objective=float(checks.dual_objective[0]),
        relative_gap=float(checks.relative_gap[0]),
        primal_residual=float(checks.primal_residual[0]),
        dual_residual=float(checks.dual_residual[0]),
        r=checks.r[:, 0].copy(),
    )


def check_infeasibility(
    state: IterateState, problem: LpProblem, params: StepParams, config: SolverConfig
) -> InfeasibilityCheck:
    """
    Applies T once from the iterate of `state` and tests the displacement
    vectors for a primal or dual infeasibility certificate.
    """

    kernels = _single_kernels(problem)
    t = kernels.apply_T(
        state.X,
        state.Y,
        np.array([params.tau]),
        np.array([params.sigma]),
        _buffers(problem.n, problem.m),
    )
    aty_new = spmm(problem.A, t.y, True)
    ax_new = spmm(problem.A, t.x)
    r_new = kernels.reduced_cost(
        kernels.data.gradient(aty_new, kernels.perm, kernels.pos, 1),
        t.x,
        ReducedCostMode.BARRIER_CONE,
    )
    checks = kernels.probe(
        state.X,
        state.Y,
        t.aty,
        t.x,
        t.y,
        r_new,
        t.a_reflected - ax_new,
        config,
        ColumnChecks(1),
    )
    return InfeasibilityCheck(status=checks.status(0), probe=checks.probe(0))


def solve(
    problem: LpProblem,
    config: Optional[SolverConfig] = None,
    initial: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    norm: Optional[float] = None,
) -> SolveResult:
    """
    Solves one LP with restarted reflected Halpern PDHG.

    The iteration is exactly the batched solver's on a batch of one, so both
    produce identical trajectories.

    Args:
        problem:
            The LP to solve.

        config:
            Solver settings, the defaults when omitted.

        initial:
            An optional starting pair `(x, y)`, the cold start `(proj(0), 0)` otherwise.

        norm:
            A precomputed `||A||_2` estimate, estimated when omitted.
    """

    from batchlp.batch import solve_batch

    outcome = solve_batch(BatchProblem.single(problem), config, initial=initial, norm=norm)
    return outcome.results[0]
