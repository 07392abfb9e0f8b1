from __future__ import annotations

import logging
import time
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from batchlp.bounds import project_box
from batchlp.config import ReducedCostMode, SolverConfig
from batchlp.exceptions import DimensionMismatch
from batchlp.model import BatchProblem, Presolved, SolveStatus
from batchlp.pdhg import (
    STEP_FACTOR,
    ColumnChecks,
    PdhgKernels,
    RestartReason,
    SolveResult,
    TOutput,
    matrix_norm,
    restart_decision,
    smooth_weights,
)
from batchlp.sparse import column_norms, new_block

_log = logging.getLogger("batchlp-batch")

_PRIMAL_BLOCKS = ("x", "x0", "xt", "aty", "aty_check", "scratch")
_DUAL_BLOCKS = ("y", "y0", "ax", "ax0", "yt", "a_reflected", "ax_check")


class BatchWorkspace:
    """
    Iterate blocks reused across batch solves on one matrix.

    Blocks are sized for the widest batch seen so far and serve every narrower
    one, they are never shrunk. FSB rounds with a falling number of fractional
    variables keep the first round's allocation.
    """

    def __init__(self, n: int, m: int, capacity: int = 0):
        self.n = n
        self.m = m
        self.capacity = 0
        self.allocations = 0
        self._blocks: Dict[str, np.ndarray] = {}
        if capacity:
            self.ensure(capacity)

    def ensure(self, width: int):
        if width <= self.capacity:
            return

        for name in _PRIMAL_BLOCKS:
            self._blocks[name] = new_block(self.n, width)
        for name in _DUAL_BLOCKS:
            self._blocks[name] = new_block(self.m, width)

        _log.debug(f"workspace grown from {self.capacity} to {width} columns")
        self.capacity = width
        self.allocations += 1

    def block(self, name: str, width: int) -> np.ndarray:
        return self._blocks[name][:, :width]


class BatchState:
    """
    The state of one batched solve.

    Columns are stored permuted: position p holds original problem `perm[p]`.
    Positions `>= active_width` are frozen, their results live in `results`
    and the blocks are never written there again.
    """

    def __init__(
        self,
        batch: BatchProblem,
        config: SolverConfig,
        workspace: BatchWorkspace,
        eta: float,
        initial: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    ):
        N = batch.width
        self.batch = batch
        self.config = config
        self.workspace = workspace
        self.eta = eta
        self.width = N

        self.kernels = PdhgKernels(batch.base.A, batch.column_data())
        self.data = self.kernels.data

        self.X = workspace.block("x", N)
        self.Y = workspace.block("y", N)
        self.X0 = workspace.block("x0", N)
        self.Y0 = workspace.block("y0", N)
        self.AX = workspace.block("ax", N)
        self.AX0 = workspace.block("ax0", N)
        self.buffers = TOutput(
            workspace.block("xt", N),
            workspace.block("yt", N),
            workspace.block("aty", N),
            workspace.block("a_reflected", N),
        )

        self.w = np.full(N, config.w_init, dtype=np.float64)
        self.last_residual = np.zeros(N)

        self.k = 0
        self.n = 0
        self.total = 0
        self.anchor_iteration = 0
        self.restart_residual: Optional[float] = None
        self.previous_residual: Optional[float] = None
        self.restarts_by_reason = {
            reason.value: 0 for reason in RestartReason if reason is not RestartReason.NONE
        }
        self.results: Dict[int, SolveResult] = {}

        unresolved = [j for j in range(N) if j not in batch.presolved]
        order = np.array(unresolved + sorted(batch.presolved), dtype=np.int64)
        self.kernels.perm[:] = order
        self.kernels.pos[order] = np.arange(N)
        self.active_width = len(unresolved)

        for j, known in batch.presolved.items():
            self.results[j] = self._presolved_result(known)

        self._initialize(initial)

    @property
    def perm(self) -> np.ndarray:
        return self.kernels.perm

    @property
    def pos(self) -> np.ndarray:
        return self.kernels.pos

    @property
    def active_width(self) -> int:
        return self.kernels.width

    @active_width.setter
    def active_width(self, value: int):
        self.kernels.width = value

    def _initialize(self, initial):
        W = self.active_width
        N = self.width
        n, m = self.batch.n, self.batch.m

        self.X[:] = 0.0
        self.Y[:] = 0.0
        if initial is None:
            self.X[:, :W] = self.data.apply(project_box, self.pos, W, np.zeros((n, W), order="F"))
        else:
            x0, y0 = (np.asarray(v, dtype=np.float64) for v in initial)
            if x0.ndim == 1:
                x0 = np.repeat(x0.reshape(-1, 1), N, axis=1)
            if y0.ndim == 1:
                y0 = np.repeat(y0.reshape(-1, 1), N, axis=1)
            if x0.shape != (n, N) or y0.shape != (m, N):
                raise DimensionMismatch(
                    f"initial iterate shapes {x0.shape}, {y0.shape} do not match ({n}, {N}), ({m}, {N})"
                )
            self.X[:, :W] = x0[:, self.perm[:W]]
            self.Y[:, :W] = y0[:, self.perm[:W]]

        self.AX[:] = 0.0
        self.kernels.spmm(self.X, out=self.AX)
        self.X0[:] = self.X
        self.Y0[:] = self.Y
        self.AX0[:] = self.AX

    def _presolved_result(self, known: Presolved) -> SolveResult:
        n, m = self.batch.n, self.batch.m
        optimal = known.status is SolveStatus.OPTIMAL
        return SolveResult(
            status=known.status,
            objective=known.objective,
            dual_objective=known.objective if optimal else np.nan,
            relative_gap=0.0 if optimal else np.nan,
            primal_residual=0.0 if optimal else np.nan,
            dual_residual=0.0 if optimal else np.nan,
            x=np.zeros(n),
            y=np.zeros(m),
            r=np.zeros(n),
            iterations=0,
            restarts=0,
            restarts_by_reason={},
            spmv_count=0,
        )

    def swap(self, p: int, q: int):
        """Exchanges columns p and q of every block and of the permutation."""
        if p == q:
            return

        cols = [p, q]
        flipped = [q, p]
        for block in (
            self.X,
            self.Y,
            self.X0,
            self.Y0,
            self.AX,
            self.AX0,
            self.buffers.x,
            self.buffers.y,
            self.buffers.a_reflected,
        ):
            block[:, cols] = block[:, flipped]

        self.w[cols] = self.w[flipped]
        self.last_residual[cols] = self.last_residual[flipped]
        self.kernels.swap(p, q)

    def tau(self) -> np.ndarray:
        return self.eta / self.w[: self.active_width]

    def sigma(self) -> np.ndarray:
        return self.eta * self.w[: self.active_width]


class BatchSolveResult(BaseModel):
    """Per-problem results in original order plus batch wide counters."""

    results: List[SolveResult]
    iterations: int
    restarts: int
    restarts_by_reason: Dict[str, int]
    spmm_count: int
    norm: float
    eta: float
    norm_seconds: float = 0.0
    solve_seconds: float = 0.0
    workspace_capacity: int = 0

    class Config:
        arbitrary_types_allowed = True

    @property
    def statuses(self) -> List[SolveStatus]:
        return [res.status for res in self.results]

    @property
    def objectives(self) -> np.ndarray:
        return np.array([res.objective for res in self.results])


def apply_T_batch(state: BatchState) -> TOutput:
    """The operator T on every active column with its own `tau_j` and `sigma_j`."""
    return state.kernels.apply_T(state.X, state.Y, state.tau(), state.sigma(), state.buffers)


def batch_residual(state: BatchState, t: TOutput) -> Tuple[float, np.ndarray]:
    """
    Per-column M_j residuals of the active columns and their mean.

    The mean runs over the active columns, or over all N when
    `average_over_all_columns` is set (frozen columns then count with the
    residual they were frozen with).
    """

    W = state.active_width
    per_column = state.kernels.residuals(state.X, state.Y, state.AX, t, state.w, state.eta)
    state.last_residual[:W] = per_column

    if state.config.average_over_all_columns:
        return float(np.mean(state.last_residual)), per_column
    return float(np.mean(per_column)), per_column


def batch_restart(state: BatchState, residual: float) -> RestartReason:
    """
    Evaluates the restart rules on the averaged residual. A restart re-anchors
    every active column at once and smooths each `w_j` from its own column
    displacement.
    """

    config = state.config
    if state.k == 0:
        if state.restart_residual is None:
            state.restart_residual = residual
        state.previous_residual = residual
        return RestartReason.NONE

    reason = restart_decision(
        residual, state.restart_residual, state.previous_residual, state.k, state.total, config
    )
    state.previous_residual = residual
    if reason is RestartReason.NONE:
        return reason

    W = state.active_width
    dx = column_norms(state.X[:, :W] - state.X0[:, :W])
    dy = column_norms(state.Y[:, :W] - state.Y0[:, :W])
    state.w[:W] = smooth_weights(state.w[:W], dx, dy, config.theta)

    state.X0[:, :W] = state.X[:, :W]
    state.Y0[:, :W] = state.Y[:, :W]
    state.AX0[:, :W] = state.AX[:, :W]

    if reason is RestartReason.SUFFICIENT:
        assert residual <= state.restart_residual, "anchor residual increased on sufficient decay"

    _log.debug(
        f"restart {state.n + 1} ({reason.value}) at iteration {state.total}, k={state.k}, "
        f"residual {residual:.3e} from {state.restart_residual:.3e}"
    )

    state.restart_residual = residual
    state.k = 0
    state.n += 1
    state.anchor_iteration = state.total
    state.restarts_by_reason[reason.value] += 1
    return reason


def _column_result(
    state: BatchState,
    checks: ColumnChecks,
    t: TOutput,
    p: int,
    status: SolveStatus,
    iteration: int,
) -> SolveResult:
    objective = float(checks.primal_objective[p])
    if status is SolveStatus.PRIMAL_INFEASIBLE:
        objective = np.inf
    elif status is SolveStatus.DUAL_INFEASIBLE:
        objective = -np.inf

    infeasible = status in (SolveStatus.PRIMAL_INFEASIBLE, SolveStatus.DUAL_INFEASIBLE)
    return SolveResult(
        status=status,
        objective=objective,
        dual_objective=float(checks.dual_objective[p]),
        relative_gap=float(checks.relative_gap[p]),
        primal_residual=float(checks.primal_residual[p]),
        dual_residual=float(checks.dual_residual[p]),
        x=t.x[:, p].copy(),
        y=t.y[:, p].copy(),
        r=checks.r[:, p].copy(),
        iterations=iteration,
        restarts=state.n,
        restarts_by_reason=dict(state.restarts_by_reason),
        spmv_count=state.kernels.spmm_count,
        certificate=checks.probe(p) if infeasible else None,
    )


def _evaluate(state: BatchState, t: TOutput) -> ColumnChecks:
    config = state.config
    kernels = state.kernels
    ws = state.workspace
    N = state.width

    aty_new = kernels.spmm(t.y, True, out=ws.block("aty_check", N))
    ax_new = kernels.spmm(t.x, out=ws.block("ax_check", N))
    grad = state.data.gradient(aty_new, state.perm, state.pos, state.active_width)
    checks = kernels.optimality(t.x, t.y, ax_new, grad, config)

    if config.check_infeasibility:
        r_new = checks.r
        if config.reduced_cost_mode is not ReducedCostMode.BARRIER_CONE:
            r_new = kernels.reduced_cost(grad, t.x, ReducedCostMode.BARRIER_CONE)
        W = state.active_width
        kernels.probe(
            state.X[:, :W],
            state.Y[:, :W],
            t.aty,
            t.x,
            t.y,
            r_new,
            t.a_reflected - ax_new,
            config,
            checks,
            scratch=ws.block("scratch", N),
        )

    # A x of the iterate from fresh products, drops the drift of the linear update.
    state.AX[:, : state.active_width] = 2.0 * ax_new - t.a_reflected
    return checks


def termination_sweep(state: BatchState, t: TOutput, final: bool = False) -> TOutput:
    """
    Checks every active column on the T output and freezes the finished ones.

    Finished columns are handled in ascending original index, each swapped with
    the last active column. With `final` set every remaining column is frozen,
    those without a verdict as iteration limited. Returns `t` narrowed to the
    remaining active columns.
    """

    W = state.active_width
    iteration = state.total + 1
    checks = _evaluate(state, t)

    finished = []
    for p in range(W):
        status = checks.status(p)
        if status is None and not final:
            continue
        if status is None:
            status = SolveStatus.ITERATION_LIMIT
        orig = int(state.perm[p])
        state.results[orig] = _column_result(state, checks, t, p, status, iteration)
        finished.append(orig)

    if _log.isEnabledFor(logging.DEBUG) and W:
        _log.debug(
            f"sweep at iteration {iteration}: {len(finished)}/{W} finished, "
            f"max gap {np.nanmax(checks.relative_gap):.2e}, "
            f"max primal {np.max(checks.primal_residual):.2e}, "
            f"max dual {np.max(checks.dual_residual):.2e}"
        )

    for orig in sorted(finished):
        last = state.active_width - 1
        p = int(state.pos[orig])
        if p != last:
            _log.debug(f"column {orig} frozen, swapping positions {p} and {last}")
        state.swap(p, last)
        state.active_width = last

    W = state.active_width
    buffers = state.buffers
    return TOutput(buffers.x[:, :W], buffers.y[:, :W], buffers.aty[:, :W], buffers.a_reflected[:, :W])


def _freeze_unstarted(state: BatchState):
    W = state.active_width
    N = state.width
    kernels = state.kernels
    ws = state.workspace

    aty = kernels.spmm(state.Y, True, out=ws.block("aty_check", N))
    grad = state.data.gradient(aty, state.perm, state.pos, W)
    checks = kernels.optimality(state.X[:, :W], state.Y[:, :W], state.AX[:, :W], grad, state.config)
    start = TOutput(state.X[:, :W], state.Y[:, :W], aty, state.AX[:, :W])

    for p in range(W):
        status = SolveStatus.OPTIMAL if checks.optimal[p] else SolveStatus.ITERATION_LIMIT
        orig = int(state.perm[p])
        state.results[orig] = _column_result(state, checks, start, p, status, 0)
    state.active_width = 0


def solve_batch(
    batch: BatchProblem,
    config: Optional[SolverConfig] = None,
    *,
    initial: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    norm: Optional[float] = None,
    workspace: Optional[BatchWorkspace] = None,
) -> BatchSolveResult:
    """
    Solves every column of the batch with synchronized restarts.

    Args:
        batch:
            The problems. A cutoff row is appended before solving.

        config:
            Solver settings shared by every column.

        initial:
            An optional starting pair `(x, y)`, vectors are used for every
            column, `(n, N)` and `(m, N)` blocks give one start per column.

        norm:
            A precomputed `||A||_2` estimate of the matrix after the cutoff row.

        workspace:
            Blocks to reuse, grown when the batch is wider than its capacity.
    """

    config = config or SolverConfig()
    batch = batch.with_cutoff()
    A = batch.base.A
    N = batch.width

    started = time.perf_counter()
    if norm is None:
        norm = matrix_norm(A)
    norm_seconds = time.perf_counter() - started
    eta = STEP_FACTOR / norm

    if workspace is None:
        workspace = BatchWorkspace(batch.n, batch.m)
    elif (workspace.n, workspace.m) != (batch.n, batch.m):
        raise DimensionMismatch(
            f"workspace is for {workspace.m}x{workspace.n} matrices, batch has {batch.m}x{batch.n}"
        )
    workspace.ensure(max(N, 1))

    started = time.perf_counter()
    state = BatchState(batch, config, workspace, eta, initial)
    _log.info(
        f"solving batch of {N} ({state.active_width} active) on a "
        f"{batch.m}x{batch.n} matrix, eta={eta:.4e}"
    )

    if config.max_iterations == 0 and state.active_width:
        _freeze_unstarted(state)

    period = config.termination_check_period
    kernels = state.kernels
    while state.active_width > 0:
        t = apply_T_batch(state)
        iteration = state.total + 1

        if iteration % period == 0 or iteration >= config.max_iterations:
            t = termination_sweep(state, t, final=iteration >= config.max_iterations)
            if state.active_width == 0:
                state.total = iteration
                break

        residual, _ = batch_residual(state, t)
        batch_restart(state, residual)

        kernels.halpern(state.X, state.Y, state.AX, state.X0, state.Y0, state.AX0, t, state.k)
        state.k += 1
        state.total += 1

    solve_seconds = time.perf_counter() - started
    results = [state.results[j] for j in range(N)]

    counts: Dict[str, int] = {}
    for res in results:
        counts[res.status.value] = counts.get(res.status.value, 0) + 1
    _log.info(
        f"batch of {N} done after {state.total} iterations, {state.n} restarts, "
        f"{kernels.spmm_count} products, statuses {counts}"
    )

    return BatchSolveResult(
        results=results,
        iterations=state.total,
        restarts=state.n,
        restarts_by_reason=dict(state.restarts_by_reason),
        spmm_count=kernels.spmm_count,
        norm=norm,
        eta=eta,
        norm_seconds=norm_seconds,
        solve_seconds=solve_seconds,
        workspace_capacity=workspace.capacity,
    )
