"""
Optimization based bound tightening.

Every variable is minimized and maximized over the LP relaxation in a single
batch of 2n columns with objectives `+e_i` and `-e_i`. A bound is only moved
when the solver's answer is certified to within the dual tolerance, and it is
moved by the safety margin `eps * (1 + |c^T x| + |phi(y) + phi(r)|)` past the
computed value so an inexact dual never cuts off a feasible point.
"""

from __future__ import annotations

import logging
import time
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from batchlp.batch import BatchWorkspace, solve_batch
from batchlp.config import ObbtConfig
from batchlp.model import BatchProblem, LpProblem, ObjectiveMode, Presolved, SolveStatus
from batchlp.pdhg import SolveResult

_log = logging.getLogger("batchlp-obbt")


class BoundUpdate(BaseModel):
    variable: int
    side: str
    old: float
    new: float
    margin: float


class ObbtOutcome(BaseModel):
    """
    Tightened bounds plus the per-column statuses of the batch.

    `statuses[i]` belongs to the column minimizing `x_i` and `statuses[n + i]`
    to the one maximizing it.
    """

    original_lower: np.ndarray
    original_upper: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    updates: List[BoundUpdate]
    statuses: List[SolveStatus]
    crossed: List[int] = []
    solved: int = 0
    limit_hit: int = 0
    iterations: int = 0
    spmm_count: int = 0
    solve_seconds: float = 0.0

    class Config:
        arbitrary_types_allowed = True

    @property
    def changed(self) -> np.ndarray:
        return (self.lower != self.original_lower) | (self.upper != self.original_upper)

    def tightened(self, problem: LpProblem) -> LpProblem:
        return problem.with_var_bounds(self.lower, self.upper)


def build_obbt_batch(problem: LpProblem, config: Optional[ObbtConfig] = None) -> BatchProblem:
    """
    The 2n column batch in signed-unit objective mode. Fixed variables have
    nothing to tighten, their two columns are resolved up front.
    """

    config = config or ObbtConfig()
    n = problem.n

    presolved = {}
    for i in np.flatnonzero(problem.var_lower == problem.var_upper):
        i = int(i)
        value = float(problem.var_lower[i])
        presolved[i] = Presolved(status=SolveStatus.OPTIMAL, objective=value)
        presolved[n + i] = Presolved(status=SolveStatus.OPTIMAL, objective=-value)

    return BatchProblem(
        problem,
        2 * n,
        objective_mode=ObjectiveMode.SIGNED_UNIT,
        cutoff=config.cutoff,
        presolved=presolved,
    )


def _certified_bound(res: SolveResult, config: ObbtConfig) -> Optional[Tuple[float, float]]:
    """The value of a column's minimum that may be relied on, and its margin."""
    if res.status is SolveStatus.OPTIMAL:
        value = res.objective
    elif (
        config.lenient
        and res.status is SolveStatus.ITERATION_LIMIT
        and res.dual_residual <= config.eps_dual
        and np.isfinite(res.dual_objective)
    ):
        value = res.dual_objective
    else:
        return None

    phi = -res.dual_objective
    if not np.isfinite(phi):
        phi = 0.0
    margin = config.eps_opt * (1.0 + abs(res.objective) + abs(phi))
    return value, margin


def run_obbt(
    problem: LpProblem,
    config: Optional[ObbtConfig] = None,
    *,
    workspace: Optional[BatchWorkspace] = None,
    norm: Optional[float] = None,
) -> ObbtOutcome:
    """
    Tightens every variable bound of `problem` over its LP relaxation.

    Args:
        problem:
            The problem whose variable bounds are tightened.

        config:
            Tolerances, the improvement threshold and an optional cutoff.

        workspace:
            Blocks to reuse for the batch.

        norm:
            A precomputed `||A||_2` estimate of the matrix the batch solves
            on (including the cutoff row when one is set).
    """

    config = config or ObbtConfig()
    n = problem.n
    batch = build_obbt_batch(problem, config)

    started = time.perf_counter()
    outcome = solve_batch(batch, config.solver_config(), workspace=workspace, norm=norm)
    elapsed = time.perf_counter() - started

    original_lower = np.array(problem.var_lower)
    original_upper = np.array(problem.var_upper)
    lower = original_lower.copy()
    upper = original_upper.copy()
    updates = []
    crossed = []

    infeasible = 0
    for i in range(n):
        if i in batch.presolved:
            continue

        new_lower = new_upper = None
        lower_result = outcome.results[i]
        upper_result = outcome.results[n + i]
        infeasible += lower_result.status is SolveStatus.PRIMAL_INFEASIBLE

        certified = _certified_bound(lower_result, config)
        if certified is not None:
            value, margin = certified
            candidate = value - margin
            if candidate - lower[i] > config.min_improvement:
                new_lower = BoundUpdate(
                    variable=i, side="lower", old=lower[i], new=candidate, margin=margin
                )

        certified = _certified_bound(upper_result, config)
        if certified is not None:
            value, margin = certified
            candidate = -value + margin
            if upper[i] - candidate > config.min_improvement:
                new_upper = BoundUpdate(
                    variable=i, side="upper", old=upper[i], new=candidate, margin=margin
                )

        low = new_lower.new if new_lower is not None else lower[i]
        high = new_upper.new if new_upper is not None else upper[i]
        if low > high:
            _log.warning(f"tightened bounds of variable {i} cross ({low}, {high}), keeping the originals")
            crossed.append(i)
            continue

        for update in (new_lower, new_upper):
            if update is None:
                continue
            if update.side == "lower":
                lower[i] = update.new
            else:
                upper[i] = update.new
            updates.append(update)

    if infeasible:
        _log.warning(f"{infeasible} minimization columns report an infeasible relaxation")

    limit_hit = sum(res.status is SolveStatus.ITERATION_LIMIT for res in outcome.results)
    _log.info(
        f"bound tightening on {n} variables: {len(updates)} bounds moved, "
        f"{2 * n - limit_hit}/{2 * n} subproblems solved in {elapsed:.3f}s"
    )

    return ObbtOutcome(
        original_lower=original_lower,
        original_upper=original_upper,
        lower=lower,
        upper=upper,
        updates=updates,
        statuses=outcome.statuses,
        crossed=crossed,
        solved=2 * n - limit_hit,
        limit_hit=limit_hit,
        iterations=outcome.iterations,
        spmm_count=outcome.spmm_count,
        solve_seconds=elapsed,
    )


def domain_reduction_stats(
    outcome: ObbtOutcome,
    original_lower: Optional[np.ndarray] = None,
    original_upper: Optional[np.ndarray] = None,
) -> Tuple[int, float]:
    """
    The number of variables with a changed bound and the mean percentage
    their domain shrank by. Variables with an infinite original width count as
    changed but stay out of the mean.
    """

    old_lower = outcome.original_lower if original_lower is None else np.asarray(original_lower)
    old_upper = outcome.original_upper if original_upper is None else np.asarray(original_upper)
    changed = (outcome.lower != old_lower) | (outcome.upper != old_upper)

    old_width = old_upper - old_lower
    new_width = outcome.upper - outcome.lower
    finite = changed & np.isfinite(old_width) & (old_width > 0)
    if not finite.any():
        return int(changed.sum()), 0.0

    reduction = 100.0 * (old_width[finite] - new_width[finite]) / old_width[finite]
    return int(changed.sum()), float(np.mean(reduction))
