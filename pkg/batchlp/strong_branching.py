from __future__ import annotations

import logging
import math
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, confloat, validate_arguments, validator

from batchlp.batch import BatchWorkspace, solve_batch
from batchlp.config import SolverConfig
from batchlp.exceptions import InvalidRequest
from batchlp.model import (
    BatchProblem,
    ColumnOverride,
    LpProblem,
    OverrideKind,
    Presolved,
    SolveStatus,
)

_log = logging.getLogger("batchlp-fsb")

DEFAULT_INTEGRALITY_TOLERANCE = 1e-6
DEFAULT_INFEASIBLE_DELTA = 1e20
DEFAULT_SCORE_EPS = 1e-6


class FsbRequest(BaseModel):
    """
    A round of full strong branching around a relaxation optimum.

    Args:
        problem:
            The LP relaxation of the node.

        x_rel:
            The optimum of the relaxation.

        tolerance:
            Values within this distance of an integer are considered integral.

        fractional_indices:
            The variables to branch on, each fractional in `x_rel`.
    """

    problem: LpProblem
    x_rel: np.ndarray
    tolerance: confloat(gt=0) = DEFAULT_INTEGRALITY_TOLERANCE
    fractional_indices: List[int]

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False

    @validator("x_rel", pre=True)
    def as_vector(cls, v):
        return np.asarray(v, dtype=np.float64).reshape(-1)

    @validator("x_rel")
    def check_point(cls, v, values):
        problem = values.get("problem")
        if problem is None:
            return v

        if v.size != problem.n:
            raise InvalidRequest(f"x_rel has length {v.size}, the problem has {problem.n} variables")
        if not np.all(np.isfinite(v)):
            raise InvalidRequest("x_rel must be finite")
        return v

    @validator("fractional_indices")
    def check_indices(cls, v, values):
        problem = values.get("problem")
        x_rel = values.get("x_rel")
        tolerance = values.get("tolerance", DEFAULT_INTEGRALITY_TOLERANCE)
        if problem is None or x_rel is None:
            return v

        if len(set(v)) != len(v):
            raise InvalidRequest("fractional indices must be unique")

        for i in v:
            if not 0 <= i < problem.n:
                raise InvalidRequest(f"variable {i} out of range for {problem.n} variables")

            value = x_rel[i]
            lower, upper = problem.var_lower[i], problem.var_upper[i]
            if abs(value - round(value)) <= tolerance:
                raise InvalidRequest(f"x_rel[{i}] = {value} is integral")
            if lower == upper:
                raise InvalidRequest(f"variable {i} is fixed at {lower} and cannot be branched on")
            if value < lower - tolerance or value > upper + tolerance:
                raise InvalidRequest(
                    f"x_rel[{i}] = {value} lies outside its bounds [{lower}, {upper}]"
                )
        return v

    @classmethod
    def from_point(
        cls,
        problem: LpProblem,
        x_rel: Sequence[float],
        candidates: Optional[Sequence[int]] = None,
        tolerance: float = DEFAULT_INTEGRALITY_TOLERANCE,
    ) -> FsbRequest:
        """
        Builds a request branching on every candidate that is fractional in
        `x_rel`, the candidates default to the problem's integer columns.
        """

        x_rel = np.asarray(x_rel, dtype=np.float64)
        if candidates is None:
            candidates = problem.integer_columns

        fractional = [
            int(i)
            for i in candidates
            if abs(x_rel[i] - round(x_rel[i])) > tolerance
            and problem.var_lower[i] != problem.var_upper[i]
        ]
        return cls(problem=problem, x_rel=x_rel, tolerance=tolerance, fractional_indices=fractional)

    @property
    def p(self) -> int:
        return len(self.fractional_indices)

    @property
    def root_objective(self) -> float:
        return self.problem.objective(self.x_rel)


class FsbBranch(BaseModel):
    """Both children of one fractional variable."""

    variable: int
    value: float
    down_objective: float
    up_objective: float
    down_status: SolveStatus
    up_status: SolveStatus
    down_delta: float
    up_delta: float
    down_infeasible: bool
    up_infeasible: bool
    down_iterations: int
    up_iterations: int
    score: float


class FsbOutcome(BaseModel):
    branches: List[FsbBranch]
    root_objective: float
    iterations: int = 0
    spmm_count: int = 0
    solve_seconds: float = 0.0

    def ranked(self, score_eps: float = DEFAULT_SCORE_EPS) -> List[Tuple[int, float]]:
        return score_branching(self, score_eps)

    def best(self) -> Optional[int]:
        ranked = self.ranked()
        return ranked[0][0] if ranked else None


def build_fsb_batch(req: FsbRequest) -> BatchProblem:
    """
    Builds the 2p column batch of a strong branching round.

    Column j branches up on the j-th fractional variable (`x_i >= ceil(x_rel_i)`),
    column p + j branches down (`x_i <= floor(x_rel_i)`). A branch that empties
    the variable's domain keeps its override but is marked primal infeasible
    up front.
    """

    problem = req.problem
    p = req.p
    overrides = []
    presolved = {}

    for j, i in enumerate(req.fractional_indices):
        up = float(math.ceil(req.x_rel[i]))
        down = float(math.floor(req.x_rel[i]))

        overrides.append(
            ColumnOverride(problem_index=j, kind=OverrideKind.VARIABLE_LOWER, variable_index=i, value=up)
        )
        overrides.append(
            ColumnOverride(
                problem_index=p + j, kind=OverrideKind.VARIABLE_UPPER, variable_index=i, value=down
            )
        )

        if up > problem.var_upper[i]:
            presolved[j] = Presolved(status=SolveStatus.PRIMAL_INFEASIBLE, objective=np.inf)
        if down < problem.var_lower[i]:
            presolved[p + j] = Presolved(status=SolveStatus.PRIMAL_INFEASIBLE, objective=np.inf)

    if presolved:
        _log.debug(f"{len(presolved)} branches are infeasible by their bounds alone")

    return BatchProblem(problem, 2 * p, overrides, presolved=presolved)


def _delta(status: SolveStatus, objective: float, root: float, infeasible_delta: float) -> float:
    if status is SolveStatus.PRIMAL_INFEASIBLE:
        return infeasible_delta
    return objective - root


def _gain(delta: float, objective: float, use_deltas: bool) -> float:
    return delta if use_deltas else objective


def _product_score(down: float, up: float, score_eps: float) -> float:
    return max(down, score_eps) * max(up, score_eps)


def run_fsb(
    req: FsbRequest,
    config: Optional[SolverConfig] = None,
    *,
    infeasible_delta: float = DEFAULT_INFEASIBLE_DELTA,
    score_eps: float = DEFAULT_SCORE_EPS,
    workspace: Optional[BatchWorkspace] = None,
    norm: Optional[float] = None,
) -> FsbOutcome:
    """
    Solves every child LP of the request in one batch.

    Iteration limited children still report their last objective, infeasible
    children get `infeasible_delta` and are flagged.

    Args:
        req:
            The validated request.

        config:
            Solver settings for the batch.

        infeasible_delta:
            The objective change reported for an infeasible child.

        score_eps:
            The floor applied to each delta by the product score.

        workspace:
            Blocks kept from an earlier round on the same matrix.

        norm:
            A precomputed `||A||_2` estimate.
    """

    root = req.root_objective
    p = req.p
    if p == 0:
        _log.info("no fractional variables, nothing to branch on")
        return FsbOutcome(branches=[], root_objective=root)

    started = time.perf_counter()
    outcome = solve_batch(build_fsb_batch(req), config, workspace=workspace, norm=norm)
    elapsed = time.perf_counter() - started

    branches = []
    for j, i in enumerate(req.fractional_indices):
        up = outcome.results[j]
        down = outcome.results[p + j]

        up_delta = _delta(up.status, up.objective, root, infeasible_delta)
        down_delta = _delta(down.status, down.objective, root, infeasible_delta)
        branches.append(
            FsbBranch(
                variable=i,
                value=float(req.x_rel[i]),
                down_objective=down.objective,
                up_objective=up.objective,
                down_status=down.status,
                up_status=up.status,
                down_delta=down_delta,
                up_delta=up_delta,
                down_infeasible=down.status is SolveStatus.PRIMAL_INFEASIBLE,
                up_infeasible=up.status is SolveStatus.PRIMAL_INFEASIBLE,
                down_iterations=down.iterations,
                up_iterations=up.iterations,
                score=_product_score(down_delta, up_delta, score_eps),
            )
        )

    limited = sum(
        (b.up_status is SolveStatus.ITERATION_LIMIT) + (b.down_status is SolveStatus.ITERATION_LIMIT)
        for b in branches
    )
    if limited:
        _log.warning(f"{limited} of {2 * p} branches hit the iteration limit")

    _log.info(
        f"strong branching on {p} variables took {elapsed:.3f}s, "
        f"{outcome.iterations} iterations, {outcome.spmm_count} products"
    )
    return FsbOutcome(
        branches=branches,
        root_objective=root,
        iterations=outcome.iterations,
        spmm_count=outcome.spmm_count,
        solve_seconds=elapsed,
    )


@validate_arguments
def score_branching(
    outcome: FsbOutcome,
    score_eps: confloat(gt=0) = DEFAULT_SCORE_EPS,
    use_deltas: bool = True,
) -> List[Tuple[int, float]]:
    """
    Ranks the branched variables by the product score
    `max(down, eps) * max(up, eps)`, best first, ties going to the smaller index.

    Args:
        outcome:
            The strong branching outcome.

        score_eps:
            The floor applied to both factors.

        use_deltas:
            Score the objective changes against the root (the default), or the
            raw child objectives.
    """

    scored = []
    for b in outcome.branches:
        down = _gain(b.down_delta, b.down_objective, use_deltas)
        up = _gain(b.up_delta, b.up_objective, use_deltas)
        scored.append((b.variable, _product_score(down, up, score_eps)))

    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored
