"""
Exact reference solver for tiny LPs.

Every basic solution is enumerated in rational arithmetic, so statuses and
optimal vertices are never subject to rounding. The cost grows combinatorially
with `n + m`, instances above `MAX_SIZE` are refused.
"""

from __future__ import annotations

import itertools
import logging
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel

from batchlp.exceptions import OracleTooLarge
from batchlp.model import LpProblem

_log = logging.getLogger("batchlp-oracle")

MAX_SIZE = 14

Vector = Tuple[Fraction, ...]


class OracleStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class ActiveConstraint(BaseModel):
    kind: str
    index: int
    side: str


class OracleResult(BaseModel):
    """
    The exact outcome of an LP.

    Optimal results carry the lexicographically smallest optimal vertex and a
    dual pair `(y, r)` with `c + A^T y + r = 0` built from the active set,
    unbounded results carry a feasible point and an improving ray.
    """

    status: OracleStatus
    objective: float
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    r: Optional[np.ndarray] = None
    ray: Optional[np.ndarray] = None
    active: List[ActiveConstraint] = []
    vertices: int = 0

    class Config:
        arbitrary_types_allowed = True

    @property
    def is_optimal(self) -> bool:
        return self.status is OracleStatus.OPTIMAL


class _Object:
    """A row or variable with its normal and rational bounds (None when infinite)."""

    __slots__ = ("kind", "index", "normal", "lower", "upper")

    def __init__(self, kind: str, index: int, normal: Vector, lower, upper):
        self.kind = kind
        self.index = index
        self.normal = normal
        self.lower = lower
        self.upper = upper

    @property
    def sides(self) -> List[Tuple[str, Fraction]]:
        if self.lower is not None and self.lower == self.upper:
            return [("fixed", self.lower)]

        out = []
        if self.lower is not None:
            out.append(("lower", self.lower))
        if self.upper is not None:
            out.append(("upper", self.upper))
        return out

    def value(self, x: Sequence[Fraction]) -> Fraction:
        return sum((a * b for a, b in zip(self.normal, x)), Fraction(0))

    def contains(self, x: Sequence[Fraction]) -> bool:
        v = self.value(x)
        if self.lower is not None and v < self.lower:
            return False
        if self.upper is not None and v > self.upper:
            return False
        return True

    def recedes(self, d: Sequence[Fraction]) -> bool:
        v = self.value(d)
        if self.lower is not None and v < 0:
            return False
        if self.upper is not None and v > 0:
            return False
        return True


def _exact(value: float) -> Optional[Fraction]:
    if not np.isfinite(value):
        return None
    return Fraction(float(value))


def _rref(rows: List[List[Fraction]], ncols: int) -> Tuple[List[List[Fraction]], List[int]]:
    R = [list(row) for row in rows]
    pivots = []
    r = 0
    for col in range(ncols):
        if r == len(R):
            break
        pivot = next((i for i in range(r, len(R)) if R[i][col] != 0), None)
        if pivot is None:
            continue

        R[r], R[pivot] = R[pivot], R[r]
        scale = R[r][col]
        R[r] = [v / scale for v in R[r]]
        for i in range(len(R)):
            if i != r and R[i][col] != 0:
                factor = R[i][col]
                R[i] = [a - factor * b for a, b in zip(R[i], R[r])]
        pivots.append(col)
        r += 1
    return R, pivots


def _solve_square(rows: List[Vector], rhs: List[Fraction], n: int) -> Optional[Vector]:
    R, pivots = _rref([list(row) + [b] for row, b in zip(rows, rhs)], n)
    if len(pivots) < n:
        return None
    x = [Fraction(0)] * n
    for i, col in enumerate(pivots):
        x[col] = R[i][n]
    return tuple(x)


def _null_space(rows: List[Vector], n: int) -> List[Vector]:
    if not rows:
        return [tuple(Fraction(int(i == j)) for i in range(n)) for j in range(n)]

    R, pivots = _rref([list(row) for row in rows], n)
    basis = []
    for free in (j for j in range(n) if j not in pivots):
        d = [Fraction(0)] * n
        d[free] = Fraction(1)
        for i, col in enumerate(pivots):
            d[col] = -R[i][free]
        basis.append(tuple(d))
    return basis


def _dot(a: Sequence[Fraction], b: Sequence[Fraction]) -> Fraction:
    return sum((x * y for x, y in zip(a, b)), Fraction(0))


class _ExactLp:
    def __init__(self, problem: LpProblem):
        if problem.n + problem.m > MAX_SIZE:
            raise OracleTooLarge(
                f"n + m = {problem.n + problem.m} exceeds the enumeration budget of {MAX_SIZE}"
            )

        self.n = n = problem.n
        self.m = problem.m
        self.c: Vector = tuple(Fraction(float(v)) for v in problem.c)

        dense = problem.A.to_dense()
        objects = []
        for i in range(problem.m):
            normal = tuple(Fraction(float(v)) for v in dense[i])
            objects.append(
                _Object("row", i, normal, _exact(problem.row_lower[i]), _exact(problem.row_upper[i]))
            )
        for j in range(n):
            normal = tuple(Fraction(int(k == j)) for k in range(n))
            objects.append(
                _Object("var", j, normal, _exact(problem.var_lower[j]), _exact(problem.var_upper[j]))
            )

        self.objects = objects
        self.bounded_objects = [obj for obj in objects if obj.sides]

        # Coordinates along the lineality space are pinned to 0, the polyhedron
        # is pointed afterwards.
        lineality = _null_space([obj.normal for obj in self.bounded_objects], n)
        self.lineality_ray: Optional[Vector] = None
        for d in lineality:
            slope = _dot(self.c, d)
            if slope != 0:
                self.lineality_ray = d if slope < 0 else tuple(-v for v in d)
                break

        R, pivots = _rref([list(obj.normal) for obj in self.bounded_objects], n)
        self.pinned = [
            tuple(Fraction(int(k == j)) for k in range(n)) for j in range(n) if j not in pivots
        ]
        self.rank = n - len(self.pinned)

    def feasible(self, x: Vector) -> bool:
        return all(obj.contains(x) for obj in self.objects)

    def vertices(self) -> List[Vector]:
        found: Set[Vector] = set()
        zeros = [Fraction(0)] * len(self.pinned)
        for combo in itertools.combinations(self.bounded_objects, self.rank):
            normals = [obj.normal for obj in combo] + self.pinned
            for choice in itertools.product(*(obj.sides for obj in combo)):
                rhs = [value for _, value in choice] + zeros
                x = _solve_square(normals, rhs, self.n)
                if x is not None and x not in found and self.feasible(x):
                    found.add(x)
        return sorted(found)

    def improving_ray(self) -> Optional[Vector]:
        if self.lineality_ray is not None:
            return self.lineality_ray
        if self.rank == 0:
            return None

        for combo in itertools.combinations(self.bounded_objects, self.rank - 1):
            directions = _null_space([obj.normal for obj in combo] + self.pinned, self.n)
            if len(directions) != 1:
                continue
            for sign in (1, -1):
                d = tuple(sign * v for v in directions[0])
                if _dot(self.c, d) < 0 and all(obj.recedes(d) for obj in self.objects):
                    return d
        return None

    def active(self, x: Vector) -> List[Tuple[_Object, str]]:
        out = []
        for obj in self.bounded_objects:
            v = obj.value(x)
            for side, bound in obj.sides:
                if v == bound:
                    out.append((obj, side))
        return out

    def duals(self, active: List[Tuple[_Object, str]]) -> Optional[Tuple[List[Fraction], List[Fraction]]]:
        # Outward normals of the active constraints, equalities may point either way.
        candidates = []
        for obj, side in active:
            if side in ("upper", "fixed"):
                candidates.append((obj, obj.normal, Fraction(1)))
            if side in ("lower", "fixed"):
                candidates.append((obj, tuple(-v for v in obj.normal), Fraction(-1)))

        target = [-v for v in self.c]
        for size in range(0, min(len(candidates), self.n) + 1):
            for subset in itertools.combinations(candidates, size):
                weights = self._cone_weights([g for _, g, _ in subset], target)
                if weights is None:
                    continue

                y = [Fraction(0)] * self.m
                r = [Fraction(0)] * self.n
                for (obj, _, sign), weight in zip(subset, weights):
                    if obj.kind == "row":
                        y[obj.index] += sign * weight
                    else:
                        r[obj.index] += sign * weight
                return y, r
        return None

    def _cone_weights(self, normals: List[Vector], target: List[Fraction]) -> Optional[List[Fraction]]:
        """Nonnegative weights with `sum(w_k g_k) = target` for independent normals."""
        size = len(normals)
        if size == 0:
            return [] if all(v == 0 for v in target) else None

        rows = [[g[i] for g in normals] + [target[i]] for i in range(self.n)]
        R, pivots = _rref(rows, size + 1)
        if len(pivots) != size or size in pivots:
            return None

        weights = [R[i][size] for i in range(size)]
        if any(w < 0 for w in weights):
            return None
        return weights


def _as_array(values: Sequence[Fraction]) -> np.ndarray:
    return np.array([float(v) for v in values], dtype=np.float64)


def enumerate_vertices(problem: LpProblem) -> List[np.ndarray]:
    """Every vertex of the feasible region (with lineality directions pinned to 0)."""
    return [_as_array(v) for v in _ExactLp(problem).vertices()]


def oracle_solve(problem: LpProblem) -> OracleResult:
    """
    Solves `problem` by vertex enumeration in exact arithmetic.

    Raises:
        OracleTooLarge:
            `n + m` exceeds `MAX_SIZE`.
    """

    lp = _ExactLp(problem)
    vertices = lp.vertices()
    _log.debug(f"{len(vertices)} feasible vertices for {problem!r}")

    if not vertices:
        return OracleResult(status=OracleStatus.INFEASIBLE, objective=np.inf)

    ray = lp.improving_ray()
    if ray is not None:
        return OracleResult(
            status=OracleStatus.UNBOUNDED,
            objective=-np.inf,
            x=_as_array(vertices[0]),
            ray=_as_array(ray),
            vertices=len(vertices),
        )

    values: Dict[Vector, Fraction] = {v: _dot(lp.c, v) for v in vertices}
    best = min(values.values())
    x = min(v for v in vertices if values[v] == best)

    active = lp.active(x)
    duals = lp.duals(active)
    y = r = None
    if duals is None:
        _log.warning(f"no dual certificate found at the optimum of {problem!r}")
    else:
        y, r = (_as_array(v) for v in duals)

    return OracleResult(
        status=OracleStatus.OPTIMAL,
        objective=float(best),
        x=_as_array(x),
        y=y,
        r=r,
        active=[ActiveConstraint(kind=obj.kind, index=obj.index, side=side) for obj, side in active],
        vertices=len(vertices),
    )
