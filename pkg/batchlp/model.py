from __future__ import annotations

import logging
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, conint

from batchlp.bounds import BoundsInterval, support_terms
from batchlp.exceptions import InvalidOverride, InvalidProblem
from batchlp.sparse import SparseMatrix, column_sums

_log = logging.getLogger("batchlp-model")

MAX_OVERRIDES_PER_COLUMN = 4


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    DUAL_INFEASIBLE = "dual_infeasible"
    ITERATION_LIMIT = "iteration_limit"


class Severity(Enum):
    ERROR = "error"
    WARNING = "warning"


class Diagnostic(BaseModel):
    severity: Severity
    kind: str
    message: str
    index: Optional[int] = None

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def __str__(self):
        return f"{self.severity.value}: {self.message}"


class OverrideKind(Enum):
    OBJECTIVE = "objective-column"
    VARIABLE_LOWER = "variable-lower"
    VARIABLE_UPPER = "variable-upper"


class ObjectiveMode(Enum):
    SHARED = "shared-c"
    SIGNED_UNIT = "signed-unit-columns"


class ColumnOverride(BaseModel):
    """One modified entry of one batch column."""

    problem_index: conint(ge=0)
    kind: OverrideKind
    variable_index: conint(ge=0)
    value: float

    class Config:
        allow_mutation = False


class Presolved(BaseModel):
    """A batch column whose outcome is known without iterating."""

    status: SolveStatus
    objective: float

    class Config:
        allow_mutation = False


def _frozen_vector(values) -> np.ndarray:
    out = np.array(values, dtype=np.float64).reshape(-1)
    out.flags.writeable = False
    return out


class LpProblem:
    """
    One linear program `min c^T x` subject to `l <= A x <= u` and `x_lo <= x <= x_up`.

    Instances are immutable. Construction validates the data and raises
    `InvalidProblem` carrying the diagnostics when any of them is an error,
    pass `check=False` to build the instance anyway (e.g. to inspect it with
    `validate`).

    Args:
        A:
            The m x n constraint matrix.

        c:
            The objective vector of length n.

        row_lower:
            The row activity lower bounds `l` (may hold -inf).

        row_upper:
            The row activity upper bounds `u` (may hold +inf).

        var_lower:
            The variable lower bounds (may hold -inf).

        var_upper:
            The variable upper bounds (may hold +inf).

        name:
            An optional problem name, preserved through MPS files.

        row_names:
            Optional row names, generated as `R<i>` when omitted.

        col_names:
            Optional column names, generated as `C<j>` when omitted.

        integer_columns:
            Indices of columns marked integral. This is metadata only, the LP
            itself is always the continuous relaxation.
    """

    __slots__ = (
        "A",
        "c",
        "row_lower",
        "row_upper",
        "var_lower",
        "var_upper",
        "name",
        "row_names",
        "col_names",
        "integer_columns",
    )

    def __init__(
        self,
        A: SparseMatrix,
        c: Sequence[float],
        row_lower: Sequence[float],
        row_upper: Sequence[float],
        var_lower: Sequence[float],
        var_upper: Sequence[float],
        *,
        name: str = "",
        row_names: Optional[Sequence[str]] = None,
        col_names: Optional[Sequence[str]] = None,
        integer_columns: Iterable[int] = (),
        check: bool = True,
    ):
        self.A = A
        self.c = _frozen_vector(c)
        self.row_lower = _frozen_vector(row_lower)
        self.row_upper = _frozen_vector(row_upper)
        self.var_lower = _frozen_vector(var_lower)
        self.var_upper = _frozen_vector(var_upper)
        self.name = name
        self.row_names = (
            tuple(row_names) if row_names is not None else tuple(f"R{i}" for i in range(A.n_rows))
        )
        self.col_names = (
            tuple(col_names) if col_names is not None else tuple(f"C{j}" for j in range(A.n_cols))
        )
        self.integer_columns = tuple(sorted(set(int(j) for j in integer_columns)))

        if not check:
            return

        diagnostics = validate(self)
        errors = [d for d in diagnostics if d.is_error]
        if errors:
            raise InvalidProblem(f"problem {name!r} failed validation", diagnostics)

        for warning in diagnostics:
            _log.debug(f"problem {name!r}: {warning}")

    @property
    def m(self) -> int:
        return self.A.n_rows

    @property
    def n(self) -> int:
        return self.A.n_cols

    @property
    def row_bounds(self) -> List[BoundsInterval]:
        return [BoundsInterval(lo, hi) for lo, hi in zip(self.row_lower, self.row_upper)]

    @property
    def var_bounds(self) -> List[BoundsInterval]:
        return [BoundsInterval(lo, hi) for lo, hi in zip(self.var_lower, self.var_upper)]

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)

    def replace(self, **changes) -> LpProblem:
        """Returns a copy with the given constructor arguments replaced."""
        fields = dict(
            A=self.A,
            c=self.c,
            row_lower=self.row_lower,
            row_upper=self.row_upper,
            var_lower=self.var_lower,
            var_upper=self.var_upper,
            name=self.name,
            row_names=self.row_names,
            col_names=self.col_names,
            integer_columns=self.integer_columns,
        )
        fields.update(changes)
        return LpProblem(**fields)

    def with_var_bounds(self, var_lower: Sequence[float], var_upper: Sequence[float]) -> LpProblem:
        return self.replace(var_lower=var_lower, var_upper=var_upper)

    def append_row(
        self,
        indices: Sequence[int],
        values: Sequence[float],
        lower: float = -np.inf,
        upper: float = np.inf,
        name: Optional[str] = None,
    ) -> LpProblem:
        """Returns a new problem with the row `lower <= sum(values * x[indices]) <= upper` added last."""
        row_name = name if name is not None else f"R{self.m}"
        return self.replace(
            A=self.A.append_row(indices, values),
            row_lower=np.append(self.row_lower, lower),
            row_upper=np.append(self.row_upper, upper),
            row_names=self.row_names + (row_name,),
        )

    def __repr__(self):
        return f"LpProblem(name={self.name!r}, m={self.m}, n={self.n}, nnz={self.A.nnz})"


def _inverted(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    return ~(lower <= upper) | (lower == np.inf) | (upper == -np.inf)


def validate(p: LpProblem) -> List[Diagnostic]:
    """
    Checks a problem and returns every finding, never raises.

    Dimension mismatches, inverted or NaN intervals and non-finite objective
    entries are errors. Rows and columns without stored entries are warnings,
    a bound-only variable is legal.
    """

    diagnostics = []
    m, n = p.A.n_rows, p.A.n_cols

    def error(kind, message, index=None):
        diagnostics.append(
            Diagnostic(severity=Severity.ERROR, kind=kind, message=message, index=index)
        )

    def warning(kind, message, index=None):
        diagnostics.append(
            Diagnostic(severity=Severity.WARNING, kind=kind, message=message, index=index)
        )

    if n == 0:
        error("dimension", "problem has no variables")

    for label, vec, size in (
        ("objective", p.c, n),
        ("row lower bound", p.row_lower, m),
        ("row upper bound", p.row_upper, m),
        ("variable lower bound", p.var_lower, n),
        ("variable upper bound", p.var_upper, n),
    ):
        if vec.size != size:
            error("dimension", f"{label} has length {vec.size}, expected {size}")

    if len(p.row_names) != m or len(p.col_names) != n:
        error("dimension", "row or column names do not match the matrix dimensions")

    if any(not 0 <= j < n for j in p.integer_columns):
        error("dimension", "integer column index out of range")

    if diagnostics:
        return diagnostics

    for i in np.flatnonzero(_inverted(p.row_lower, p.row_upper)):
        error(
            "inverted-interval",
            f"inverted interval, row {i} ({p.row_lower[i]}, {p.row_upper[i]})",
            int(i),
        )

    for j in np.flatnonzero(_inverted(p.var_lower, p.var_upper)):
        error(
            "inverted-interval",
            f"inverted interval, column {j} ({p.var_lower[j]}, {p.var_upper[j]})",
            int(j),
        )

    for j in np.flatnonzero(~np.isfinite(p.c)):
        error("objective", f"non-finite objective entry {p.c[j]} at column {j}", int(j))

    for i in np.flatnonzero(np.diff(p.A.row_offsets) == 0):
        warning("empty-row", f"row {i} has no nonzeros", int(i))

    col_counts = np.bincount(p.A.col_indices, minlength=n)
    for j in np.flatnonzero(col_counts == 0):
        warning("empty-column", f"column {j} has no nonzeros", int(j))

    return diagnostics


class ResolvedColumn:
    """
    The objective and variable bounds of one batch column.

    Entries are looked up on access from the base vectors plus the column's
    patches, nothing is copied until `c`, `var_lower` or `var_upper` is read.
    """

    __slots__ = ("_base", "_objective", "_lower", "_upper", "_unit")

    def __init__(
        self,
        base: LpProblem,
        objective: Dict[int, float],
        lower: Dict[int, float],
        upper: Dict[int, float],
        unit: Optional[Tuple[int, float]] = None,
    ):
        self._base = base
        self._objective = objective
        self._lower = lower
        self._upper = upper
        self._unit = unit

    def objective_at(self, i: int) -> float:
        if self._unit is not None:
            var, sign = self._unit
            return sign if i == var else 0.0
        return self._objective.get(i, float(self._base.c[i]))

    def lower_at(self, i: int) -> float:
        return self._lower.get(i, float(self._base.var_lower[i]))

    def upper_at(self, i: int) -> float:
        return self._upper.get(i, float(self._base.var_upper[i]))

    @property
    def c(self) -> np.ndarray:
        if self._unit is not None:
            out = np.zeros(self._base.n)
            out[self._unit[0]] = self._unit[1]
            return out
        out = np.array(self._base.c)
        for i, v in self._objective.items():
            out[i] = v
        return out

    @property
    def var_lower(self) -> np.ndarray:
        out = np.array(self._base.var_lower)
        for i, v in self._lower.items():
            out[i] = v
        return out

    @property
    def var_upper(self) -> np.ndarray:
        out = np.array(self._base.var_upper)
        for i, v in self._upper.items():
            out[i] = v
        return out


class BatchProblem:
    """
    N linear programs sharing the constraint matrix and row bounds of `base`.

    Column j differs from the base only through its overrides, or, in the
    signed-unit objective mode, through its objective `+e_j` (j < n) or
    `-e_(j-n)` (j >= n). No per-column objective or bound matrix is ever
    allocated.

    Args:
        base:
            The shared problem.

        width:
            The number of columns N.

        overrides:
            Entry overrides, at most `MAX_OVERRIDES_PER_COLUMN` per column.

        objective_mode:
            `ObjectiveMode.SHARED` or `ObjectiveMode.SIGNED_UNIT` (requires N = 2n).

        cutoff:
            When set, every column carries the extra row `c^T x <= cutoff`.

        presolved:
            Columns whose outcome is known up front, they are never iterated.
            Their overrides may describe an empty interval.
    """

    __slots__ = (
        "base",
        "width",
        "overrides",
        "objective_mode",
        "cutoff",
        "presolved",
        "_objective_patches",
        "_lower_patches",
        "_upper_patches",
    )

    def __init__(
        self,
        base: LpProblem,
        width: int,
        overrides: Iterable[ColumnOverride] = (),
        objective_mode: ObjectiveMode = ObjectiveMode.SHARED,
        cutoff: Optional[float] = None,
        presolved: Optional[Dict[int, Presolved]] = None,
    ):
        if width < 0:
            raise InvalidProblem(f"batch width must be non-negative, got {width}")
        if objective_mode is ObjectiveMode.SIGNED_UNIT and width != 2 * base.n:
            raise InvalidProblem(
                f"signed-unit objectives need 2n = {2 * base.n} columns, got {width}"
            )

        self.base = base
        self.width = width
        self.overrides = tuple(overrides)
        self.objective_mode = objective_mode
        self.cutoff = cutoff
        self.presolved = dict(presolved or {})

        for j in self.presolved:
            if not 0 <= j < width:
                raise InvalidProblem(f"presolved column {j} out of range for width {width}")

        self._objective_patches: Dict[int, Dict[int, float]] = {}
        self._lower_patches: Dict[int, Dict[int, float]] = {}
        self._upper_patches: Dict[int, Dict[int, float]] = {}

        counts: Dict[int, int] = {}
        for ov in self.overrides:
            self._add_override(ov)
            counts[ov.problem_index] = counts.get(ov.problem_index, 0) + 1
            if counts[ov.problem_index] > MAX_OVERRIDES_PER_COLUMN:
                raise InvalidOverride(
                    f"column {ov.problem_index} has more than "
                    f"{MAX_OVERRIDES_PER_COLUMN} overrides"
                )

        self._check_intervals()

    def _add_override(self, ov: ColumnOverride):
        j, i = ov.problem_index, ov.variable_index
        if j >= self.width:
            raise InvalidOverride(f"override column {j} out of range for width {self.width}")
        if i >= self.base.n:
            raise InvalidOverride(f"override variable {i} out of range for n = {self.base.n}")
        if not np.isfinite(ov.value) and ov.kind is OverrideKind.OBJECTIVE:
            raise InvalidOverride(f"non-finite objective override on column {j}")

        if ov.kind is OverrideKind.OBJECTIVE:
            if self.objective_mode is ObjectiveMode.SIGNED_UNIT:
                raise InvalidOverride("objective overrides conflict with signed-unit objectives")
            target = self._objective_patches
        elif ov.kind is OverrideKind.VARIABLE_LOWER:
            target = self._lower_patches
        else:
            target = self._upper_patches

        patches = target.setdefault(j, {})
        if i in patches:
            raise InvalidOverride(f"duplicate {ov.kind.value} override for column {j}, variable {i}")
        patches[i] = float(ov.value)

    def _check_intervals(self):
        for j in set(self._lower_patches) | set(self._upper_patches):
            if j in self.presolved:
                continue
            col = self.resolve_column(j)
            touched = set(self._lower_patches.get(j, ())) | set(self._upper_patches.get(j, ()))
            for i in touched:
                lo, hi = col.lower_at(i), col.upper_at(i)
                if not lo <= hi or lo == np.inf or hi == -np.inf:
                    raise InvalidOverride(
                        f"override yields an inverted interval ({lo}, {hi}) "
                        f"for column {j}, variable {i}"
                    )

    @classmethod
    def single(cls, problem: LpProblem) -> BatchProblem:
        """A batch of one holding `problem` unchanged."""
        return cls(problem, 1)

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def m(self) -> int:
        return self.base.m

    def overrides_for(self, j: int) -> List[ColumnOverride]:
        return [ov for ov in self.overrides if ov.problem_index == j]

    def resolve_column(self, j: int) -> ResolvedColumn:
        if not 0 <= j < self.width:
            raise IndexError(f"column {j} out of range for width {self.width}")

        unit = None
        if self.objective_mode is ObjectiveMode.SIGNED_UNIT:
            n = self.base.n
            unit = (j, 1.0) if j < n else (j - n, -1.0)

        return ResolvedColumn(
            self.base,
            self._objective_patches.get(j, {}),
            self._lower_patches.get(j, {}),
            self._upper_patches.get(j, {}),
            unit,
        )

    def with_cutoff(self) -> BatchProblem:
        """Appends the row `c^T x <= cutoff` to the shared matrix, a no-op without a cutoff."""
        if self.cutoff is None:
            return self

        support = np.flatnonzero(self.base.c)
        base = self.base.append_row(
            support, self.base.c[support], -np.inf, self.cutoff, name="CUTOFF"
        )
        return BatchProblem(
            base,
            self.width,
            self.overrides,
            objective_mode=self.objective_mode,
            presolved=self.presolved,
        )

    def materialize(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Builds the dense n x N matrices C, X_lo and X_up (for tests and debugging)."""
        n = self.base.n
        C = np.zeros((n, self.width))
        lower = np.zeros((n, self.width))
        upper = np.zeros((n, self.width))
        for j in range(self.width):
            col = self.resolve_column(j)
            C[:, j] = col.c
            lower[:, j] = col.var_lower
            upper[:, j] = col.var_upper
        return C, lower, upper

    def column_data(self) -> ColumnData:
        return ColumnData(self)

    def __repr__(self):
        return (
            f"BatchProblem(base={self.base!r}, width={self.width}, "
            f"overrides={len(self.overrides)}, mode={self.objective_mode.value})"
        )


def resolve_column(b: BatchProblem, j: int) -> ResolvedColumn:
    """The effective objective and variable bounds of column `j` of the batch."""
    return b.resolve_column(j)


def _flatten_patches(patches: Dict[int, Dict[int, float]]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    entries = sorted((j, i, v) for j, col in patches.items() for i, v in col.items())
    if not entries:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0)
    cols, rows, values = zip(*entries)
    return np.array(cols, dtype=np.int64), np.array(rows, dtype=np.int64), np.array(values)


class ColumnData:
    """
    Objective and bound lookups for the columns of a solver block.

    The solver keeps its iterate columns permuted, so every method takes `perm`
    (position to original column), `pos` (original column to position) and the
    number of leading positions in use. Blocks passed in hold exactly `width`
    columns.
    """

    def __init__(self, batch: BatchProblem):
        base = batch.base
        self.n = base.n
        self.m = base.m
        self.width = batch.width
        self.signed_unit = batch.objective_mode is ObjectiveMode.SIGNED_UNIT

        self.c = base.c.reshape(-1, 1)
        self.var_lower = base.var_lower.reshape(-1, 1)
        self.var_upper = base.var_upper.reshape(-1, 1)
        self.row_lower = base.row_lower.reshape(-1, 1)
        self.row_upper = base.row_upper.reshape(-1, 1)

        entries: Dict[Tuple[int, int], List[float]] = {}
        for j, col in batch._lower_patches.items():  # noqa
            for i, v in col.items():
                entries.setdefault((j, i), [base.var_lower[i], base.var_upper[i]])[0] = v
        for j, col in batch._upper_patches.items():  # noqa
            for i, v in col.items():
                entries.setdefault((j, i), [base.var_lower[i], base.var_upper[i]])[1] = v

        keys = sorted(entries)
        self._bound_cols = np.array([j for j, _ in keys], dtype=np.int64)
        self._bound_rows = np.array([i for _, i in keys], dtype=np.int64)
        self._bound_lower = np.array([entries[k][0] for k in keys], dtype=np.float64)
        self._bound_upper = np.array([entries[k][1] for k in keys], dtype=np.float64)

        self._obj_cols, self._obj_rows, self._obj_values = _flatten_patches(
            batch._objective_patches  # noqa
        )

        columns = np.arange(self.width)
        if self.signed_unit:
            self._unit_rows = columns % max(self.n, 1)
            self._unit_sign = np.where(columns < self.n, 1.0, -1.0)
            self._c_norms = np.ones(self.width)
        else:
            self._c_norms = np.full(self.width, float(np.linalg.norm(base.c)))
            for j in set(self._obj_cols.tolist()):
                self._c_norms[j] = float(np.linalg.norm(batch.resolve_column(j).c))

    @staticmethod
    def _active(cols: np.ndarray, pos: np.ndarray, width: int):
        positions = pos[cols]
        mask = positions < width
        return mask, positions[mask]

    def apply(self, fn: Callable[..., np.ndarray], pos: np.ndarray, width: int, *blocks):
        """
        Evaluates the elementwise `fn(*blocks, lower, upper)` against each column's
        own variable bounds.
        """

        out = fn(*blocks, self.var_lower, self.var_upper)
        if self._bound_cols.size:
            mask, cols = self._active(self._bound_cols, pos, width)
            if cols.size:
                rows = self._bound_rows[mask]
                out[rows, cols] = fn(
                    *(b[rows, cols] for b in blocks),
                    self._bound_lower[mask],
                    self._bound_upper[mask],
                )
        return out

    def support(self, v: np.ndarray, pos: np.ndarray, width: int) -> np.ndarray:
        """Per-column support function of the variable box."""
        return column_sums(self.apply(support_terms, pos, width, v))

    def gradient(self, aty: np.ndarray, perm: np.ndarray, pos: np.ndarray, width: int) -> np.ndarray:
        """Returns `C + A^T Y` for the leading columns."""
        if self.signed_unit:
            out = np.array(aty, order="F")
            orig = perm[:width]
            out[self._unit_rows[orig], np.arange(width)] += self._unit_sign[orig]
            return out

        out = aty + self.c
        if self._obj_cols.size:
            mask, cols = self._active(self._obj_cols, pos, width)
            if cols.size:
                rows = self._obj_rows[mask]
                out[rows, cols] = aty[rows, cols] + self._obj_values[mask]
        return out

    def objective_values(self, X: np.ndarray, perm: np.ndarray, pos: np.ndarray, width: int) -> np.ndarray:
        """Per-column `c_j^T x_j`."""
        if self.signed_unit:
            orig = perm[:width]
            return self._unit_sign[orig] * X[self._unit_rows[orig], np.arange(width)]

        out = column_sums(self.c * X)
        if self._obj_cols.size:
            mask, cols = self._active(self._obj_cols, pos, width)
            if cols.size:
                rows = self._obj_rows[mask]
                correction = (self._obj_values[mask] - self.c[rows, 0]) * X[rows, cols]
                np.add.at(out, cols, correction)
        return out

    def objective_norms(self, perm: np.ndarray, width: int) -> np.ndarray:
        return self._c_norms[perm[:width]]
