from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from batchlp.exceptions import MpsFormatError
from batchlp.model import LpProblem
from batchlp.sparse import build_csr

_log = logging.getLogger("batchlp-mps")

SECTIONS = ("NAME", "OBJSENSE", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA")
ROW_TYPES = ("N", "L", "G", "E")
VALUED_BOUNDS = ("LO", "UP", "FX", "LI", "UI")
FLAG_BOUNDS = ("FR", "MI", "PL", "BV")


def _number(token: str, line_number: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise MpsFormatError(line_number, f"expected a number, got {token!r}") from None


class _MpsReader:
    def __init__(self):
        self.name = ""
        self.section: Optional[str] = None
        self.maximize = False

        self.objective_row: Optional[str] = None
        self.row_index: Dict[str, int] = {}
        self.row_types: List[str] = []
        self.rhs: Dict[int, float] = {}
        self.ranges: Dict[int, float] = {}

        self.col_index: Dict[str, int] = {}
        self.objective: Dict[int, float] = {}
        self.triplets: List[Tuple[int, int, float]] = []
        self.integer: List[int] = []
        self.in_integer_block = False

        self.lower: Dict[int, float] = {}
        self.upper: Dict[int, float] = {}

    def feed(self, line_number: int, line: str):
        if not line.strip() or line.startswith("*"):
            return

        tokens = line.split()
        if not line[0].isspace():
            self._header(line_number, tokens)
            return

        if self.section is None:
            raise MpsFormatError(line_number, "data line before any section header")

        handler = getattr(self, f"_{self.section.lower()}")
        handler(line_number, tokens)

    def _header(self, line_number: int, tokens: List[str]):
        keyword = tokens[0].upper()
        if keyword not in SECTIONS:
            raise MpsFormatError(line_number, f"unknown section {tokens[0]!r}")

        if keyword == "NAME":
            self.name = tokens[1] if len(tokens) > 1 else ""
        elif keyword == "OBJSENSE" and len(tokens) > 1:
            self._objsense(line_number, tokens[1:])
        elif keyword == "COLUMNS" and self.objective_row is None:
            _log.debug("no objective row declared, the objective is zero")
        elif keyword in ("RHS", "RANGES", "BOUNDS") and len(tokens) > 1:
            _log.debug(f"ignoring the set name on the {keyword} header")

        self.section = keyword

    def _name(self, line_number: int, tokens: List[str]):
        raise MpsFormatError(line_number, "unexpected data after NAME")

    def _endata(self, line_number: int, tokens: List[str]):
        raise MpsFormatError(line_number, "data after ENDATA")

    def _objsense(self, line_number: int, tokens: List[str]):
        sense = tokens[0].upper()
        if sense in ("MAX", "MAXIMIZE"):
            self.maximize = True
        elif sense in ("MIN", "MINIMIZE"):
            self.maximize = False
        else:
            raise MpsFormatError(line_number, f"unknown objective sense {tokens[0]!r}")

    def _rows(self, line_number: int, tokens: List[str]):
        if len(tokens) != 2:
            raise MpsFormatError(line_number, "ROWS entries are `type name`")

        kind, name = tokens[0].upper(), tokens[1]
        if kind not in ROW_TYPES:
            raise MpsFormatError(line_number, f"unknown row type {tokens[0]!r}")
        if name in self.row_index or name == self.objective_row:
            raise MpsFormatError(line_number, f"duplicate row name {name!r}")

        if kind == "N" and self.objective_row is None:
            self.objective_row = name
            return

        self.row_index[name] = len(self.row_types)
        self.row_types.append(kind)

    def _columns(self, line_number: int, tokens: List[str]):
        if len(tokens) >= 3 and tokens[1].strip("'").upper() == "MARKER":
            marker = tokens[2].strip("'").upper()
            if marker == "INTORG":
                self.in_integer_block = True
            elif marker == "INTEND":
                self.in_integer_block = False
            else:
                raise MpsFormatError(line_number, f"unknown marker {tokens[2]!r}")
            return

        if len(tokens) not in (3, 5):
            raise MpsFormatError(line_number, "COLUMNS entries are `column row value [row value]`")

        col = self.col_index.get(tokens[0])
        if col is None:
            col = self.col_index[tokens[0]] = len(self.col_index)
            if self.in_integer_block:
                self.integer.append(col)

        for row_name, token in zip(tokens[1::2], tokens[2::2]):
            value = _number(token, line_number)
            if row_name == self.objective_row:
                self.objective[col] = self.objective.get(col, 0.0) + value
            elif row_name in self.row_index:
                self.triplets.append((self.row_index[row_name], col, value))
            else:
                raise MpsFormatError(line_number, f"unknown row {row_name!r}")

    def _pairs(self, line_number: int, tokens: List[str]) -> List[Tuple[str, float]]:
        # An odd token count carries a leading set name.
        if len(tokens) % 2 == 1:
            tokens = tokens[1:]
        if not tokens:
            raise MpsFormatError(line_number, "expected `row value` pairs")
        return [(name, _number(v, line_number)) for name, v in zip(tokens[::2], tokens[1::2])]

    def _rhs(self, line_number: int, tokens: List[str]):
        for name, value in self._pairs(line_number, tokens):
            if name == self.objective_row:
                _log.debug(f"line {line_number}: objective constant {-value} dropped")
                continue
            if name not in self.row_index:
                raise MpsFormatError(line_number, f"unknown row {name!r}")
            self.rhs[self.row_index[name]] = value

    def _ranges(self, line_number: int, tokens: List[str]):
        for name, value in self._pairs(line_number, tokens):
            if name not in self.row_index:
                raise MpsFormatError(line_number, f"unknown row {name!r}")
            self.ranges[self.row_index[name]] = value

    def _bounds(self, line_number: int, tokens: List[str]):
        kind = tokens[0].upper()
        if kind in VALUED_BOUNDS:
            if len(tokens) not in (3, 4):
                raise MpsFormatError(line_number, f"{kind} bound needs a column and a value")
            col_name, value = tokens[-2], _number(tokens[-1], line_number)
        elif kind in FLAG_BOUNDS:
            if len(tokens) not in (2, 3, 4):
                raise MpsFormatError(line_number, f"{kind} bound needs a column")
            col_name, value = tokens[2] if len(tokens) >= 3 else tokens[1], None
        else:
            raise MpsFormatError(line_number, f"unknown bound type {tokens[0]!r}")

        col = self.col_index.get(col_name)
        if col is None:
            raise MpsFormatError(line_number, f"bound on undeclared column {col_name!r}")

        if kind == "LO":
            self.lower[col] = value
        elif kind == "UP":
            if value < 0 and col not in self.lower:
                _log.warning(
                    f"line {line_number}: negative upper bound on {col_name!r} "
                    f"with a default lower bound, the lower bound becomes -inf"
                )
                self.lower[col] = -np.inf
            self.upper[col] = value
        elif kind == "FX":
            self.lower[col] = self.upper[col] = value
        elif kind == "FR":
            self.lower[col], self.upper[col] = -np.inf, np.inf
        elif kind == "MI":
            self.lower[col] = -np.inf
        elif kind == "PL":
            self.upper[col] = np.inf
        else:
            self.integer.append(col)
            if kind == "BV":
                self.lower[col], self.upper[col] = 0.0, 1.0
            elif kind == "LI":
                self.lower[col] = value
            else:
                self.upper[col] = value

    def _row_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        m = len(self.row_types)
        lower = np.full(m, -np.inf)
        upper = np.full(m, np.inf)

        for i, kind in enumerate(self.row_types):
            rhs = self.rhs.get(i, 0.0)
            spread = self.ranges.get(i)
            if kind == "L":
                upper[i] = rhs
                if spread is not None:
                    lower[i] = rhs - abs(spread)
            elif kind == "G":
                lower[i] = rhs
                if spread is not None:
                    upper[i] = rhs + abs(spread)
            elif kind == "E":
                lower[i] = upper[i] = rhs
                if spread is not None and spread > 0:
                    upper[i] = rhs + spread
                elif spread is not None and spread < 0:
                    lower[i] = rhs + spread
        return lower, upper

    def build(self, check: bool = True) -> LpProblem:
        n = len(self.col_index)
        m = len(self.row_types)

        c = np.zeros(n)
        for col, value in self.objective.items():
            c[col] = value
        if self.maximize:
            _log.info("maximization objective negated")
            c = -c

        var_lower = np.zeros(n)
        var_upper = np.full(n, np.inf)
        for col, value in self.lower.items():
            var_lower[col] = value
        for col, value in self.upper.items():
            var_upper[col] = value

        row_lower, row_upper = self._row_bounds()
        row_names = [None] * m
        for name, i in self.row_index.items():
            row_names[i] = name
        col_names = [None] * n
        for name, j in self.col_index.items():
            col_names[j] = name

        return LpProblem(
            build_csr(self.triplets, m, n),
            c,
            row_lower,
            row_upper,
            var_lower,
            var_upper,
            name=self.name,
            row_names=row_names,
            col_names=col_names,
            integer_columns=self.integer,
            check=check,
        )


def parse_mps(text: str, check: bool = True) -> LpProblem:
    """
    Parses free format MPS.

    The first N row is the objective, later N rows are kept as free rows.
    Integer markers and integer bound types only record the column in
    `integer_columns`, the LP is always the relaxation.

    Raises:
        MpsFormatError:
            The text is malformed, the error carries the 1-based line number.
    """

    reader = _MpsReader()
    for line_number, line in enumerate(text.splitlines(), start=1):
        reader.feed(line_number, line)
        if reader.section == "ENDATA":
            break

    if reader.section != "ENDATA":
        _log.debug("no ENDATA record, parsed to the end of input")

    problem = reader.build(check=check)
    _log.info(f"parsed {problem!r} with {len(problem.integer_columns)} integer columns")
    return problem


def read_mps(path: Union[str, Path], check: bool = True) -> LpProblem:
    return parse_mps(Path(path).read_text(), check=check)


def _fmt(value: float) -> str:
    return repr(float(value))


def _objective_name(problem: LpProblem) -> str:
    name = "OBJ"
    while name in problem.row_names:
        name += "_"
    return name


def write_mps(problem: LpProblem) -> str:
    """
    Renders `problem` as free format MPS. Two-sided rows are written as G rows
    with a range, integer columns between markers.
    """

    objective = _objective_name(problem)
    lines = [f"NAME {problem.name}".rstrip(), "ROWS", f" N {objective}"]

    ranges = []
    rhs = []
    for i, name in enumerate(problem.row_names):
        lo, hi = problem.row_lower[i], problem.row_upper[i]
        if lo == hi:
            lines.append(f" E {name}")
            rhs.append((name, lo))
        elif np.isfinite(lo) and np.isfinite(hi):
            lines.append(f" G {name}")
            rhs.append((name, lo))
            ranges.append((name, hi - lo))
        elif np.isfinite(hi):
            lines.append(f" L {name}")
            rhs.append((name, hi))
        elif np.isfinite(lo):
            lines.append(f" G {name}")
            rhs.append((name, lo))
        else:
            lines.append(f" N {name}")

    lines.append("COLUMNS")
    csc = problem.A.csr.tocsc()
    integer = set(problem.integer_columns)
    in_marker = False
    for j, col in enumerate(problem.col_names):
        if (j in integer) != in_marker:
            in_marker = not in_marker
            tag = "INTORG" if in_marker else "INTEND"
            lines.append(f" MARKER 'MARKER' '{tag}'")

        entries = []
        if problem.c[j] != 0.0:
            entries.append((objective, problem.c[j]))
        start, stop = csc.indptr[j], csc.indptr[j + 1]
        for i, value in zip(csc.indices[start:stop], csc.data[start:stop]):
            entries.append((problem.row_names[i], value))
        if not entries:
            entries.append((objective, 0.0))

        for row, value in entries:
            lines.append(f" {col} {row} {_fmt(value)}")

    if in_marker:
        lines.append(" MARKER 'MARKER' 'INTEND'")

    if rhs:
        lines.append("RHS")
        lines.extend(f" RHS {name} {_fmt(value)}" for name, value in rhs if value != 0.0)

    if ranges:
        lines.append("RANGES")
        lines.extend(f" RNG {name} {_fmt(value)}" for name, value in ranges)

    bounds = []
    for j, col in enumerate(problem.col_names):
        lo, hi = problem.var_lower[j], problem.var_upper[j]
        if lo == 0.0 and hi == np.inf:
            continue
        if lo == hi:
            bounds.append(f" FX BND {col} {_fmt(lo)}")
            continue
        if lo == -np.inf and hi == np.inf:
            bounds.append(f" FR BND {col}")
            continue

        if lo == -np.inf:
            bounds.append(f" MI BND {col}")
        elif lo != 0.0:
            bounds.append(f" LO BND {col} {_fmt(lo)}")
        if hi != np.inf:
            bounds.append(f" UP BND {col} {_fmt(hi)}")

    if bounds:
        lines.append("BOUNDS")
        lines.extend(bounds)

    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def save_mps(problem: LpProblem, path: Union[str, Path]):
    Path(path).write_text(write_mps(problem))
