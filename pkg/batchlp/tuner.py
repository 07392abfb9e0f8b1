from __future__ import annotations

import logging
import time
from typing import Callable, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, conint, validate_arguments, validator

from batchlp.sparse import SparseMatrix, new_block, spmm

_log = logging.getLogger("batchlp-tuner")

DEFAULT_WIDTHS = (32, 64, 128, 256, 512, 1024, 2048)
DEFAULT_REPETITIONS = 10
WARMUP_ROUNDS = 2


class WidthTiming(BaseModel):
    width: int
    total_seconds: float
    per_column_seconds: float
    clamped: bool = False


class TuneReport(BaseModel):
    """
    SpMM timings per candidate width and the width picked from them.

    Timings are only meaningful when nothing else competes for the CPU while
    they are taken.
    """

    timings: List[WidthTiming]
    chosen_width: int
    repetitions: int
    overhead_seconds: float = 0.0

    @validator("chosen_width")
    def check_chosen(cls, v, values):
        timings = values.get("timings")
        if timings is not None and v != pick_width(timings):
            raise ValueError(f"chosen width {v} is not the fastest per column in the report")
        return v

    @property
    def widths(self) -> List[int]:
        return [t.width for t in self.timings]


def pick_width(timings: Sequence[WidthTiming]) -> int:
    """The width with the smallest time per column, ties going to the wider one."""
    best = min(timings, key=lambda t: (t.per_column_seconds, -t.width))
    return best.width


def _time_loop(body: Callable[[], None], repetitions: int) -> float:
    for _ in range(WARMUP_ROUNDS):
        body()

    started = time.perf_counter()
    for _ in range(repetitions):
        body()
    return time.perf_counter() - started


def _measure(A: SparseMatrix, width: int, repetitions: int, seed: int, overhead: float) -> WidthTiming:
    rng = np.random.default_rng(seed)
    X = np.asfortranarray(rng.standard_normal((A.n_cols, width)))
    Y = np.asfortranarray(rng.standard_normal((A.n_rows, width)))
    AX = new_block(A.n_rows, width)
    ATY = new_block(A.n_cols, width)

    def _products():
        spmm(A, X, out=AX)
        spmm(A, Y, True, out=ATY)

    total = _time_loop(_products, repetitions) - overhead
    clamped = total < 0.0
    if clamped:
        _log.warning(f"width {width}: timing below the harness overhead, clamped to 0")
        total = 0.0

    _log.debug(f"width {width}: {total:.6f}s for {repetitions} rounds")
    return WidthTiming(
        width=width, total_seconds=total, per_column_seconds=total / width, clamped=clamped
    )


def _overhead(repetitions: int) -> float:
    return _time_loop(lambda: None, repetitions)


@validate_arguments(config=dict(arbitrary_types_allowed=True))
def measure_spmm(
    A: SparseMatrix,
    width: conint(ge=1),
    repetitions: conint(ge=3) = DEFAULT_REPETITIONS,
    seed: int = 0,
) -> Tuple[float, float]:
    """
    Times `repetitions` rounds of `A X` followed by `A^T Y` on seeded random
    blocks of `width` columns, after two untimed warm-up rounds.

    Returns:
        The total seconds and the seconds per column.
    """

    timing = _measure(A, width, repetitions, seed, _overhead(repetitions))
    return timing.total_seconds, timing.per_column_seconds


@validate_arguments(config=dict(arbitrary_types_allowed=True))
def tune(
    A: SparseMatrix,
    candidates: List[conint(ge=1)] = list(DEFAULT_WIDTHS),
    repetitions: conint(ge=3) = DEFAULT_REPETITIONS,
    seed: int = 0,
) -> TuneReport:
    """
    Measures every candidate width and picks the one with the cheapest column.

    Args:
        A:
            The matrix the solver will run on.

        candidates:
            The widths to try, at least one.

        repetitions:
            Timed rounds per width.

        seed:
            Seeds the random input blocks.
    """

    if not candidates:
        raise ValueError("at least one candidate width is required")

    overhead = _overhead(repetitions)
    timings = [_measure(A, width, repetitions, seed, overhead) for width in candidates]
    chosen = pick_width(timings)
    _log.info(f"picked batch width {chosen} from {[t.width for t in timings]}")
    return TuneReport(
        timings=timings, chosen_width=chosen, repetitions=repetitions, overhead_seconds=overhead
    )


def choose_batch_size(
    A: SparseMatrix,
    candidates: Sequence[int] = DEFAULT_WIDTHS,
    repetitions: int = DEFAULT_REPETITIONS,
    seed: int = 0,
) -> int:
    """The candidate width with the lowest measured SpMM time per column."""
    return tune(A, list(candidates), repetitions, seed).chosen_width
