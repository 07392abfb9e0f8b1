from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse

from batchlp.config import get_settings
from batchlp.exceptions import DimensionMismatch, InvalidMatrix, ZeroMatrix

_log = logging.getLogger("batchlp-linalg")

# Dense blocks are plain Fortran ordered arrays, column j is contiguous.
DenseColumnBlock = np.ndarray

MAX_DIMENSION = np.iinfo(np.int32).max

NORM_TOLERANCE = 1e-4
NORM_MAX_ITERATIONS = 5000
NORM_INFLATION = 1.01
NORM_SEED = 0

_executor_lock = threading.Lock()
_executor: Optional[ThreadPoolExecutor] = None


def _get_executor(threads: int) -> ThreadPoolExecutor:
    global _executor

    with _executor_lock:
        if _executor is None or _executor._max_workers != threads:  # noqa
            if _executor is not None:
                _executor.shutdown(wait=False)
            _executor = ThreadPoolExecutor(
                max_workers=threads, thread_name_prefix="batchlp-spmm"
            )
        return _executor


class SparseMatrix:
    """
    An immutable CSR matrix with its transpose stored alongside.

    Both orientations are kept in memory so `A X` and `A^T Y` run the same row
    oriented kernel. Instances are safe to share between threads.
    """

    __slots__ = ("_csr", "_csr_t", "_partitions")

    def __init__(self, csr: scipy.sparse.csr_matrix):
        self._csr = csr
        self._csr_t = csr.transpose().tocsr()
        self._csr_t.sort_indices()
        self._partitions: Dict[Tuple[bool, int], List[Tuple[int, int, scipy.sparse.csr_matrix]]] = {}

    @property
    def n_rows(self) -> int:
        return self._csr.shape[0]

    @property
    def n_cols(self) -> int:
        return self._csr.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self._csr.shape

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def row_offsets(self) -> np.ndarray:
        return self._csr.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self._csr.indices

    @property
    def values(self) -> np.ndarray:
        return self._csr.data

    @property
    def csr(self) -> scipy.sparse.csr_matrix:
        return self._csr

    @property
    def T(self) -> SparseMatrix:
        """The transpose, sharing both stored orientations."""
        out = SparseMatrix.__new__(SparseMatrix)
        out._csr = self._csr_t
        out._csr_t = self._csr
        out._partitions = {}
        return out

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def triplets(self) -> List[Tuple[int, int, float]]:
        coo = self._csr.tocoo()
        return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    def append_row(self, indices: Sequence[int], values: Sequence[float]) -> SparseMatrix:
        """Returns a new matrix with one extra row appended at the bottom."""
        triplets = self.triplets()
        triplets.extend((self.n_rows, int(i), float(v)) for i, v in zip(indices, values))
        return build_csr(triplets, self.n_rows + 1, self.n_cols)

    def _row_blocks(self, transpose: bool, threads: int):
        key = (transpose, threads)
        blocks = self._partitions.get(key)
        if blocks is not None:
            return blocks

        mat = self._csr_t if transpose else self._csr
        bounds = np.linspace(0, mat.shape[0], threads + 1).astype(int)
        blocks = [
            (int(start), int(stop), mat[start:stop])
            for start, stop in zip(bounds[:-1], bounds[1:])
            if stop > start
        ]
        self._partitions[key] = blocks
        return blocks

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        if self.shape != other.shape or self.nnz != other.nnz:
            return False
        return (
            np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"SparseMatrix(n_rows={self.n_rows}, n_cols={self.n_cols}, nnz={self.nnz})"


def build_csr(
    triplets: Iterable[Tuple[int, int, float]], n_rows: int, n_cols: int
) -> SparseMatrix:
    """
    Builds a CSR matrix from (row, col, value) triplets.

    Duplicate entries are summed and entries that are exactly zero after summing
    are dropped. The transpose is built eagerly.

    Args:
        triplets:
            The (row, col, value) entries, in any order.

        n_rows:
            The number of rows of the matrix.

        n_cols:
            The number of columns of the matrix.
    """

    if n_rows < 0 or n_cols < 0:
        raise InvalidMatrix(f"negative dimensions ({n_rows}, {n_cols})")
    if n_rows > MAX_DIMENSION or n_cols > MAX_DIMENSION:
        raise InvalidMatrix(
            f"dimensions ({n_rows}, {n_cols}) overflow the index type (max {MAX_DIMENSION})"
        )

    entries = list(triplets)
    if entries:
        rows, cols, vals = zip(*entries)
    else:
        rows, cols, vals = (), (), ()

    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)

    if rows.size:
        bad_rows = (rows < 0) | (rows >= n_rows)
        bad_cols = (cols < 0) | (cols >= n_cols)
        if bad_rows.any():
            idx = int(np.flatnonzero(bad_rows)[0])
            raise InvalidMatrix(
                f"row index {rows[idx]} of entry {idx} out of range for {n_rows} rows"
            )
        if bad_cols.any():
            idx = int(np.flatnonzero(bad_cols)[0])
            raise InvalidMatrix(
                f"column index {cols[idx]} of entry {idx} out of range for {n_cols} columns"
            )
        if not np.all(np.isfinite(vals)):
            raise InvalidMatrix("matrix values must be finite")

    coo = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n_rows, n_cols))
    csr = coo.tocsr()
    csr.sum_duplicates()
    csr.eliminate_zeros()
    csr.sort_indices()
    return SparseMatrix(csr)


def from_dense(dense: np.ndarray) -> SparseMatrix:
    dense = np.atleast_2d(np.asarray(dense, dtype=np.float64))
    rows, cols = np.nonzero(dense)
    return build_csr(
        zip(rows.tolist(), cols.tolist(), dense[rows, cols].tolist()), *dense.shape
    )


def new_block(n_rows: int, n_cols: int) -> DenseColumnBlock:
    """Allocates a zeroed column major block."""
    return np.zeros((n_rows, n_cols), dtype=np.float64, order="F")


def as_block(values: np.ndarray) -> DenseColumnBlock:
    """Views a vector as a one column block, or copies a matrix into column major order."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        return values.reshape(-1, 1, order="F")
    return np.asfortranarray(values)


def spmm(
    A: SparseMatrix,
    X: DenseColumnBlock,
    transpose_A: bool = False,
    *,
    active_width: Optional[int] = None,
    out: Optional[DenseColumnBlock] = None,
) -> DenseColumnBlock:
    """
    Computes `A X` (or `A^T X`) for the leading `active_width` columns of X.

    Column j of the output only depends on column j of X and every output entry
    is accumulated in stored column order, so the result of a column does not
    depend on the batch width or on the thread count.

    Args:
        A:
            The sparse matrix.

        X:
            The dense input block (n_cols(A) x N, or n_rows(A) x N when transposed).

        transpose_A:
            Use the stored transpose instead of A.

        active_width:
            Only the first `active_width` columns are multiplied. Columns past it
            in `out` are left untouched.

        out:
            An optional output block to write into.
    """

    if X.ndim != 2:
        raise DimensionMismatch(f"expected a 2d column block, got {X.ndim} dimensions")

    mat = A._csr_t if transpose_A else A._csr  # noqa
    rows, inner = mat.shape
    if X.shape[0] != inner:
        raise DimensionMismatch(
            f"inner dimensions disagree: matrix has {inner} columns, block has {X.shape[0]} rows"
        )

    width = X.shape[1] if active_width is None else active_width
    if width < 0 or width > X.shape[1]:
        raise DimensionMismatch(f"active width {width} outside [0, {X.shape[1]}]")

    if out is None:
        out = new_block(rows, X.shape[1])
    elif out.shape[0] != rows or out.shape[1] < width:
        raise DimensionMismatch(f"output block shape {out.shape} cannot hold {rows}x{width}")

    if width == 0 or rows == 0:
        return out

    source = X[:, :width]
    threads = get_settings().threads
    if threads == 1 or rows < 2 * threads:
        out[:, :width] = mat @ source
        return out

    blocks = A._row_blocks(transpose_A, threads)  # noqa

    def _run(block):
        start, stop, part = block
        out[start:stop, :width] = part @ source

    list(_get_executor(threads).map(_run, blocks))
    return out


def spmv(A: SparseMatrix, x: np.ndarray, transpose_A: bool = False) -> np.ndarray:
    """A matrix vector product routed through the one column SpMM kernel."""
    return spmm(A, as_block(x), transpose_A)[:, 0]


def column_sums(values: DenseColumnBlock) -> np.ndarray:
    # Column major keeps each column reduction contiguous, hence width independent.
    return np.sum(np.asfortranarray(values), axis=0)


def column_dots(X: DenseColumnBlock, Y: DenseColumnBlock) -> np.ndarray:
    return column_sums(X * Y)


def column_norms(X: DenseColumnBlock) -> np.ndarray:
    return np.sqrt(column_dots(X, X))


def _power_iteration(A: SparseMatrix, v: np.ndarray, tolerance: float, max_iterations: int) -> float:
    estimate = 0.0
    for iteration in range(max_iterations):
        w = spmv(A, spmv(A, v), transpose_A=True)
        eigen = float(v @ w)
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            break

        residual = float(np.linalg.norm(w - eigen * v))
        estimate = np.sqrt(max(eigen, 0.0))
        v = w / norm_w
        if residual <= tolerance * eigen:
            _log.debug(f"power iteration converged after {iteration + 1} steps: {estimate:.6e}")
            break
    else:
        _log.warning(
            f"power iteration hit its cap of {max_iterations} steps, estimate {estimate:.6e}"
        )

    # The last normalized iterate gives a lower bound that can only be tighter.
    return max(estimate, float(np.linalg.norm(spmv(A, v))))


def spectral_norm(
    A: SparseMatrix,
    tolerance: float = NORM_TOLERANCE,
    max_iterations: int = NORM_MAX_ITERATIONS,
) -> float:
    """
    Estimates ||A||_2 by power iteration on A^T A.

    One run starts at the normalized all-ones vector, a second one at a seeded
    random vector, and the larger estimate wins. The all-ones vector can be
    orthogonal to the top singular vector (e.g. `[[1, 1], [3, -3]]`), where
    its run settles on a smaller singular value. Each run stops once the eigen
    residual of A^T A is below `tolerance` relative to the estimate. The
    returned value is inflated by 1% so `eta * ||A||_2 < 1` holds even with
    estimation error.
    """

    if A.nnz == 0:
        raise ZeroMatrix(f"cannot estimate the norm of an all-zero {A.n_rows}x{A.n_cols} matrix")

    ones = np.ones(A.n_cols) / np.sqrt(A.n_cols)
    seeded = np.random.default_rng(NORM_SEED).standard_normal(A.n_cols)
    seeded /= np.linalg.norm(seeded)

    estimate = _power_iteration(A, seeded, tolerance, max_iterations)
    if np.any(spmv(A, ones)):
        estimate = max(estimate, _power_iteration(A, ones, tolerance, max_iterations))
    return estimate * NORM_INFLATION
