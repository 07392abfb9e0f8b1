import numpy as np

from batchlp.model import LpProblem
from batchlp.sparse import from_dense


def dense_problem(A, c, row_lower, row_upper, var_lower, var_upper, **kwargs) -> LpProblem:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    return LpProblem(from_dense(A), c, row_lower, row_upper, var_lower, var_upper, **kwargs)


def random_feasible_lp(seed: int, m: int = 3, n: int = 4) -> LpProblem:
    """
    A tiny LP with a finite box and rows built around a point of the box, so
    it is always feasible and bounded. Data are small integers and halves so
    the exact oracle sees them without rounding.
    """

    rng = np.random.default_rng(seed)
    upper = rng.integers(1, 5, size=n).astype(np.float64)
    point = np.round(rng.uniform(0, upper) * 2) / 2

    A = rng.integers(-3, 4, size=(m, n)).astype(np.float64)
    for i in range(m):
        if not A[i].any():
            A[i, rng.integers(n)] = 1.0

    activity = A @ point
    row_lower = np.full(m, -np.inf)
    row_upper = np.full(m, np.inf)
    for i in range(m):
        kind = rng.integers(4)
        slack = float(rng.integers(0, 3))
        if kind == 0:
            row_upper[i] = activity[i] + slack
        elif kind == 1:
            row_lower[i] = activity[i] - slack
        elif kind == 2:
            row_lower[i] = activity[i] - slack
            row_upper[i] = activity[i] + 1.0
        else:
            row_lower[i] = row_upper[i] = activity[i]

    c = rng.integers(-5, 6, size=n).astype(np.float64)
    return dense_problem(A, c, row_lower, row_upper, np.zeros(n), upper, name=f"random_{seed}")


def random_primal_infeasible_lp(seed: int, m: int = 3, n: int = 4) -> LpProblem:
    """
    Row 0 asks for more than its nonnegative coefficients can reach over the
    box. The remaining rows are upper bounds no point of the box violates.
    """

    rng = np.random.default_rng(seed)
    upper = rng.integers(1, 5, size=n).astype(np.float64)

    A = rng.integers(-3, 4, size=(m, n)).astype(np.float64)
    A[0] = rng.integers(1, 4, size=n)
    row_lower = np.full(m, -np.inf)
    row_upper = np.abs(A) @ upper + 1.0
    row_lower[0] = A[0] @ upper + rng.integers(1, 4) / 2.0
    row_upper[0] = np.inf

    c = rng.integers(-5, 6, size=n).astype(np.float64)
    return dense_problem(A, c, row_lower, row_upper, np.zeros(n), upper, name=f"infeasible_{seed}")


def random_dual_infeasible_lp(seed: int, m: int = 3, n: int = 4) -> LpProblem:
    """
    Covering rows over nonnegative columns that are unbounded above and of
    negative cost, so `x + t e_0` stays feasible while the objective falls.
    """

    rng = np.random.default_rng(seed)
    A = rng.integers(0, 4, size=(m, n)).astype(np.float64)
    A[:, 0] = rng.integers(1, 4, size=m)
    row_lower = rng.integers(1, 6, size=m).astype(np.float64)

    c = -rng.integers(1, 6, size=n).astype(np.float64)
    free = np.full(n, np.inf)
    return dense_problem(A, c, row_lower, np.full(m, np.inf), np.zeros(n), free, name=f"unbounded_{seed}")
