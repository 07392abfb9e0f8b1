"""
Seeded random MIP instances of four classic families.

The generators reproduce the shapes of the usual learning-to-branch benchmark
families (row and column counts, density, objective ranges), not the exact
instances of any other generator. The same arguments always give the same
problem.
"""

from __future__ import annotations

from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import confloat, conint, validate_arguments

from batchlp.model import LpProblem
from batchlp.sparse import build_csr


class Family(Enum):
    SET_COVER = "set-cover"
    COMB_AUCTION = "comb-auction"
    MAX_IND_SET = "max-ind-set"
    FACILITY_LOC = "facility-loc"


# Small sizes used by `bench` and the CLI when none are given.
DEFAULT_SIZES: Dict[Family, Dict[str, float]] = {
    Family.SET_COVER: {"n_rows": 100, "n_cols": 200, "density": 0.05},
    Family.COMB_AUCTION: {"n_items": 40, "n_bids": 80},
    Family.MAX_IND_SET: {"n_nodes": 60, "edge_probability": 0.08},
    Family.FACILITY_LOC: {"n_customers": 20, "n_facilities": 10},
}


def _binary_problem(
    triplets: List[Tuple[int, int, float]],
    m: int,
    n: int,
    c: np.ndarray,
    row_lower: np.ndarray,
    row_upper: np.ndarray,
    name: str,
) -> LpProblem:
    return LpProblem(
        build_csr(triplets, m, n),
        c,
        row_lower,
        row_upper,
        np.zeros(n),
        np.ones(n),
        name=name,
        integer_columns=range(n),
    )


@validate_arguments
def set_cover(
    n_rows: conint(ge=1),
    n_cols: conint(ge=1),
    density: confloat(gt=0, le=1) = 0.05,
    max_coef: conint(ge=1) = 100,
    seed: int = 0,
) -> LpProblem:
    """
    `min c^T x` subject to `A x >= 1`, `x` binary, with A a random 0/1 matrix
    holding about `density * n_rows * n_cols` entries and no empty row.
    """

    rng = np.random.default_rng(seed)
    nnz = max(int(round(density * n_rows * n_cols)), n_rows)
    flat = rng.choice(n_rows * n_cols, size=nnz, replace=False)
    rows, cols = np.divmod(flat, n_cols)

    covered = np.zeros(n_rows, dtype=bool)
    covered[rows] = True
    missing = np.flatnonzero(~covered)
    rows = np.concatenate([rows, missing])
    cols = np.concatenate([cols, rng.integers(0, n_cols, size=missing.size)])

    triplets = [(int(i), int(j), 1.0) for i, j in zip(rows, cols)]
    c = rng.integers(1, max_coef + 1, size=n_cols).astype(np.float64)
    return _binary_problem(
        triplets,
        n_rows,
        n_cols,
        c,
        np.ones(n_rows),
        np.full(n_rows, np.inf),
        f"setcover_{n_rows}r_{n_cols}c_{density:g}",
    )


@validate_arguments
def combinatorial_auction(
    n_items: conint(ge=1),
    n_bids: conint(ge=1),
    max_bundle: conint(ge=1) = 5,
    seed: int = 0,
) -> LpProblem:
    """
    Winner determination: accept bids (bundles of items at a price) to maximize
    revenue, each item sold at most once. Written as a minimization of the
    negated revenue, one packing row per item that appears in a bid.
    """

    rng = np.random.default_rng(seed)
    values = rng.uniform(1.0, 100.0, size=n_items)

    bundles = []
    prices = np.zeros(n_bids)
    for b in range(n_bids):
        size = int(rng.integers(1, min(max_bundle, n_items) + 1))
        items = np.sort(rng.choice(n_items, size=size, replace=False))
        bundles.append(items)
        prices[b] = values[items].sum() * rng.uniform(0.9, 1.1)

    used = sorted({int(i) for items in bundles for i in items})
    row_of = {item: r for r, item in enumerate(used)}
    triplets = [(row_of[int(i)], b, 1.0) for b, items in enumerate(bundles) for i in items]

    m = len(used)
    return _binary_problem(
        triplets,
        m,
        n_bids,
        -np.round(prices, 2),
        np.full(m, -np.inf),
        np.ones(m),
        f"cauction_{n_items}_{n_bids}",
    )


@validate_arguments
def max_independent_set(
    n_nodes: conint(ge=1),
    edge_probability: confloat(ge=0, le=1) = 0.1,
    seed: int = 0,
    edges: Optional[List[Tuple[conint(ge=0), conint(ge=0)]]] = None,
) -> LpProblem:
    """
    `max sum x` over a graph with one row `x_i + x_j <= 1` per edge. The graph
    is Erdos-Renyi unless `edges` is given.
    """

    if edges is None:
        rng = np.random.default_rng(seed)
        upper = np.triu(rng.random((n_nodes, n_nodes)) < edge_probability, k=1)
        edges = [(int(i), int(j)) for i, j in zip(*np.nonzero(upper))]

    edges = sorted({(min(i, j), max(i, j)) for i, j in edges if i != j})
    if any(j >= n_nodes for _, j in edges):
        raise ValueError(f"edge endpoint out of range for {n_nodes} nodes")

    triplets = []
    for r, (i, j) in enumerate(edges):
        triplets.append((r, i, 1.0))
        triplets.append((r, j, 1.0))

    m = len(edges)
    return _binary_problem(
        triplets,
        m,
        n_nodes,
        -np.ones(n_nodes),
        np.full(m, -np.inf),
        np.ones(m),
        f"indset_{n_nodes}_{edge_probability:g}",
    )


@validate_arguments
def facility_location(
    n_customers: conint(ge=1),
    n_facilities: conint(ge=1),
    ratio: confloat(gt=0) = 5.0,
    tighten: bool = True,
    seed: int = 0,
) -> LpProblem:
    """
    Capacitated facility location.

    Variables are the assignment fractions `x_ij` (customer i served by facility
    j) followed by the binary opening decisions `y_j`. Rows: every customer is
    fully served, facility capacities, total capacity covers total demand and,
    with `tighten`, `x_ij <= y_j`.
    """

    rng = np.random.default_rng(seed)
    customers = rng.random((n_customers, 2))
    facilities = rng.random((n_facilities, 2))

    demand = rng.integers(5, 36, size=n_customers).astype(np.float64)
    capacity = rng.integers(10, 161, size=n_facilities).astype(np.float64)
    fixed = np.round(
        rng.integers(100, 111, size=n_facilities) * np.sqrt(capacity)
        + rng.integers(0, 91, size=n_facilities)
    )
    capacity = np.round(capacity * ratio * demand.sum() / capacity.sum())

    distance = np.linalg.norm(customers[:, None, :] - facilities[None, :, :], axis=2)
    transport = np.round(10.0 * distance * demand[:, None], 4)

    n_assign = n_customers * n_facilities
    n = n_assign + n_facilities

    def x(i, j):
        return i * n_facilities + j

    def y(j):
        return n_assign + j

    triplets = []
    lower = []
    upper = []

    for i in range(n_customers):
        r = len(lower)
        triplets.extend((r, x(i, j), 1.0) for j in range(n_facilities))
        lower.append(1.0)
        upper.append(np.inf)

    for j in range(n_facilities):
        r = len(lower)
        triplets.extend((r, x(i, j), demand[i]) for i in range(n_customers))
        triplets.append((r, y(j), -capacity[j]))
        lower.append(-np.inf)
        upper.append(0.0)

    r = len(lower)
    triplets.extend((r, y(j), capacity[j]) for j in range(n_facilities))
    lower.append(demand.sum())
    upper.append(np.inf)

    if tighten:
        for i in range(n_customers):
            for j in range(n_facilities):
                r = len(lower)
                triplets.append((r, x(i, j), 1.0))
                triplets.append((r, y(j), -1.0))
                lower.append(-np.inf)
                upper.append(0.0)

    c = np.concatenate([transport.reshape(-1), fixed])
    m = len(lower)
    return LpProblem(
        build_csr(triplets, m, n),
        c,
        np.array(lower),
        np.array(upper),
        np.zeros(n),
        np.ones(n),
        name=f"cfl_{n_customers}_{n_facilities}_{ratio:g}",
        integer_columns=range(n_assign, n),
    )


GENERATORS = {
    Family.SET_COVER: set_cover,
    Family.COMB_AUCTION: combinatorial_auction,
    Family.MAX_IND_SET: max_independent_set,
    Family.FACILITY_LOC: facility_location,
}


def generate_instance(family: Family, sizes: Optional[Dict[str, float]] = None, seed: int = 0) -> LpProblem:
    """
    Generates one instance of `family`. The sizes are the keyword arguments of
    the family's generator, `DEFAULT_SIZES` fills in any left out.
    """

    family = Family(family)
    params = dict(DEFAULT_SIZES[family])
    params.update(sizes or {})
    return GENERATORS[family](seed=seed, **params)


def parse_sizes(values: Sequence[str]) -> Dict[str, float]:
    """Parses `key=value` pairs, integral values become ints."""
    out = {}
    for item in values:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"size {item!r} is not of the form key=value")
        number = float(raw)
        out[key.strip().replace("-", "_")] = int(number) if number.is_integer() and "." not in raw else number
    return out
