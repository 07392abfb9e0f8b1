import numpy as np
import pytest
from pydantic import ValidationError

from batchlp.formats.generators import (
    DEFAULT_SIZES,
    Family,
    combinatorial_auction,
    facility_location,
    generate_instance,
    max_independent_set,
    parse_sizes,
    set_cover,
)


@pytest.mark.parametrize("family", list(Family))
def test_generators_are_deterministic(family):
    first = generate_instance(family, seed=7)
    second = generate_instance(family, seed=7)

    assert first.A == second.A
    np.testing.assert_array_equal(first.c, second.c)
    np.testing.assert_array_equal(first.row_lower, second.row_lower)
    assert first.integer_columns == second.integer_columns


def test_set_cover_shape():
    problem = set_cover(30, 50, 0.1, seed=1)
    assert problem.m == 30 and problem.n == 50
    assert problem.A.nnz >= 150
    assert np.all(problem.A.to_dense().sum(axis=1) >= 1.0)
    np.testing.assert_array_equal(problem.row_lower, np.ones(30))
    assert problem.integer_columns == tuple(range(50))
    assert np.all(problem.c >= 1.0)


def test_set_cover_rejects_bad_density():
    with pytest.raises(ValidationError):
        set_cover(10, 10, 1.5)


def test_auction_is_a_packing_problem():
    problem = combinatorial_auction(10, 25, seed=2)
    assert problem.n == 25
    assert problem.m <= 10
    np.testing.assert_array_equal(problem.row_upper, np.ones(problem.m))
    assert np.all(problem.c < 0.0)


def test_independent_set_on_a_triangle():
    problem = max_independent_set(3, edges=[(0, 1), (1, 2), (2, 0), (1, 0)])
    assert problem.m == 3
    np.testing.assert_array_equal(problem.A.to_dense().sum(axis=0), [2.0, 2.0, 2.0])
    np.testing.assert_array_equal(problem.c, [-1.0, -1.0, -1.0])

    with pytest.raises(ValueError):
        max_independent_set(2, edges=[(0, 3)])


def test_facility_location_sizes():
    problem = facility_location(3, 2, seed=4)
    assert problem.n == 3 * 2 + 2
    assert problem.m == 3 + 2 + 1 + 3 * 2
    assert problem.integer_columns == (6, 7)

    loose = facility_location(3, 2, tighten=False, seed=4)
    assert loose.m == 3 + 2 + 1


def test_generate_instance_fills_in_defaults():
    problem = generate_instance(Family.SET_COVER, {"n_rows": 12})
    assert problem.m == 12
    assert problem.n == DEFAULT_SIZES[Family.SET_COVER]["n_cols"]

    assert generate_instance("max-ind-set", {"n_nodes": 9}).n == 9


def test_parse_sizes():
    assert parse_sizes(["n_rows=5", "density=0.25", "n-cols=8.0"]) == {
        "n_rows": 5,
        "density": 0.25,
        "n_cols": 8.0,
    }
    with pytest.raises(ValueError):
        parse_sizes(["n_rows"])
