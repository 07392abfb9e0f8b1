import numpy as np
import pytest

from batchlp.config import get_settings
from batchlp.exceptions import DimensionMismatch, InvalidMatrix, ZeroMatrix
from batchlp.sparse import (
    MAX_DIMENSION,
    NORM_INFLATION,
    as_block,
    build_csr,
    column_dots,
    column_norms,
    from_dense,
    new_block,
    spectral_norm,
    spmm,
    spmv,
)


def _random_matrix(seed=0, shape=(30, 20), density=0.2):
    rng = np.random.default_rng(seed)
    dense = rng.standard_normal(shape) * (rng.random(shape) < density)
    return dense, from_dense(dense)


def test_build_sums_duplicates_and_drops_zeros():
    A = build_csr([(0, 0, 1.0), (0, 0, 2.0), (1, 1, 3.0), (1, 1, -3.0), (1, 0, 4.0)], 2, 2)
    assert A.nnz == 2
    np.testing.assert_array_equal(A.to_dense(), [[3.0, 0.0], [4.0, 0.0]])
    np.testing.assert_array_equal(A.row_offsets, [0, 1, 2])


def test_build_rejects_bad_entries():
    with pytest.raises(InvalidMatrix):
        build_csr([(2, 0, 1.0)], 2, 2)
    with pytest.raises(InvalidMatrix):
        build_csr([(0, -1, 1.0)], 2, 2)
    with pytest.raises(InvalidMatrix):
        build_csr([(0, 0, np.nan)], 2, 2)
    with pytest.raises(InvalidMatrix):
        build_csr([], MAX_DIMENSION + 1, 2)


def test_transpose_shares_storage_orientation():
    dense, A = _random_matrix()
    np.testing.assert_array_equal(A.T.to_dense(), dense.T)
    assert A.T.T == A


def test_spmm_matches_dense_product():
    dense, A = _random_matrix(seed=1)
    rng = np.random.default_rng(2)
    X = np.asfortranarray(rng.standard_normal((20, 7)))
    Y = np.asfortranarray(rng.standard_normal((30, 7)))

    np.testing.assert_allclose(spmm(A, X), dense @ X, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(spmm(A, Y, True), dense.T @ Y, rtol=1e-12, atol=1e-12)


def test_spmm_columns_do_not_depend_on_width():
    _, A = _random_matrix(seed=3)
    X = np.asfortranarray(np.random.default_rng(4).standard_normal((20, 9)))

    wide = spmm(A, X)
    np.testing.assert_array_equal(spmm(A, X[:, :5].copy(order="F")), wide[:, :5])
    for j in range(9):
        np.testing.assert_allclose(
            spmm(A, X[:, j : j + 1].copy(order="F"))[:, 0], wide[:, j], rtol=1e-13, atol=1e-14
        )


def test_spmm_active_width_leaves_the_tail_alone():
    _, A = _random_matrix(seed=5)
    X = np.asfortranarray(np.random.default_rng(6).standard_normal((20, 6)))
    out = np.full((30, 6), 7.0, order="F")

    spmm(A, X, active_width=4, out=out)
    np.testing.assert_array_equal(out[:, 4:], 7.0)
    np.testing.assert_array_equal(out[:, :4], spmm(A, X)[:, :4])


def test_spmm_shape_errors():
    _, A = _random_matrix()
    with pytest.raises(DimensionMismatch):
        spmm(A, new_block(21, 2))
    with pytest.raises(DimensionMismatch):
        spmm(A, new_block(20, 2), active_width=3)
    with pytest.raises(DimensionMismatch):
        spmm(A, new_block(20, 2), out=new_block(29, 2))
    with pytest.raises(DimensionMismatch):
        spmm(A, np.zeros(20))


def test_threaded_spmm_is_bit_identical(monkeypatch):
    _, A = _random_matrix(seed=7, shape=(64, 40))
    X = np.asfortranarray(np.random.default_rng(8).standard_normal((40, 5)))
    single = spmm(A, X)

    monkeypatch.setenv("BATCHLP_THREADS", "4")
    get_settings.cache_clear()
    try:
        threaded = spmm(A, X)
        threaded_t = spmm(A, np.asfortranarray(single), True)
    finally:
        monkeypatch.delenv("BATCHLP_THREADS")
        get_settings.cache_clear()

    np.testing.assert_array_equal(threaded, single)
    np.testing.assert_array_equal(threaded_t, spmm(A, np.asfortranarray(single), True))


def test_column_reductions():
    X = as_block(np.array([[3.0, 0.0], [4.0, 1.0]]))
    np.testing.assert_array_equal(column_norms(X), [5.0, 1.0])
    np.testing.assert_array_equal(column_dots(X, X), [25.0, 1.0])


def test_spmv_routes_through_spmm():
    dense, A = _random_matrix(seed=9)
    x = np.random.default_rng(10).standard_normal(20)
    np.testing.assert_allclose(spmv(A, x), dense @ x, rtol=1e-12, atol=1e-12)


def test_spectral_norm_upper_bounds_the_true_norm():
    dense, A = _random_matrix(seed=11)
    exact = np.linalg.norm(dense, 2)
    estimate = spectral_norm(A)
    assert exact <= estimate <= exact * NORM_INFLATION * (1 + 1e-3)


def test_spectral_norm_with_ones_in_the_null_space():
    A = from_dense([[1.0, -1.0]])
    assert spectral_norm(A) == pytest.approx(np.sqrt(2.0) * NORM_INFLATION, rel=1e-3)


@pytest.mark.parametrize(
    "dense",
    [
        # all-ones is the eigenvector of the smaller singular value
        np.array([[1.0, 1.0], [3.0, -3.0]]),
        np.array([[1.0, -1.0, 0.0], [0.0, 0.0, 1.0]]),
        _random_matrix(seed=12)[0],
        _random_matrix(seed=13, shape=(5, 40), density=0.5)[0],
    ],
)
def test_spectral_norm_bounds_every_stretch(dense):
    estimate = spectral_norm(from_dense(dense))
    assert estimate >= np.linalg.norm(dense, 2)

    rng = np.random.default_rng(14)
    for _ in range(100):
        v = rng.standard_normal(dense.shape[1])
        assert np.linalg.norm(dense @ v) <= estimate * np.linalg.norm(v)


def test_spectral_norm_escapes_an_orthogonal_start():
    A = from_dense([[1.0, 1.0], [3.0, -3.0]])
    assert spectral_norm(A) == pytest.approx(np.sqrt(18.0) * NORM_INFLATION, rel=1e-3)


@pytest.mark.parametrize("seed", range(5))
def test_adjoint_identity(seed):
    dense, A = _random_matrix(seed=seed, shape=(12, 9), density=0.4)
    rng = np.random.default_rng(100 + seed)
    X = np.asfortranarray(rng.standard_normal((9, 4)))
    Y = np.asfortranarray(rng.standard_normal((12, 4)))

    left = np.sum(spmm(A, X) * Y)
    right = np.sum(X * spmm(A, Y, transpose_A=True))
    assert left == pytest.approx(right, rel=1e-12, abs=1e-12)


def test_spectral_norm_of_zero_matrix():
    with pytest.raises(ZeroMatrix):
        spectral_norm(build_csr([], 3, 3))
