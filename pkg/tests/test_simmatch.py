from __future__ import annotations

import numpy as np
import pytest

from timbreshape.simmatch import binarize_mutual_knn, compute_csm, threshold_count


def _loop_csm(a, b):
    out = np.zeros((len(a), len(b)))
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i, j] = np.sqrt(np.sum((np.asarray(x, float) - np.asarray(y, float)) ** 2))
    return out


def _loop_binarize(csm, kappa):
    """Rank every entry by explicit counting, ties to the smaller index."""
    N, M = csm.shape
    r = max(1, int(np.floor(kappa * M + 0.5)))
    c = max(1, int(np.floor(kappa * N + 0.5)))
    out = np.zeros((N, M), dtype=np.uint8)
    for i in range(N):
        for j in range(M):
            row_rank = sum(1 for k in range(M) if csm[i, k] < csm[i, j] or (csm[i, k] == csm[i, j] and k < j))
            col_rank = sum(1 for k in range(N) if csm[k, j] < csm[i, j] or (csm[k, j] == csm[i, j] and k < i))
            out[i, j] = row_rank < r and col_rank < c
    return out


def test_csm_matches_double_loop():
    rng = np.random.default_rng(0)
    a, b = rng.random((2, 4, 4)), rng.random((3, 4, 4))
    np.testing.assert_allclose(compute_csm(a, b), _loop_csm(a, b), atol=1e-12)


def test_csm_shape_and_zero_diagonal():
    rng = np.random.default_rng(1)
    a = rng.random((3, 8, 8)).astype(np.float32)
    assert compute_csm(a, rng.random((4, 8, 8))).shape == (3, 4)
    np.testing.assert_array_equal(np.diag(compute_csm(a, a.copy())), 0.0)


def test_csm_transpose_is_exact():
    rng = np.random.default_rng(2)
    a, b = rng.random((5, 10, 10)), rng.random((7, 10, 10))
    np.testing.assert_array_equal(compute_csm(a, b), compute_csm(b, a).T)


def test_csm_accepts_lists_and_rejects_bad_input():
    imgs = [np.eye(3), np.ones((3, 3))]
    assert compute_csm(imgs, imgs)[0, 1] == pytest.approx(np.sqrt(6))
    with pytest.raises(ValueError):
        compute_csm([], imgs)
    with pytest.raises(ValueError):
        compute_csm(imgs, [np.eye(4)])


def test_threshold_count_rounding():
    assert threshold_count(0.1, 4) == 1
    assert threshold_count(0.1, 25) == 3  # 2.5 rounds up
    assert threshold_count(0.1, 200) == 20
    assert threshold_count(0.05, 3) == 1


def test_binarize_two_by_two_example():
    out = binarize_mutual_knn(np.array([[1.0, 2.0], [3.0, 4.0]]), 0.5)
    np.testing.assert_array_equal(out, [[1, 0], [0, 0]])
    assert out.dtype == np.uint8


def test_kappa_one_keeps_everything():
    rng = np.random.default_rng(3)
    np.testing.assert_array_equal(binarize_mutual_knn(rng.random((6, 9)), 1.0), np.ones((6, 9)))


def test_zero_diagonal_survives():
    rng = np.random.default_rng(4)
    m = rng.random((30, 30)) + 0.1
    np.fill_diagonal(m, 0.0)
    assert np.all(np.diag(binarize_mutual_knn(m, 0.05)) == 1)


@pytest.mark.parametrize("seed", range(20))
def test_binarize_matches_counting_oracle(seed):
    rng = np.random.default_rng(seed)
    N, M = rng.integers(1, 15, size=2)
    # a coarse value grid produces plenty of ties
    csm = rng.integers(0, 5, size=(N, M)).astype(float)
    kappa = float(rng.choice([0.05, 0.1, 0.15, 0.3, 0.5, 1.0]))
    np.testing.assert_array_equal(binarize_mutual_knn(csm, kappa), _loop_binarize(csm, kappa))


def test_count_bound_and_kappa_validation():
    rng = np.random.default_rng(5)
    csm = rng.random((17, 23))
    bits = binarize_mutual_knn(csm, 0.15)
    assert bits.sum() <= 17 * threshold_count(0.15, 23)
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            binarize_mutual_knn(csm, bad)
