from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from timbreshape.errors import DegenerateBlockError
from timbreshape.shape import block_ssm, block_ssms, compute_ssm, interpolation_matrix, normalize_point_cloud, resize_ssm


def _loop_ssm(points):
    n = len(points)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = np.sqrt(sum((a - b) ** 2 for a, b in zip(points[i], points[j])))
    return out


def _loop_bilinear(img, d):
    """Pixel-by-pixel bilinear sampling with corners aligned."""
    K = img.shape[0]
    out = np.zeros((d, d))
    for u in range(d):
        for v in range(d):
            y, x = u * (K - 1) / (d - 1), v * (K - 1) / (d - 1)
            y0, x0 = min(int(y), K - 2), min(int(x), K - 2)
            fy, fx = y - y0, x - x0
            out[u, v] = (
                img[y0, x0] * (1 - fy) * (1 - fx)
                + img[y0 + 1, x0] * fy * (1 - fx)
                + img[y0, x0 + 1] * (1 - fy) * fx
                + img[y0 + 1, x0 + 1] * fy * fx
            )
    return out


def test_normalized_points_are_unit_length():
    rng = np.random.default_rng(0)
    out = normalize_point_cloud(rng.standard_normal((30, 20)) * 5 + 3)
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-9)


def test_two_points_become_antipodal():
    out = normalize_point_cloud(np.array([[1.0, 2.0, 3.0], [4.0, 0.0, -1.0]]))
    np.testing.assert_allclose(out[0], -out[1], atol=1e-15)
    np.testing.assert_allclose(np.linalg.norm(out[0]), 1.0)


def test_translation_gives_identical_output():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((10, 20))
    np.testing.assert_allclose(normalize_point_cloud(x + 7.5), normalize_point_cloud(x), atol=1e-12)


def test_point_on_mean_becomes_flagged_zero():
    cloud = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 0.0]])
    out, flags = normalize_point_cloud(cloud, return_flags=True)
    np.testing.assert_array_equal(flags, [False, False, True])
    np.testing.assert_array_equal(out[2], [0.0, 0.0])


def test_identical_points_are_degenerate():
    with pytest.raises(DegenerateBlockError, match="degenerate block"):
        normalize_point_cloud(np.ones((5, 20)))


def test_ssm_matches_double_loop():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((5, 20))
    np.testing.assert_allclose(compute_ssm(x), _loop_ssm(x), atol=1e-12)


def test_ssm_trivial_cases():
    np.testing.assert_array_equal(compute_ssm(np.ones((4, 3))), np.zeros((4, 4)))
    np.testing.assert_allclose(compute_ssm(np.array([[0.0, 0.0], [3.0, 4.0]])), [[0, 5], [5, 0]])


def test_raw_ssm_is_exactly_symmetric_with_zero_diagonal():
    rng = np.random.default_rng(3)
    D = compute_ssm(rng.standard_normal((40, 20)))
    np.testing.assert_array_equal(D, D.T)
    np.testing.assert_array_equal(np.diag(D), 0.0)


def test_resize_hand_example():
    out = resize_ssm(np.array([[0.0, 1.0], [1.0, 0.0]]), 3)
    np.testing.assert_allclose(out, [[0, 0.5, 1], [0.5, 0.5, 0.5], [1, 0.5, 0]], atol=1e-15)


def test_resize_identity_and_constant():
    rng = np.random.default_rng(4)
    m = rng.random((7, 7))
    np.testing.assert_array_equal(resize_ssm(m, 7), m)
    np.testing.assert_allclose(resize_ssm(np.full((13, 13), 0.3), 50), 0.3, atol=1e-14)
    np.testing.assert_allclose(resize_ssm(np.full((200, 200), 1.7), 9), 1.7, atol=1e-14)


@pytest.mark.parametrize("K, d", [(5, 9), (9, 5), (37, 20), (3, 2)])
def test_resize_matches_pixel_loop(K, d):
    rng = np.random.default_rng(K * 100 + d)
    m = rng.random((K, K))
    m = m + m.T
    np.testing.assert_allclose(resize_ssm(m, d), _loop_bilinear(m, d), atol=1e-12)


def test_interpolation_rows_sum_to_one():
    R = interpolation_matrix(601, 200)
    np.testing.assert_allclose(R.sum(axis=1), 1.0, atol=1e-14)
    assert R[0, 0] == 1.0 and R[-1, -1] == 1.0


@pytest.mark.parametrize("K, d", [(601, 200), (150, 200), (200, 200), (57, 100)])
def test_fast_block_ssm_equals_composition(K, d):
    rng = np.random.default_rng(K + d)
    cloud = np.cumsum(rng.standard_normal((K, 20)), axis=0)
    slow = resize_ssm(compute_ssm(normalize_point_cloud(cloud)), d)
    np.testing.assert_allclose(block_ssm(cloud, d), slow, atol=1e-12)


def test_block_images_are_symmetric_and_bounded():
    rng = np.random.default_rng(5)
    img = block_ssm(rng.standard_normal((90, 20)), 64)
    assert img.shape == (64, 64)
    assert img.min() >= 0 and img.max() <= 2
    np.testing.assert_allclose(img, img.T, atol=1e-6)


def test_block_ssms_skips_degenerate_blocks():
    rng = np.random.default_rng(6)
    clouds = [rng.standard_normal((30, 20)), np.zeros((30, 20)), None, rng.standard_normal((40, 20))]
    out = block_ssms(clouds, 16)
    assert out.kept == [0, 3] and out.skipped == [1, 2]
    assert out.images.shape == (2, 16, 16) and out.images.dtype == np.float32


def test_all_silent_blocks_give_empty_list():
    out = block_ssms([np.zeros((10, 20))] * 3, 8)
    assert len(out) == 0 and out.skipped == [0, 1, 2]


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(3, 30), st.integers(2, 20)), elements=st.floats(-100, 100)),
    st.floats(0.1, 10),
)
def test_scale_invariance_property(cloud, s):
    try:
        a = block_ssm(cloud, 16)
    except DegenerateBlockError:
        return
    b = block_ssm(cloud * s, 16)
    np.testing.assert_allclose(a, b, atol=1e-6)
