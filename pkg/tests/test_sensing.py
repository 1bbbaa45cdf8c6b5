import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from certilab.sensing import (TomoGeometry, _angle_block, angles_for_rows, circle_mask,
                              gaussian_matrix, rays_per_angle, tomo_matrix, tomo_rows_per_angle)


def test_gaussian_examples():
    assert gaussian_matrix(3, 5, seed=0).shape == (3, 5)
    np.testing.assert_array_equal(gaussian_matrix(4, 4, seed=8), gaussian_matrix(4, 4, seed=8))
    A = gaussian_matrix(200, 200, seed=1)
    assert -0.02 < A.mean() < 0.02
    assert 0.95 < A.var() < 1.05


def test_geometry_counts():
    g = TomoGeometry(32, 5)
    assert g.rays == rays_per_angle(32) == 45
    assert g.m_unpruned == 5 * 45
    np.testing.assert_allclose(g.angles, np.arange(5) * math.pi / 5)


def test_n2_angle0_binary_rows():
    A = tomo_matrix(TomoGeometry(2, 1, mask="rectangle"), "binary")
    np.testing.assert_array_equal(A.sum(axis=1), 2)
    # pixel order is column-major: row 0 of the image is indices 0 and 2
    assert {tuple(r) for r in A} == {(1, 0, 1, 0), (0, 1, 0, 1)}


def test_real_axis_aligned_entries_are_unit():
    A = tomo_matrix(TomoGeometry(6, 1, mask="rectangle"), "real")
    assert set(np.unique(A[A > 0]).round(12)) == {1.0}
    np.testing.assert_allclose(A.sum(axis=1), 6)


def test_circle_mask_columns_n64():
    A = tomo_matrix(TomoGeometry(64, 4), "binary")
    assert np.count_nonzero(np.any(A != 0, axis=0)) == int(circle_mask(64).sum())


def _march(N, theta, offset, h=1e-4):
    """Pixel-marching oracle: sample the ray densely and count samples per pixel."""
    c, s = math.cos(theta), math.sin(theta)
    c, s = (0.0 if abs(c) < 1e-12 else c), (0.0 if abs(s) < 1e-12 else s)  # exact axis rays
    t = np.arange(-N, N, h) + h / 2
    x = -s * offset + t * c
    y = c * offset + t * s
    j = np.floor(x + N / 2).astype(int)
    i = np.ceil(N / 2 - y).astype(int) - 1
    ok = (0 <= i) & (i < N) & (0 <= j) & (j < N)
    row = np.zeros(N * N)
    np.add.at(row, j[ok] * N + i[ok], h)
    return row


@pytest.mark.parametrize("N", [3, 4, 8])
@pytest.mark.parametrize("theta", [0.0, 0.3, math.pi / 4, 1.2, math.pi / 2, 2.5])
def test_intersections_match_marching(N, theta):
    offsets = TomoGeometry(N).offsets()
    block = _angle_block(N, theta, offsets)
    for k, off in enumerate(offsets):
        np.testing.assert_allclose(block[k], _march(N, theta, off), atol=5e-4)


@pytest.mark.parametrize("N", [4, 7, 8])
def test_angle0_row_sums_masked_width(N):
    """Each horizontal ray collects the masked width of the pixel row it runs through."""
    g = TomoGeometry(N, 1, mask="circle")
    mask = circle_mask(N).reshape(N, N, order="F")
    expected = []
    for s in g.offsets():
        i = math.ceil(N / 2 - s) - 1  # row i covers y in [N/2 - i - 1, N/2 - i)
        if 0 <= i < N and mask[i].any():
            expected.append(float(mask[i].sum()))
    A = tomo_matrix(g, "real")
    np.testing.assert_allclose(A.sum(axis=1), expected, atol=1e-12)
    assert np.all(A.sum(axis=1) <= N)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(1, 6), st.integers(0, 1000))
def test_binary_is_indicator_of_real(N, k, seed):
    g = TomoGeometry(N, k)
    real = tomo_matrix(g, "real", seed=seed)
    np.testing.assert_array_equal(tomo_matrix(g, "binary", seed=seed), (real > 0).astype(float))
    pert = tomo_matrix(g, "perturbed", perturb_scale=1e-3, seed=seed)
    assert np.all((pert > 0) == (real > 0))
    assert np.all(np.abs(pert[pert > 0] - 1) <= 1e-3)
    np.testing.assert_array_equal(pert, tomo_matrix(g, "perturbed", perturb_scale=1e-3, seed=seed))


@pytest.mark.parametrize("N", [8, 16, 32, 64])
def test_rows_per_angle_nearly_equal(N):
    counts = tomo_rows_per_angle(TomoGeometry(N, 12))
    assert counts.max() - counts.min() <= 2
    A = tomo_matrix(TomoGeometry(N, 12), "binary")
    assert A.shape[0] == counts.sum()


def test_angles_for_rows_minimal():
    for target in (50, 200, 400):
        k = angles_for_rows(32, target)
        assert tomo_rows_per_angle(TomoGeometry(32, k)).sum() >= target
        assert k == 1 or tomo_rows_per_angle(TomoGeometry(32, k - 1)).sum() < target
