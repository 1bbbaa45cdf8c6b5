import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from certilab.linalg import diff_operator_1d, gradient_operator_2d
from certilab.rng import make_rng
from certilab.signals import (SPARSITY_TOL_2D, ResampleNeeded, SignalSpec, SparsityWarning,
                              _relabel, _toggle, binary_from_cosupport, binary_rectangle_image,
                              gen_cosupport_projection, gen_gradient_sparse_2d, gen_sparse_1d,
                              generate_signal, relative_sparsity)


def test_sparse_examples():
    x = gen_sparse_1d(SignalSpec("sparse", 0.3, "real", 10, seed=1))
    assert np.count_nonzero(x) == 3
    xb = gen_sparse_1d(SignalSpec("sparse", 0.3, "binary", 10, seed=1))
    assert set(np.unique(xb)) == {0.0, 1.0}
    a = gen_sparse_1d(SignalSpec("sparse", 0.3, "real", 10, seed=42))
    b = gen_sparse_1d(SignalSpec("sparse", 0.3, "real", 10, seed=42))
    np.testing.assert_array_equal(a, b)


def test_spec_validation():
    with pytest.raises(ValueError):
        SignalSpec("sparse", 1.2, "real", 10)
    with pytest.raises(ValueError):
        SignalSpec("sparse", 0.05, "real", 10)  # 0.5 nonzeros
    with pytest.raises(ValueError):
        SignalSpec("blobs", 0.5, "real", 10)


def test_cosupport_projection_examples():
    x = gen_cosupport_projection(diff_operator_1d(3), [0], seed=5)
    assert x[0] == pytest.approx(x[1], abs=1e-12)
    v = make_rng(5).standard_normal(3)
    np.testing.assert_array_equal(gen_cosupport_projection(diff_operator_1d(3), [], seed=5), v)
    x = gen_cosupport_projection(diff_operator_1d(6), np.arange(5), seed=2)
    assert np.ptp(x) <= 1e-12


def test_cosupport_projection_rank_deficient():
    D = np.array([[1.0, -1.0, 0.0], [2.0, -2.0, 0.0]])
    with pytest.raises(ResampleNeeded):
        gen_cosupport_projection(D, [0, 1], seed=0)


@settings(max_examples=50)
@given(st.integers(0, 2 ** 32 - 1))
def test_cosupport_projection_property(seed):
    rng = make_rng(seed)
    n = int(rng.integers(3, 30))
    D = diff_operator_1d(n)
    cos = np.flatnonzero(rng.random(n - 1) < 0.5)
    x = gen_cosupport_projection(D, cos, rng)
    assert np.abs(D[cos] @ x).max(initial=0.0) <= 1e-10


def test_binary_from_cosupport_examples():
    np.testing.assert_array_equal(binary_from_cosupport([0, 2], 4), [1, 1, 0, 0])
    np.testing.assert_array_equal(binary_from_cosupport([], 3), [1, 0, 1])
    np.testing.assert_array_equal(binary_from_cosupport([0, 1], 3), [1, 1, 1])


@settings(max_examples=200)
@given(st.integers(2, 60), st.integers(0, 2 ** 32 - 1))
def test_binary_from_cosupport_exact(n, seed):
    rng = make_rng(seed)
    cos = np.flatnonzero(rng.random(n - 1) < rng.random())
    x = binary_from_cosupport(cos, n)
    assert np.array_equal(np.flatnonzero(diff_operator_1d(n) @ x == 0), cos)


@pytest.mark.parametrize("structure", ["sparse", "gradient_sparse_1d"])
@pytest.mark.parametrize("value_class", ["real", "nonnegative", "binary"])
def test_1d_sparsity_exact(structure, value_class):
    for i, rho in enumerate(np.arange(1, 20) * 0.05):
        spec = SignalSpec(structure, float(rho), value_class, 100, seed=i)
        x = generate_signal(spec)
        base = spec.count_base
        assert relative_sparsity(spec, x) == pytest.approx(int(np.floor(rho * base + 0.5)) / base)
        if value_class == "nonnegative":
            assert np.all(x >= 0)
        if value_class == "binary":
            assert set(np.unique(x)) <= {0.0, 1.0}


def test_abs_rarely_changes_cosupport():
    rng = make_rng(11)
    D = diff_operator_1d(100)
    changed = 0
    for _ in range(1000):
        cos = np.sort(rng.choice(99, size=int(rng.integers(5, 95)), replace=False))
        x = np.abs(gen_cosupport_projection(D, cos, rng))
        if not np.array_equal(np.flatnonzero(np.abs(D @ x) <= 1e-9), cos):
            changed += 1
    assert changed / 1000 < 0.05


def test_2d_full_frame_rectangle_is_constant():
    img = np.zeros((6, 6), dtype=bool)
    _toggle(img, (0, 0, 6, 6))
    assert img.all()
    x = img.astype(float).reshape(-1, order="F")
    assert np.count_nonzero(gradient_operator_2d(6, 6) @ x) == 0


@pytest.mark.parametrize("value_class", ["real", "nonnegative"])
def test_relabel_keeps_gradient_support(value_class):
    img, _ = binary_rectangle_image(16, 0.2, make_rng(4))
    vals = _relabel(img, make_rng(5), value_class)
    G = gradient_operator_2d(16, 16)
    sb = G @ img.astype(float).reshape(-1, order="F") != 0
    sv = np.abs(G @ vals.reshape(-1, order="F")) > 1e-12
    np.testing.assert_array_equal(sb, sv)
    if value_class == "nonnegative":
        assert np.all(vals >= 0)


def test_2d_n64_rho01_band():
    spec = SignalSpec("gradient_sparse_2d", 0.1, "binary", 64, seed=2024)
    x, info = gen_gradient_sparse_2d(spec, return_info=True)
    assert 0.08 <= relative_sparsity(spec, x) <= 0.12
    assert info.reached
    np.testing.assert_array_equal(x, gen_gradient_sparse_2d(spec))


@pytest.mark.parametrize("rho", [0.05, 0.3, 0.55, 0.8, 0.95])
def test_2d_bands_small(rho):
    spec = SignalSpec("gradient_sparse_2d", rho, "real", 16, seed=7)
    x = generate_signal(spec)
    assert abs(relative_sparsity(spec, x) - rho) <= SPARSITY_TOL_2D


def test_2d_unreachable_warns():
    spec = SignalSpec("gradient_sparse_2d", 0.05, "binary", 4, seed=0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        x = generate_signal(spec)
    assert any(issubclass(w.category, SparsityWarning) for w in caught)
    assert x.size == 16


def test_seed_determinism_all_structures():
    for structure, n in [("sparse", 50), ("gradient_sparse_1d", 50), ("gradient_sparse_2d", 12)]:
        for cls in ("real", "nonnegative", "binary"):
            a = generate_signal(SignalSpec(structure, 0.3, cls, n, seed=9))
            b = generate_signal(SignalSpec(structure, 0.3, cls, n, seed=9))
            c = generate_signal(SignalSpec(structure, 0.3, cls, n, seed=10))
            np.testing.assert_array_equal(a, b)
            assert not np.array_equal(a, c)
