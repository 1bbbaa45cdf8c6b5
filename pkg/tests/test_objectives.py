import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from certilab.linalg import diff_operator_1d
from certilab.objectives import (InfeasiblePointError, directional_derivative, index_sets,
                                 make_objective, objective_value, psi_matrix, subdiff_description)
from certilab.rng import make_rng
from certilab.selftest import CASES, random_instance


def test_index_sets_examples():
    s = index_sets(make_objective("f3", 3), [0.0, 0.5, 1.0])
    assert s.at_lower.tolist() == [0]
    assert s.inactive.tolist() == [1]
    assert s.at_upper.tolist() == [2]
    assert s.support.tolist() == [1, 2]
    s = index_sets(make_objective("f4-1d", 3), [1.0, 1.0, 0.0])
    assert s.cosupport.tolist() == [0] and s.cosupport_c.tolist() == [1]
    s = index_sets(make_objective("f1", 4), np.zeros(4))
    assert s.support.size == 0 and s.cosupport.tolist() == [0, 1, 2, 3]


def test_index_sets_infeasible():
    with pytest.raises(InfeasiblePointError):
        index_sets(make_objective("f2", 2), [1.0, -0.5])
    with pytest.raises(InfeasiblePointError):
        index_sets(make_objective("f6-1d", 2), [1.0, 1.5])


def test_box_per_case():
    for case, lo, hi in [("f1", -np.inf, np.inf), ("f2", 0.0, np.inf), ("f3", 0.0, 1.0),
                         ("f4-1d", -np.inf, np.inf), ("f5-1d", 0.0, np.inf), ("f6-1d", 0.0, 1.0)]:
        spec = make_objective(case, 3)
        assert np.all(spec.lower == lo) and np.all(spec.upper == hi)
    spec = make_objective("f5-2d", image_shape=(3, 4))
    assert spec.D.shape == (17, 12) and spec.name == "f5-2d"


def test_psi_examples():
    spec = make_objective("f3", 3)
    np.testing.assert_array_equal(psi_matrix(spec, index_sets(spec, [0, 0.5, 1])), np.diag([-1, 0, 1]))
    spec = make_objective("f1", 3)
    np.testing.assert_array_equal(psi_matrix(spec, index_sets(spec, [0, 2, -1])), np.zeros((3, 3)))
    spec = make_objective("f2", 2)
    np.testing.assert_array_equal(psi_matrix(spec, index_sets(spec, [1, 0])), np.diag([0, -1]))


def test_subdiff_examples():
    sd = subdiff_description(make_objective("f1", 2), [1.0, 0.0])
    assert sd.contains([1.0, 0.3]) and sd.contains([1.0, -1.0])
    assert not sd.contains([1.0, 1.5]) and not sd.contains([0.9, 0.0])
    sd = subdiff_description(make_objective("f2", 2), [1.0, 0.0])
    assert sd.contains([1.0, -25.0]) and sd.contains([1.0, 1.0]) and not sd.contains([1.0, 1.2])
    sd = subdiff_description(make_objective("f4-1d", 2), [1.0, 1.0])
    np.testing.assert_array_equal(sd.y0, [0.0, 0.0])
    assert sd.contains([-0.4, 0.4]) and not sd.contains([0.4, 0.4]) and not sd.contains([-2, 2])


def test_objective_value_examples():
    assert objective_value(make_objective("f1", 2), [3, -4]) == 7
    assert objective_value(make_objective("f3", 2), [0.5, 1.2]) == math.inf
    assert objective_value(make_objective("f4-1d", 3), [0, 1, 1]) == 1


def test_directional_derivative_examples():
    f1 = make_objective("f1", 2)
    assert directional_derivative(f1, [1, 0], [-1, 0]) == -1
    assert directional_derivative(f1, [1, 0], [0, 1]) == 1
    assert directional_derivative(make_objective("f3", 2), [1, 0], [1, 0]) == math.inf


def _feasible_point(spec, rng):
    n = spec.n
    if np.isfinite(spec.upper).all():
        return rng.uniform(0, 1, n)
    if np.isfinite(spec.lower).all():
        return np.abs(rng.standard_normal(n)) * 2
    return rng.standard_normal(n) * 2


@settings(max_examples=120, deadline=None)
@given(st.sampled_from(CASES), st.integers(0, 2 ** 32 - 1))
def test_subgradient_inequality(case, seed):
    rng = make_rng(seed)
    inst = random_instance(case, rng, n_max=10)
    spec, xb = inst.spec, inst.x
    sd = subdiff_description(spec, xb)
    v = sd.sample(rng)
    assert sd.contains(v, tol=1e-7)
    x = _feasible_point(spec, rng)
    assert objective_value(spec, x) - objective_value(spec, xb) >= v @ (x - xb) - 1e-8


@settings(max_examples=120, deadline=None)
@given(st.sampled_from(CASES), st.integers(0, 2 ** 32 - 1))
def test_directional_derivative_matches_difference_quotient(case, seed):
    rng = make_rng(seed)
    inst = random_instance(case, rng, n_max=10)
    spec, xb = inst.spec, inst.x
    sets = index_sets(spec, xb)
    d = rng.standard_normal(spec.n)
    d[sets.at_lower] = np.abs(d[sets.at_lower]) + 0.1
    d[sets.at_upper] = -np.abs(d[sets.at_upper]) - 0.1
    eps = 1e-7
    fd = (objective_value(spec, xb + eps * d) - objective_value(spec, xb)) / eps
    assert directional_derivative(spec, xb, d, sets) == pytest.approx(fd, abs=1e-6, rel=1e-6)


def test_explicit_operator():
    D = diff_operator_1d(4)[[0, 2]]
    spec = make_objective("f5", D=D)
    assert spec.n == 4 and spec.p == 2
    with pytest.raises(ValueError):
        make_objective("f7", 3)
