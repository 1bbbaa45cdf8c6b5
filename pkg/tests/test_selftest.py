import numpy as np
import pytest

from certilab.certify import max_slack_point, strict_feasibility
from certilab.rng import make_rng
from certilab.selftest import (CASES, VALUE_CLASSES, FAMILIES, cross_agreement, planted_system,
                               random_instance, strict_feasibility_suite)


@pytest.mark.parametrize("family", FAMILIES)
def test_planted_truth_matches_max_slack(family):
    rng = make_rng(12)
    for _ in range(25):
        M, q, P, d, truth = planted_system(rng, family)
        _, s = max_slack_point(M, q, P, d)
        assert (s > 1e-7) == truth
        assert strict_feasibility(M, q, P, d) == truth


def test_instances_respect_value_classes():
    rng = make_rng(3)
    for case in CASES:
        seen = set()
        for _ in range(40):
            inst = random_instance(case, rng)
            seen.add(inst.value_class)
            assert inst.value_class in VALUE_CLASSES[case]
            assert inst.A.shape[1] == inst.spec.n == inst.x.size <= 12
            if inst.value_class == "binary":
                assert set(np.unique(inst.x)) <= {0.0, 1.0}
            if inst.value_class == "nonnegative":
                assert np.all(inst.x >= 0)
        assert seen == set(VALUE_CLASSES[case])


def test_small_suites_are_clean():
    matches, total, _ = strict_feasibility_suite(40, seed=5)
    assert matches == total
    reports = cross_agreement(per_case=5, seed=5)
    assert all(r.ok and r.sound for r in reports.values())
