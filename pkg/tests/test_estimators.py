import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from certilab.certify import certify_general
from certilab.estimators import DualCertificate, SparseRecovery, StatDimEstimator
from certilab.objectives import make_objective
from certilab.rng import make_rng
from certilab.statdim import minimize_j


def _problem(n=30, m=20, s=3, seed=0):
    rng = make_rng(seed)
    x = np.zeros(n)
    x[rng.choice(n, s, replace=False)] = rng.standard_normal(s)
    return rng.standard_normal((m, n)), x


def test_dual_certificate_matches_functional_api():
    A, x = _problem()
    est = DualCertificate("f1").fit(A, x)
    assert est.verdict_ == certify_general(A, make_objective("f1", 30), x).verdict
    assert est.n_features_in_ == 30
    assert est.unique_ == (est.verdict_ == "unique")


def test_dual_certificate_methods_and_2d():
    A = np.eye(4)
    x = np.array([1.0, 1.0, 0.0, 0.0])
    for method in ("epsilon_lp", "exact_duality", "specialized"):
        assert DualCertificate("f6-2d", method=method).fit(A, x).verdict_ == "unique"


def test_dual_certificate_validation():
    with pytest.raises(ValueError):
        DualCertificate("f1").fit(np.ones((2, 3)), np.ones(4))
    with pytest.raises(ValueError):
        DualCertificate("f1").fit(np.ones((2, 3)), [np.nan, 0, 0])
    with pytest.raises(NotFittedError):
        DualCertificate().unique_


def test_sparse_recovery():
    A, x = _problem(seed=2)
    est = SparseRecovery("f1").fit(A, A @ x)
    np.testing.assert_allclose(est.coef_, x, atol=1e-7)
    np.testing.assert_allclose(est.predict(A), A @ x, atol=1e-7)
    with pytest.raises(ValueError):
        SparseRecovery().fit(A, np.ones(3))


def test_statdim_estimator():
    x = np.zeros(100)
    x[:10] = 1.0
    est = StatDimEstimator("f1").fit(x)
    ref = minimize_j(make_objective("f1", 100), x)
    assert est.j_star_ == ref.j_star and est.tau_star_ == ref.tau_star
    assert est.predict(est.tau_star_)[0] == pytest.approx(est.j_star_)
    assert np.all(est.predict([0.0, 3.0]) >= est.j_star_)
    mc = StatDimEstimator("f4-1d", n_samples=300, random_state=1).fit(np.repeat([0.0, 1.0], 15))
    assert mc.result_.method == "monte_carlo" and mc.stderr_ > 0
    assert mc.predict([mc.tau_star_])[0] == pytest.approx(mc.j_star_, rel=1e-9)


def test_clone_and_params():
    est = StatDimEstimator("f2", n_samples=123, random_state=5)
    c = clone(est)
    assert c.get_params() == est.get_params()
    c.set_params(objective="f3")
    assert est.objective == "f2"
    assert set(DualCertificate().get_params()) == {"objective", "method", "eps", "image_shape"}
