"""Scikit-learn style wrappers around the functional API.

These are thin adapters: hyperparameters go to ``__init__``, data to
``fit``, and the fitted quantities end in an underscore. They compose with
``get_params``/``set_params``/``clone`` but are not meant for pipelines,
since none of them maps a sample matrix to predictions in the usual sense.

>>> import numpy as np
>>> from certilab.estimators import DualCertificate
>>> A = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]])
>>> DualCertificate("f1").fit(A, [0.0, 1.0, 0.0]).verdict_
'unique'
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from certilab.certify import UNIQUE, certify_general, certify_specialized, recover
from certilab.objectives import make_objective
from certilab.statdim import (DEFAULT_SAMPLES, JEvaluator, closed_form_counts, j_closed_form,
                              minimize_j)


def _spec(objective, n, image_shape):
    if objective.lower().endswith("-2d"):
        if image_shape is None:
            side = int(round(np.sqrt(n)))
            if side * side != n:
                raise ValueError(f"{objective} needs image_shape for a signal of length {n}")
            image_shape = (side, side)
        return make_objective(objective, image_shape=tuple(image_shape))
    return make_objective(objective, n)


def _vector(x, name):
    return check_array(np.asarray(x, dtype=float).reshape(1, -1), input_name=name).ravel()


class DualCertificate(BaseEstimator):
    """Certify that ``x`` is the unique minimiser given measurements ``A x``.

    Parameters
    ----------
    objective : str
        Case name such as ``"f1"`` or ``"f6-2d"``.
    method : {"epsilon_lp", "exact_duality", "specialized"}
    eps : float
        Margin for the epsilon LP and the specialised tests.
    image_shape : tuple of int, optional
        Shape for 2-D objectives; square images are inferred.

    Attributes
    ----------
    verdict_ : str
        ``"unique"``, ``"not_unique"`` or ``"indeterminate"``.
    t_star_ : float or None
    result_ : CertificateResult
    """

    def __init__(self, objective="f1", method="epsilon_lp", eps=1e-8, image_shape=None):
        self.objective = objective
        self.method = method
        self.eps = eps
        self.image_shape = image_shape

    def fit(self, A, x):
        A = check_array(A, input_name="A")
        x = _vector(x, "x")
        if A.shape[1] != x.size:
            raise ValueError(f"A has {A.shape[1]} columns, x has {x.size} entries")
        spec = _spec(self.objective, x.size, self.image_shape)
        if self.method == "specialized":
            res = certify_specialized(A, spec, x, eps=self.eps)
        else:
            res = certify_general(A, spec, x, method=self.method, eps=self.eps)
        self.result_ = res
        self.verdict_ = res.verdict
        self.t_star_ = res.t_star
        self.n_features_in_ = A.shape[1]
        return self

    @property
    def unique_(self) -> bool:
        check_is_fitted(self, "verdict_")
        return self.verdict_ == UNIQUE


class SparseRecovery(BaseEstimator):
    """Solve ``min f(x) s.t. A x = b`` by linear programming.

    Attributes
    ----------
    coef_ : ndarray of shape (n,)
        The recovered signal.
    """

    def __init__(self, objective="f1", image_shape=None):
        self.objective = objective
        self.image_shape = image_shape

    def fit(self, A, b):
        A = check_array(A, input_name="A")
        b = _vector(b, "b")
        if A.shape[0] != b.size:
            raise ValueError(f"A has {A.shape[0]} rows, b has {b.size} entries")
        spec = _spec(self.objective, A.shape[1], self.image_shape)
        self.coef_ = recover(A, b, spec)
        self.n_features_in_ = A.shape[1]
        return self

    def predict(self, A):
        """Measurements ``A @ coef_`` of the recovered signal."""
        check_is_fitted(self, "coef_")
        A = check_array(A, input_name="A")
        return A @ self.coef_


class StatDimEstimator(BaseEstimator):
    """Minimise ``J`` for a fixed signal.

    Parameters
    ----------
    objective : str
    n_samples : int
        Monte-Carlo sample count (ignored with the closed form).
    random_state : int
    closed_form : bool, optional
        Defaults to the exact formula whenever the objective is separable.
    image_shape : tuple of int, optional

    Attributes
    ----------
    tau_star_, j_star_, stderr_ : float
    flags_ : tuple of str
    result_ : StatDimEstimate
    """

    def __init__(self, objective="f1", n_samples=DEFAULT_SAMPLES, random_state=0,
                 closed_form=None, image_shape=None):
        self.objective = objective
        self.n_samples = n_samples
        self.random_state = random_state
        self.closed_form = closed_form
        self.image_shape = image_shape

    def fit(self, x, y=None):
        x = _vector(x, "x")
        spec = _spec(self.objective, x.size, self.image_shape)
        est = minimize_j(spec, x, k=self.n_samples, seed=self.random_state,
                         closed_form=self.closed_form)
        self.spec_ = spec
        self.x_ = x
        self.result_ = est
        self.tau_star_ = est.tau_star
        self.j_star_ = est.j_star
        self.stderr_ = est.stderr
        self.flags_ = est.flags
        return self

    def predict(self, tau):
        """``J`` (or its Monte-Carlo estimate) at each entry of ``tau``."""
        check_is_fitted(self, "j_star_")
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        if self.result_.method == "closed_form":
            n, s, profile = closed_form_counts(self.spec_, self.x_)
            return np.array([j_closed_form(self.spec_.case, n, s, t, profile) for t in tau])
        ev = JEvaluator(self.spec_, self.x_, self.n_samples, self.random_state)
        return np.array([ev(t) for t in tau])
