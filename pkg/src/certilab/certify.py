"""Uniqueness certificates for ``min ||D x||_1 + box(x)  s.t.  A x = A xbar``.

``xbar`` is the unique minimizer iff

(i)  ``N(A) & N(D_cos) & N(Psi) = {0}`` and
(ii) some ``(y, alpha, mu)`` satisfies ``D^T alpha + Psi mu = A^T y`` with
     ``alpha`` equal to ``sign(D xbar)`` off the cosupport, ``|alpha| < 1`` on
     it, and ``mu > 0``.

Condition (ii) is a strict linear feasibility problem. :func:`certify_general`
decides it either by the epsilon-relaxed LP (``method="epsilon_lp"``), which has
a small indeterminate band, or exactly through LP duality
(``method="exact_duality"``, see :func:`strict_feasibility`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from certilab.linalg import as_matrix, nullspace_basis, stacked_full_column_rank
from certilab.objectives import DEFAULT_ACT_TOL, IndexSets, ObjectiveSpec, index_sets
from certilab.solver import (DEFAULT_FEAS_TOL, InfeasibleError, LinearProgram,
                             NumericalFailure, solve_lp)

UNIQUE = "unique"
NOT_UNIQUE = "not_unique"
INDETERMINATE = "indeterminate"
METHODS = ("epsilon_lp", "exact_duality")


class PreconditionError(ValueError):
    """Input violates the assumptions of the requested test."""


@dataclass
class Witness:
    """Dual certificate ``D^T alpha + Psi mu = A^T y``.

    ``alpha`` has one entry per row of ``D`` and ``mu`` one entry per
    coordinate; entries of ``mu`` at inactive coordinates are zero.
    """

    y: np.ndarray
    alpha: np.ndarray
    mu: np.ndarray
    t: float = math.nan


@dataclass
class CertificateResult:
    verdict: str
    condition_i: bool
    method: str
    t_star: Optional[float] = None
    witness: Optional[Witness] = None
    diagnostic: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def unique(self) -> bool:
        return self.verdict == UNIQUE

    def to_dict(self) -> dict:
        out = {"verdict": self.verdict, "condition_i": bool(self.condition_i),
               "method": self.method,
               "t_star": None if self.t_star is None or not math.isfinite(self.t_star)
               else float(self.t_star)}
        if self.witness is not None:
            w = self.witness
            out["witness"] = {
                "y_norm_inf": float(np.abs(w.y).max(initial=0.0)),
                "alpha_cos_norm_inf": self.extra.get("alpha_cos_norm_inf"),
                "mu_min_active": self.extra.get("mu_min_active"),
            }
        if self.diagnostic:
            out["diagnostic"] = self.diagnostic
        return out


def _sparse(M):
    return M if sp.issparse(M) else sp.csr_matrix(np.asarray(M, float))


def _check_signal(A, spec, x):
    A = as_matrix(A, "A")
    x = np.asarray(x, dtype=float).reshape(-1)
    if A.shape[1] != x.size or spec.n != x.size:
        raise ValueError(f"shape mismatch: A is {A.shape}, signal has {x.size} entries, "
                         f"objective expects {spec.n}")
    return A, x


def _activity_rows(n, sets: IndexSets):
    idx = np.concatenate([sets.at_lower, sets.at_upper])
    rows = np.zeros((idx.size, n))
    rows[np.arange(idx.size), idx] = 1.0
    return rows


def _ray_matrix(n, sets: IndexSets):
    """Nonzero columns of Psi as a sparse ``n x r`` matrix, plus their coordinates."""
    idx = np.concatenate([sets.at_lower, sets.at_upper])
    vals = np.concatenate([-np.ones(sets.at_lower.size), np.ones(sets.at_upper.size)])
    R = sp.csr_matrix((vals, (idx, np.arange(idx.size))), shape=(n, idx.size))
    return R, idx


def is_binary(x, act_tol: float = DEFAULT_ACT_TOL) -> bool:
    x = np.asarray(x, float)
    return bool(np.all((np.abs(x) <= act_tol) | (np.abs(x - 1.0) <= act_tol)))


def condition_i(A, spec: ObjectiveSpec, sets: IndexSets, rank_tol: float = 1e-10) -> bool:
    """Rank part of the certificate: ``[A; D_cos; Psi]`` has full column rank."""
    if sets.at_lower.size + sets.at_upper.size == spec.n:
        # every coordinate sits on a bound, so N(Psi) = {0}
        return True
    return stacked_full_column_rank(
        [A, spec.D[sets.cosupport], _activity_rows(spec.n, sets)], rank_tol)


# ---------------------------------------------------------------------------
# strict feasibility


def _strict_lp(M, q, P, d):
    """``max 1^T v`` over the normalised dual cone of ``{Mz = q, Pz < d}``."""
    M, P = _sparse(M), _sparse(P)
    rm, rp = M.shape[0], P.shape[0]
    c = np.concatenate([np.zeros(rm), -np.ones(rp)])
    eq = sp.hstack([M.T, P.T]).tocsr()
    ub = sp.csr_matrix(np.vstack([np.concatenate([q, d]),
                                  np.concatenate([np.zeros(rm), np.ones(rp)])]))
    lo = np.concatenate([np.full(rm, -np.inf), np.zeros(rp)])
    return LinearProgram(c, eq, np.zeros(eq.shape[0]), ub, np.array([0.0, 1.0]), lo)


def strict_feasibility(M, q, P, d, feas_tol: float = DEFAULT_FEAS_TOL,
                       check_rank: bool = True, rank_tol: float = 1e-10) -> bool:
    """Decide whether some ``z`` has ``M z = q`` and ``P z < d`` (strictly).

    Under ``N(M^T) = {0}`` such a point exists iff ``v = 0`` is the only
    feasible ``v`` of ``M^T u + P^T v = 0, q^T u + d^T v <= 0, v >= 0``. That
    set is a cone, so it is enough to maximise ``1^T v`` with the extra
    normalisation ``1^T v <= 1``: the optimum is 0 when the system is strictly
    feasible and 1 otherwise.
    """
    q = np.asarray(q, float).reshape(-1)
    d = np.asarray(d, float).reshape(-1)
    P = P if sp.issparse(P) else np.atleast_2d(np.asarray(P, float))
    if not sp.issparse(M):
        M = np.asarray(M, float)
        M = M.reshape(q.size, -1) if M.size else np.zeros((q.size, P.shape[1]))
    if M.shape[1] != P.shape[1]:
        raise ValueError("M and P must have the same number of columns")
    if check_rank and q.size:
        Mt = M.T.toarray() if sp.issparse(M) else M.T
        if not stacked_full_column_rank([Mt], rank_tol):
            raise PreconditionError("strict_feasibility requires N(M^T) = {0}")
    if d.size == 0:
        # no strict inequalities: feasibility of M z = q, guaranteed by full row rank
        return True
    try:
        sol = solve_lp(_strict_lp(M, q, P, d), feas_tol)
    except NumericalFailure:
        # When the system is strictly feasible the multipliers of this LP form an
        # unbounded set and the solver may return huge ones that fail
        # verification. The max-slack LP has bounded multipliers; decide there.
        return _strict_by_slack(M, q, P, d, feas_tol)
    if sol.status == "unbounded":
        return False
    if not sol.optimal:
        raise NumericalFailure(f"strict-feasibility LP ended with status {sol.status}")
    v_sum = -sol.objective_value
    if v_sum <= 1e-6:
        return True
    if v_sum >= 1.0 - 1e-6:
        return False
    raise NumericalFailure(f"normalised dual LP returned an interior value {v_sum:.3e}")


def _strict_by_slack(M, q, P, d, feas_tol, clear=1e-7, none=1e-9) -> bool:
    z, s = max_slack_point(M, q, P, d, feas_tol)
    if z is None:
        raise NumericalFailure("max-slack LP did not reach a verified optimum")
    if s >= clear:
        return True
    if s <= none:
        return False
    raise NumericalFailure(f"largest strict slack {s:.3e} is too small to call")


def max_slack_point(M, q, P, d, feas_tol: float = DEFAULT_FEAS_TOL):
    """Point of ``{M z = q, P z <= d - s}`` with the largest slack ``s <= 1``.

    Returns ``(z, s)``; ``s > 0`` certifies strict feasibility.
    """
    M, P = _sparse(M), _sparse(P)
    nz = M.shape[1]
    c = np.zeros(nz + 1)
    c[-1] = -1.0
    eq = sp.hstack([M, sp.csr_matrix((M.shape[0], 1))]).tocsr()
    ub = sp.hstack([P, sp.csr_matrix(np.ones((P.shape[0], 1)))]).tocsr()
    hi = np.full(nz + 1, np.inf)
    hi[-1] = 1.0
    sol = solve_lp(LinearProgram(c, eq, q, ub, d, var_upper=hi), feas_tol)
    if not sol.optimal:
        return None, -math.inf
    return sol.primal[:-1], float(sol.primal[-1])


# ---------------------------------------------------------------------------
# general test


def _system(A, spec: ObjectiveSpec, sets: IndexSets):
    """``(M, q, P, d)`` of the strict system in the unknowns ``(alpha_cos, mu, y)``."""
    n = spec.n
    Dc = _sparse(spec.D[sets.cosupport])
    R, ray_idx = _ray_matrix(n, sets)
    k, r, m = Dc.shape[0], R.shape[1], A.shape[0]
    M = sp.hstack([Dc.T, R, _sparse(A).T]).tocsr()
    q = -(spec.D[sets.cosupport_c].T @ sets.signs) if sets.cosupport_c.size else np.zeros(n)
    Ik = sp.identity(k, format="csr")
    P = sp.vstack([
        sp.hstack([-Ik, sp.csr_matrix((k, r + m))]),
        sp.hstack([Ik, sp.csr_matrix((k, r + m))]),
        sp.hstack([sp.csr_matrix((r, k)), -sp.identity(r, format="csr"), sp.csr_matrix((r, m))]),
    ]).tocsr()
    d = np.concatenate([np.ones(2 * k), np.zeros(r)])
    return M, np.asarray(q, float), P, d, (k, r, m, ray_idx)


def _make_witness(spec, sets, alpha_cos, mu_r, y, ray_idx, t=math.nan):
    alpha = np.zeros(spec.p)
    alpha[sets.cosupport_c] = sets.signs
    alpha[sets.cosupport] = alpha_cos
    mu = np.zeros(spec.n)
    mu[ray_idx] = mu_r
    return Witness(y=y, alpha=alpha, mu=mu, t=t)


def _witness_extra(w: Witness, sets: IndexSets, ray_idx):
    return {
        "alpha_cos_norm_inf": float(np.abs(w.alpha[sets.cosupport]).max(initial=0.0)),
        "mu_min_active": float(w.mu[ray_idx].min()) if ray_idx.size else None,
    }


def _epsilon_lp(A, spec, sets, eps, feas_tol):
    """``min t`` s.t. ``|alpha_cos| <= t``, ``mu >= eps`` and the dual equation."""
    M, q, _, _, (k, r, m, ray_idx) = _system(A, spec, sets)
    nv = 1 + k + r + m
    c = np.zeros(nv)
    c[0] = 1.0
    eq = sp.hstack([sp.csr_matrix((M.shape[0], 1)), M]).tocsr()
    ones = sp.csr_matrix(np.ones((k, 1)))
    Ik = sp.identity(k, format="csr")
    pad = sp.csr_matrix((k, r + m))
    ub = sp.vstack([sp.hstack([-ones, Ik, pad]), sp.hstack([-ones, -Ik, pad])]).tocsr()
    lo = np.full(nv, -np.inf)
    lo[0] = 0.0
    lo[1 + k:1 + k + r] = eps
    sol = solve_lp(LinearProgram(c, eq, q, ub, np.zeros(2 * k), lo), feas_tol)
    if sol.status == "infeasible":
        return math.inf, None
    if not sol.optimal:
        raise NumericalFailure(f"epsilon LP ended with status {sol.status}")
    z = sol.primal
    t = float(z[0])
    # M z = q means D_cos^T a + R mu + A^T y_z = -y0, hence A^T (-y_z) is the certificate
    w = _make_witness(spec, sets, z[1:1 + k], z[1 + k:1 + k + r], -z[1 + k + r:], ray_idx, t)
    return t, w


def certify_general(A, spec: ObjectiveSpec, x, method: str = "epsilon_lp",
                    eps: float = 1e-8, feas_tol: float = DEFAULT_FEAS_TOL,
                    act_tol: float = DEFAULT_ACT_TOL, rank_tol: float = 1e-10,
                    witness: bool = True) -> CertificateResult:
    """Decide whether ``x`` is the unique minimizer of ``spec`` on ``{A z = A x}``.

    Parameters
    ----------
    method : {"epsilon_lp", "exact_duality"}
        ``epsilon_lp`` relaxes ``mu > 0`` to ``mu >= eps`` and minimises
        ``t = |alpha_cos|_inf``; ``t* < 1 - eps`` is unique, ``t* >= 1`` is not,
        anything in between is reported as indeterminate. ``exact_duality``
        settles the strict system through :func:`strict_feasibility`.
    witness : bool
        For ``exact_duality``, also compute a maximum-slack certificate when
        the verdict is unique (one extra LP).
    """
    method = method.replace("-", "_")
    if method == "duality":
        method = "exact_duality"
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    A, x = _check_signal(A, spec, x)
    sets = index_sets(spec, x, act_tol)
    cond = condition_i(A, spec, sets, rank_tol)
    if not cond:
        return CertificateResult(NOT_UNIQUE, False, method,
                                 diagnostic="N(A) & N(D_cos) & N(Psi) is nontrivial")
    try:
        if method == "epsilon_lp":
            t, w = _epsilon_lp(A, spec, sets, eps, feas_tol)
            if t < 1.0 - eps:
                verdict = UNIQUE
            elif t >= 1.0:
                verdict = NOT_UNIQUE
            else:
                verdict = INDETERMINATE
            res = CertificateResult(verdict, True, method, t_star=t, witness=w)
            if w is not None:
                _, _, _, _, (_, _, _, ray_idx) = _system(A, spec, sets)
                res.extra = _witness_extra(w, sets, ray_idx)
            return res
        M, q, P, d, (k, r, m, ray_idx) = _system(A, spec, sets)
        ok = strict_feasibility(M, q, P, d, feas_tol, check_rank=False)
        res = CertificateResult(UNIQUE if ok else NOT_UNIQUE, True, method)
        if ok and witness:
            z, slack = max_slack_point(M, q, P, d, feas_tol)
            if z is not None and slack > 0:
                w = _make_witness(spec, sets, z[:k], z[k:k + r], -z[k + r:], ray_idx)
                w.t = float(np.abs(z[:k]).max(initial=0.0))
                res.witness, res.t_star = w, w.t
                res.extra = _witness_extra(w, sets, ray_idx)
                res.extra["slack"] = slack
        return res
    except NumericalFailure as exc:
        return CertificateResult(INDETERMINATE, True, method, diagnostic=str(exc))


# ---------------------------------------------------------------------------
# per-case tests


def _strict_verdict(M, q, P, d, feas_tol, method):
    try:
        ok = strict_feasibility(M, q, P, d, feas_tol, check_rank=False)
    except NumericalFailure as exc:
        return CertificateResult(INDETERMINATE, True, method, diagnostic=str(exc))
    return CertificateResult(UNIQUE if ok else NOT_UNIQUE, True, method)


def certify_specialized(A, spec: ObjectiveSpec, x, eps: float = 1e-8,
                        feas_tol: float = DEFAULT_FEAS_TOL,
                        act_tol: float = DEFAULT_ACT_TOL,
                        rank_tol: float = 1e-10) -> CertificateResult:
    """Per-case uniqueness conditions.

    f1: ``A_S`` injective and ``A_S^T y = sign(x_S)``, ``|A_Sc^T y| < 1``.
    f2: ``A_S`` injective and ``A_S^T y = 1``, ``A_Sc^T y < 1``.
    f3: ``A_S^T y > 1`` and ``A_Sc^T y < 1`` (``x`` binary).
    f4-f6: rank condition plus the strict dual system with the case's
    activity matrix (``x`` binary for f6).

    The strict systems are decided exactly through :func:`strict_feasibility`;
    ``eps`` is accepted for interface symmetry with :func:`certify_general`.
    """
    del eps
    A, x = _check_signal(A, spec, x)
    method = f"specialized_{spec.case}"
    if spec.binary_box and not is_binary(x, act_tol):
        raise PreconditionError(f"{spec.case} certificates assume a binary point")
    index_sets(spec, x, act_tol)  # raises on box violations
    m = A.shape[0]
    case = spec.case
    if case in ("f1", "f2", "f3"):
        if case == "f3":
            S = np.flatnonzero(np.abs(x - 1.0) <= act_tol)
        else:
            S = np.flatnonzero(np.abs(x) > act_tol)
        Sc = np.setdiff1d(np.arange(spec.n), S)
        AS, ASc = A[:, S], A[:, Sc]
        if case == "f3":
            M, q = np.zeros((0, m)), np.zeros(0)
            P = np.vstack([-AS.T, ASc.T])
            d = np.concatenate([-np.ones(S.size), np.ones(Sc.size)])
            return _strict_verdict(M, q, P, d, feas_tol, method)
        cond = S.size == 0 or stacked_full_column_rank([AS], rank_tol)
        if not cond:
            return CertificateResult(NOT_UNIQUE, False, method,
                                     diagnostic="A_S is not injective")
        if case == "f1":
            q = np.sign(x[S])
            P = np.vstack([ASc.T, -ASc.T])
            d = np.ones(2 * Sc.size)
        else:
            q = np.ones(S.size)
            P = ASc.T
            d = np.ones(Sc.size)
        return _strict_verdict(AS.T, q, P, d, feas_tol, method)

    # TV cases: cosupport of D x, sign off it, activity per the case's box
    Dx = spec.D @ x
    lam = np.abs(Dx) <= act_tol
    s = np.sign(Dx[~lam])
    if case == "f4":
        active = np.zeros(0, int)
        psi = np.zeros(0)
    elif case == "f5":
        active = np.flatnonzero(np.abs(x) <= act_tol)
        psi = -np.ones(active.size)
    else:
        active = np.arange(spec.n)
        psi = np.where(np.abs(x) <= act_tol, -1.0, 1.0)
    if case != "f6":
        act_rows = np.zeros((active.size, spec.n))
        act_rows[np.arange(active.size), active] = 1.0
        if not stacked_full_column_rank([A, spec.D[lam], act_rows], rank_tol):
            return CertificateResult(NOT_UNIQUE, False, method,
                                     diagnostic="N(A) & N(D_cos) & N(Psi) is nontrivial")
    Dl = _sparse(spec.D[lam])
    k, r = Dl.shape[0], active.size
    R = sp.csr_matrix((psi, (active, np.arange(r))), shape=(spec.n, r))
    M = sp.hstack([Dl.T, R, _sparse(A).T]).tocsr()
    q = -(spec.D[~lam].T @ s)
    Ik = sp.identity(k, format="csr")
    P = sp.vstack([
        sp.hstack([Ik, sp.csr_matrix((k, r + m))]),
        sp.hstack([-Ik, sp.csr_matrix((k, r + m))]),
        sp.hstack([sp.csr_matrix((r, k)), -sp.identity(r, format="csr"), sp.csr_matrix((r, m))]),
    ]).tocsr()
    d = np.concatenate([np.ones(2 * k), np.zeros(r)])
    return _strict_verdict(M, np.asarray(q, float), P, d, feas_tol, method)


# ---------------------------------------------------------------------------
# independent oracle and recovery


def descent_cone_oracle(A, spec: ObjectiveSpec, x, tol: float = 1e-9,
                        max_n: int = 16, backend: str = "simplex",
                        act_tol: float = DEFAULT_ACT_TOL) -> bool:
    """Brute-force check of ``descent cone of f at x  &  N(A) = {0}``.

    Directions are parametrised as ``d = Z w`` with ``Z`` an orthonormal basis
    of ``N(A)``. Writing ``N(d) = sum_cos |(D d)_j| + sum_{x_i = l_i} d_i -
    sum_{x_i = u_i} d_i`` (nonnegative on feasible directions), the oracle

    1. returns False if a nonzero ``d`` in ``N(A)`` has ``N(d) = 0``, i.e. it
       lies in ``N(D_cos)`` and keeps the active coordinates fixed; ``f'`` is
       linear there, so ``d`` or ``-d`` does not increase ``f``;
    2. otherwise minimises ``f'(x; d)`` over feasible ``d`` with ``N(d) = 1``
       (a single LP with auxiliary variables for ``|D d|``) and returns True
       iff the minimum exceeds ``tol``.

    The LP runs on the dense simplex backend by default so that it shares no
    solver code with the certificates it is meant to check.
    """
    A, x = _check_signal(A, spec, x)
    n = spec.n
    if n > max_n:
        raise ValueError(f"descent_cone_oracle is limited to n <= {max_n} (got {n})")
    sets = index_sets(spec, x, act_tol)
    Z = nullspace_basis(A)
    dz = Z.shape[1]
    if dz == 0:
        return True
    D = spec.D
    DL = D[sets.cosupport] @ Z
    lo_rows, hi_rows = Z[sets.at_lower], Z[sets.at_upper]
    if nullspace_basis(np.vstack([DL, lo_rows, hi_rows])).shape[1] > 0:
        return False
    k = DL.shape[0]
    g = sets.signs @ (D[sets.cosupport_c] @ Z) if sets.cosupport_c.size else np.zeros(dz)
    c = np.concatenate([g, np.ones(k)])
    Ik = np.eye(k)
    ub = np.vstack([
        np.hstack([DL, -Ik]),
        np.hstack([-DL, -Ik]),
        np.hstack([-lo_rows, np.zeros((lo_rows.shape[0], k))]),
        np.hstack([hi_rows, np.zeros((hi_rows.shape[0], k))]),
    ])
    ub_rhs = np.zeros(ub.shape[0])
    norm_row = np.concatenate([lo_rows.sum(axis=0) - hi_rows.sum(axis=0), np.ones(k)])
    lo = np.concatenate([np.full(dz, -np.inf), np.zeros(k)])
    sol = solve_lp(LinearProgram(c, norm_row[None, :], [1.0], ub, ub_rhs, lo),
                   backend=backend)
    if sol.status == "infeasible":
        return True
    if sol.status == "unbounded":
        return False
    return bool(sol.objective_value > tol)


def recover(A, b, spec: ObjectiveSpec, feas_tol: float = DEFAULT_FEAS_TOL) -> np.ndarray:
    """A minimiser of ``||D x||_1`` over ``{A x = b, l <= x <= u}`` via LP."""
    A = as_matrix(A, "A")
    b = np.asarray(b, float).reshape(-1)
    n, p = spec.n, spec.p
    D = _sparse(spec.D)
    Ip = sp.identity(p, format="csr")
    c = np.concatenate([np.zeros(n), np.ones(p)])
    ub = sp.vstack([sp.hstack([D, -Ip]), sp.hstack([-D, -Ip])]).tocsr()
    eq = sp.hstack([_sparse(A), sp.csr_matrix((A.shape[0], p))]).tocsr()
    lo = np.concatenate([spec.lower, np.zeros(p)])
    hi = np.concatenate([spec.upper, np.full(p, np.inf)])
    sol = solve_lp(LinearProgram(c, eq, b, ub, np.zeros(2 * p), lo, hi), feas_tol)
    if sol.status == "infeasible":
        raise InfeasibleError("no point satisfies A x = b within the box")
    if not sol.optimal:
        raise NumericalFailure(f"recovery LP ended with status {sol.status}")
    return sol.primal[:n]
