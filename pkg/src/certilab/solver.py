"""Linear programs and Euclidean projections with KKT-checked answers.

Two LP backends are available. ``"highs"`` delegates to the HiGHS dual simplex
shipped with scipy and is the production path. ``"simplex"`` is a small dense
two-phase revised simplex with Bland's rule; it is slow but shares no code
with HiGHS, which makes it useful as an independent check on tiny problems.
Whatever the backend, an optimal answer is only returned after its primal
feasibility, dual feasibility and complementary slackness have been verified.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog, lsq_linear

DEFAULT_FEAS_TOL = 1e-8


class SolverError(RuntimeError):
    """Base class for solver failures."""


class NumericalFailure(SolverError):
    """The solver could not reach a verified conclusion."""


class InfeasibleError(SolverError):
    """The constraint set is empty."""


def _as_2d(M, ncols):
    if M is None:
        return np.zeros((0, ncols))
    if sp.issparse(M):
        return M.tocsr()
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros((0, ncols))
    return M.reshape(-1, ncols)


def _vec(v, n, fill):
    if v is None:
        return np.full(n, fill, dtype=float)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size == 1 and n != 1:
        v = np.full(n, float(v[0]))
    return v


@dataclass
class LinearProgram:
    """``min c^T z`` s.t. ``eq_lhs z = eq_rhs``, ``ineq_lhs z <= ineq_rhs``, bounds.

    Variables are free unless ``var_lower`` / ``var_upper`` say otherwise;
    use ``-inf`` / ``inf`` entries for one-sided bounds. Constraint matrices may
    be dense arrays or scipy sparse matrices.
    """

    objective: np.ndarray
    eq_lhs: object = None
    eq_rhs: Optional[np.ndarray] = None
    ineq_lhs: object = None
    ineq_rhs: Optional[np.ndarray] = None
    var_lower: Optional[np.ndarray] = None
    var_upper: Optional[np.ndarray] = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).reshape(-1)
        n = self.objective.size
        self.eq_lhs = _as_2d(self.eq_lhs, n)
        self.ineq_lhs = _as_2d(self.ineq_lhs, n)
        self.eq_rhs = _vec(self.eq_rhs, self.eq_lhs.shape[0], 0.0)
        self.ineq_rhs = _vec(self.ineq_rhs, self.ineq_lhs.shape[0], 0.0)
        self.var_lower = _vec(self.var_lower, n, -np.inf)
        self.var_upper = _vec(self.var_upper, n, np.inf)
        if self.eq_lhs.shape[1] != n or self.ineq_lhs.shape[1] != n:
            raise ValueError("constraint matrices must have one column per variable")
        if self.eq_rhs.size != self.eq_lhs.shape[0]:
            raise ValueError("eq_rhs length does not match eq_lhs rows")
        if self.ineq_rhs.size != self.ineq_lhs.shape[0]:
            raise ValueError("ineq_rhs length does not match ineq_lhs rows")
        if self.var_lower.size != n or self.var_upper.size != n:
            raise ValueError("bounds must have one entry per variable")

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_constraints(self) -> int:
        return self.eq_lhs.shape[0] + self.ineq_lhs.shape[0]


@dataclass
class LpSolution:
    """Result of :func:`solve_lp`.

    ``dual_eq`` are the equality multipliers and ``dual_ineq >= 0`` the
    inequality multipliers, with the stationarity convention
    ``c = eq_lhs^T dual_eq - ineq_lhs^T dual_ineq + reduced_cost``.
    """

    status: str
    primal: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective_value: float = np.nan
    dual_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dual_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reduced_cost: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kkt_residual: float = np.nan
    backend: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def dual_objective(self, problem: LinearProgram) -> float:
        """Dual objective value of the returned multipliers."""
        r = self.reduced_cost
        lo, hi = problem.var_lower, problem.var_upper
        val = problem.eq_rhs @ self.dual_eq - problem.ineq_rhs @ self.dual_ineq
        pos = np.maximum(r, 0.0)
        neg = np.minimum(r, 0.0)
        with np.errstate(invalid="ignore"):
            val += np.sum(np.where(pos > 0, pos * lo, 0.0))
            val += np.sum(np.where(neg < 0, neg * hi, 0.0))
        return float(val)


def _matvec(M, x):
    return np.asarray(M @ x).reshape(-1)


def _rmatvec(M, y):
    return np.asarray(M.T @ y).reshape(-1)


def kkt_residual(problem: LinearProgram, x, dual_eq, dual_ineq) -> tuple:
    """Scaled KKT residual of a candidate primal/dual pair.

    Returns ``(residual, reduced_cost)``. Residuals are measured relative to
    ``1 + |data|`` so that the tolerance is insensitive to problem scaling.
    """
    c = problem.objective
    lo, hi = problem.var_lower, problem.var_upper
    Ae, be, Au, bu = problem.eq_lhs, problem.eq_rhs, problem.ineq_lhs, problem.ineq_rhs
    scale = 1.0 + max(np.abs(c).max(initial=0.0), np.abs(be).max(initial=0.0),
                      np.abs(bu).max(initial=0.0))
    xs = 1.0 + np.abs(x).max(initial=0.0)
    res = []
    if Ae.shape[0]:
        res.append(np.abs(_matvec(Ae, x) - be).max() / (xs + np.abs(be).max()))
    if Au.shape[0]:
        slack = bu - _matvec(Au, x)
        res.append(max(0.0, -slack.min()) / (xs + np.abs(bu).max()))
    res.append(max(0.0, (lo - x).max(initial=-np.inf)) / xs)
    res.append(max(0.0, (x - hi).max(initial=-np.inf)) / xs)
    res.append(max(0.0, -dual_ineq.min(initial=0.0)) / scale)
    r = c.copy()
    if Ae.shape[0]:
        r -= _rmatvec(Ae, dual_eq)
    if Au.shape[0]:
        r += _rmatvec(Au, dual_ineq)
    # reduced costs must vanish on free coordinates and have the right sign at bounds
    at_lo = np.isfinite(lo) & (x - lo <= 1e-9 * xs)
    at_hi = np.isfinite(hi) & (hi - x <= 1e-9 * xs)
    viol = np.where(at_lo & at_hi, 0.0,
                    np.where(at_lo, np.maximum(-r, 0.0),
                             np.where(at_hi, np.maximum(r, 0.0), np.abs(r))))
    res.append(viol.max(initial=0.0) / scale)
    if Au.shape[0]:
        comp = np.abs(dual_ineq * (bu - _matvec(Au, x)))
        res.append(comp.max() / (scale * xs))
    return float(max(res)), r


def _highs(problem: LinearProgram, feas_tol: float, method: str = "highs-ds",
           tol: Optional[float] = None, presolve: bool = True):
    n = problem.n_vars
    bounds = np.column_stack([problem.var_lower, problem.var_upper])
    bounds = [(None if not np.isfinite(a) else a, None if not np.isfinite(b) else b)
              for a, b in bounds]
    kw = {}
    if problem.eq_lhs.shape[0]:
        kw.update(A_eq=problem.eq_lhs, b_eq=problem.eq_rhs)
    if problem.ineq_lhs.shape[0]:
        kw.update(A_ub=problem.ineq_lhs, b_ub=problem.ineq_rhs)
    if tol is None:
        tol = min(1e-7, max(feas_tol * 1e-2, 1e-10))
    options = {
        "presolve": presolve,
        "primal_feasibility_tolerance": tol,
        "dual_feasibility_tolerance": tol,
        "maxiter": 50 * (n + problem.n_constraints) + 1000,
    }
    if method == "highs-ipm":
        options["maxiter"] = 200
        options["ipm_optimality_tolerance"] = tol
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return linprog(problem.objective, bounds=bounds, method=method,
                       options=options, **kw)


def _solve_highs(problem: LinearProgram, feas_tol: float) -> LpSolution:
    # HiGHS occasionally stalls on degenerate problems at the tight default
    # tolerance; retry with looser settings (answers are still KKT-verified)
    retries = [dict(tol=max(feas_tol * 0.1, 1e-10)), dict(presolve=False), dict(method="highs-ipm")]
    res = _highs(problem, feas_tol)
    while res.status == 4 and "infeasible" not in (res.message or "").lower() and retries:
        res = _highs(problem, feas_tol, **retries.pop(0))
    msg = (res.message or "").lower()
    if res.status == 2 or (res.status == 4 and "infeasible" in msg):
        if "unbounded" in msg:
            # HiGHS may report "infeasible or unbounded"; settle it with a pure feasibility solve
            feas = _highs(LinearProgram(np.zeros(problem.n_vars), problem.eq_lhs,
                                        problem.eq_rhs, problem.ineq_lhs, problem.ineq_rhs,
                                        problem.var_lower, problem.var_upper), feas_tol)
            if feas.status == 0:
                return LpSolution("unbounded", backend="highs")
        return LpSolution("infeasible", backend="highs")
    if res.status == 3:
        return LpSolution("unbounded", backend="highs")
    if res.status != 0:
        raise NumericalFailure(f"HiGHS stopped without a conclusion: {res.message}")
    x = np.asarray(res.x, dtype=float)
    dual_eq = (np.asarray(res.eqlin.marginals, dtype=float)
               if problem.eq_lhs.shape[0] else np.zeros(0))
    dual_ineq = (-np.asarray(res.ineqlin.marginals, dtype=float)
                 if problem.ineq_lhs.shape[0] else np.zeros(0))
    return LpSolution("optimal", x, float(problem.objective @ x), dual_eq, dual_ineq,
                      backend="highs")


def solve_lp(problem: LinearProgram, feas_tol: float = DEFAULT_FEAS_TOL,
             backend: str = "highs") -> LpSolution:
    """Solve ``problem`` and certify optimal answers through their KKT residual.

    Raises
    ------
    NumericalFailure
        When the backend gives up, hits its iteration cap, or returns an
        answer whose KKT residual exceeds ``feas_tol``.
    """
    if backend == "highs":
        sol = _solve_highs(problem, feas_tol)
    elif backend == "simplex":
        sol = dense_simplex(problem)
    else:
        raise ValueError(f"unknown LP backend {backend!r}")
    if sol.optimal:
        res, r = kkt_residual(problem, sol.primal, sol.dual_eq, sol.dual_ineq)
        sol.kkt_residual, sol.reduced_cost = res, r
        if res > feas_tol:
            raise NumericalFailure(
                f"{sol.backend} answer fails KKT verification (residual {res:.3e})")
    return sol


# ---------------------------------------------------------------------------
# dense two-phase simplex (Bland's rule)


def _to_standard_form(problem: LinearProgram):
    """Rewrite as ``min c^T w, E w = f, w >= 0``.

    Returns the standard-form data plus a recipe mapping ``w`` back to ``z``
    and standard-form row multipliers back to the original rows.
    """
    n = problem.n_vars
    lo, hi = problem.var_lower, problem.var_upper
    Ae = problem.eq_lhs.toarray() if sp.issparse(problem.eq_lhs) else problem.eq_lhs
    Au = problem.ineq_lhs.toarray() if sp.issparse(problem.ineq_lhs) else problem.ineq_lhs
    # each original variable z_j = shift_j + sum_k T[j, k] w_k
    cols, shift = [], np.zeros(n)
    ub_rows = []  # (w column, bound width) for finite two-sided boxes
    for j in range(n):
        if np.isfinite(lo[j]):
            shift[j] = lo[j]
            cols.append((j, 1.0))
            if np.isfinite(hi[j]):
                ub_rows.append((len(cols) - 1, hi[j] - lo[j]))
        elif np.isfinite(hi[j]):
            shift[j] = hi[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    nw = len(cols)
    T = np.zeros((n, nw))
    for k, (j, s) in enumerate(cols):
        T[j, k] = s
    me, mu, mb = Ae.shape[0], Au.shape[0], len(ub_rows)
    n_slack = mu + mb
    E = np.zeros((me + mu + mb, nw + n_slack))
    f = np.zeros(me + mu + mb)
    if me:
        E[:me, :nw] = Ae @ T
        f[:me] = problem.eq_rhs - Ae @ shift
    if mu:
        E[me:me + mu, :nw] = Au @ T
        E[me:me + mu, nw:nw + mu] = np.eye(mu)
        f[me:me + mu] = problem.ineq_rhs - Au @ shift
    for i, (k, width) in enumerate(ub_rows):
        E[me + mu + i, k] = 1.0
        E[me + mu + i, nw + mu + i] = 1.0
        f[me + mu + i] = width
    cw = np.concatenate([problem.objective @ T, np.zeros(n_slack)])
    return cw, E, f, T, shift, me, mu


def _run_simplex(E, f, c, basis, max_iter, tol=1e-10):
    """Revised-simplex iterations with Bland's rule; ``basis`` is updated in place.

    The basis matrix is refactored at every pivot, which is wasteful but keeps
    the reduced costs honest on the small problems this backend is meant for.
    """
    scale = 1.0 + np.abs(c).max(initial=0.0)
    for _ in range(max_iter):
        B = E[:, basis]
        xb = np.linalg.solve(B, f)
        y = np.linalg.solve(B.T, c[basis])
        rc = c - E.T @ y
        rc[basis] = 0.0
        candidates = np.flatnonzero(rc < -tol * scale)
        if candidates.size == 0:
            return "optimal"
        col = candidates[0]
        dcol = np.linalg.solve(B, E[:, col])
        pos = dcol > tol
        if not np.any(pos):
            return "unbounded"
        ratios = np.full(dcol.size, np.inf)
        ratios[pos] = np.maximum(xb[pos], 0.0) / dcol[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        row = ties[np.argmin(np.asarray(basis)[ties])]
        basis[row] = col
    raise NumericalFailure("dense simplex exceeded its pivot cap")


def dense_simplex(problem: LinearProgram) -> LpSolution:
    """Two-phase revised simplex with Bland's anti-cycling rule."""
    cw, E, f, T, shift, me, mu = _to_standard_form(problem)
    m, nw = E.shape
    max_iter = 50 * (nw + m) + 50
    neg = f < 0
    E[neg] *= -1
    f[neg] *= -1
    # phase 1: artificial basis
    E1 = np.hstack([E, np.eye(m)])
    c1 = np.concatenate([np.zeros(nw), np.ones(m)])
    basis = list(range(nw, nw + m))
    _run_simplex(E1, f, c1, basis, max_iter)
    xb = np.linalg.solve(E1[:, basis], f)
    scale = 1.0 + np.abs(f).max(initial=0.0)
    if sum(v for b, v in zip(basis, xb) if b >= nw) > 1e-9 * scale:
        return LpSolution("infeasible", backend="simplex")
    # drive artificials out of the basis, dropping redundant rows
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] < nw:
            continue
        Binv_row = np.linalg.solve(E1[:, basis].T, np.eye(m)[r])
        tab_row = Binv_row @ E
        tab_row[[b for b in basis if b < nw]] = 0.0
        nz = np.flatnonzero(np.abs(tab_row) > 1e-9)
        if nz.size:
            basis[r] = int(nz[np.argmax(np.abs(tab_row[nz]))])
        else:
            keep[r] = False
    rows = np.flatnonzero(keep)
    E2, f2 = E[rows], f[rows]
    basis2 = [basis[r] for r in rows]
    status = _run_simplex(E2, f2, cw, basis2, max_iter)
    if status == "unbounded":
        return LpSolution("unbounded", backend="simplex")
    w = np.zeros(nw)
    w[basis2] = np.linalg.solve(E2[:, basis2], f2)
    w = np.maximum(w, 0.0)
    z = shift + T @ w[: T.shape[1]]
    # row multipliers from the optimal basis: B^T y = c_B on the kept rows
    y_kept = np.linalg.solve(E2[:, basis2].T, cw[basis2])
    y = np.zeros(m)
    y[rows] = y_kept
    y[neg] *= -1
    dual_eq = y[:me]
    dual_ineq = -y[me:me + mu]
    return LpSolution("optimal", z, float(problem.objective @ z), dual_eq, dual_ineq,
                      backend="simplex")


# ---------------------------------------------------------------------------
# projections


@dataclass
class QuadraticProjection:
    """Project ``target`` onto ``{offset + G z : lower <= z <= upper}``.

    With ``G`` omitted the set is the box itself. Equal lower and upper bounds
    pin a coordinate.
    """

    target: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    G: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = None

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=float).reshape(-1)
        n = self.target.size
        q = n if self.G is None else np.shape(self.G)[1]
        if self.G is not None:
            self.G = np.asarray(self.G, dtype=float).reshape(n, q)
        self.lower = _vec(self.lower, q, -np.inf)
        self.upper = _vec(self.upper, q, np.inf)
        self.offset = np.zeros(n) if self.offset is None else _vec(self.offset, n, 0.0)

    @property
    def generator(self) -> np.ndarray:
        return np.eye(self.target.size) if self.G is None else self.G


class ProjectionResult(NamedTuple):
    point: np.ndarray
    sq_distance: float
    coef: np.ndarray
    multipliers: np.ndarray
    kkt_residual: float


def projection_kkt(qp: QuadraticProjection, z) -> tuple:
    """Bound multipliers ``G^T (G z - r)`` and the scaled KKT residual at ``z``."""
    G = qp.generator
    r = qp.target - qp.offset
    grad = G.T @ (G @ z - r)
    lo, hi = qp.lower, qp.upper
    span = 1.0 + np.abs(z).max(initial=0.0)
    at_lo = z - lo <= 1e-10 * span
    at_hi = hi - z <= 1e-10 * span
    viol = np.where(at_lo & at_hi, 0.0,
                    np.where(at_lo, np.maximum(-grad, 0.0),
                             np.where(at_hi, np.maximum(grad, 0.0), np.abs(grad))))
    bound_viol = max(np.maximum(lo - z, 0).max(initial=0.0), np.maximum(z - hi, 0).max(initial=0.0))
    scale = 1.0 + np.abs(r).max(initial=0.0) * max(1.0, np.abs(G).max(initial=0.0))
    return grad, float(max(viol.max(initial=0.0) / scale, bound_viol / span))


def solve_projection(qp: QuadraticProjection, feas_tol: float = DEFAULT_FEAS_TOL) -> ProjectionResult:
    """Euclidean projection by bounded-variable least squares.

    The active-set BVLS iterate is polished by an exact least-squares solve on
    its free set; the answer is returned only if its KKT residual is within
    ``feas_tol``.
    """
    lo, hi = qp.lower, qp.upper
    if np.any(lo > hi):
        raise InfeasibleError("projection onto an empty box")
    G = qp.generator
    r = qp.target - qp.offset
    q = lo.size
    z = np.zeros(q)
    pinned = lo == hi
    z[pinned] = lo[pinned]
    free = np.flatnonzero(~pinned)
    if free.size:
        rhs = r - G[:, pinned] @ z[pinned]
        Gf = G[:, free]
        if np.all(np.isinf(lo[free])) and np.all(np.isinf(hi[free])):
            z[free] = np.linalg.lstsq(Gf, rhs, rcond=None)[0]
        else:
            res = lsq_linear(Gf, rhs, bounds=(lo[free], hi[free]), method="bvls",
                             tol=1e-14, max_iter=50 * (free.size + Gf.shape[0]))
            if res.status < 0:
                raise NumericalFailure(f"BVLS failed: {res.message}")
            z[free] = np.clip(res.x, lo[free], hi[free])
        z = _polish(G, r, lo, hi, z)
    grad, res = projection_kkt(qp, z)
    if res > feas_tol:
        raise NumericalFailure(f"projection fails KKT verification (residual {res:.3e})")
    point = qp.offset + G @ z
    return ProjectionResult(point, float(np.sum((qp.target - point) ** 2)), z, grad, res)


def _polish(G, r, lo, hi, z):
    span = 1.0 + np.abs(z).max(initial=0.0)
    active = (z - lo <= 1e-9 * span) | (hi - z <= 1e-9 * span)
    F = np.flatnonzero(~active)
    if F.size == 0:
        return z
    zf = z.copy()
    rhs = r - G[:, active] @ z[active]
    GF = G[:, F]
    # minimum-norm correction keeps the polished point near the BVLS iterate
    delta = np.linalg.lstsq(GF, rhs - GF @ z[F], rcond=None)[0]
    zf[F] = z[F] + delta
    if np.all(zf[F] >= lo[F]) and np.all(zf[F] <= hi[F]):
        return zf
    return z
