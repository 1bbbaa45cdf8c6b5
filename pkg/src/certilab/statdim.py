"""Statistical-dimension estimates through ``J(tau) = E dist^2(X, tau * subdiff f(x))``.

For ``X ~ N(0, I)`` the infimum of ``J`` over ``tau >= 0`` is an upper bound on
the statistical dimension of the descent cone of ``f`` at ``x``.

Distances are computed through Moreau's identity:
``dist^2(X, tau C) = || prox_h(X) ||^2`` where ``h = tau * f'(x; .)`` is the
support function of ``tau C``. Writing ``f'(x; d) = <y0, d> + ||D_cos d||_1``
on the tangent cone ``T`` of the box, the prox is
``clamp_T(prox_{tau ||D_cos .||_1}(X - tau y0))``. The clamp may be applied
after the TV prox because ``x`` is constant on every connected piece of the
cosupport graph, so the box constraint is uniform there.

When every cosupport row of ``D`` is either a single ``+-1`` entry or a
``+1/-1`` pair, the edges split into families of disjoint chains and the
prox is computed by compiled kernels; for the identity, the 1-D difference
operator and the 2-D gradient (also restricted to a region) this is at most
two families. Anything else falls back to one bound-constrained least squares
problem per sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtr

from certilab._prox import batch_prox_clamp
from certilab.objectives import ObjectiveSpec, SubdiffDescription, subdiff_description
from certilab.rng import make_rng
from certilab.solver import QuadraticProjection, solve_projection

DEFAULT_SAMPLES = 10_000
GAP_TOL = 1e-10
MAX_DYKSTRA_ITER = 20_000


class StatDimError(RuntimeError):
    """The minimum of ``J`` could not be bracketed."""


# ---------------------------------------------------------------------------
# closed forms


def _phi(t):
    return np.exp(-0.5 * np.square(t)) / math.sqrt(2.0 * math.pi)


def kernel_point(tau, a: float = 1.0):
    """``E (X - tau a)^2``."""
    tau = np.asarray(tau, float)
    return 1.0 + np.square(tau * a)


def kernel_interval(tau):
    """``E dist^2(X, [-tau, tau])``."""
    tau = np.asarray(tau, float)
    return 2.0 * ((1.0 + tau * tau) * ndtr(-tau) - tau * _phi(tau))


def kernel_below(tau):
    """``E dist^2(X, (-inf, tau]) = E (X - tau)_+^2``."""
    tau = np.asarray(tau, float)
    return (1.0 + tau * tau) * ndtr(-tau) - tau * _phi(tau)


def kernel_above(tau):
    """``E dist^2(X, [tau, inf)) = E (tau - X)_+^2``."""
    tau = np.asarray(tau, float)
    return (1.0 + tau * tau) * ndtr(tau) + tau * _phi(tau)


def j_closed_form(case: str, n: int, s: int, tau, profile: Optional[tuple] = None):
    """Exact ``J(tau)`` for ``f1``, ``f2`` and ``f3``.

    Parameters
    ----------
    case : {"f1", "f2", "f3"}
    n : int
        Ambient dimension.
    s : int
        Support size. For ``f2`` the support entries are positive.
    tau : float or array
    profile : tuple of int, optional
        ``f3`` only: counts ``(n_lower, n_interior, n_upper)`` of entries at 0,
        strictly inside ``(0, 1)`` and at 1. Defaults to a binary signal,
        ``(n - s, 0, s)``.

    Notes
    -----
    Each coordinate contributes the expected squared distance of a standard
    normal to one cross-section of ``tau * subdiff f``: a point (support of
    f1/f2, interior of f3), the interval ``[-tau, tau]`` (zeros of f1), the
    half-line ``(-inf, tau]`` (zeros of f2 and f3) or ``[tau, inf)`` (ones of
    f3). At ``tau = 0`` the set is ``{0}`` and the value is ``n``.
    """
    tau = np.asarray(tau, float)
    val = _combine(case, n, s, profile, tau,
                   (kernel_point, kernel_interval, kernel_below, kernel_above))
    val = np.where(tau == 0, float(int(n)), val)
    return float(val) if val.ndim == 0 else val


def j_closed_form_slope(case: str, n: int, s: int, tau, profile: Optional[tuple] = None):
    """Exact derivative ``J'(tau)`` of :func:`j_closed_form`.

    Used by the closed-form minimizer, where finite differences at the
    bisection tolerance would drown in rounding error.
    """
    tau = np.asarray(tau, float)
    val = _combine(case, n, s, profile, tau,
                   (_dkernel_point, _dkernel_interval, _dkernel_below, _dkernel_above))
    return float(val) if val.ndim == 0 else val


def _dkernel_point(tau):
    return 2.0 * tau


def _dkernel_interval(tau):
    return 4.0 * (tau * ndtr(-tau) - _phi(tau))


def _dkernel_below(tau):
    return 2.0 * (tau * ndtr(-tau) - _phi(tau))


def _dkernel_above(tau):
    return 2.0 * (tau * ndtr(tau) + _phi(tau))


def _combine(case, n, s, profile, tau, kernels):
    point, interval, below, above = kernels
    case = case.lower()
    n, s = int(n), int(s)
    if not 0 <= s <= n:
        raise ValueError("need 0 <= s <= n")
    if np.any(tau < 0):
        raise ValueError("tau must be nonnegative")
    if case == "f1":
        return s * point(tau) + (n - s) * interval(tau)
    if case == "f2":
        return s * point(tau) + (n - s) * below(tau)
    if case == "f3":
        n_lo, n_in, n_up = profile if profile is not None else (n - s, 0, s)
        if n_lo + n_in + n_up != n or n_in + n_up != s:
            raise ValueError("profile must split n with n_interior + n_upper = s")
        return n_in * point(tau) + n_lo * below(tau) + n_up * above(tau)
    raise ValueError("closed forms exist for f1, f2 and f3 only")


def closed_form_counts(spec: ObjectiveSpec, x) -> tuple:
    """``(n, s, profile)`` of a signal for :func:`j_closed_form`."""
    if not spec.separable:
        raise ValueError("closed forms exist for f1, f2 and f3 only")
    sd = subdiff_description(spec, x)
    sets = sd.sets
    n = spec.n
    s = int(sets.support.size)
    if spec.case == "f3":
        return n, s, (int(sets.at_lower.size), int(sets.inactive.size), int(sets.at_upper.size))
    return n, s, None


# ---------------------------------------------------------------------------
# distance evaluation


@dataclass
class ProxStructure:
    """Compiled description of ``prox`` of ``tau * f'(x; .)``."""

    kind: str  # "fast" or "generic"
    families: list = field(default_factory=list)  # (nodes, ptr, is_soft)
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None


def _path_forests(edges: np.ndarray, n: int, max_families: int):
    """Greedily split graph edges into forests of vertex-disjoint paths.

    Edges are visited by stride, then by first node, so grid graphs (whole or
    restricted to a region) split into their vertical and horizontal chains.
    Returns ``None`` when more than ``max_families`` are needed.
    """
    order = np.lexsort((edges[:, 0], edges[:, 1] - edges[:, 0]))
    fams = []  # (degree array, union-find parent array, edge list)

    def find(parent, a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in order:
        u, v = int(edges[e, 0]), int(edges[e, 1])
        for deg, parent, lst in fams:
            if deg[u] < 2 and deg[v] < 2:
                ru, rv = find(parent, u), find(parent, v)
                if ru != rv:
                    parent[ru] = rv
                    deg[u] += 1
                    deg[v] += 1
                    lst.append((u, v))
                    break
        else:
            if len(fams) == max_families:
                return None
            deg = np.zeros(n, np.int64)
            parent = np.arange(n)
            deg[u] = deg[v] = 1
            parent[u] = v
            fams.append((deg, parent, [(u, v)]))
    return [_walk_chains(lst) for _, _, lst in fams]


def _walk_chains(edge_list):
    """Node sequences of the paths in a path forest, as flat ``(nodes, ptr)``."""
    adj = {}
    for u, v in edge_list:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    seen = set()
    nodes, ptr = [], [0]
    for start in sorted(adj):
        if start in seen or len(adj[start]) != 1:
            continue
        prev, cur = -1, start
        while True:
            nodes.append(cur)
            seen.add(cur)
            nxt = [w for w in adj[cur] if w != prev]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
        ptr.append(len(nodes))
    return np.asarray(nodes, dtype=np.int64), np.asarray(ptr, dtype=np.int64)


def prox_structure(sd: SubdiffDescription, max_families: int = 2) -> ProxStructure:
    n = sd.n
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    for col in sd.rays.T:
        i = int(np.flatnonzero(col)[0])
        if col[i] < 0:
            lo[i] = 0.0
        else:
            hi[i] = 0.0
    B = sd.bounded
    soft, pairs = [], []
    for col in B.T:
        nz = np.flatnonzero(col)
        vals = col[nz]
        if nz.size == 1 and abs(abs(vals[0]) - 1.0) < 1e-12:
            soft.append(int(nz[0]))
        elif nz.size == 2 and abs(vals[0] + vals[1]) < 1e-12 and abs(abs(vals[0]) - 1.0) < 1e-12:
            pairs.append((int(nz[0]), int(nz[1])))
        else:
            return ProxStructure("generic")
    families = []
    if soft:
        if len(set(soft)) != len(soft):
            return ProxStructure("generic")
        families.append((np.asarray(sorted(soft), np.int64), np.zeros(1, np.int64), True))
    if pairs:
        E = np.sort(np.asarray(pairs, dtype=np.int64), axis=1)
        if np.unique(E, axis=0).shape[0] != E.shape[0]:
            return ProxStructure("generic")
        forests = _path_forests(E, n, max_families - len(families))
        if forests is None:
            return ProxStructure("generic")
        families.extend((nodes, ptr, False) for nodes, ptr in forests)
        # the box must be uniform along every cosupport edge
        if np.any(lo[E[:, 0]] != lo[E[:, 1]]) or np.any(hi[E[:, 0]] != hi[E[:, 1]]):
            return ProxStructure("generic")
    if len(families) > max_families:
        return ProxStructure("generic")
    return ProxStructure("fast", families, lo, hi)


_EMPTY = (np.zeros(0, np.int64), np.zeros(1, np.int64), False)


class WarmStart:
    """Per-sample second-family duals kept between calls at nearby ``tau``."""

    def __init__(self):
        self.Q = None
        self.tau = None

    def take(self, shape, tau: float) -> np.ndarray:
        if self.Q is None or self.Q.shape != shape:
            self.Q = np.zeros(shape)
        elif self.tau:
            # the dual ball scales with tau, so rescaling keeps Q feasible
            self.Q *= tau / self.tau
        self.tau = tau
        return self.Q


def _fast_prox(struct: ProxStructure, R: np.ndarray, tau: float,
               warm: Optional[WarmStart] = None, gap_tol: float = GAP_TOL) -> np.ndarray:
    fams = list(struct.families) + [_EMPTY] * (2 - len(struct.families))
    if not struct.families:
        return np.clip(R, struct.lo, struct.hi)
    (n1, p1, s1), (n2, p2, s2) = fams
    out = np.empty_like(R)
    Q = warm.take(R.shape, tau) if warm is not None else np.zeros_like(R)
    batch_prox_clamp(np.ascontiguousarray(R), n1, p1, s1, n2, p2, s2, float(tau),
                     struct.lo, struct.hi, gap_tol, MAX_DYKSTRA_ITER, out, Q)
    return out


def _generic_dist_sq(X: np.ndarray, tau: float, sd: SubdiffDescription) -> np.ndarray:
    G = sd.generator()
    lo, hi = sd.coef_bounds()
    out = np.empty(X.shape[0])
    for i, row in enumerate(X):
        if G.shape[1] == 0:
            out[i] = float(np.sum((row - tau * sd.y0) ** 2))
            continue
        res = solve_projection(QuadraticProjection(row, lo, hi, G=tau * G, offset=tau * sd.y0))
        out[i] = res.sq_distance
    return out


def dist_sq_batch(X, tau: float, sd: SubdiffDescription,
                  struct: Optional[ProxStructure] = None,
                  warm: Optional[WarmStart] = None, gap_tol: float = GAP_TOL) -> np.ndarray:
    """Squared distances of every row of ``X`` to ``tau * subdiff``.

    ``gap_tol`` is the relative duality-gap target of the two-family splitting
    (unused by exact paths); ``warm`` carries duals between calls.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau == 0:
        return np.einsum("ij,ij->i", X, X)
    if struct is None:
        struct = prox_structure(sd)
    if struct.kind == "generic":
        return _generic_dist_sq(X, tau, sd)
    P = _fast_prox(struct, X - tau * sd.y0, tau, warm, gap_tol)
    return np.einsum("ij,ij->i", P, P)


def dist_sq_to_scaled_subdiff(X, tau: float, sd: SubdiffDescription) -> float:
    """Squared distance from ``X`` to ``tau * subdiff f(x)``.

    Examples
    --------
    >>> from certilab.objectives import make_objective, subdiff_description
    >>> sd = subdiff_description(make_objective("f1", 2), [1.0, 0.0])
    >>> dist_sq_to_scaled_subdiff([2.0, 3.0], 1.0, sd)
    5.0
    """
    return float(dist_sq_batch(np.asarray(X, float).reshape(1, -1), tau, sd)[0])


class JEvaluator:
    """Monte-Carlo ``h_k(tau)`` on one fixed sample set (common random numbers)."""

    def __init__(self, spec: ObjectiveSpec, x, k: int = DEFAULT_SAMPLES, seed=0, samples=None,
                 gap_tol: float = GAP_TOL):
        if k < 1:
            raise ValueError("k must be positive")
        self.spec = spec
        self.sd = subdiff_description(spec, x)
        self.struct = prox_structure(self.sd)
        if samples is None:
            samples = make_rng(seed).standard_normal((int(k), spec.n))
        self.X = np.asarray(samples, dtype=float)
        self.k = self.X.shape[0]
        self.evaluations = 0
        self.gap_tol = gap_tol
        self.warm = WarmStart()

    def per_sample(self, tau: float) -> np.ndarray:
        self.evaluations += 1
        return dist_sq_batch(self.X, tau, self.sd, self.struct, self.warm, self.gap_tol)

    def __call__(self, tau: float) -> float:
        return float(np.mean(self.per_sample(tau)))

    def with_stderr(self, tau: float) -> tuple:
        v = self.per_sample(tau)
        se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
        return float(np.mean(v)), se


def j_approx(spec: ObjectiveSpec, x, tau: float, k: int = DEFAULT_SAMPLES, seed=0) -> tuple:
    """``(h_k(tau), stderr)``; the same seed gives the same samples for every ``tau``."""
    return JEvaluator(spec, x, k, seed).with_stderr(tau)


# ---------------------------------------------------------------------------
# minimization


@dataclass
class StatDimEstimate:
    tau_star: float
    j_star: float
    k: Optional[int]
    stderr: float
    method: str
    interval: tuple
    flags: tuple = ()
    evaluations: int = 0

    def to_dict(self) -> dict:
        return {
            "tau_star": self.tau_star,
            "j_star": self.j_star,
            "samples": self.k,
            "stderr": self.stderr,
            "method": self.method,
            "interval": list(self.interval),
            "flags": list(self.flags),
            "evaluations": self.evaluations,
        }


def min_subgradient_norm(sd: SubdiffDescription) -> float:
    """``min {||w|| : w in subdiff}`` by one projection of the origin."""
    G = sd.generator()
    if G.shape[1] == 0:
        return float(np.linalg.norm(sd.y0))
    lo, hi = sd.coef_bounds()
    res = solve_projection(QuadraticProjection(np.zeros(sd.n), lo, hi, G=G, offset=sd.y0))
    return math.sqrt(max(res.sq_distance, 0.0))


def _central_slope(h, tau: float, delta: float) -> float:
    d = min(delta, 0.5 * tau) if tau > 0 else delta
    lo = tau - d if tau > 0 else 0.5 * delta
    hi = tau + d
    return (h(hi) - h(lo)) / (hi - lo)


def bisect_minimum(h, T: float, tol: float, delta: Optional[float] = None,
                   slope=None) -> tuple:
    """Bisection on the slope of a convex ``h`` over ``(0, T]``.

    The slope is ``slope(tau)`` when given, otherwise a central difference
    with step ``delta`` (``tol / 4`` by default).
    """
    delta = 0.25 * tol if delta is None else delta
    if slope is None:
        def slope(t):
            return _central_slope(h, t, delta)
    lo, hi = 0.0, T
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi), lo, hi


def minimize_j(spec: ObjectiveSpec, x, k: int = DEFAULT_SAMPLES, seed=0,
               tol_tau: Optional[float] = None, closed_form: Optional[bool] = None,
               max_doublings: int = 40, samples=None) -> StatDimEstimate:
    """Minimize ``J`` (closed form) or ``h_k`` (Monte Carlo) over ``tau >= 0``.

    Parameters
    ----------
    spec : ObjectiveSpec
    x : array_like
        The signal.
    k : int
        Monte-Carlo sample count.
    seed : int
        Seed for the sample set shared by every ``tau``.
    tol_tau : float, optional
        Bisection tolerance; ``1e-3 * ||x||`` by default (``1e-10`` for the
        closed form).
    closed_form : bool, optional
        Use the exact formula; default is True for f1-f3.

    Returns
    -------
    StatDimEstimate
        ``flags`` may contain ``"degenerate"`` (``0`` is a subgradient or
        ``x = 0``; no guarantee), ``"interval_grown"`` (the initial bracket
        had to be enlarged), ``"boundary"`` (the minimum sits at ``tau -> 0+``)
        and ``"not_bracketed"`` (best effort in the degenerate case).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if closed_form is None:
        closed_form = spec.separable
    flags = []
    xnorm = float(np.linalg.norm(x))
    sd = subdiff_description(spec, x)
    b = min_subgradient_norm(sd)
    degenerate = xnorm == 0.0 or b <= 1e-9
    if degenerate:
        flags.append("degenerate")

    if closed_form:
        n, s, profile = closed_form_counts(spec, x)

        def h(t):
            return j_closed_form(spec.case, n, s, t, profile)

        def slope(t):
            return j_closed_form_slope(spec.case, n, s, t, profile)
        evaluator = None
        tol = 1e-10 if tol_tau is None else tol_tau
        method = "closed_form"
    else:
        evaluator = JEvaluator(spec, x, k, seed, samples)
        h = evaluator
        slope = None
        tol = 1e-3 * xnorm if tol_tau is None else tol_tau
        if tol <= 0:
            tol = 1e-3
        method = "monte_carlo"

    if sd.is_bounded and not degenerate:
        T = 2.0 * xnorm / b
    else:
        T = 1.0
    T = max(T, 4.0 * tol)
    doublings = 0
    while not h(T) > h(0.5 * T):
        if doublings >= max_doublings:
            if degenerate:
                flags.append("not_bracketed")
                break
            raise StatDimError(
                f"J is still decreasing at tau = {T:g} after {doublings} doublings; "
                f"subgradient norm bound {b:g}")
        T *= 2.0
        doublings += 1
    if doublings and "not_bracketed" not in flags:
        flags.append("interval_grown")

    if "not_bracketed" in flags:
        tau_star = T
    else:
        tau_star, lo, hi = bisect_minimum(h, T, tol, slope=slope)
        if lo == 0.0:
            flags.append("boundary")
    if evaluator is not None:
        j_star, se = evaluator.with_stderr(tau_star)
        evals = evaluator.evaluations
    else:
        j_star, se, evals = h(tau_star), 0.0, 0
    return StatDimEstimate(float(tau_star), float(j_star), None if closed_form else evaluator.k,
                           float(se), method, (0.0, float(T)), tuple(flags), evals)


def minimize_j_counts(case: str, n: int, s: int, profile=None, tol: float = 1e-10) -> StatDimEstimate:
    """Closed-form minimum from counts alone (no signal needed)."""
    def h(t):
        return j_closed_form(case, n, s, t, profile)
    T = 1.0
    while not h(T) > h(0.5 * T):
        T *= 2.0
        if T > 1e12:
            raise StatDimError("closed form not bracketed")
    tau_star, lo, _ = bisect_minimum(
        h, T, tol, slope=lambda t: j_closed_form_slope(case, n, s, t, profile))
    flags = ("boundary",) if lo == 0.0 else ()
    return StatDimEstimate(tau_star, h(tau_star), None, 0.0, "closed_form", (0.0, T), flags)
