"""The six polyhedral regularizers and their subdifferentials.

Every objective is ``f(x) = ||D x||_1 + indicator_[l, u](x)``:

====  ===============  ==========
case  D                box [l, u]
====  ===============  ==========
f1    identity         unbounded
f2    identity         [0, inf)
f3    identity         [0, 1]
f4    user / gradient  unbounded
f5    user / gradient  [0, inf)
f6    user / gradient  [0, 1]
====  ===============  ==========

Unbounded sides are stored as IEEE ``inf``; objective values outside the box
are ``inf`` as well.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from certilab.linalg import as_matrix, diff_operator_1d, gradient_operator_2d

DEFAULT_ACT_TOL = 1e-9

CASES = ("f1", "f2", "f3", "f4", "f5", "f6")
CLI_NAMES = ("f1", "f2", "f3", "f4-1d", "f4-2d", "f5-1d", "f5-2d", "f6-1d", "f6-2d")


class InfeasiblePointError(ValueError):
    """The point lies outside the box ``[l, u]``."""


def _box_for_case(case: str, n: int):
    family = (CASES.index(case) % 3)
    if family == 0:
        return np.full(n, -np.inf), np.full(n, np.inf)
    if family == 1:
        return np.zeros(n), np.full(n, np.inf)
    return np.zeros(n), np.ones(n)


@dataclass
class ObjectiveSpec:
    """One of ``f1`` ... ``f6`` together with its analysis matrix and box."""

    case: str
    D: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    image_shape: Optional[tuple] = None

    def __post_init__(self):
        self.case = self.case.lower()
        if self.case not in CASES:
            raise ValueError(f"unknown objective case {self.case!r}; expected one of {CASES}")
        self.D = as_matrix(self.D, "D")
        n = self.D.shape[1]
        self.lower = np.asarray(self.lower, dtype=float).reshape(-1)
        self.upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bounds must have one entry per column of D")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("bounds must not be NaN")
        if np.any(self.lower >= self.upper):
            raise ValueError("every lower bound must be strictly below its upper bound")
        if self.case in ("f1", "f2", "f3") and not np.array_equal(self.D, np.eye(n)):
            raise ValueError(f"{self.case} uses D = identity")
        want_lo, want_hi = _box_for_case(self.case, n)
        if not (np.array_equal(self.lower, want_lo) and np.array_equal(self.upper, want_hi)):
            raise ValueError(f"bounds do not match the box of case {self.case}")

    @property
    def n(self) -> int:
        return self.D.shape[1]

    @property
    def p(self) -> int:
        return self.D.shape[0]

    @property
    def separable(self) -> bool:
        """True for f1-f3, where D is the identity."""
        return self.case in ("f1", "f2", "f3")

    @property
    def has_box(self) -> bool:
        return bool(np.any(np.isfinite(self.lower)) or np.any(np.isfinite(self.upper)))

    @property
    def binary_box(self) -> bool:
        return self.case in ("f3", "f6")

    @property
    def name(self) -> str:
        if self.separable:
            return self.case
        if self.image_shape is not None:
            return f"{self.case}-2d"
        return f"{self.case}-1d"


def make_objective(case: str, n: Optional[int] = None, *, D=None,
                   image_shape: Optional[tuple] = None) -> ObjectiveSpec:
    """Build an :class:`ObjectiveSpec` from a case name.

    ``case`` is either a bare case (``"f4"``) or a CLI name (``"f4-1d"``,
    ``"f6-2d"``). For the TV cases ``D`` may be given explicitly; otherwise it
    is the 1-D difference operator (needs ``n``) or the 2-D gradient (needs
    ``image_shape``).
    """
    name = case.lower()
    base, _, kind = name.partition("-")
    if base not in CASES:
        raise ValueError(f"unknown objective {case!r}; expected one of {CLI_NAMES}")
    if base in ("f1", "f2", "f3"):
        if kind:
            raise ValueError(f"{base} takes no operator suffix")
        if n is None:
            raise ValueError(f"{base} needs the ambient dimension n")
        D = np.eye(n)
    elif D is None:
        if kind == "2d":
            if image_shape is None:
                if n is None or int(round(math.sqrt(n))) ** 2 != n:
                    raise ValueError("f*-2d needs image_shape or a square n")
                side = int(round(math.sqrt(n)))
                image_shape = (side, side)
            D = gradient_operator_2d(*image_shape)
        else:
            if n is None:
                raise ValueError(f"{name} needs the ambient dimension n")
            D = diff_operator_1d(n)
    D = as_matrix(D, "D")
    lo, hi = _box_for_case(base, D.shape[1])
    return ObjectiveSpec(base, D, lo, hi, tuple(image_shape) if image_shape else None)


@dataclass
class IndexSets:
    """Support, box activity and cosupport of a feasible point (0-based)."""

    support: np.ndarray
    at_lower: np.ndarray
    at_upper: np.ndarray
    inactive: np.ndarray
    cosupport: np.ndarray
    cosupport_c: np.ndarray
    Dx: np.ndarray

    @property
    def signs(self) -> np.ndarray:
        """``sign(D x)`` on the complement of the cosupport."""
        return np.sign(self.Dx[self.cosupport_c])


def index_sets(spec: ObjectiveSpec, x, act_tol: float = DEFAULT_ACT_TOL) -> IndexSets:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != spec.n:
        raise ValueError(f"signal has length {x.size}, objective expects {spec.n}")
    if np.any(x < spec.lower - act_tol) or np.any(x > spec.upper + act_tol):
        raise InfeasiblePointError("point violates the box constraints")
    Dx = spec.D @ x
    at_lo = np.abs(x - spec.lower) <= act_tol
    at_hi = np.abs(x - spec.upper) <= act_tol
    at_hi &= ~at_lo
    cos = np.abs(Dx) <= act_tol
    return IndexSets(
        support=np.flatnonzero(np.abs(x) > act_tol),
        at_lower=np.flatnonzero(at_lo),
        at_upper=np.flatnonzero(at_hi),
        inactive=np.flatnonzero(~(at_lo | at_hi)),
        cosupport=np.flatnonzero(cos),
        cosupport_c=np.flatnonzero(~cos),
        Dx=Dx,
    )


def psi_matrix(spec: ObjectiveSpec, sets: IndexSets) -> np.ndarray:
    """Diagonal matrix with -1 on active lower bounds and +1 on active upper bounds."""
    diag = np.zeros(spec.n)
    diag[sets.at_lower] = -1.0
    diag[sets.at_upper] = 1.0
    return np.diag(diag)


@dataclass
class SubdiffDescription:
    """``{y0 + D_cos^T a + R m : |a|_inf <= 1, m >= 0}``.

    ``bounded`` is ``D_cos^T`` (one column per cosupport row) and ``rays`` holds
    the nonzero columns of the activity matrix.
    """

    y0: np.ndarray
    bounded: np.ndarray
    rays: np.ndarray
    sets: IndexSets
    separable: bool

    @property
    def n(self) -> int:
        return self.y0.size

    @property
    def is_bounded(self) -> bool:
        return self.rays.shape[1] == 0

    def generator(self) -> np.ndarray:
        return np.hstack([self.bounded, self.rays])

    def coef_bounds(self):
        k, r = self.bounded.shape[1], self.rays.shape[1]
        lo = np.concatenate([-np.ones(k), np.zeros(r)])
        hi = np.concatenate([np.ones(k), np.full(r, np.inf)])
        return lo, hi

    def point(self, alpha, mu) -> np.ndarray:
        return self.y0 + self.bounded @ np.asarray(alpha, float) + self.rays @ np.asarray(mu, float)

    def sample(self, rng: np.random.Generator, ray_scale: float = 3.0) -> np.ndarray:
        """A random element, drawn through the parametrization."""
        alpha = rng.uniform(-1.0, 1.0, self.bounded.shape[1])
        mu = rng.exponential(ray_scale, self.rays.shape[1])
        return self.point(alpha, mu)

    def contains(self, v, tol: float = 1e-8) -> bool:
        """Membership test by an LP feasibility problem."""
        from certilab.solver import LinearProgram, solve_lp

        v = np.asarray(v, float)
        G = self.generator()
        lo, hi = self.coef_bounds()
        if G.shape[1] == 0:
            return bool(np.abs(v - self.y0).max(initial=0.0) <= tol)
        # minimise the l_inf mismatch to absorb rounding in the target
        q = G.shape[1]
        n = self.n
        c = np.zeros(q + 1)
        c[-1] = 1.0
        ub = np.block([[G, -np.ones((n, 1))], [-G, -np.ones((n, 1))]])
        rhs = np.concatenate([v - self.y0, self.y0 - v])
        sol = solve_lp(LinearProgram(c, ineq_lhs=ub, ineq_rhs=rhs,
                                     var_lower=np.append(lo, 0.0),
                                     var_upper=np.append(hi, np.inf)))
        return bool(sol.optimal and sol.objective_value <= tol)


def subdiff_description(spec: ObjectiveSpec, x, act_tol: float = DEFAULT_ACT_TOL) -> SubdiffDescription:
    sets = index_sets(spec, x, act_tol)
    D = spec.D
    y0 = D[sets.cosupport_c].T @ sets.signs
    psi = np.diag(psi_matrix(spec, sets))
    ray_cols = np.flatnonzero(psi)
    rays = np.zeros((spec.n, ray_cols.size))
    rays[ray_cols, np.arange(ray_cols.size)] = psi[ray_cols]
    return SubdiffDescription(y0=y0, bounded=D[sets.cosupport].T.copy(), rays=rays,
                              sets=sets, separable=spec.separable)


def objective_value(spec: ObjectiveSpec, x, act_tol: float = DEFAULT_ACT_TOL) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if np.any(x < spec.lower - act_tol) or np.any(x > spec.upper + act_tol):
        return math.inf
    return float(np.abs(spec.D @ x).sum())


def directional_derivative(spec: ObjectiveSpec, x, d, sets: Optional[IndexSets] = None) -> float:
    """One-sided derivative ``f'(x; d)``; ``inf`` if ``d`` leaves the box."""
    if sets is None:
        sets = index_sets(spec, x)
    d = np.asarray(d, dtype=float).reshape(-1)
    if np.any(d[sets.at_lower] < 0) or np.any(d[sets.at_upper] > 0):
        return math.inf
    Dd = spec.D @ d
    return float(sets.signs @ Dd[sets.cosupport_c] + np.abs(Dd[sets.cosupport]).sum())
