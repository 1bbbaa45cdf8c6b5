"""Randomized consistency suites shared by ``certilab selftest`` and the test suite.

* :func:`cross_agreement` certifies random small instances with every method
  and counts disagreements outside the epsilon-LP indeterminate band; each
  instance certified unique is also re-solved to check that recovery returns
  the signal.
* :func:`strict_feasibility_suite` checks the duality test on systems whose
  answer is known by construction.
* :func:`kernel_check` compares the closed-form Gaussian kernels with
  numerical quadrature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from certilab.certify import (INDETERMINATE, NOT_UNIQUE, UNIQUE, PreconditionError,
                              certify_general, certify_specialized, descent_cone_oracle,
                              recover, strict_feasibility)
from certilab.objectives import make_objective
from certilab.rng import derive_seed, make_rng
from certilab.statdim import kernel_above, kernel_below, kernel_interval, kernel_point

CASES = ("f1", "f2", "f3", "f4", "f5", "f6")
VALUE_CLASSES = {
    "f1": ("real", "nonnegative", "binary"),
    "f2": ("nonnegative", "binary"),
    "f3": ("binary", "fractional"),
    "f4": ("real", "nonnegative", "binary"),
    "f5": ("nonnegative", "binary"),
    "f6": ("binary", "fractional"),
}


@dataclass
class Instance:
    case: str
    value_class: str
    A: np.ndarray
    spec: object
    x: np.ndarray


def _values(rng, size, value_class):
    if value_class == "real":
        return rng.standard_normal(size)
    if value_class == "nonnegative":
        v = np.abs(rng.standard_normal(size))
        v[rng.random(size) < 0.3] = 0.0
        return v
    if value_class == "binary":
        return rng.integers(0, 2, size).astype(float)
    v = rng.uniform(0.05, 0.95, size)  # fractional: a mix of 0, 1 and interior values
    pick = rng.random(size)
    v[pick < 0.35] = 0.0
    v[pick > 0.7] = 1.0
    return v


def random_instance(case: str, rng, n_max: int = 12) -> Instance:
    """A small random instance of ``case`` with a compatible value class."""
    value_class = VALUE_CLASSES[case][int(rng.integers(len(VALUE_CLASSES[case])))]
    if case in ("f1", "f2", "f3"):
        n = int(rng.integers(2, n_max + 1))
        spec = make_objective(case, n)
        x = np.zeros(n)
        s = int(rng.integers(0, n + 1))
        idx = rng.choice(n, size=s, replace=False)
        x[idx] = _values(rng, s, value_class)
        if value_class != "fractional":
            x[idx] = np.where(x[idx] == 0, 1.0, x[idx])
    else:
        if rng.random() < 0.25:
            r = int(rng.integers(2, 4))
            c = int(rng.integers(2, n_max // r + 1))
            spec = make_objective(f"{case}-2d", image_shape=(r, c))
            n = r * c
            labels = np.zeros((r, c), dtype=int)
            n_vals = int(rng.integers(1, 4))
            for _ in range(int(rng.integers(0, 4))):
                r0, c0 = int(rng.integers(r)), int(rng.integers(c))
                h, w = int(rng.integers(1, r - r0 + 1)), int(rng.integers(1, c - c0 + 1))
                labels[r0:r0 + h, c0:c0 + w] = (labels[r0:r0 + h, c0:c0 + w] + 1) % n_vals
            vals = _values(rng, n_vals, value_class)
            x = vals[labels].reshape(-1, order="F")
        else:
            n = int(rng.integers(2, n_max + 1))
            spec = make_objective(f"{case}-1d", n)
            jumps = np.sort(rng.choice(np.arange(1, n), size=int(rng.integers(0, n)), replace=False))
            seg = np.zeros(n, dtype=int)
            for j in jumps:
                seg[j:] += 1
            x = _values(rng, seg.max() + 1, value_class)[seg]
    m = int(rng.integers(1, n + 1))
    if rng.random() < 0.3:
        A = rng.integers(-1, 2, size=(m, n)).astype(float)
    else:
        A = rng.standard_normal((m, n))
    return Instance(case, value_class, A, spec, x)


@dataclass
class AgreementReport:
    case: str
    instances: int = 0
    compared: int = 0
    indeterminate: int = 0
    disagreements: list = field(default_factory=list)
    unique: int = 0
    recovery_failures: list = field(default_factory=list)
    max_recovery_error: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.disagreements

    @property
    def sound(self) -> bool:
        return not self.recovery_failures


def check_instance(inst: Instance, report: AgreementReport, recovery_tol: float = 1e-6) -> None:
    A, spec, x = inst.A, inst.spec, inst.x
    report.instances += 1
    ref = certify_general(A, spec, x, method="epsilon_lp")
    if ref.verdict == INDETERMINATE:
        report.indeterminate += 1
        return
    report.compared += 1
    verdicts = {"exact_duality": certify_general(A, spec, x, method="exact_duality").verdict}
    try:
        verdicts["specialized"] = certify_specialized(A, spec, x).verdict
    except PreconditionError:
        pass
    verdicts["oracle"] = UNIQUE if descent_cone_oracle(A, spec, x, max_n=spec.n) else NOT_UNIQUE
    bad = {k: v for k, v in verdicts.items() if v != ref.verdict}
    if bad:
        report.disagreements.append({"case": inst.case, "class": inst.value_class,
                                     "epsilon_lp": ref.verdict, "t_star": ref.t_star,
                                     **bad, "x": x.tolist(), "A": A.tolist()})
    if ref.verdict == UNIQUE:
        report.unique += 1
        xr = recover(A, A @ x, spec)
        err = float(np.abs(xr - x).max())
        report.max_recovery_error = max(report.max_recovery_error, err)
        if not err <= recovery_tol:
            report.recovery_failures.append({"case": inst.case, "error": err,
                                             "x": x.tolist(), "A": A.tolist()})


def cross_agreement(per_case: int = 200, seed: int = 0, cases=CASES, n_max: int = 12) -> dict:
    """Run the agreement and recovery check on ``per_case`` instances of each case."""
    out = {}
    for ci, case in enumerate(cases):
        report = AgreementReport(case)
        for t in range(per_case):
            rng = make_rng(derive_seed(seed, ci, t))
            check_instance(random_instance(case, rng, n_max), report)
        out[case] = report
    return out


# ---------------------------------------------------------------------------
# strict feasibility with planted answers


def planted_system(rng, family: str):
    """``(M, q, P, d, strictly_feasible)`` built around a known point.

    Families: ``interior`` (every inequality has positive slack),
    ``tight_pair`` (a row and its negation pinned to an equality: feasible but
    never strictly), ``rowspace_cut`` (an inequality whose row lies in the row
    space of ``M`` with a bound at or below its forced value) and
    ``rowspace_slack`` (the same row with a bound above the forced value,
    hence harmless).
    """
    a = int(rng.integers(1, 5))
    b = int(rng.integers(a + 1, 10))
    c = int(rng.integers(1, 7))
    M = rng.standard_normal((a, b))
    z0 = rng.standard_normal(b)
    q = M @ z0
    P = rng.standard_normal((c, b))
    d = P @ z0 + rng.uniform(0.05, 1.0, c)
    if family == "interior":
        return M, q, P, d, True
    if family == "tight_pair":
        p = rng.standard_normal(b)
        P = np.vstack([P, p, -p])
        d = np.concatenate([d, [p @ z0, -(p @ z0)]])
        return M, q, P, d, False
    w = rng.standard_normal(a)
    p = M.T @ w
    forced = w @ q
    if family == "rowspace_cut":
        bound = forced - rng.choice([0.0, rng.uniform(0.01, 1.0)])
        ok = False
    elif family == "rowspace_slack":
        bound = forced + rng.uniform(0.05, 1.0)
        ok = True
    else:
        raise ValueError(f"unknown family {family!r}")
    pos = int(rng.integers(0, c + 1))
    P = np.insert(P, pos, p, axis=0)
    d = np.insert(d, pos, bound)
    return M, q, P, d, ok


FAMILIES = ("interior", "tight_pair", "rowspace_cut", "rowspace_slack")


def strict_feasibility_suite(count: int = 500, seed: int = 0) -> tuple:
    """``(matches, total, mismatches)`` of the duality test against planted answers."""
    matches, mismatches = 0, []
    for t in range(count):
        rng = make_rng(derive_seed(seed, 7, t))
        family = FAMILIES[t % len(FAMILIES)]
        M, q, P, d, truth = planted_system(rng, family)
        got = strict_feasibility(M, q, P, d)
        if got == truth:
            matches += 1
        else:
            mismatches.append((t, family))
    return matches, count, mismatches


# ---------------------------------------------------------------------------
# closed-form kernels against quadrature


def _quad(fun, tau):
    pdf = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)  # noqa: E731
    val, _ = integrate.quad(lambda z: fun(z, tau) * pdf(z), -np.inf, np.inf,
                            epsabs=1e-13, epsrel=1e-13, limit=200, points=None)
    return val


def kernel_check(taus=(0.0, 0.1, 0.5, 1.0, 1.7, 3.0)) -> float:
    """Largest absolute difference between the kernels and 1-D quadrature."""
    dist = {
        "point": (lambda z, t: (z - t) ** 2, lambda t: kernel_point(t)),
        "interval": (lambda z, t: max(abs(z) - t, 0.0) ** 2, kernel_interval),
        "below": (lambda z, t: max(z - t, 0.0) ** 2, kernel_below),
        "above": (lambda z, t: max(t - z, 0.0) ** 2, kernel_above),
    }
    worst = 0.0
    for f, k in dist.values():
        for t in taus:
            worst = max(worst, abs(float(k(t)) - _quad(f, t)))
    return worst
