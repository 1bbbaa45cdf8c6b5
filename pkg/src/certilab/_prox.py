"""Compiled proximal kernels for graph total variation on path families.

A *family* is a set of vertex-disjoint chains; the prox of ``lam * sum |x_u - x_v|``
over the chain edges splits into independent 1-D problems, each solved
exactly by Johnson's dynamic programme. Two families are combined with the
Dykstra-like splitting of Bauschke and Combettes, stopped on the duality gap.
A family may instead be a set of nodes carrying ``lam * |x_i|`` (soft
thresholding).
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def tv1d(y, beta, n, lam, x, a, b, tm, tp):
    """Exact ``argmin 0.5 ||beta - y||^2 + lam * sum |beta[i+1] - beta[i]|``.

    Johnson's dynamic programme: the derivative of the cost-to-go is kept as
    a piecewise-linear function through its knots ``x`` with slope/intercept
    increments ``a``/``b``; ``tm``/``tp`` are the back-pointer clip values.
    Only the first ``n`` entries of ``y`` are used. ``x``, ``a``, ``b`` need
    ``2n`` entries of workspace, ``tm`` and ``tp`` need ``n``.
    """
    if n <= 0:
        return
    if n == 1 or lam <= 0.0:
        for i in range(n):
            beta[i] = y[i]
        return
    tm[0] = -lam + y[0]
    tp[0] = lam + y[0]
    l = n - 1
    r = n
    x[l] = tm[0]
    x[r] = tp[0]
    a[l] = 1.0
    b[l] = -y[0] + lam
    a[r] = -1.0
    b[r] = y[0] + lam
    afirst = 1.0
    bfirst = -lam - y[1]
    alast = -1.0
    blast = -lam + y[1]
    for k in range(1, n - 1):
        alo = afirst
        blo = bfirst
        lo = l
        while lo <= r:
            if alo * x[lo] + blo > -lam:
                break
            alo += a[lo]
            blo += b[lo]
            lo += 1
        ahi = alast
        bhi = blast
        hi = r
        while hi >= lo:
            if -ahi * x[hi] - bhi < lam:
                break
            ahi += a[hi]
            bhi += b[hi]
            hi -= 1
        tm[k] = (-lam - blo) / alo
        l = lo - 1
        x[l] = tm[k]
        tp[k] = (lam + bhi) / (-ahi)
        r = hi + 1
        x[r] = tp[k]
        a[l] = alo
        b[l] = blo + lam
        a[r] = ahi
        b[r] = bhi + lam
        afirst = 1.0
        bfirst = -lam - y[k + 1]
        alast = -1.0
        blast = -lam + y[k + 1]
    alo = afirst
    blo = bfirst
    lo = l
    while lo <= r:
        if alo * x[lo] + blo > 0.0:
            break
        alo += a[lo]
        blo += b[lo]
        lo += 1
    beta[n - 1] = -blo / alo
    for k in range(n - 2, -1, -1):
        if beta[k + 1] > tp[k]:
            beta[k] = tp[k]
        elif beta[k + 1] < tm[k]:
            beta[k] = tm[k]
        else:
            beta[k] = beta[k + 1]


@njit(cache=True)
def tv1d_alloc(y, beta, n, lam):
    """:func:`tv1d` with its own workspace."""
    m = max(n, 1)
    tv1d(y, beta, n, lam, np.empty(2 * m), np.empty(2 * m), np.empty(2 * m),
         np.empty(m), np.empty(m))


@njit(cache=True)
def _prox_family(v, out, nodes, ptr, is_soft, lam, bin_, bout, wx, wa, wb, wm, wp):
    """Prox of one family at ``v``; untouched nodes are copied."""
    for i in range(v.size):
        out[i] = v[i]
    if is_soft:
        for t in range(nodes.size):
            i = nodes[t]
            a = v[i]
            if a > lam:
                out[i] = a - lam
            elif a < -lam:
                out[i] = a + lam
            else:
                out[i] = 0.0
        return
    for c in range(ptr.size - 1):
        a, b = ptr[c], ptr[c + 1]
        L = b - a
        for t in range(L):
            bin_[t] = v[nodes[a + t]]
        tv1d(bin_, bout, L, lam, wx, wa, wb, wm, wp)
        for t in range(L):
            out[nodes[a + t]] = bout[t]


@njit(cache=True)
def _family_value(x, nodes, ptr, is_soft, lam):
    s = 0.0
    if is_soft:
        for t in range(nodes.size):
            s += abs(x[nodes[t]])
        return lam * s
    for c in range(ptr.size - 1):
        for t in range(ptr[c], ptr[c + 1] - 1):
            s += abs(x[nodes[t + 1]] - x[nodes[t]])
    return lam * s


@njit(cache=True)
def prox_two_families(r, out, n1, p1, s1, n2, p2, s2, lam, gap_tol, max_iter, q):
    """Prox of the sum of two family penalties at ``r``; returns the iteration count.

    The iteration is block-coordinate ascent on the dual
    ``max -0.5 ||r - p - q||^2`` over ``p`` and ``q`` in the dual balls of
    the two families, so any feasible ``q`` is a valid warm start. ``q`` is
    read on entry and holds the final second-family dual on exit.
    With an empty second family (``p2.size == 0`` and not soft) the first
    prox is exact and returned directly.
    """
    n = r.size
    bin_ = np.empty(n)
    bout = np.empty(n)
    wx = np.empty(2 * n)
    wa = np.empty(2 * n)
    wb = np.empty(2 * n)
    wm = np.empty(n)
    wp = np.empty(n)
    second_empty = (not s2) and p2.size <= 1
    if second_empty:
        _prox_family(r, out, n1, p1, s1, lam, bin_, bout, wx, wa, wb, wm, wp)
        return 1
    p = np.zeros(n)
    x = np.empty(n)
    for i in range(n):
        x[i] = r[i] - q[i]
    y = np.empty(n)
    w = np.empty(n)
    rr = 0.0
    for i in range(n):
        rr += r[i] * r[i]
    it = 0
    while it < max_iter:
        it += 1
        for i in range(n):
            w[i] = x[i] + p[i]
        _prox_family(w, y, n1, p1, s1, lam, bin_, bout, wx, wa, wb, wm, wp)
        for i in range(n):
            p[i] = w[i] - y[i]
            w[i] = y[i] + q[i]
        _prox_family(w, x, n2, p2, s2, lam, bin_, bout, wx, wa, wb, wm, wp)
        for i in range(n):
            q[i] = w[i] - x[i]
        # primal at x, dual at (p, q): both are feasible for their problems
        primal = _family_value(x, n1, p1, s1, lam) + _family_value(x, n2, p2, s2, lam)
        dual = 0.0
        for i in range(n):
            d = x[i] - r[i]
            primal += 0.5 * d * d
            e = r[i] - p[i] - q[i]
            dual += e * e
        dual = 0.5 * rr - 0.5 * dual
        if primal - dual <= gap_tol * (1.0 + rr):
            break
    for i in range(n):
        out[i] = x[i]
    return it


@njit(cache=True)
def batch_prox_clamp(R, n1, p1, s1, n2, p2, s2, lam, lo, hi, gap_tol, max_iter, out, Q):
    """Row-wise prox then clamp to ``[lo, hi]``; returns the largest iteration count.

    ``Q`` holds one warm-start dual per row and is updated in place.
    """
    worst = 0
    row = np.empty(R.shape[1])
    for k in range(R.shape[0]):
        it = prox_two_families(R[k], row, n1, p1, s1, n2, p2, s2, lam, gap_tol, max_iter, Q[k])
        if it > worst:
            worst = it
        for i in range(R.shape[1]):
            v = row[i]
            if v < lo[i]:
                v = lo[i]
            elif v > hi[i]:
                v = hi[i]
            out[k, i] = v
    return worst
