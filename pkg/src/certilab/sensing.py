"""Measurement matrices: i.i.d. Gaussian and parallel-beam tomography.

Tomographic geometry
--------------------
The ``N x N`` image occupies ``[-N/2, N/2]^2`` with unit pixels. Pixel
``(i, j)`` (row ``i`` from the top, column ``j`` from the left) covers
``x in [j - N/2, j + 1 - N/2)`` and ``y in [N/2 - i - 1, N/2 - i)``; the
half-open convention charges a ray running exactly along a pixel edge to one
pixel only. Pixels are flattened column-major.

A ray at angle ``theta`` travels along ``(cos theta, sin theta)`` and sits at
signed offset ``s`` along the normal ``(-sin theta, cos theta)``. Each angle
has ``p = round(sqrt(2) N)`` rays whose offsets split the circumscribed width
``sqrt(2) N`` into ``p`` equal cells and sit at the cell midpoints. Rows are
ordered angle-major, then by increasing offset. Rays have zero width and the
entry of a real matrix is the length of the ray inside the pixel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from certilab.rng import make_rng

TOMO_VARIANTS = ("binary", "perturbed", "real")
MASKS = ("circle", "rectangle")
DEFAULT_PERTURB_SCALE = 1e-3
_AXIS_EPS = 1e-12
_LENGTH_EPS = 1e-12


def gaussian_matrix(m: int, n: int, seed=None) -> np.ndarray:
    """``m x n`` matrix with independent standard normal entries."""
    if m < 1 or n < 1:
        raise ValueError("gaussian_matrix needs m, n >= 1")
    return make_rng(seed).standard_normal((int(m), int(n)))


def rays_per_angle(N: int) -> int:
    return int(round(math.sqrt(2.0) * N))


@dataclass
class TomoGeometry:
    """Parallel-beam scan of an ``N x N`` image.

    ``angles`` may be an explicit list (radians); otherwise ``n_angles``
    equidistant angles ``k * pi / n_angles`` are used.
    """

    N: int
    n_angles: int = 1
    mask: str = "circle"
    angles: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if int(self.N) < 2:
            raise ValueError("tomography needs N >= 2")
        self.N = int(self.N)
        if self.mask not in MASKS:
            raise ValueError(f"mask must be one of {MASKS}")
        if self.angles is None:
            if int(self.n_angles) < 1:
                raise ValueError("need at least one angle")
            self.angles = np.arange(int(self.n_angles)) * (np.pi / int(self.n_angles))
        else:
            self.angles = np.asarray(self.angles, dtype=float).reshape(-1)
            self.n_angles = self.angles.size

    @property
    def rays(self) -> int:
        return rays_per_angle(self.N)

    @property
    def n(self) -> int:
        return self.N * self.N

    @property
    def m_unpruned(self) -> int:
        return self.n_angles * self.rays

    def offsets(self) -> np.ndarray:
        p = self.rays
        width = math.sqrt(2.0) * self.N
        return -width / 2 + (np.arange(p) + 0.5) * (width / p)


def pixel_centers(N: int):
    """Centre coordinates of all pixels, column-major order."""
    idx = np.arange(N * N)
    i, j = idx % N, idx // N
    return j - N / 2 + 0.5, N / 2 - i - 0.5


def circle_mask(N: int) -> np.ndarray:
    """Boolean column mask: pixel centre inside the inscribed circle."""
    cx, cy = pixel_centers(N)
    return cx * cx + cy * cy <= (N / 2) ** 2


def _slab(origin, direction, lo, hi):
    """Parameter interval of ``origin + t direction`` inside ``[lo, hi)``.

    ``origin`` has one entry per ray (column), ``lo``/``hi`` one per pixel (row).
    """
    if abs(direction) < _AXIS_EPS:
        inside = (lo[:, None] <= origin[None, :]) & (origin[None, :] < hi[:, None])
        t0 = np.where(inside, -np.inf, np.inf)
        t1 = np.where(inside, np.inf, -np.inf)
        return t0, t1
    a = (lo[:, None] - origin[None, :]) / direction
    b = (hi[:, None] - origin[None, :]) / direction
    return np.minimum(a, b), np.maximum(a, b)


def _angle_block(N: int, theta: float, offsets: np.ndarray) -> np.ndarray:
    """Intersection lengths, shape ``(len(offsets), N*N)``."""
    c, s = math.cos(theta), math.sin(theta)
    if abs(c) < _AXIS_EPS:
        c = 0.0
    if abs(s) < _AXIS_EPS:
        s = 0.0
    ox, oy = -s * offsets, c * offsets
    idx = np.arange(N * N)
    i, j = idx % N, idx // N
    x0 = j - N / 2.0
    y0 = N / 2.0 - i - 1.0
    tx0, tx1 = _slab(ox, c, x0, x0 + 1.0)
    ty0, ty1 = _slab(oy, s, y0, y0 + 1.0)
    length = np.minimum(tx1, ty1) - np.maximum(tx0, ty0)
    length = np.where(np.isfinite(length) & (length > _LENGTH_EPS), length, 0.0)
    return length.T


def tomo_matrix(geom: TomoGeometry, variant: str = "binary",
                perturb_scale: float = DEFAULT_PERTURB_SCALE, seed=None) -> np.ndarray:
    """Parallel-beam projection matrix.

    Parameters
    ----------
    geom : TomoGeometry
    variant : {"binary", "perturbed", "real"}
        ``real`` stores intersection lengths, ``binary`` their indicator and
        ``perturbed`` multiplies every binary entry by ``1 + eta`` with ``eta``
        uniform on ``[-perturb_scale, perturb_scale]``.
    perturb_scale : float
    seed
        Only used by the perturbed variant.

    Returns
    -------
    ndarray of shape ``(m, N*N)``
        With the circle mask, columns of pixels outside the inscribed circle
        are zero and rays missing every remaining pixel are dropped.
    """
    if variant not in TOMO_VARIANTS:
        raise ValueError(f"variant must be one of {TOMO_VARIANTS}")
    offsets = geom.offsets()
    A = np.vstack([_angle_block(geom.N, th, offsets) for th in geom.angles])
    if geom.mask == "circle":
        A[:, ~circle_mask(geom.N)] = 0.0
    A = A[np.any(A > 0, axis=1)]
    if variant == "real":
        return A
    B = (A > 0).astype(float)
    if variant == "perturbed":
        eta = make_rng(seed).uniform(-perturb_scale, perturb_scale, size=B.shape)
        B *= 1.0 + eta
    return B


def tomo_rows_per_angle(geom: TomoGeometry) -> np.ndarray:
    """Number of surviving rays for every angle (after masking and pruning)."""
    offsets = geom.offsets()
    keep = circle_mask(geom.N) if geom.mask == "circle" else np.ones(geom.n, bool)
    return np.array([int(np.count_nonzero(np.any(_angle_block(geom.N, th, offsets)[:, keep] > 0, axis=1)))
                     for th in geom.angles])


def angles_for_rows(N: int, m_target: int, mask: str = "circle") -> int:
    """Smallest number of equidistant angles giving at least ``m_target`` rows."""
    per_angle = int(tomo_rows_per_angle(TomoGeometry(N, 1, mask))[0])
    k = max(1, m_target // per_angle - 1)
    while k < 4 * N:
        if int(tomo_rows_per_angle(TomoGeometry(N, k, mask)).sum()) >= m_target:
            break
        k += 1
    return k
