"""Random test signals.

Three structures are supported:

* ``sparse``: ``round(rho * n)`` nonzeros at a uniformly random support.
* ``gradient_sparse_1d``: ``||D x||_0 = round(rho * (n - 1))`` for the forward
  difference operator, built by projecting a dense vector onto the nullspace
  of a random cosupport.
* ``gradient_sparse_2d``: an ``N x N`` image whose anisotropic gradient has
  relative sparsity close to ``rho``, built from XOR-ed random rectangles.

Nonzero magnitudes are standard normal (``real``), absolute standard normal
(``nonnegative``) or one (``binary``).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import ndimage

from certilab.linalg import (as_matrix, diff_operator_1d, gradient_operator_2d,
                             numerical_rank)
from certilab.objectives import DEFAULT_ACT_TOL
from certilab.rng import make_rng

VALUE_CLASSES = ("real", "nonnegative", "binary")
STRUCTURES = ("sparse", "gradient_sparse_1d", "gradient_sparse_2d")
SPARSITY_TOL_2D = 0.02
MAX_RESAMPLES = 100


class ResampleNeeded(RuntimeError):
    """The random cosupport gives a rank-deficient ``D_cos``; draw a new one."""


class SparsityWarning(UserWarning):
    """The 2-D search ended outside the requested sparsity band."""


def _round_half_up(v: float) -> int:
    return int(np.floor(v + 0.5))


@dataclass
class SignalSpec:
    """What to generate.

    Parameters
    ----------
    structure : {"sparse", "gradient_sparse_1d", "gradient_sparse_2d"}
    rho : float
        Target relative sparsity in ``(0, 1)``: ``||x||_0 / n`` for sparse
        signals and ``||D x||_0 / p`` for gradient-sparse ones.
    value_class : {"real", "nonnegative", "binary"}
    n : int
        Ambient dimension. For images this is the side length ``N`` and the
        signal has ``N * N`` entries.
    seed : int
    """

    structure: str
    rho: float
    value_class: str
    n: int
    seed: Optional[int] = 0

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}; expected one of {STRUCTURES}")
        if self.value_class not in VALUE_CLASSES:
            raise ValueError(f"unknown value class {self.value_class!r}; expected one of {VALUE_CLASSES}")
        if not (0.0 < float(self.rho) < 1.0):
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        self.n = int(self.n)
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.count_base * self.rho < 1.0:
            raise ValueError(f"rho * {self.count_base} < 1: the target sparsity is empty")

    @property
    def side(self) -> Optional[int]:
        return self.n if self.structure == "gradient_sparse_2d" else None

    @property
    def dim(self) -> int:
        """Length of the generated vector."""
        return self.n * self.n if self.structure == "gradient_sparse_2d" else self.n

    @property
    def count_base(self) -> int:
        """``n`` for sparse signals, the number of rows of ``D`` otherwise."""
        if self.structure == "sparse":
            return self.n
        if self.structure == "gradient_sparse_1d":
            return self.n - 1
        return 2 * self.n * (self.n - 1)

    def operator(self) -> Optional[np.ndarray]:
        if self.structure == "gradient_sparse_1d":
            return diff_operator_1d(self.n)
        if self.structure == "gradient_sparse_2d":
            return gradient_operator_2d(self.n, self.n)
        return None


def _nonzero_values(rng: np.random.Generator, size: int, value_class: str) -> np.ndarray:
    if value_class == "binary":
        return np.ones(size)
    v = rng.standard_normal(size)
    return np.abs(v) if value_class == "nonnegative" else v


def gen_sparse_1d(spec: SignalSpec) -> np.ndarray:
    """Sparse vector with exactly ``round(rho * n)`` nonzeros."""
    if spec.structure != "sparse":
        raise ValueError("gen_sparse_1d needs structure='sparse'")
    rng = make_rng(spec.seed)
    k = _round_half_up(spec.rho * spec.n)
    x = np.zeros(spec.n)
    support = rng.choice(spec.n, size=k, replace=False)
    x[support] = _nonzero_values(rng, k, spec.value_class)
    return x


def gen_cosupport_projection(D, cosupport, seed=None) -> np.ndarray:
    """Orthogonal projection of a random dense vector onto ``N(D_cos)``.

    Raises
    ------
    ResampleNeeded
        If the rows of ``D`` indexed by ``cosupport`` are linearly dependent.
    """
    D = as_matrix(D, "D")
    rng = make_rng(seed)
    cos = np.asarray(cosupport, dtype=int).reshape(-1)
    v = rng.standard_normal(D.shape[1])
    if cos.size == 0:
        return v
    D_cos = D[cos]
    if numerical_rank(D_cos) < cos.size:
        raise ResampleNeeded("D restricted to the cosupport is rank deficient")
    w = np.linalg.lstsq(D_cos.T, v, rcond=None)[0]
    return v - D_cos.T @ w


def binary_from_cosupport(cosupport, n: int) -> np.ndarray:
    """Binary vector whose forward-difference cosupport is exactly ``cosupport``.

    Indices are 0-based: difference ``i`` compares entries ``i`` and ``i + 1``.
    The first entry is 1; entry ``i + 1`` copies entry ``i`` when ``i`` is in
    the cosupport and flips it otherwise.

    Examples
    --------
    >>> binary_from_cosupport([0, 2], 4)
    array([1., 1., 0., 0.])
    """
    n = int(n)
    keep = np.zeros(max(n - 1, 0), dtype=bool)
    cos = np.asarray(cosupport, dtype=int).reshape(-1)
    if cos.size and (cos.min() < 0 or cos.max() >= n - 1):
        raise ValueError(f"cosupport indices must lie in [0, {n - 2}]")
    keep[cos] = True
    # every flip toggles the value, so the entry is the parity of flips so far
    flips = np.concatenate([[0], np.cumsum(~keep)])
    return (1 - flips % 2).astype(float)


def _random_cosupport(rng: np.random.Generator, p: int, rho: float) -> np.ndarray:
    n_jumps = _round_half_up(rho * p)
    return np.sort(rng.choice(p, size=p - n_jumps, replace=False))


def gen_gradient_sparse_1d(spec: SignalSpec) -> np.ndarray:
    """Signal with exactly ``round(rho * (n - 1))`` jumps."""
    if spec.structure != "gradient_sparse_1d":
        raise ValueError("gen_gradient_sparse_1d needs structure='gradient_sparse_1d'")
    rng = make_rng(spec.seed)
    D = diff_operator_1d(spec.n)
    p = spec.n - 1
    for _ in range(MAX_RESAMPLES):
        cos = _random_cosupport(rng, p, spec.rho)
        if spec.value_class == "binary":
            return binary_from_cosupport(cos, spec.n)
        x = gen_cosupport_projection(D, cos, rng)
        if spec.value_class == "nonnegative":
            x = np.abs(x)
        if _cosupport_is(D, x, cos):
            return x
    raise RuntimeError("could not draw a signal with the requested cosupport")


def _cosupport_is(D, x, cos) -> bool:
    """Check that the numerical cosupport of ``D x`` equals ``cos`` and no entry sits at zero."""
    Dx = np.abs(D @ x)
    scale = max(1.0, np.abs(x).max())
    tol = DEFAULT_ACT_TOL * scale
    mask = np.zeros(D.shape[0], dtype=bool)
    mask[cos] = True
    if np.any(Dx[mask] > tol) or np.any(Dx[~mask] <= 1e3 * tol):
        return False
    # entries at (or numerically near) zero would add spurious box activity
    return bool(np.all(np.abs(x) > 1e3 * tol))


class ImageInfo(NamedTuple):
    achieved_rho: float
    reached: bool
    steps: int


def _edge_count(img: np.ndarray) -> int:
    return int(np.count_nonzero(img[1:, :] != img[:-1, :]) + np.count_nonzero(img[:, 1:] != img[:, :-1]))


def _random_rectangle(rng: np.random.Generator, N: int):
    # Besides rectangles of uniform size and position, propose one-pixel-thin
    # stripes (some spanning the whole image): without them the XOR search
    # cannot build the stripe and checkerboard patterns that dense gradients need.
    h = int(rng.integers(1, N + 1))
    w = int(rng.integers(1, N + 1))
    kind = rng.random()
    if kind < 0.2:
        h, w = 1, N
    elif kind < 0.4:
        h, w = N, 1
    elif kind < 0.5:
        h = 1
    elif kind < 0.6:
        w = 1
    r0 = int(rng.integers(0, N - h + 1))
    c0 = int(rng.integers(0, N - w + 1))
    return r0, c0, h, w


def _toggle(img: np.ndarray, rect) -> None:
    r0, c0, h, w = rect
    img[r0:r0 + h, c0:c0 + w] ^= True


def _toggle_delta(img: np.ndarray, rect) -> int:
    """Change of the edge count if ``rect`` were toggled.

    Only edges crossing the rectangle border change state.
    """
    r0, c0, h, w = rect
    r1, c1 = r0 + h, c0 + w
    N0, N1 = img.shape
    cols, rows = slice(c0, c1), slice(r0, r1)
    diff = 0
    count = 0
    if r0 > 0:
        e = img[r0 - 1, cols] != img[r0, cols]
        diff += int(e.sum()); count += e.size
    if r1 < N0:
        e = img[r1 - 1, cols] != img[r1, cols]
        diff += int(e.sum()); count += e.size
    if c0 > 0:
        e = img[rows, c0 - 1] != img[rows, c0]
        diff += int(e.sum()); count += e.size
    if c1 < N1:
        e = img[rows, c1 - 1] != img[rows, c1]
        diff += int(e.sum()); count += e.size
    return count - 2 * diff


def binary_rectangle_image(N: int, rho: float, rng: np.random.Generator,
                           max_steps: Optional[int] = None, candidates: int = 32):
    """Greedy XOR-of-rectangles search for a binary image of gradient sparsity ``rho``.

    Each step proposes ``candidates`` moves (toggle a fresh random rectangle,
    or undo one already placed) and keeps the best one if it moves the edge
    count closer to the target.

    Targets above one half are mirrored: the checkerboard (itself the XOR of
    alternate full-length row and column stripes) differs across every edge,
    so XOR-ing it onto an image of sparsity ``1 - rho`` yields sparsity ``rho``.
    """
    if rho > 0.5:
        img, info = binary_rectangle_image(N, 1.0 - rho, rng, max_steps, candidates)
        ii, jj = np.indices((N, N))
        img ^= ((ii + jj) % 2 == 1)
        return img, ImageInfo(1.0 - info.achieved_rho, info.reached, info.steps)
    p = 2 * N * (N - 1)
    target = rho * p
    tol = SPARSITY_TOL_2D * p
    max_steps = 10 * N if max_steps is None else max_steps
    img = np.zeros((N, N), dtype=bool)
    placed = []
    edges = 0
    steps = 0
    while abs(edges - target) > tol and steps < max_steps:
        steps += 1
        best = None
        for _ in range(candidates):
            if placed and rng.random() < 0.25:
                j = int(rng.integers(len(placed)))
                rect, remove = placed[j], j
            else:
                rect, remove = _random_rectangle(rng, N), None
            e = edges + _toggle_delta(img, rect)
            if best is None or abs(e - target) < abs(best[0] - target):
                best = (e, rect, remove)
        if abs(best[0] - target) < abs(edges - target):
            edges, rect, remove = best
            _toggle(img, rect)
            if remove is None:
                placed.append(rect)
            else:
                placed.pop(remove)
    achieved = _edge_count(img) / p
    return img, ImageInfo(achieved, bool(abs(edges - target) <= tol), steps)


def _relabel(img: np.ndarray, rng: np.random.Generator, value_class: str) -> np.ndarray:
    """Give every 4-connected region of the binary image its own random value."""
    four = ndimage.generate_binary_structure(2, 1)
    lab1, n1 = ndimage.label(img, structure=four)
    lab0, n0 = ndimage.label(~img, structure=four)
    labels = np.where(img, lab1, lab0 + n1)
    values = _nonzero_values(rng, n0 + n1, value_class)
    while np.unique(values).size < values.size:  # distinct values keep every edge
        values = _nonzero_values(rng, n0 + n1, value_class)
    return values[labels - 1]


def gen_gradient_sparse_2d(spec: SignalSpec, return_info: bool = False):
    """Column-major ``N x N`` image with ``||grad x||_0 / p`` close to ``rho``.

    A :class:`SparsityWarning` is issued when the search stops more than 0.02
    away from the target; the closest image found is returned anyway.
    """
    if spec.structure != "gradient_sparse_2d":
        raise ValueError("gen_gradient_sparse_2d needs structure='gradient_sparse_2d'")
    rng = make_rng(spec.seed)
    img, info = binary_rectangle_image(spec.n, spec.rho, rng)
    if not info.reached:
        warnings.warn(f"gradient sparsity {info.achieved_rho:.3f} is outside "
                      f"{spec.rho} +/- {SPARSITY_TOL_2D}", SparsityWarning, stacklevel=2)
    if spec.value_class == "binary":
        vals = img.astype(float)
    else:
        vals = _relabel(img, rng, spec.value_class)
    x = vals.reshape(-1, order="F")
    return (x, info) if return_info else x


def generate_signal(spec: SignalSpec) -> np.ndarray:
    """Dispatch on ``spec.structure``."""
    if spec.structure == "sparse":
        return gen_sparse_1d(spec)
    if spec.structure == "gradient_sparse_1d":
        return gen_gradient_sparse_1d(spec)
    return gen_gradient_sparse_2d(spec)


def relative_sparsity(spec: SignalSpec, x) -> float:
    x = np.asarray(x, float)
    D = spec.operator()
    if D is None:
        return float(np.count_nonzero(np.abs(x) > DEFAULT_ACT_TOL)) / x.size
    return float(np.count_nonzero(np.abs(D @ x) > DEFAULT_ACT_TOL)) / D.shape[0]
