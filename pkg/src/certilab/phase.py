"""Phase-transition sweeps over (relative sparsity, measurement count).

Every cell ``(rho_i, m_j)`` runs ``trials`` independent instances. Trial ``t``
draws its signal and matrix from the SeedSequence keyed ``(i, j, t)`` under
the master seed, so any cell can be recomputed on its own and a parallel run
gives the same numbers as a sequential one.

Tomographic sweeps realize the m grid through the number of equidistant
angles and record the row count left after masking and pruning. With the
circle mask the unknown image is restricted to the pixels inside the
inscribed circle and the gradient keeps only edges between two such pixels.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from sklearn.isotonic import IsotonicRegression

from certilab.certify import (INDETERMINATE, UNIQUE, certify_general, certify_specialized,
                              descent_cone_oracle)
from certilab.linalg import gradient_operator_2d
from certilab.objectives import make_objective
from certilab.rng import cell_seed, derive_seed
from certilab.sensing import TomoGeometry, angles_for_rows, circle_mask, gaussian_matrix, tomo_matrix
from certilab.signals import SignalSpec, generate_signal
from certilab.statdim import minimize_j, minimize_j_counts

KINDS = ("gaussian", "tomo-binary", "tomo-perturbed", "tomo-real")
METHODS = ("epsilon_lp", "exact_duality", "specialized", "oracle")
CSV_HEADER = ["rho", "m", "trials", "successes", "indeterminates", "statdim"]
_STATDIM_KEY = 1_000_000


def default_rho_grid():
    return [round(0.05 * i, 2) for i in range(1, 20)]


def _structure_for(case: str) -> str:
    if case.endswith("-2d"):
        return "gradient_sparse_2d"
    if case.endswith("-1d"):
        return "gradient_sparse_1d"
    return "sparse"


@dataclass
class PhaseConfig:
    """Sweep description, stored as JSON.

    Parameters
    ----------
    case : str
        Objective name as on the command line (``f1``, ``f4-1d``, ``f6-2d`` ...).
    value_class : {"real", "nonnegative", "binary"}
    n : int
        Ambient dimension, or the image side ``N`` for 2-D cases.
    m_grid : list of int
        Measurement counts. Tomographic sweeps take the smallest number of
        angles reaching each count unless ``angles_grid`` is given.
    rho_grid : list of float
        Relative sparsities, default ``0.05, 0.10, ..., 0.95``.
    trials : int
        Instances per cell.
    kind : {"gaussian", "tomo-binary", "tomo-perturbed", "tomo-real"}
    master_seed : int
    method : {"epsilon_lp", "exact_duality", "specialized", "oracle"}
    eps : float
        Margin of the epsilon LP.
    structure : str, optional
        Signal structure; derived from ``case`` when omitted.
    angles_grid : list of int, optional
        Tomography only: explicit angle counts replacing ``m_grid``.
    mask : {"circle", "rectangle"}
        Tomography only.
    statdim : bool
        Attach the statistical-dimension curve.
    statdim_samples : int
        Monte-Carlo sample count for cases without a closed form.
    statdim_draws : int
        Signals averaged per rho for the Monte-Carlo curve.
    """

    case: str
    value_class: str
    n: int
    m_grid: list
    rho_grid: list = field(default_factory=default_rho_grid)
    trials: int = 10
    kind: str = "gaussian"
    master_seed: int = 0
    method: str = "epsilon_lp"
    eps: float = 1e-8
    structure: Optional[str] = None
    angles_grid: Optional[list] = None
    mask: str = "circle"
    statdim: bool = True
    statdim_samples: int = 10_000
    statdim_draws: int = 3

    def __post_init__(self):
        self.case = self.case.lower()
        if self.structure is None:
            self.structure = _structure_for(self.case)
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.rho_grid:
            raise ValueError("rho_grid is empty")
        if self.kind.startswith("tomo"):
            if self.structure != "gradient_sparse_2d":
                raise ValueError("tomographic sweeps need 2-D images")
            if not self.angles_grid and not self.m_grid:
                raise ValueError("m_grid (or angles_grid) is empty")
        elif not self.m_grid:
            raise ValueError("m_grid is empty")
        make_objective(self.case, self.dim if not self.case.endswith("-2d") else None,
                       image_shape=(self.n, self.n) if self.case.endswith("-2d") else None)

    @property
    def dim(self) -> int:
        return self.n * self.n if self.structure == "gradient_sparse_2d" else self.n

    @property
    def tomographic(self) -> bool:
        return self.kind.startswith("tomo")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "PhaseConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config fields: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "PhaseConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class CellRecord:
    rho: float
    m: int
    trials: int
    successes: int
    indeterminates: int


@dataclass
class PhaseDiagram:
    cells: list
    statdim: dict
    metadata: dict = field(default_factory=dict)

    @property
    def rhos(self) -> list:
        return sorted({c.rho for c in self.cells})

    def column(self, rho: float) -> list:
        """Cells of one rho sorted by m."""
        return sorted((c for c in self.cells if c.rho == rho), key=lambda c: c.m)

    def crossings(self, level: float = 0.5) -> dict:
        return {r: crossing(self.column(r), level) for r in self.rhos}


# ---------------------------------------------------------------------------
# problem construction


class _Problem:
    """Objective and measurement set-up shared by the cells of a sweep."""

    def __init__(self, cfg: PhaseConfig):
        self.cfg = cfg
        self.keep = None
        if cfg.structure == "gradient_sparse_2d":
            N = cfg.n
            if cfg.tomographic and cfg.mask == "circle":
                self.keep = circle_mask(N)
                G = gradient_operator_2d(N, N)[:, self.keep]
                G = G[np.count_nonzero(G, axis=1) == 2]
                self.spec = make_objective(cfg.case.split("-")[0], D=G)
            else:
                self.spec = make_objective(cfg.case, image_shape=(N, N))
        else:
            self.spec = make_objective(cfg.case, cfg.n)

    def signal(self, rho: float, seed) -> np.ndarray:
        cfg = self.cfg
        x = generate_signal(SignalSpec(cfg.structure, rho, cfg.value_class, cfg.n, seed=seed))
        return x if self.keep is None else x[self.keep]

    def tomo_geometry(self, angles: int) -> TomoGeometry:
        return TomoGeometry(self.cfg.n, angles, self.cfg.mask)

    def matrix(self, m_or_angles: int, seed) -> np.ndarray:
        cfg = self.cfg
        if not cfg.tomographic:
            return gaussian_matrix(m_or_angles, self.spec.n, seed)
        variant = cfg.kind.split("-", 1)[1]
        A = tomo_matrix(self.tomo_geometry(m_or_angles), variant, seed=seed)
        return A if self.keep is None else A[:, self.keep]


def _certify(cfg: PhaseConfig, A, spec, x) -> str:
    if cfg.method == "specialized":
        return certify_specialized(A, spec, x, eps=cfg.eps).verdict
    if cfg.method == "oracle":
        return UNIQUE if descent_cone_oracle(A, spec, x, max_n=spec.n) else "not_unique"
    return certify_general(A, spec, x, method=cfg.method, eps=cfg.eps, witness=False).verdict


def _column_sizes(cfg: PhaseConfig, problem: _Problem) -> list:
    """Per grid column: ``(label passed to the matrix builder, rows)``."""
    if not cfg.tomographic:
        return [(int(m), int(m)) for m in cfg.m_grid]
    if cfg.angles_grid:
        angles = [int(a) for a in cfg.angles_grid]
    else:
        angles = [angles_for_rows(cfg.n, int(m), cfg.mask) for m in cfg.m_grid]
    out = []
    for a in angles:
        rows = tomo_matrix(problem.tomo_geometry(a), "binary").shape[0]
        out.append((a, rows))
    return out


def run_cell(cfg: PhaseConfig, i: int, j: int, label: Optional[int] = None) -> CellRecord:
    """One cell of the sweep, computed from its own seeds."""
    problem = _Problem(cfg)
    if label is None:
        label, rows = _column_sizes(cfg, problem)[j]
    rho = float(cfg.rho_grid[i])
    successes = indeterminate = 0
    m_rows = None
    for t in range(cfg.trials):
        seq = cell_seed(cfg.master_seed, i, j, t)
        s_sig, s_mat = seq.spawn(2)
        try:
            x = problem.signal(rho, s_sig)
            A = problem.matrix(label, s_mat)
            m_rows = A.shape[0]
            verdict = _certify(cfg, A, problem.spec, x)
        except Exception:  # a failed trial is recorded, never fatal
            verdict = INDETERMINATE
        if verdict == UNIQUE:
            successes += 1
        elif verdict == INDETERMINATE:
            indeterminate += 1
    if m_rows is None:
        m_rows = label if not cfg.tomographic else _column_sizes(cfg, problem)[j][1]
    return CellRecord(rho, int(m_rows), cfg.trials, successes, indeterminate)


def _run_cell_args(args):
    cfg, i, j, label = args
    return (i, j), run_cell(cfg, i, j, label)


def statdim_point(cfg: PhaseConfig, i: int, problem: Optional[_Problem] = None) -> float:
    """``min_tau J`` for grid value ``rho_i`` (mean over draws for Monte Carlo)."""
    problem = problem or _Problem(cfg)
    rho = float(cfg.rho_grid[i])
    spec = problem.spec
    if spec.separable:
        x = problem.signal(rho, derive_seed(cfg.master_seed, _STATDIM_KEY, i, 0))
        return minimize_j(spec, x).j_star
    vals = []
    for d in range(cfg.statdim_draws):
        x = problem.signal(rho, derive_seed(cfg.master_seed, _STATDIM_KEY, i, d))
        mc_seed = derive_seed(cfg.master_seed, _STATDIM_KEY + 1, i, d)
        vals.append(minimize_j(spec, x, k=cfg.statdim_samples, seed=mc_seed).j_star)
    return float(np.mean(vals))


def worker_count() -> int:
    env = os.environ.get("CERTILAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError("CERTILAB_THREADS must be an integer") from None
    return 1


def run_phase_experiment(cfg: PhaseConfig, workers: Optional[int] = None,
                         progress=None) -> PhaseDiagram:
    """Run every cell and attach the statistical-dimension curve.

    ``workers`` defaults to ``CERTILAB_THREADS`` (or 1). Results do not depend
    on the worker count.
    """
    start = time.time()
    problem = _Problem(cfg)
    columns = _column_sizes(cfg, problem)
    jobs = [(cfg, i, j, label) for i in range(len(cfg.rho_grid))
            for j, (label, _) in enumerate(columns)]
    workers = worker_count() if workers is None else max(1, int(workers))
    results = {}
    if workers == 1:
        for job in jobs:
            key, rec = _run_cell_args(job)
            results[key] = rec
            if progress:
                progress(len(results), len(jobs))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for key, rec in pool.map(_run_cell_args, jobs, chunksize=1):
                results[key] = rec
                if progress:
                    progress(len(results), len(jobs))
    cells = [results[k] for k in sorted(results)]
    curve = {}
    if cfg.statdim:
        for i, rho in enumerate(cfg.rho_grid):
            curve[float(rho)] = statdim_point(cfg, i, problem)
    meta = {"config": asdict(cfg), "wall_time_s": time.time() - start,
            "columns": [{"label": a, "rows": r} for a, r in columns]}
    return PhaseDiagram(cells, curve, meta)


# ---------------------------------------------------------------------------
# transition location


def crossing(column: list, level: float = 0.5, interpolate: bool = True) -> float:
    """Measurement count where the success rate first reaches ``level``.

    The success fractions are first made monotone in ``m`` by weighted
    isotonic regression, which removes sampling inversions. With
    ``interpolate`` the crossing is placed by linear interpolation between
    the two grid points around the level; otherwise the first grid point at
    or above it is returned. ``nan`` if the level is never reached.
    """
    if not column:
        return math.nan
    m = np.array([c.m for c in column], dtype=float)
    frac = np.array([c.successes / c.trials for c in column])
    w = np.array([c.trials for c in column], dtype=float)
    order = np.argsort(m, kind="stable")
    m, frac, w = m[order], frac[order], w[order]
    fit = IsotonicRegression(increasing=True).fit_transform(m, frac, sample_weight=w)
    above = np.flatnonzero(fit >= level - 1e-12)
    if above.size == 0:
        return math.nan
    j = int(above[0])
    if not interpolate or j == 0 or fit[j] == fit[j - 1]:
        return float(m[j])
    t = (level - fit[j - 1]) / (fit[j] - fit[j - 1])
    return float(m[j - 1] + t * (m[j] - m[j - 1]))


# ---------------------------------------------------------------------------
# persistence


def _fmt(v: float) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def write_csv(diagram: PhaseDiagram, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for c in diagram.cells:
            w.writerow([repr(float(c.rho)), c.m, c.trials, c.successes, c.indeterminates,
                        _fmt(diagram.statdim.get(float(c.rho), math.nan))])


def read_csv(path) -> PhaseDiagram:
    cells, curve = [], {}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in r:
            rho = float(row[0])
            cells.append(CellRecord(rho, int(row[1]), int(row[2]), int(row[3]), int(row[4])))
            sd = float(row[5])
            if not math.isnan(sd):
                curve[rho] = sd
    return PhaseDiagram(cells, curve)


def _gray_grid(diagram: PhaseDiagram):
    rhos = diagram.rhos
    ms = sorted({c.m for c in diagram.cells})
    img = np.zeros((len(ms), len(rhos)), dtype=np.int64)
    for c in diagram.cells:
        col = rhos.index(c.rho)
        row = len(ms) - 1 - ms.index(c.m)  # m increases upward
        img[row, col] = int(round(255.0 * c.successes / c.trials))
    return img, rhos, ms


def _write_pgm(img: np.ndarray, path, binary: bool) -> None:
    h, w = img.shape
    if binary:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(img.astype(np.uint8).tobytes())
    else:
        with open(path, "w") as fh:
            fh.write(f"P2\n{w} {h}\n255\n")
            for row in img:
                fh.write(" ".join(str(int(v)) for v in row) + "\n")


def write_pgm(diagram: PhaseDiagram, path, binary: bool = False, overlay_path=None) -> None:
    """Gray-value plot, one pixel per cell; optionally a copy with the curve burned in."""
    img, rhos, ms = _gray_grid(diagram)
    _write_pgm(img, path, binary)
    if overlay_path is not None:
        over = img.copy()
        for col, rho in enumerate(rhos):
            j = diagram.statdim.get(rho)
            if j is None or math.isnan(j):
                continue
            k = int(np.argmin(np.abs(np.asarray(ms, float) - j)))
            over[len(ms) - 1 - k, col] = 128
        _write_pgm(over, overlay_path, binary)


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    tokens, pos = [], 2
    while len(tokens) < 3:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    w, h, _ = tokens
    if magic == b"P5":
        return np.frombuffer(data[pos + 1:pos + 1 + w * h], dtype=np.uint8).reshape(h, w).astype(int)
    if magic == b"P2":
        return np.array(data[pos:].split(), dtype=int).reshape(h, w)
    raise ValueError(f"{path}: not a P2/P5 file")
