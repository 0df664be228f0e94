"""Synthetic phantoms, the misclassification metric and a noise sweep."""
from __future__ import annotations

import csv
import dataclasses
import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .baselines import solve_m2, solve_m3
from .grid import check_shape
from .io import to_log
from .palm import SolverConfig, solve

__all__ = [
    "Phantom",
    "LAYOUTS",
    "ILLUMINATIONS",
    "illumination_field",
    "phantom_labels",
    "make_phantom",
    "misclassified",
    "frozen_center_value",
    "SweepCell",
    "SweepResult",
    "run_method",
    "noise_sweep",
]

# Shapes in normalized coordinates: (kind, center, size). Disks become balls
# in 3D, boxes extend over the middle half of the third axis.
_BLOBS = {
    1: [("disk", (0.28, 0.30), 0.16), ("disk", (0.75, 0.72), 0.12),
        ("box", (0.78, 0.22), (0.08, 0.08)), ("disk", (0.13, 0.86), 0.035)],
    2: [("disk", (0.36, 0.72), 0.10), ("box", (0.60, 0.46), (0.05, 0.14)),
        ("disk", (0.90, 0.50), 0.03)],
    3: [("disk", (0.50, 0.13), 0.06), ("disk", (0.10, 0.10), 0.03)],
    4: [("disk", (0.52, 0.90), 0.05), ("disk", (0.90, 0.90), 0.03)],
}

# last class as a sprinkling of tiny specks (few pixels each)
_SPECKS = [(0.12 + 0.19 * i, 0.10 + 0.2 * j) for i in range(5) for j in range(5)]

# two large flat halves of different gray level crossed by thin dark bars, so
# that a smoothing-based illumination estimate is biased near every edge
_SHARP = {
    2: [("box", (0.75, 0.5), (0.25, 0.5))],
    1: [("box", (0.5, 0.3), (0.4, 0.02)), ("box", (0.5, 0.7), (0.4, 0.02)),
        ("disk", (0.25, 0.5), 0.06), ("disk", (0.75, 0.5), 0.06)],
}

LAYOUTS = ("blobs", "specks", "sharp")
ILLUMINATIONS = ("ramp", "gaussian-bump", "product-of-sines", "none")


@dataclass
class Phantom:
    F: np.ndarray
    true_labels: np.ndarray
    true_L: np.ndarray
    class_values: np.ndarray
    noise_std: float

    @property
    def K(self) -> int:
        return self.class_values.size


def _coords(shape):
    return np.meshgrid(*[(np.arange(n) + 0.5) / n for n in shape], indexing="ij")


def _draw(labels, coords, k, kind, center, size):
    x, y = coords[0], coords[1]
    if kind == "disk":
        r2 = (x - center[0]) ** 2 + (y - center[1]) ** 2
        if len(coords) == 3:
            r2 = r2 + (coords[2] - 0.5) ** 2
        mask = r2 <= size**2
    else:
        mask = (np.abs(x - center[0]) <= size[0]) & (np.abs(y - center[1]) <= size[1])
        if len(coords) == 3:
            mask &= np.abs(coords[2] - 0.5) <= 0.25
    labels[mask] = k


def phantom_labels(shape, K: int, layout: str = "blobs") -> np.ndarray:
    """Ground-truth label map; class 0 is the background."""
    shape = check_shape(shape)
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}, expected one of {LAYOUTS}")
    coords = _coords(shape)
    labels = np.zeros(shape, dtype=np.int64)
    table = _SHARP if layout == "sharp" else _BLOBS
    for k in range(1, K):
        if layout == "sharp" and K == 3:
            break
        if layout == "specks" and k == K - 1:
            for cx, cy in _SPECKS:
                _draw(labels, coords, k, "disk", (cx, cy), 0.018)
            continue
        shapes = table.get(k) or _BLOBS[1 + (k - 1) % len(_BLOBS)]
        for kind, center, size in shapes:
            _draw(labels, coords, k, kind, center, size)
    if layout == "sharp" and K == 3:
        for k in (2, 1):
            for kind, center, size in _SHARP[k]:
                _draw(labels, coords, k, kind, center, size)
    for k in range(K):
        if not np.any(labels == k):
            raise ValueError(f"class {k} is empty on a grid of shape {shape}")
    return labels


def illumination_field(shape, kind: str = "ramp", low: float = 0.5, high: float = 1.5) -> np.ndarray:
    """Smooth positive field with mean one.

    ``ramp`` rises linearly from ``low`` to ``high`` along the last axis;
    the other kinds span roughly the same range before normalization.
    """
    shape = check_shape(shape)
    if kind == "none":
        return np.ones(shape)
    coords = _coords(shape)
    if kind == "ramp":
        t = np.arange(shape[-1]) / max(shape[-1] - 1, 1)
        L = np.broadcast_to(low + (high - low) * t, shape).copy()
    elif kind == "gaussian-bump":
        r2 = sum((c - 0.35) ** 2 for c in coords)
        L = low + (high - low) * np.exp(-r2 / (2 * 0.3**2))
    elif kind == "product-of-sines":
        prod = np.ones(shape)
        for c in coords:
            prod = prod * np.sin(np.pi * c)
        L = low + (high - low) * prod
    else:
        raise ValueError(f"unknown illumination {kind!r}, expected one of {ILLUMINATIONS}")
    return L / L.mean()


def make_phantom(
    shape,
    K: int,
    class_values,
    illum: str = "ramp",
    s: float = 0.0,
    seed: int = 0,
    layout: str = "blobs",
) -> Phantom:
    """Piecewise-constant classes times a smooth illumination plus noise.

    ``F = max(class_values[labels] * L + N(0, s^2), 0)``; the noise is the
    only random ingredient and is drawn from ``seed``.
    """
    values = np.asarray(class_values, dtype=float).reshape(-1)
    if np.unique(values).size < K or values.size < K:
        raise ValueError(f"need {K} distinct class values, got {values.tolist()}")
    values = values[:K]
    if np.any(values <= 0):
        raise ValueError("class values must be positive")
    if s < 0:
        raise ValueError("noise level must be non-negative")
    labels = phantom_labels(shape, K, layout)
    L = illumination_field(labels.shape, illum)
    F = values[labels] * L
    if s > 0:
        F = F + np.random.default_rng(seed).normal(0.0, s, F.shape)
    return Phantom(np.maximum(F, 0.0), labels, L, values, float(s))


def misclassified(labels, true_labels) -> tuple[int, float]:
    """Wrongly labelled pixels under the best matching of label indices.

    Returns ``(count, percent)``.
    """
    a = np.asarray(labels).ravel()
    b = np.asarray(true_labels).ravel()
    if np.shape(labels) != np.shape(true_labels):
        raise ValueError(f"shape mismatch {np.shape(labels)} vs {np.shape(true_labels)}")
    K = int(max(a.max(), b.max())) + 1
    conf = np.zeros((K, K), dtype=np.int64)
    np.add.at(conf, (a, b), 1)
    rows, cols = linear_sum_assignment(conf, maximize=True)
    count = int(a.size - conf[rows, cols].sum())
    return count, 100.0 * count / a.size


def frozen_center_value(ph: Phantom, k: int) -> float:
    """Log-domain center of class ``k`` under the zero-mean illumination gauge."""
    return float(np.log(ph.class_values[k]) + np.mean(np.log(ph.true_L)))


METHODS = ("full", "m2", "m3", "full-frozen-c3")


@dataclass
class SweepCell:
    s: float
    lam: float
    method: str
    count: int
    percent: float
    energy_final: float
    iters: int
    seconds: float


def run_method(ph: Phantom, method: str, lam: float, cfg: SolverConfig,
               epsilon: float = 1.0 / 255.0, sigma: float | None = None):
    """Run one method on a phantom and return the :class:`SolveResult`."""
    K = ph.K
    if method == "full":
        return solve(to_log(ph.F, epsilon), K, dataclasses.replace(cfg, lambdas=lam))
    if method == "full-frozen-c3":
        centers = np.full(K, np.nan)
        centers[K - 1] = frozen_center_value(ph, K - 1)
        frozen = tuple(k == K - 1 for k in range(K))
        cfg = dataclasses.replace(cfg, lambdas=lam, init_centers=tuple(centers), frozen=frozen)
        return solve(to_log(ph.F, epsilon), K, cfg)
    if method == "m2":
        return solve_m2(to_log(ph.F, epsilon), K, lam, cfg)
    if method == "m3":
        sig = cfg.init_sigma if sigma is None else sigma
        return solve_m3(ph.F, K, lam, sig, cfg, epsilon)[0]
    raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")


def _cell(args):
    ph, method, lam, cfg, epsilon = args
    t0 = time.perf_counter()
    try:
        res = run_method(ph, method, lam, cfg, epsilon)
    except Exception as exc:
        raise RuntimeError(f"sweep cell s={ph.noise_std}, lambda={lam} failed: {exc}") from exc
    count, percent = misclassified(res.labels, ph.true_labels)
    return SweepCell(ph.noise_std, float(lam), method, count, percent,
                     float(res.trace.energy[-1]), res.iterations, time.perf_counter() - t0)


@dataclass
class SweepResult:
    cells: list

    CSV_COLUMNS = ("s", "lambda", "method", "count", "percent",
                   "energy_final", "iters", "seconds")

    def best(self) -> list[SweepCell]:
        """Per noise level, the cell with fewest errors (first in grid order on ties)."""
        out = {}
        for cell in self.cells:
            cur = out.get(cell.s)
            if cur is None or cell.count < cur.count:
                out[cell.s] = cell
        return [out[s] for s in sorted(out)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.CSV_COLUMNS)
            for c in self.cells:
                w.writerow([repr(c.s), repr(c.lam), c.method, c.count, repr(c.percent),
                            repr(c.energy_final), c.iters, f"{c.seconds:.3f}"])


def noise_sweep(phantom_for, s_values, lambdas, method: str = "full",
                cfg: SolverConfig | None = None, epsilon: float = 1.0 / 255.0,
                n_jobs: int = 1) -> SweepResult:
    """Grid search of the TV weight for every noise level.

    Parameters
    ----------
    phantom_for : callable
        ``phantom_for(s)`` returns the :class:`Phantom` at noise level ``s``.
    s_values, lambdas : sequences of float
    method : {"full", "m2", "m3", "full-frozen-c3"}
    cfg : SolverConfig, optional
    n_jobs : int
        Worker processes; 1 runs everything in this process.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    if not len(s_values) or not len(lambdas):
        raise ValueError("noise levels and lambda grid must be non-empty")
    cfg = cfg or SolverConfig()
    phantoms = [phantom_for(s) for s in s_values]
    jobs = [(ph, method, lam, cfg, epsilon) for ph, lam in itertools.product(phantoms, lambdas)]
    if n_jobs == 1:
        cells = [_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            cells = list(ex.map(_cell, jobs))
    return SweepResult(cells)
