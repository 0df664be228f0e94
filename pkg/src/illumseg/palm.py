"""Alternating proximal-gradient solver for the illumination-aware model.

Each outer iteration updates the three blocks in turn:

1. ``u <- prox_tv_simplex(u - grad_u H / tau1, lambdas, tau1)``
2. ``c <- c - grad_c H / tau2`` on centers that are not frozen
3. ``l <- zero_mean(l - grad_l H / tau3)``

with ``tau2 = n`` (or ``2 n``) and ``tau3 = 2 + 8 d gamma``.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .grid import gaussian_smooth
from .model import (
    Codebook,
    ModelParams,
    energy_parts,
    grad_c_H,
    grad_l_H,
    grad_u_H,
    simplex_violation,
)
from .prox import PdhgConfig, project_zero_mean, prox_tv_simplex, step_c

__all__ = [
    "SolverConfig",
    "SolveTrace",
    "SolveResult",
    "SolverDivergence",
    "initialize",
    "quantile_centers",
    "solve",
    "extract_labels",
]

log = logging.getLogger(__name__)

TAU2_MODES = ("numeric", "lipschitz")


class SolverDivergence(FloatingPointError):
    """Raised when an iterate stops being finite."""

    def __init__(self, iteration: int, what: str):
        super().__init__(f"non-finite {what} at outer iteration {iteration}")
        self.iteration = iteration


@dataclass
class SolverConfig:
    """Parameters of :func:`solve`.

    ``lambdas`` is a single TV weight or one per class. ``tau2_mode`` picks
    ``tau2 = n`` ("numeric", fast in practice) or ``tau2 = 2 n`` ("lipschitz",
    covered by the convergence theory). ``tau3`` is not configurable; it is
    always ``2 + 8 d gamma``.

    ``init_centers`` (log domain) overrides the quantile initialization;
    entries flagged in ``frozen`` keep their initial value throughout.
    ``energy_tol`` enables an early stop on relative energy change between
    logged iterates; it is off by default so that runs have a fixed
    iteration count.
    """

    lambdas: float | tuple = 0.2
    gamma: float = 100.0
    outer_iters: int = 2000
    inner: PdhgConfig = field(default_factory=PdhgConfig)
    tau1: float = 1e-6
    tau2_mode: str = "numeric"
    init_sigma: float = 30.0
    init_centers: tuple | None = None
    frozen: tuple | None = None
    log_every: int = 10
    energy_tol: float | None = None
    warm_start: bool = True
    update_illumination: bool = True

    def __post_init__(self):
        if self.outer_iters < 1:
            raise ValueError("outer_iters must be positive")
        if not self.tau1 > 0:
            raise ValueError("tau1 must be positive")
        if self.tau2_mode not in TAU2_MODES:
            raise ValueError(f"tau2_mode must be one of {TAU2_MODES}")
        if not self.init_sigma > 0:
            raise ValueError("init_sigma must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.log_every < 1:
            raise ValueError("log_every must be positive")

    def params(self, K: int) -> ModelParams:
        return ModelParams.broadcast(self.lambdas, K, self.gamma)

    def tau2(self, n: int) -> float:
        return float(n) if self.tau2_mode == "numeric" else 2.0 * n

    def tau3(self, d: int) -> float:
        return 2.0 + 8.0 * d * self.gamma


@dataclass
class SolveTrace:
    """Energies and diagnostics recorded during a solve.

    ``iteration[i]`` is the number of completed outer iterations at log
    entry ``i``; entry 0 is the initial state. The ``worst_*`` fields track
    the invariants over every outer iteration, logged or not.
    """

    iteration: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    data: list = field(default_factory=list)
    tv: list = field(default_factory=list)
    smooth: list = field(default_factory=list)
    simplex_violation: list = field(default_factory=list)
    mean_l: list = field(default_factory=list)
    elapsed: list = field(default_factory=list)
    worst_simplex_violation: float = 0.0
    worst_abs_sum_l: float = 0.0

    COLUMNS = ("iteration", "energy", "data", "tv", "smooth",
               "simplex_violation", "mean_l", "elapsed")

    def __len__(self):
        return len(self.iteration)

    def record(self, it, parts, viol, mean_l, elapsed):
        self.iteration.append(int(it))
        self.energy.append(parts.total)
        self.data.append(parts.data)
        self.tv.append(parts.tv)
        self.smooth.append(parts.smooth)
        self.simplex_violation.append(float(viol))
        self.mean_l.append(float(mean_l))
        self.elapsed.append(float(elapsed))

    def rows(self):
        return list(zip(*(getattr(self, c) for c in self.COLUMNS)))

    def descent_violations(self, rel_slack: float = 1e-7) -> int:
        """Number of logged steps where the energy rose by more than
        ``rel_slack * (1 + |E|)``."""
        e = np.asarray(self.energy)
        if e.size < 2:
            return 0
        rise = e[1:] - e[:-1]
        return int(np.count_nonzero(rise > rel_slack * (1.0 + np.abs(e[:-1]))))


@dataclass
class SolveResult:
    u: np.ndarray
    c: Codebook
    l: np.ndarray
    labels: np.ndarray
    trace: SolveTrace
    iterations: int = 0

    @property
    def illumination(self) -> np.ndarray:
        """Multiplicative illumination field ``exp(l)``."""
        return np.exp(self.l)


def extract_labels(u) -> np.ndarray:
    """Per-pixel argmax over classes; ties go to the smallest index."""
    return np.argmax(np.asarray(u), axis=0)


def quantile_centers(residual, K: int) -> np.ndarray:
    """``K`` centers at the quantile levels ``(k - 1/2) / K`` of ``residual``."""
    levels = (np.arange(K) + 0.5) / K
    return np.quantile(np.asarray(residual, dtype=float).ravel(), levels)


def initialize(f, K: int, cfg: SolverConfig):
    """Uniform assignment, smoothed zero-mean illumination and a codebook.

    Returns ``(u, c, l)``. Centers come from ``cfg.init_centers`` when given,
    otherwise from the quantiles of ``f - l``.
    """
    if K < 2:
        raise ValueError(f"need at least two classes, got K={K}")
    f = np.asarray(f, dtype=float)
    u = np.full((K,) + f.shape, 1.0 / K)
    if cfg.update_illumination:
        l = project_zero_mean(gaussian_smooth(f, cfg.init_sigma))
    else:
        l = np.zeros_like(f)
    if cfg.init_centers is None:
        if cfg.frozen is not None and any(cfg.frozen):
            raise ValueError("frozen centers need init_centers")
        centers = quantile_centers(f - l, K)
    else:
        centers = np.asarray(cfg.init_centers, dtype=float)
        if centers.size != K:
            raise ValueError(f"init_centers has {centers.size} entries, expected {K}")
        missing = ~np.isfinite(centers)
        if missing.any():
            # NaN entries are placeholders to be filled from the quantiles
            centers = np.where(missing, quantile_centers(f - l, K), centers)
    frozen = None if cfg.frozen is None else np.asarray(cfg.frozen, dtype=bool)
    if frozen is not None and frozen.size != K:
        raise ValueError(f"frozen mask has {frozen.size} entries, expected {K}")
    return u, Codebook(centers, frozen), l


def _log_entry(trace, it, u, c, l, f, params, t0):
    parts = energy_parts(u, c, l, f, params)
    if not math.isfinite(parts.total):
        raise SolverDivergence(it, "energy")
    trace.record(it, parts, simplex_violation(u), l.mean(), time.perf_counter() - t0)
    return parts.total


def solve(f, K: int, cfg: SolverConfig | None = None, init=None) -> SolveResult:
    """Segment the log-image ``f`` into ``K`` classes.

    Parameters
    ----------
    f : ndarray
        Log-domain image (2D or 3D), e.g. from :func:`illumseg.io.to_log`.
    K : int
        Number of classes.
    cfg : SolverConfig, optional
    init : tuple (u, c, l), optional
        Starting point; ``c`` may be a :class:`Codebook` or an array.

    Returns
    -------
    SolveResult
    """
    cfg = cfg or SolverConfig()
    f = np.asarray(f, dtype=float)
    if f.ndim not in (2, 3):
        raise ValueError(f"image must be 2D or 3D, got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError("image contains non-finite values")
    if init is None:
        u, c, l = initialize(f, K, cfg)
    else:
        u, c, l = init
        u = np.array(u, dtype=float)
        l = np.array(l, dtype=float)
        if not isinstance(c, Codebook):
            c = Codebook(c, cfg.frozen)
        if u.shape != (K,) + f.shape or l.shape != f.shape:
            raise ValueError("initial state does not match image shape")
    params = cfg.params(K)
    n, d = f.size, f.ndim
    tau1, tau2, tau3 = cfg.tau1, cfg.tau2(n), cfg.tau3(d)

    trace = SolveTrace()
    t0 = time.perf_counter()
    prev = _log_entry(trace, 0, u, c, l, f, params, t0)
    p = None
    it = 0
    for it in range(1, cfg.outer_iters + 1):
        z = u - grad_u_H(c, l, f) / tau1
        u, p_new = prox_tv_simplex(
            z, params.lambdas, tau1, cfg.inner,
            warm=p if cfg.warm_start else None, u0=u,
        )
        p = p_new
        c = step_c(c, grad_c_H(u, c, l, f), tau2)
        if cfg.update_illumination:
            l = project_zero_mean(l - grad_l_H(u, c, l, f, cfg.gamma) / tau3)
        if not (np.all(np.isfinite(c.centers)) and np.all(np.isfinite(l))):
            raise SolverDivergence(it, "iterate")
        trace.worst_simplex_violation = max(trace.worst_simplex_violation, simplex_violation(u))
        trace.worst_abs_sum_l = max(trace.worst_abs_sum_l, abs(float(l.sum())))

        last = it == cfg.outer_iters
        if it % cfg.log_every == 0 or last:
            e = _log_entry(trace, it, u, c, l, f, params, t0)
            if cfg.energy_tol is not None and abs(prev - e) <= cfg.energy_tol * (1.0 + abs(e)):
                log.debug("energy change below tolerance after %d iterations", it)
                break
            prev = e
    if trace.iteration[-1] != it:
        _log_entry(trace, it, u, c, l, f, params, t0)
    return SolveResult(u, c, l, extract_labels(u), trace, it)
