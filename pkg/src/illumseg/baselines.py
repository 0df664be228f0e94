"""Reference methods that ignore or pre-correct the illumination."""
from __future__ import annotations

import dataclasses

import numpy as np

from .grid import gaussian_smooth
from .palm import SolverConfig, SolveResult, solve

__all__ = ["solve_m2", "estimate_illumination", "solve_m3"]


def solve_m2(f, K: int, lam: float, cfg: SolverConfig | None = None, init=None) -> SolveResult:
    """Pure TV segmentation of the log-image ``f`` (illumination fixed at 1).

    Runs the same alternating scheme with ``l = 0`` and no illumination
    updates; a single TV weight ``lam`` is used for every class.
    """
    cfg = cfg or SolverConfig()
    cfg = dataclasses.replace(cfg, lambdas=float(lam), update_illumination=False)
    if init is not None:
        u, c, _ = init
        init = (u, c, np.zeros(np.shape(f)))
    return solve(f, K, cfg, init)


def estimate_illumination(F, sigma: float) -> np.ndarray:
    """Gaussian-smoothed image rescaled to mean one."""
    L = gaussian_smooth(F, sigma)
    return L / L.mean()


def solve_m3(
    F,
    K: int,
    lam: float,
    sigma: float,
    cfg: SolverConfig | None = None,
    epsilon: float = 1.0 / 255.0,
) -> tuple[SolveResult, np.ndarray]:
    """Two-step baseline: divide by a smoothed illumination, then :func:`solve_m2`.

    ``F`` is a linear-domain image; ``epsilon`` is added before anything
    else, as in :func:`illumseg.io.to_log`.

    Returns
    -------
    result : SolveResult
    L_hat : ndarray
        The illumination estimate (mean one) the image was divided by.
    """
    F = np.asarray(F, dtype=float) + epsilon
    if np.any(F <= 0):
        raise ValueError("image has non-positive pixels after the offset")
    L_hat = estimate_illumination(F, sigma)
    f = np.log(F / L_hat)
    return solve_m2(f, K, lam, cfg), L_hat
