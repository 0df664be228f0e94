"""Proximal maps for the three blocks of the alternating solver."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import divergence, gradient
from .model import Codebook

__all__ = [
    "PdhgConfig",
    "project_simplex",
    "project_dual_ball",
    "prox_objective",
    "primal_dual_gap",
    "prox_tv_simplex",
    "step_c",
    "project_zero_mean",
]


def project_simplex(v, axis: int = -1) -> np.ndarray:
    """Euclidean projection onto the probability simplex along ``axis``.

    Sort-and-threshold: with ``s`` sorted in decreasing order, the threshold
    is ``theta = (sum_{i<=rho} s_i - 1) / rho`` for the largest ``rho`` with
    ``s_rho > theta``, and the projection is ``max(v - theta, 0)``.
    """
    v = np.asarray(v, dtype=float)
    x = np.moveaxis(v, axis, 0)
    if x.ndim == 1:
        return project_simplex(x[:, None], axis=0)[:, 0]
    K = x.shape[0]
    if K <= _NETWORK_MAX_K:
        theta = _threshold_small(x)
    else:
        s = -np.sort(-x, axis=0)
        css = np.cumsum(s, axis=0) - 1.0
        idx = np.arange(1, K + 1, dtype=float).reshape((-1,) + (1,) * (x.ndim - 1))
        rho = np.count_nonzero(s * idx > css, axis=0)
        theta = np.take_along_axis(css, (rho - 1)[None], axis=0)[0] / rho
    return np.moveaxis(np.maximum(x - theta, 0.0), 0, axis)


_NETWORK_MAX_K = 8


def _threshold_small(x: np.ndarray) -> np.ndarray:
    # odd-even transposition sort across the K rows, elementwise over pixels
    rows = list(x)
    K = len(rows)
    for sweep in range(K):
        for i in range(sweep % 2, K - 1, 2):
            a, b = rows[i], rows[i + 1]
            rows[i], rows[i + 1] = np.maximum(a, b), np.minimum(a, b)
    css = rows[0] - 1.0
    theta = css.copy()
    for r in range(1, K):
        css = css + rows[r]
        # condition holds on a prefix of r, so the last hit is rho
        np.copyto(theta, css / (r + 1), where=rows[r] * (r + 1) > css)
    return theta


def project_dual_ball(p: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    """Scale each pixel/class vector of ``p`` into the ball of radius ``lambda_k``.

    ``p`` has shape ``(d, K, *grid)``; modified in place and returned.
    """
    lam = np.asarray(lambdas, dtype=float).reshape((1, -1) + (1,) * (p.ndim - 2))
    norm = np.sqrt(np.sum(p * p, axis=0, keepdims=True))
    scale = np.minimum(1.0, lam / np.maximum(norm, 1e-300))
    p *= scale
    return p


@dataclass
class PdhgConfig:
    """Settings of the inner primal-dual iteration.

    ``sigma`` and ``tau`` default to ``1 / sqrt(4 d)``, which saturates the
    step condition ``sigma * tau * ||grad||^2 <= 1``. ``gap_tol`` enables an
    early stop, checked every ``gap_every`` iterations.
    """

    inner_iters: int = 50
    sigma: float | None = None
    tau: float | None = None
    gap_tol: float | None = None
    gap_every: int = 10

    def __post_init__(self):
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be positive")
        for name in ("sigma", "tau"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be positive")

    def steps(self, d: int) -> tuple[float, float]:
        base = 1.0 / math.sqrt(4.0 * d)
        sigma = base if self.sigma is None else self.sigma
        tau = base if self.tau is None else self.tau
        if sigma * tau * 4.0 * d > 1.0 + 1e-12:
            raise ValueError(
                f"sigma*tau*4d = {sigma * tau * 4.0 * d:.4g} exceeds 1 for d={d}"
            )
        return sigma, tau


def prox_objective(u, z, lambdas, step: float) -> float:
    """``(step/2) ||u - z||^2 + sum_k lambda_k TV(u_k)``, feasibility assumed."""
    u = np.asarray(u, dtype=float)
    g = gradient(u, u.ndim - 1)
    tv = np.sqrt(np.sum(g * g, axis=0)).reshape(u.shape[0], -1).sum(axis=1)
    lam = np.broadcast_to(np.asarray(lambdas, dtype=float).reshape(-1), tv.shape)
    return float(0.5 * step * np.sum((u - z) ** 2) + np.dot(lam, tv))


def _dual_value(p, z, step) -> float:
    # min over the simplex of (step/2)||u - z||^2 + <div p, u>
    q = divergence(p, p.shape[0])
    u = project_simplex(z - q / step, axis=0)
    return float(0.5 * step * np.sum((u - z) ** 2) + np.sum(q * u))


def primal_dual_gap(u, p, z, lambdas, step: float) -> float:
    """Duality gap of a feasible primal/dual pair for the TV-simplex prox."""
    return prox_objective(u, z, lambdas, step) - _dual_value(p, z, step)


def prox_tv_simplex(
    z,
    lambdas,
    step: float,
    cfg: PdhgConfig | None = None,
    warm: np.ndarray | None = None,
    u0: np.ndarray | None = None,
    callback=None,
):
    """Approximate ``argmin_u (step/2)||u - z||^2 + sum_k lambda_k TV(u_k)``
    over assignments ``u`` lying in the simplex at every pixel.

    Solved with the Chambolle-Pock primal-dual method on the dual of the
    isotropic TV term. The primal iterate is projected onto the simplex at
    every iteration, so the returned ``u`` is always feasible.

    Parameters
    ----------
    z : ndarray, shape (K, *grid)
        Point to be proximated.
    lambdas : float or sequence of K floats
        TV weights; zero weights are allowed.
    step : float
        Weight of the quadratic term.
    cfg : PdhgConfig, optional
    warm : ndarray, shape (d, K, *grid), optional
        Dual variable to start from (e.g. from the previous outer iteration).
    u0 : ndarray, optional
        Primal starting point; defaults to the pixelwise projection of ``z``.
    callback : callable, optional
        Called as ``callback(it, u, p)`` after each iteration.

    Returns
    -------
    u : ndarray, shape (K, *grid)
    p : ndarray, shape (d, K, *grid)
        Final dual variable, suitable for warm-starting the next call.
    """
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    cfg = cfg or PdhgConfig()
    z = np.asarray(z, dtype=float)
    K = z.shape[0]
    d = z.ndim - 1
    lam = np.broadcast_to(np.asarray(lambdas, dtype=float).reshape(-1), (K,)).copy()
    if np.any(lam < 0):
        raise ValueError("TV weights must be non-negative")
    sigma, tau = cfg.steps(d)

    if warm is None:
        p = np.zeros((d,) + z.shape)
    else:
        p = project_dual_ball(np.array(warm, dtype=float), lam)
        if p.shape != (d,) + z.shape:
            raise ValueError(f"warm dual has shape {p.shape}, expected {(d,) + z.shape}")
    u = project_simplex(z, axis=0) if u0 is None else np.array(u0, dtype=float)
    u_bar = u
    shift = tau * step * z
    denom = 1.0 + tau * step

    for it in range(cfg.inner_iters):
        p += sigma * gradient(u_bar, d)
        project_dual_ball(p, lam)
        u_old = u
        u = project_simplex((u - tau * divergence(p, d) + shift) / denom, axis=0)
        u_bar = 2.0 * u - u_old
        if callback is not None:
            callback(it, u, p)
        if cfg.gap_tol is not None and (it + 1) % cfg.gap_every == 0:
            if primal_dual_gap(u, p, z, lam, step) <= cfg.gap_tol:
                break
    return u, p


def step_c(c: Codebook, g, step: float) -> Codebook:
    """Gradient step ``c - g / step`` on the centers that are not frozen."""
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    g = np.asarray(g, dtype=float).reshape(-1)
    new = c.centers - g / step
    centers = np.where(c.frozen, c.centers, new)
    return Codebook(centers, c.frozen.copy())


def project_zero_mean(a) -> np.ndarray:
    """Closest point to ``a`` with zero mean: ``a - mean(a)``."""
    a = np.asarray(a, dtype=float)
    return a - a.mean()
