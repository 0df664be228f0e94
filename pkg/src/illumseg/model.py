"""Segmentation energy with a multiplicative illumination field.

Working in the log domain, an image ``f`` is explained by a label assignment
``u`` (one probability vector per pixel, stored class-first as ``(K, *grid)``),
class centers ``c`` and a smooth log-illumination ``l``::

    E(u, c, l) = sum_k sum_j u_k(j) (f(j) - l(j) - c_k)^2
                 + sum_k lambda_k sum_j |grad u_k(j)|
                 + gamma * sum_j |grad l(j)|^2
                 + indicator(u on the simplex)

The smooth part ``H`` (data term plus illumination penalty) is what the
alternating solver linearizes, so its partial gradients live here too.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .grid import gradient, laplacian

__all__ = [
    "INFEASIBLE",
    "SIMPLEX_TOL",
    "Codebook",
    "ModelParams",
    "EnergyParts",
    "simplex_violation",
    "is_feasible",
    "data_term",
    "tv_term",
    "smoothness_term",
    "smooth_part",
    "energy",
    "energy_parts",
    "grad_u_H",
    "grad_c_H",
    "grad_l_H",
]

SIMPLEX_TOL = 1e-9


class _Infeasible:
    """Marker returned by :func:`energy` when ``u`` leaves the simplex."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFEASIBLE"

    def __bool__(self):
        return False


INFEASIBLE = _Infeasible()


@dataclass
class Codebook:
    """Log-domain class centers, some of which may be held fixed."""

    centers: np.ndarray
    frozen: np.ndarray | None = None

    def __post_init__(self):
        self.centers = np.array(self.centers, dtype=float).reshape(-1)
        if self.frozen is None:
            self.frozen = np.zeros(self.centers.size, dtype=bool)
        else:
            self.frozen = np.array(self.frozen, dtype=bool).reshape(-1)
        if self.frozen.size != self.centers.size:
            raise ValueError("frozen mask and centers differ in length")
        if not np.all(np.isfinite(self.centers)):
            raise ValueError("class centers must be finite")

    @property
    def K(self) -> int:
        return self.centers.size

    def linear(self) -> np.ndarray:
        """Centers in the intensity domain, ``exp(c)``."""
        return np.exp(self.centers)

    def copy(self) -> "Codebook":
        return Codebook(self.centers.copy(), self.frozen.copy())


@dataclass
class ModelParams:
    """Per-class TV weights and the illumination smoothness weight."""

    lambdas: np.ndarray
    gamma: float = 100.0

    def __post_init__(self):
        self.lambdas = np.array(self.lambdas, dtype=float).reshape(-1)
        if np.any(self.lambdas <= 0) or not self.gamma > 0:
            raise ValueError("lambdas and gamma must be strictly positive")

    @classmethod
    def broadcast(cls, lambdas, K: int, gamma: float) -> "ModelParams":
        lam = np.broadcast_to(np.asarray(lambdas, dtype=float).reshape(-1), (K,))
        return cls(lam.copy(), gamma)


class EnergyParts(NamedTuple):
    data: float
    tv: float
    smooth: float

    @property
    def total(self) -> float:
        return self.data + self.tv + self.smooth


def _centers(c) -> np.ndarray:
    return np.asarray(getattr(c, "centers", c), dtype=float).reshape(-1)


def _check(u, l, f):
    f = np.asarray(f, dtype=float)
    l = np.asarray(l, dtype=float)
    if l.shape != f.shape:
        raise ValueError(f"illumination shape {l.shape} != image shape {f.shape}")
    if u is not None:
        u = np.asarray(u, dtype=float)
        if u.shape[1:] != f.shape:
            raise ValueError(f"assignment shape {u.shape} does not match image {f.shape}")
    return u, l, f


def _residual_sq(c, l, f) -> np.ndarray:
    c = _centers(c)
    r = f - l
    return (r[None] - c.reshape((-1,) + (1,) * f.ndim)) ** 2


def simplex_violation(u) -> float:
    """Largest deviation of ``u`` from the simplex over all pixels."""
    u = np.asarray(u, dtype=float)
    neg = max(0.0, -float(u.min()))
    over = max(0.0, float(u.max()) - 1.0)
    sums = float(np.abs(u.sum(axis=0) - 1.0).max())
    return max(neg, over, sums)


def is_feasible(u, tol: float = SIMPLEX_TOL) -> bool:
    return simplex_violation(u) <= tol


def data_term(u, c, l, f) -> float:
    u, l, f = _check(u, l, f)
    if u.shape[0] != _centers(c).size:
        raise ValueError("number of centers does not match number of classes")
    return float(np.sum(u * _residual_sq(c, l, f)))


def tv_term(u, lambdas) -> float:
    """Weighted isotropic total variation, summed over classes."""
    u = np.asarray(u, dtype=float)
    g = gradient(u, u.ndim - 1)
    per_class = np.sqrt(np.sum(g**2, axis=0)).reshape(u.shape[0], -1).sum(axis=1)
    lam = np.broadcast_to(np.asarray(lambdas, dtype=float).reshape(-1), per_class.shape)
    return float(np.dot(lam, per_class))


def smoothness_term(l, gamma: float) -> float:
    g = gradient(l)
    return float(gamma * np.sum(g**2))


def smooth_part(u, c, l, f, gamma: float) -> float:
    """The differentiable part ``H`` = data term + illumination penalty."""
    return data_term(u, c, l, f) + smoothness_term(l, gamma)


def energy_parts(u, c, l, f, params: ModelParams) -> EnergyParts:
    """The three finite terms of the energy, ignoring feasibility of ``u``."""
    return EnergyParts(
        data_term(u, c, l, f),
        tv_term(u, params.lambdas),
        smoothness_term(l, params.gamma),
    )


def energy(u, c, l, f, params: ModelParams, tol: float = SIMPLEX_TOL):
    """Full energy, or :data:`INFEASIBLE` when ``u`` is off the simplex."""
    _check(u, l, f)
    if not is_feasible(u, tol):
        return INFEASIBLE
    return energy_parts(u, c, l, f, params).total


def grad_u_H(c, l, f) -> np.ndarray:
    """Gradient of ``H`` in ``u``; it does not depend on ``u`` at all."""
    _, l, f = _check(None, l, f)
    return _residual_sq(c, l, f)


def grad_c_H(u, c, l, f) -> np.ndarray:
    u, l, f = _check(u, l, f)
    c = _centers(c)
    mass = u.reshape(u.shape[0], -1).sum(axis=1)
    weighted = (u * (f - l)[None]).reshape(u.shape[0], -1).sum(axis=1)
    return 2.0 * (mass * c - weighted)


def grad_l_H(u, c, l, f, gamma: float) -> np.ndarray:
    u, l, f = _check(u, l, f)
    c = _centers(c)
    cb = c.reshape((-1,) + (1,) * f.ndim)
    fit = np.sum(u * (l[None] + cb - f[None]), axis=0)
    return 2.0 * fit + 2.0 * gamma * laplacian(l)
