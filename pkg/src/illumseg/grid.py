"""Finite-difference operators on 2D and 3D pixel grids.

Arrays may carry leading batch axes (e.g. one channel per class); the
spatial axes are always the trailing ``ndim`` axes. Vector fields put the
direction on a new leading axis, so the gradient of an array of shape
``(K, n1, n2)`` taken over ``ndim=2`` has shape ``(2, K, n1, n2)``.

The boundary is handled by mirroring, which for forward differences means
the last difference along every axis is exactly zero.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

__all__ = [
    "check_shape",
    "gradient",
    "divergence",
    "laplacian",
    "laplacian_norm_bound",
    "estimate_laplacian_norm",
    "gaussian_kernel",
    "gaussian_smooth",
]


def check_shape(shape) -> tuple[int, ...]:
    """Validate a grid shape and return it as a tuple of ints."""
    dims = tuple(int(s) for s in shape)
    if len(dims) not in (2, 3):
        raise ValueError(f"grid must be 2D or 3D, got {len(dims)} axes")
    if any(s < 1 for s in dims):
        raise ValueError(f"grid dimensions must be positive, got {dims}")
    return dims


def _ndim(x: np.ndarray, ndim: int | None) -> int:
    if ndim is None:
        return x.ndim
    if ndim < 1 or ndim > x.ndim:
        raise ValueError(f"ndim={ndim} incompatible with array of rank {x.ndim}")
    return ndim


def gradient(img, ndim: int | None = None) -> np.ndarray:
    """Forward-difference gradient with mirror boundary.

    Parameters
    ----------
    img : array_like
        Scalar field; the trailing ``ndim`` axes are spatial.
    ndim : int, optional
        Number of spatial axes. Defaults to ``img.ndim``.

    Returns
    -------
    ndarray of shape ``(ndim,) + img.shape``
        Component ``i`` holds ``img[j + e_i] - img[j]``, zero on the last
        slice along axis ``i``.
    """
    img = np.asarray(img, dtype=float)
    ndim = _ndim(img, ndim)
    lead = img.ndim - ndim
    out = np.zeros((ndim,) + img.shape)
    for i in range(ndim):
        ax = lead + i
        hi = [slice(None)] * img.ndim
        lo = [slice(None)] * img.ndim
        hi[ax] = slice(1, None)
        lo[ax] = slice(None, -1)
        np.subtract(img[tuple(hi)], img[tuple(lo)], out=out[i][tuple(lo)])
    return out


def divergence(field, ndim: int | None = None) -> np.ndarray:
    """Adjoint of :func:`gradient`, i.e. the negative discrete divergence.

    ``<gradient(x), y> == <x, divergence(y)>`` holds exactly (up to
    rounding) for every ``x`` and ``y``.
    """
    field = np.asarray(field, dtype=float)
    if ndim is None:
        ndim = field.shape[0]
    if field.shape[0] != ndim:
        raise ValueError(f"field has {field.shape[0]} components, expected {ndim}")
    shape = field.shape[1:]
    lead = len(shape) - ndim
    out = np.zeros(shape)
    for i in range(ndim):
        ax = lead + i
        hi = [slice(None)] * len(shape)
        lo = [slice(None)] * len(shape)
        hi[ax] = slice(1, None)
        lo[ax] = slice(None, -1)
        comp = field[i][tuple(lo)]
        out[tuple(lo)] -= comp
        out[tuple(hi)] += comp
    return out


def laplacian(img, ndim: int | None = None) -> np.ndarray:
    """Positive semi-definite Laplacian ``divergence(gradient(img))``."""
    img = np.asarray(img, dtype=float)
    ndim = _ndim(img, ndim)
    return divergence(gradient(img, ndim), ndim)


def laplacian_norm_bound(shape) -> float:
    """Upper bound ``4 d`` on the spectral norm of the Laplacian."""
    return 4.0 * len(check_shape(shape))


def estimate_laplacian_norm(shape, iters: int = 500, seed: int = 0) -> float:
    """Power-iteration estimate of the spectral norm of the Laplacian."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(tuple(shape))
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = laplacian(x)
        est = float(np.vdot(x, y))
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        x = y / nrm
    return est


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled Gaussian truncated at radius ``ceil(4 sigma)``, summing to one."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(4.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(img, sigma: float, ndim: int | None = None) -> np.ndarray:
    """Separable Gaussian smoothing with mirror extension at the borders.

    The extension is half-sample symmetric (``d c b a | a b c d``) and is
    repeated as often as needed, so kernels wider than the image are fine
    and the image mean is preserved.
    """
    kernel = gaussian_kernel(sigma)
    out = np.asarray(img, dtype=float)
    ndim = _ndim(out, ndim)
    for ax in range(out.ndim - ndim, out.ndim):
        out = ndimage.correlate1d(out, kernel, axis=ax, mode="reflect")
    return out
