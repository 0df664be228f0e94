"""
Discrete gradient, its adjoint and the Laplacian
================================================

The TV term and the illumination smoothness both rest on one forward
difference operator with a mirror boundary. This script checks the
adjoint relation numerically and estimates the Laplacian's spectral norm,
which sets the illumination step size.
"""

import numpy as np

from illumseg.grid import (
    divergence,
    estimate_laplacian_norm,
    gaussian_smooth,
    gradient,
    laplacian_norm_bound,
)

rng = np.random.default_rng(0)

# forward differences; the last difference along each axis is zero
row = np.array([[0.0, 1.0, 3.0]])
print("gradient of [0, 1, 3] along x:", gradient(row)[1].ravel())

# <grad x, y> == <x, divergence(y)> (divergence here is the adjoint, i.e. -div)
x = rng.normal(size=(32, 40))
y = rng.normal(size=(2, 32, 40))
print("adjoint mismatch:", np.sum(gradient(x) * y) - np.sum(x * divergence(y)))

# the Laplacian norm stays below 4d, the bound used for the step size tau3
for shape in [(64, 64), (16, 16, 16)]:
    print(shape, "power iteration:", round(estimate_laplacian_norm(shape), 4),
          "bound:", laplacian_norm_bound(shape))

# Gaussian smoothing keeps the mean, even with a kernel wider than the image
img = rng.random((20, 30))
print("mean before/after smoothing:", img.mean(), gaussian_smooth(img, 30.0).mean())
