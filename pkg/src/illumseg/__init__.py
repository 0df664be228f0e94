"""Joint multi-class segmentation and illumination estimation.

Images are modelled as ``F = R * L``: a piecewise-constant reflectance ``R``
(one gray value per class) times a smooth illumination ``L``. In the log
domain the class assignment, the class centers and the log-illumination are
estimated together by minimizing a TV-regularized energy with an
alternating proximal-gradient scheme.
"""
from .baselines import estimate_illumination, solve_m2, solve_m3
from .grid import (
    divergence,
    gaussian_smooth,
    gradient,
    laplacian,
    laplacian_norm_bound,
)
from .io import emit_results, load_image, save_image, to_log
from .model import (
    INFEASIBLE,
    Codebook,
    ModelParams,
    data_term,
    energy,
    grad_c_H,
    grad_l_H,
    grad_u_H,
    smoothness_term,
    tv_term,
)
from .palm import (
    SolveResult,
    SolverConfig,
    SolverDivergence,
    SolveTrace,
    extract_labels,
    initialize,
    solve,
)
from .prox import (
    PdhgConfig,
    project_simplex,
    project_zero_mean,
    prox_tv_simplex,
    step_c,
)
from .synth import Phantom, make_phantom, misclassified, noise_sweep

__version__ = "0.1.0"
