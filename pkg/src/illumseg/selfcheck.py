"""Quick numerical self-test of the operator identities and solver invariants.

Used by ``illumseg check``. Each check prints one PASS/FAIL line.
"""
from __future__ import annotations

import itertools

import numpy as np

from .grid import divergence, estimate_laplacian_norm, gradient, laplacian, laplacian_norm_bound
from .model import grad_c_H, grad_l_H, grad_u_H, smooth_part
from .palm import SolverConfig, solve
from .prox import PdhgConfig, project_simplex, project_zero_mean, prox_tv_simplex


def _adjointness(rng):
    worst = 0.0
    for _ in range(100):
        shape = tuple(rng.integers(1, 7, size=rng.integers(2, 4)))
        x = rng.standard_normal(shape)
        y = rng.standard_normal((len(shape),) + shape)
        err = abs(np.vdot(gradient(x), y) - np.vdot(x, divergence(y)))
        worst = max(worst, err / (np.linalg.norm(x) * np.linalg.norm(y)))
    return worst <= 1e-10, f"max relative error {worst:.2e}"


def _eigenvalues(rng):
    n = 17
    A = np.array([laplacian(np.eye(n)[i].reshape(1, n)).ravel() for i in range(n)]).T
    ev = np.sort(np.linalg.eigvalsh(A))
    ref = np.sort(4 * np.sin(np.pi * np.arange(n) / (2 * n)) ** 2)
    err = float(np.abs(ev - ref).max())
    return err <= 1e-8, f"max deviation {err:.2e}"


def _spectral_bound(rng):
    ests = {s: estimate_laplacian_norm(s) for s in [(16, 16), (8, 8, 8)]}
    ok = all(v < laplacian_norm_bound(s) for s, v in ests.items())
    return ok, ", ".join(f"{s}: {v:.4f}" for s, v in ests.items())


def _fd_gradients(rng):
    K, shape, gamma, h = 3, (4, 3), 3.0, 1e-5
    u = rng.random((K,) + shape)
    u /= u.sum(axis=0)
    c, l, f = rng.normal(size=K), rng.normal(size=shape), rng.normal(size=shape)

    def fd(fun, x):
        g = np.zeros_like(x)
        for idx in np.ndindex(*x.shape):
            e = np.zeros_like(x)
            e[idx] = h
            g[idx] = (fun(x + e) - fun(x - e)) / (2 * h)
        return g

    pairs = [
        (grad_u_H(c, l, f), fd(lambda x: smooth_part(x, c, l, f, gamma), u)),
        (grad_c_H(u, c, l, f), fd(lambda x: smooth_part(u, x, l, f, gamma), c)),
        (grad_l_H(u, c, l, f, gamma), fd(lambda x: smooth_part(u, c, x, f, gamma), l)),
    ]
    errs = [np.linalg.norm(a - b) / np.linalg.norm(b) for a, b in pairs]
    return max(errs) <= 1e-6, "relative errors " + ", ".join(f"{e:.1e}" for e in errs)


def _simplex(rng):
    worst = 0.0
    for v in rng.normal(scale=2.0, size=(50, 4)):
        best, best_d = None, np.inf
        for r in range(1, 5):
            for S in itertools.combinations(range(4), r):
                S = list(S)
                y = np.zeros(4)
                y[S] = v[S] - (v[S].sum() - 1) / r
                if y.min() >= -1e-15 and np.sum((v - y) ** 2) < best_d:
                    best, best_d = y, np.sum((v - y) ** 2)
        worst = max(worst, float(np.abs(project_simplex(v) - best).max()))
    return worst <= 1e-8, f"max deviation {worst:.2e}"


def _prox_feasibility(rng):
    z = rng.normal(size=(3, 10, 9))
    lam = np.array([0.2, 0.4, 0.1])
    u, p = prox_tv_simplex(z, lam, 1.0, PdhgConfig(inner_iters=100))
    viol = float(np.abs(u.sum(axis=0) - 1).max() + max(0.0, -u.min()))
    dual = float((np.sqrt(np.sum(p * p, axis=0)) - lam[:, None, None]).max())
    return viol <= 1e-12 and dual <= 1e-12, f"simplex {viol:.1e}, dual excess {dual:.1e}"


def _zero_mean(rng):
    a = rng.normal(size=(7, 6)) + 3.0
    s = abs(float(project_zero_mean(a).sum()))
    return s <= 1e-10 * a.size, f"|sum| {s:.1e}"


def _solver_invariants(rng):
    labels = np.zeros((20, 20), dtype=int)
    labels[3:10, 4:12] = 1
    ramp = np.log(np.linspace(0.6, 1.4, 20))[None, :]
    f = np.array([-0.9, -0.3])[labels] + ramp
    cfg = SolverConfig(lambdas=0.05, outer_iters=40, init_sigma=5.0, log_every=1,
                       inner=PdhgConfig(inner_iters=30))
    res = solve(f, 2, cfg)
    tr = res.trace
    ok = (tr.worst_simplex_violation <= 1e-9 and tr.worst_abs_sum_l <= 1e-8 * f.size
          and tr.descent_violations(1e-7) == 0)
    return ok, (f"simplex {tr.worst_simplex_violation:.1e}, |sum l| {tr.worst_abs_sum_l:.1e}, "
                f"descent violations {tr.descent_violations(1e-7)}")


CHECKS = [
    ("adjointness", _adjointness),
    ("laplacian-eigenvalues", _eigenvalues),
    ("spectral-bound", _spectral_bound),
    ("gradient-finite-differences", _fd_gradients),
    ("simplex-projection", _simplex),
    ("prox-feasibility", _prox_feasibility),
    ("zero-mean-projection", _zero_mean),
    ("solver-invariants", _solver_invariants),
]


def run_checks(seed: int = 0, out=print) -> bool:
    """Run every check, print one line each and return True if all pass."""
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, fn in CHECKS:
        ok, detail = fn(rng)
        all_ok &= bool(ok)
        out(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return all_ok
