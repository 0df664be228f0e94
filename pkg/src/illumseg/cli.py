"""Command line interface.

Subcommands: ``segment``, ``baseline-m2``, ``baseline-m3``, ``phantom``,
``sweep`` and ``check``. Options can also come from a ``key = value`` file
passed with ``--config`` (keys are the long option names without leading
dashes); options given on the command line win over the file.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

SOLVER_DEFAULTS = {
    "classes": 3,
    "lambda": "0.2",
    "gamma": 100.0,
    "sigma": 30.0,
    "outer": 2000,
    "inner": 50,
    "tau1": 1e-6,
    "tau2-mode": "numeric",
    "epsilon": 1.0 / 255.0,
    "log-every": 10,
    "seed": 0,
    "threads": 1,
}

PHANTOM_DEFAULTS = {
    "shape": "128,128",
    "classes": 3,
    "values": "0.4,0.2,0.65",
    "illumination": "ramp",
    "layout": "blobs",
    "noise": 0.0,
    "seed": 0,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text) -> list[float]:
    try:
        return [float(t) for t in str(text).replace(" ", "").split(",") if t]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text) -> list[int]:
    try:
        return [int(t) for t in str(text).replace(" ", "").split(",") if t]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def read_config(path) -> dict:
    """Parse a ``key = value`` file; repeated keys accumulate into lists."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file {path} does not exist")
    out: dict = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (t.strip() for t in line.split("=", 1))
        key = key.lstrip("-").replace("_", "-")
        if key == "freeze-center":
            out.setdefault(key, []).append(val)
        else:
            out[key] = val
    return out


def _solver_options(p):
    p.add_argument("input", nargs="?", help="image file, slice directory or .raw volume")
    p.add_argument("--config", help="key = value file with default options")
    p.add_argument("--classes", type=int, help="number of classes K (default 3)")
    p.add_argument("--gamma", type=float, help="illumination smoothness weight (default 100)")
    p.add_argument("--sigma", type=float, help="std. dev. of the smoothing used to initialize l (default 30)")
    p.add_argument("--outer", type=int, help="outer iterations (default 2000)")
    p.add_argument("--inner", type=int, help="inner primal-dual iterations (default 50)")
    p.add_argument("--tau1", type=float, help="step parameter of the assignment update (default 1e-6)")
    p.add_argument("--tau2-mode", choices=("numeric", "lipschitz"), help="tau2 = n or 2n (default numeric)")
    p.add_argument("--init-centers", help="comma-separated initial gray values C_k (linear domain)")
    p.add_argument("--freeze-center", action="append", metavar="K=VALUE",
                   help="hold class K (1-based) at gray value VALUE; repeatable")
    p.add_argument("--epsilon", type=float, help="offset added before the log (default 1/255)")
    p.add_argument("--log-every", type=int, help="energy logging interval (default 10)")
    p.add_argument("--truth", help="ground-truth label image for a misclassification report")
    p.add_argument("--seed", type=int, help="seed for numpy's global generator (default 0)")
    p.add_argument("--threads", type=int, help="cap on internal threads (default 1)")
    p.add_argument("--out", help="output directory")


def _phantom_options(p):
    p.add_argument("--shape", help="grid size, e.g. 128,128 or 32,64,64 (default 128,128)")
    p.add_argument("--classes", type=int, help="number of classes (default 3)")
    p.add_argument("--values", help="class gray values (default 0.4,0.2,0.65)")
    p.add_argument("--illumination", choices=("ramp", "gaussian-bump", "product-of-sines", "none"))
    p.add_argument("--layout", choices=("blobs", "specks", "sharp"))
    p.add_argument("--seed", type=int, help="noise seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="illumseg", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("segment", help="joint segmentation and illumination estimation")
    _solver_options(p)
    p.add_argument("--lambda", dest="lam", help="TV weight, one value or one per class (default 0.2)")

    for name, extra in (("baseline-m2", "pure TV segmentation without illumination"),
                        ("baseline-m3", "smooth-and-divide correction followed by baseline-m2")):
        p = sub.add_parser(name, help=extra)
        _solver_options(p)
        p.add_argument("--lambda", dest="lam", type=float, help="single TV weight (default 0.2)")

    p = sub.add_parser("phantom", help="generate a synthetic test image")
    _phantom_options(p)
    p.add_argument("--config", help="key = value file with default options")
    p.add_argument("--noise", type=float, help="noise standard deviation s (default 0)")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("sweep", help="noise sweep with a grid search over the TV weight")
    _phantom_options(p)
    p.add_argument("--config", help="key = value file with default options")
    p.add_argument("--noise-levels", help="comma-separated noise levels (default 0)")
    p.add_argument("--lambdas", help="comma-separated TV weights (default 0.05,0.1,0.2,0.5,1)")
    p.add_argument("--method", choices=("full", "m2", "m3", "full-frozen-c3"))
    p.add_argument("--gamma", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--outer", type=int)
    p.add_argument("--inner", type=int)
    p.add_argument("--threads", type=int, help="parallel sweep cells (default 1)")
    p.add_argument("--out", help="CSV file to write (default: stdout)")

    p = sub.add_parser("check", help="run the numerical self-test")
    p.add_argument("--seed", type=int, default=0)
    return parser


_DEST = {"lambda": "lam"}


def _merge(args, defaults: dict) -> dict:
    """Command line beats config file beats built-in defaults."""
    file_opts = read_config(args.config) if getattr(args, "config", None) else {}
    merged = {}
    for key in set(defaults) | set(file_opts) | {k.replace("_", "-") for k in vars(args)}:
        dest = _DEST.get(key, key.replace("-", "_"))
        cli_val = getattr(args, dest, None)
        if cli_val is not None:
            merged[key] = cli_val
        elif key in file_opts:
            merged[key] = file_opts[key]
        elif key in defaults:
            merged[key] = defaults[key]
    merged.pop("lam", None)
    if getattr(args, "lam", None) is not None:
        merged["lambda"] = args.lam
    merged.pop("config", None)
    merged.pop("command", None)
    return merged


def _solver_config(opts: dict, K: int, single_lambda: bool):
    from .palm import SolverConfig
    from .prox import PdhgConfig

    lam = _floats(opts["lambda"])
    if single_lambda and len(lam) != 1:
        raise UsageError("this method takes a single --lambda value")
    if len(lam) not in (1, K):
        raise UsageError(f"--lambda needs 1 or {K} values, got {len(lam)}")
    if any(v <= 0 for v in lam):
        raise UsageError("--lambda values must be positive")
    centers = np.full(K, np.nan)
    frozen = [False] * K
    if opts.get("init-centers"):
        vals = _floats(opts["init-centers"])
        if len(vals) != K or any(v <= 0 for v in vals):
            raise UsageError(f"--init-centers needs {K} positive gray values")
        centers[:] = np.log(vals)
    for item in opts.get("freeze-center") or []:
        try:
            k_text, v_text = item.split("=", 1)
            k, v = int(k_text), float(v_text)
        except ValueError:
            raise UsageError(f"--freeze-center expects K=VALUE, got {item!r}") from None
        if not 1 <= k <= K or v <= 0:
            raise UsageError(f"--freeze-center {item!r}: need 1 <= K <= {K} and VALUE > 0")
        centers[k - 1] = math.log(v)
        frozen[k - 1] = True
    use_centers = not np.all(np.isnan(centers))
    try:
        return SolverConfig(
            lambdas=tuple(lam) if len(lam) > 1 else lam[0],
            gamma=float(opts["gamma"]),
            outer_iters=int(opts["outer"]),
            inner=PdhgConfig(inner_iters=int(opts["inner"])),
            tau1=float(opts["tau1"]),
            tau2_mode=str(opts["tau2-mode"]),
            init_sigma=float(opts["sigma"]),
            init_centers=tuple(centers.tolist()) if use_centers else None,
            frozen=tuple(frozen) if any(frozen) else None,
            log_every=int(opts["log-every"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write_config(opts: dict, path: Path) -> None:
    lines = []
    for key in sorted(opts):
        val = opts[key]
        if val is None:
            continue
        if key == "freeze-center":
            lines += [f"freeze-center = {v}" for v in val]
        elif key in ("out",):
            continue
        else:
            if isinstance(val, float):
                val = repr(val)
            lines.append(f"{key} = {val}")
    path.write_text("\n".join(lines) + "\n")


def _thread_limit(n):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        import contextlib
        return contextlib.nullcontext()
    return threadpool_limits(limits=max(1, int(n)))


def _run_solver(args, method: str) -> int:
    from .baselines import solve_m2, solve_m3
    from .io import emit_results, load_image, load_labels, to_log
    from .palm import solve

    opts = _merge(args, SOLVER_DEFAULTS)
    if not opts.get("input"):
        raise UsageError(f"{method}: an input image is required")
    if not opts.get("out"):
        raise UsageError(f"{method}: --out is required")
    K = int(opts["classes"])
    if K < 2:
        raise UsageError("--classes must be at least 2")
    cfg = _solver_config(opts, K, single_lambda=method != "segment")
    eps = float(opts["epsilon"])
    np.random.seed(int(opts["seed"]))

    F = load_image(opts["input"])
    truth = None
    if opts.get("truth"):
        truth = load_labels(opts["truth"])
        if truth.shape != F.shape:
            raise UsageError(f"--truth has shape {truth.shape}, image has {F.shape}")
    with _thread_limit(opts["threads"]):
        if method == "segment":
            res = solve(to_log(F, eps), K, cfg)
        elif method == "baseline-m2":
            res = solve_m2(to_log(F, eps), K, _floats(opts["lambda"])[0], cfg)
        else:
            res = solve_m3(F, K, _floats(opts["lambda"])[0], cfg.init_sigma, cfg, eps)[0]
    out = Path(opts["out"])
    written = emit_results(res, out, truth)
    _write_config({**opts, "command": None}, out / "config.txt")
    print(f"{method}: {res.iterations} iterations in {res.trace.elapsed[-1]:.1f} s, "
          f"final energy {res.trace.energy[-1]!r}")
    print(f"{method}: {len(written) + 1} files written to {out}")
    return EXIT_OK


def _make_phantom(opts, s):
    from .synth import make_phantom

    shape = _ints(opts["shape"])
    return make_phantom(shape, int(opts["classes"]), _floats(opts["values"]),
                        opts["illumination"], s, int(opts["seed"]), opts["layout"])


def _run_phantom(args) -> int:
    from .io import save_image, write_raw

    opts = _merge(args, {**PHANTOM_DEFAULTS, "illumination": "ramp"})
    if not opts.get("out"):
        raise UsageError("phantom: --out is required")
    try:
        ph = _make_phantom(opts, float(opts["noise"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_raw(ph.F.astype(np.float64), out / "image.raw")
    write_raw(ph.true_labels.astype(np.uint8), out / "labels.raw")
    write_raw(ph.true_L.astype(np.float64), out / "illumination.raw")
    if ph.F.ndim == 2:
        save_image(ph.F, out / "image.png", bits=16)
        save_image(ph.true_labels / 255.0, out / "labels.png", bits=8)
    _write_config({k: v for k, v in opts.items() if k != "out"}, out / "config.txt")
    print(f"phantom written to {out}")
    return EXIT_OK


def _run_sweep(args) -> int:
    from .palm import SolverConfig
    from .prox import PdhgConfig
    from .synth import noise_sweep

    defaults = {**PHANTOM_DEFAULTS, "illumination": "ramp", "noise-levels": "0",
                "lambdas": "0.05,0.1,0.2,0.5,1", "method": "full", "gamma": 100.0,
                "sigma": 30.0, "outer": 2000, "inner": 50, "threads": 1}
    opts = _merge(args, defaults)
    cfg = SolverConfig(gamma=float(opts["gamma"]), init_sigma=float(opts["sigma"]),
                       outer_iters=int(opts["outer"]),
                       inner=PdhgConfig(inner_iters=int(opts["inner"])), log_every=100)
    result = noise_sweep(lambda s: _make_phantom(opts, s), _floats(opts["noise-levels"]),
                         _floats(opts["lambdas"]), opts["method"], cfg,
                         n_jobs=int(opts["threads"]))
    if opts.get("out"):
        result.to_csv(opts["out"])
    else:
        import tempfile

        with tempfile.TemporaryDirectory() as tmp:
            result.to_csv(Path(tmp) / "sweep.csv")
            sys.stdout.write((Path(tmp) / "sweep.csv").read_text())
    for cell in result.best():
        print(f"s={cell.s!r} best lambda={cell.lam!r} wrong={cell.count} ({cell.percent:.3f}%)",
              file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        if args.command in ("segment", "baseline-m2", "baseline-m3"):
            return _run_solver(args, args.command)
        if args.command == "phantom":
            return _run_phantom(args)
        if args.command == "sweep":
            return _run_sweep(args)
        from .selfcheck import run_checks

        return EXIT_OK if run_checks(args.seed) else EXIT_RUNTIME
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, FloatingPointError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


cli_main = main


def cli_entry() -> None:
    """Console-script wrapper that turns the return code into the exit status."""
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    cli_entry()
