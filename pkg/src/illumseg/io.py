"""Reading images and volumes, log transform and writing results.

Supported inputs:

* 2D grayscale rasters (8- or 16-bit PNG/TIFF/PGM, or 32-bit float TIFF)
* a directory of 2D slices, stacked along the first axis in filename order
* raw volumes ``name.raw`` with a text sidecar ``name.hdr``::

      shape = 64 128 128
      dtype = uint16
      endian = little

Integer data is scaled to [0, 1] by the maximum of its type. Float data is
used as is when it already lies in [0, 1] and min-max scaled otherwise.
"""
from __future__ import annotations

import csv
import math
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .model import Codebook

__all__ = [
    "RASTER_SUFFIXES",
    "read_header",
    "write_raw",
    "read_raw",
    "load_image",
    "load_labels",
    "save_image",
    "to_log",
    "emit_results",
]

RASTER_SUFFIXES = (".png", ".tif", ".tiff", ".pgm", ".bmp")
_RAW_DTYPES = ("uint8", "uint16", "float32", "float64")


def _header_path(path: Path) -> Path:
    return path.with_suffix(".hdr")


def read_header(path) -> dict:
    """Parse a ``key = value`` sidecar into shape, dtype and endianness."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing volume metadata {path}")
    meta = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, val = (t.strip() for t in line.split("=", 1))
        meta[key.lower()] = val
    try:
        shape = tuple(int(t) for t in meta["shape"].replace(",", " ").split())
    except KeyError:
        raise ValueError(f"{path}: no 'shape' entry") from None
    dtype = meta.get("dtype", "uint8")
    if dtype not in _RAW_DTYPES:
        raise ValueError(f"{path}: unsupported dtype {dtype!r}, expected one of {_RAW_DTYPES}")
    endian = meta.get("endian", "little")
    if endian not in ("little", "big"):
        raise ValueError(f"{path}: endian must be 'little' or 'big'")
    return {"shape": shape, "dtype": dtype, "endian": endian}


def write_raw(arr, path, dtype: str | None = None) -> list[Path]:
    """Write ``arr`` as a little-endian raw file plus its ``.hdr`` sidecar."""
    path = Path(path)
    arr = np.asarray(arr)
    dtype = dtype or arr.dtype.name
    if dtype not in _RAW_DTYPES:
        raise ValueError(f"unsupported dtype {dtype!r}")
    arr.astype(np.dtype(dtype).newbyteorder("<")).tofile(path)
    hdr = _header_path(path)
    hdr.write_text(
        f"shape = {' '.join(str(s) for s in arr.shape)}\ndtype = {dtype}\nendian = little\n"
    )
    return [path, hdr]


def read_raw(path) -> np.ndarray:
    """Read a raw volume using its sidecar; values are not rescaled."""
    path = Path(path)
    meta = read_header(_header_path(path))
    dt = np.dtype(meta["dtype"]).newbyteorder("<" if meta["endian"] == "little" else ">")
    data = np.fromfile(path, dtype=dt)
    expected = math.prod(meta["shape"])
    if data.size != expected:
        raise ValueError(f"{path}: {data.size} values, header shape needs {expected}")
    return data.reshape(meta["shape"]).astype(dt.newbyteorder("="))


def _normalize(a: np.ndarray) -> np.ndarray:
    if a.dtype == np.uint8:
        return a.astype(float) / 255.0
    if a.dtype == np.uint16:
        return a.astype(float) / 65535.0
    if np.issubdtype(a.dtype, np.integer):
        if a.min() < 0 or a.max() > 65535:
            raise ValueError("integer image outside the 16-bit range")
        return a.astype(float) / (255.0 if a.max() <= 255 else 65535.0)
    a = a.astype(float)
    if not np.all(np.isfinite(a)):
        raise ValueError("image contains non-finite values")
    lo, hi = float(a.min()), float(a.max())
    if lo >= 0.0 and hi <= 1.0:
        return a
    return (a - lo) / (hi - lo) if hi > lo else np.zeros_like(a)


def _read_raster(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "I;16", "I;16B", "I;16L", "I", "F"):
                raise ValueError(f"{path}: not a grayscale image (mode {im.mode})")
            a = np.array(im)
    except (OSError, SyntaxError) as exc:
        raise ValueError(f"cannot read image {path}: {exc}") from exc
    if a.dtype == np.int32 and a.min() >= 0 and a.max() <= 65535:
        a = a.astype(np.uint16)
    return a


def load_image(path) -> np.ndarray:
    """Load a 2D raster, a slice directory or a raw volume, scaled to [0, 1]."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file or directory: {path}")
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in RASTER_SUFFIXES)
        if not files:
            raise ValueError(f"{path}: directory holds no image slices")
        slices = [_read_raster(p) for p in files]
        shapes = {s.shape for s in slices}
        if len(shapes) != 1:
            raise ValueError(f"{path}: slices have inconsistent shapes {sorted(shapes)}")
        if len({s.dtype for s in slices}) != 1:
            raise ValueError(f"{path}: slices have mixed bit depths")
        return _normalize(np.stack(slices))
    if path.suffix.lower() == ".raw":
        return _normalize(read_raw(path))
    return _normalize(_read_raster(path))


def load_labels(path) -> np.ndarray:
    """Read an integer label map (raster or raw volume) without rescaling."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file or directory: {path}")
    a = read_raw(path) if path.suffix.lower() == ".raw" else _read_raster(path)
    if not np.issubdtype(a.dtype, np.integer):
        if not np.all(a == np.rint(a)):
            raise ValueError(f"{path}: label map holds non-integer values")
    return a.astype(np.int64)


def _quantize(a, bits: int) -> np.ndarray:
    top = 255 if bits == 8 else 65535
    q = np.rint(np.clip(np.asarray(a, dtype=float), 0.0, 1.0) * top)
    return q.astype(np.uint8 if bits == 8 else np.uint16)


def save_image(a, path, bits: int = 16) -> list[Path]:
    """Write an image with values in [0, 1], quantized to ``bits`` (8 or 16).

    2D arrays go to a raster file (``.png`` unless ``path`` says otherwise);
    3D arrays go to a raw volume with sidecar, or a slice directory when
    ``path`` has no suffix.
    """
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    path = Path(path)
    a = np.asarray(a)
    q = _quantize(a, bits)
    if a.ndim == 2:
        if not path.suffix:
            path = path.with_suffix(".png")
        Image.fromarray(q).save(path)
        return [path]
    if a.ndim != 3:
        raise ValueError(f"can only save 2D or 3D arrays, got shape {a.shape}")
    if path.suffix.lower() == ".raw":
        return write_raw(q, path)
    path.mkdir(parents=True, exist_ok=True)
    width = len(str(a.shape[0] - 1))
    out = []
    for i, sl in enumerate(q):
        p = path / f"slice_{i:0{width}d}.png"
        Image.fromarray(sl).save(p)
        out.append(p)
    return out


def to_log(F, epsilon: float = 1.0 / 255.0) -> np.ndarray:
    """``log(F + epsilon)``; the offset keeps zero pixels finite."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    F = np.asarray(F, dtype=float)
    if np.any(F < 0):
        raise ValueError("image has negative pixels")
    return np.log(F + epsilon)


def _save_index(arr, path: Path, dims: int) -> list[Path]:
    arr = np.asarray(arr, dtype=np.uint8)
    if dims == 2:
        p = path.with_suffix(".png")
        Image.fromarray(arr).save(p)
        return [p]
    return write_raw(arr, path.with_suffix(".raw"))


def emit_results(result, outdir, true_labels=None) -> list[Path]:
    """Write everything a :class:`~illumseg.palm.SolveResult` contains.

    Files written to ``outdir``:

    * ``labels`` -- class index per pixel (8-bit PNG in 2D, raw volume in 3D)
    * ``mask_<k>`` -- one binary mask (0/255) per class, ``k`` from 1
    * ``illumination`` -- ``exp(l)`` rescaled to the full 16-bit range, with
      its true range in ``illumination_range.txt``
    * ``illumination_log.raw`` -- the unscaled float64 log-illumination
    * ``codebook.txt`` -- class centers ``exp(c)``, one per line
    * ``trace.csv`` -- the solver trace without the timing column
    * ``misclassification.txt`` -- only when ``true_labels`` is given
    """
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        return _emit(result, outdir, true_labels)
    except OSError as exc:
        raise OSError(f"writing results to {outdir} failed: {exc}") from exc


def _emit(result, outdir: Path, true_labels) -> list[Path]:
    written = []
    labels = np.asarray(result.labels)
    dims = labels.ndim
    K = result.u.shape[0]
    if K > 255:
        raise ValueError("label maps are 8-bit; at most 255 classes")
    written += _save_index(labels, outdir / "labels", dims)
    width = len(str(K))
    for k in range(K):
        written += _save_index(255 * (labels == k), outdir / f"mask_{k + 1:0{width}d}", dims)

    L = np.exp(result.l)
    lo, hi = float(L.min()), float(L.max())
    disp = (L - lo) / (hi - lo) if hi > lo else np.zeros_like(L)
    if dims == 2:
        written += save_image(disp, outdir / "illumination.png", bits=16)
    else:
        written += save_image(disp, outdir / "illumination.raw", bits=16)
    rng_file = outdir / "illumination_range.txt"
    rng_file.write_text(f"min = {lo!r}\nmax = {hi!r}\n")
    written.append(rng_file)
    written += write_raw(np.asarray(result.l, dtype=np.float64), outdir / "illumination_log.raw")

    c = result.c if isinstance(result.c, Codebook) else Codebook(result.c)
    cb = outdir / "codebook.txt"
    cb.write_text("".join(f"{v!r}\n" for v in c.linear().tolist()))
    written.append(cb)

    # wall-clock times are left out so that reruns give identical files
    tr = outdir / "trace.csv"
    cols = [c for c in result.trace.COLUMNS if c != "elapsed"]
    with open(tr, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in zip(*(getattr(result.trace, c) for c in cols)):
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    written.append(tr)

    if true_labels is not None:
        from .synth import misclassified

        count, percent = misclassified(labels, true_labels)
        mc = outdir / "misclassification.txt"
        mc.write_text(f"count = {count}\npercent = {percent!r}\npixels = {labels.size}\n")
        written.append(mc)
    return written
