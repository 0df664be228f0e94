"""
Volumes: raw files, slice stacks and the command line
=====================================================

3D data comes either as a directory of 2D slices (stacked in filename
order) or as a raw file with a small text header. The same data can be
segmented from Python or through the ``illumseg`` command.
"""

from pathlib import Path

import numpy as np

from illumseg import SolverConfig, make_phantom, misclassified, solve
from illumseg.cli import main
from illumseg.io import load_image, read_header, save_image, to_log, write_raw

out = Path("demo_output") / "volume"
out.mkdir(parents=True, exist_ok=True)

ph = make_phantom((12, 32, 32), 3, (0.4, 0.2, 0.65), illum="ramp", s=0.002)
write_raw(ph.F, out / "volume.raw")
print(read_header(out / "volume.hdr"))

# a 16-bit slice stack holds the same data up to quantization
save_image(ph.F, out / "slices", bits=16)
stack = load_image(out / "slices")
print("stack vs raw, max difference:", np.abs(stack - ph.F).max())

# the default quantile guess can put two centers on the dominant class of
# a small volume, so start from rough gray values instead
guess = tuple(np.log([0.35, 0.15, 0.8]))
res = solve(to_log(load_image(out / "volume.raw")), 3,
            SolverConfig(outer_iters=60, init_sigma=8.0, lambdas=0.05, init_centers=guess))
print("wrong voxels:", misclassified(res.labels, ph.true_labels))

# per-class weights as in a three-phase material scan
code = main(["segment", str(out / "volume.raw"), "--classes", "3", "--lambda", "0.05,0.1,0.05",
             "--sigma", "8", "--outer", "60", "--init-centers", "0.35,0.15,0.8", "--out", str(out / "cli")])
print("exit code", code, "files:", sorted(p.name for p in (out / "cli").iterdir()))
