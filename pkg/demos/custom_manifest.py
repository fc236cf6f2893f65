"""Load a metric from a manifest file and run checks on it.

The manifest below is a doubly warped metric dx1^2 + f(x1)^2 dx2^2 + sin(x1)^2 dx3^2
on a slab.  It has no chi line, so the Gauss-Bonnet-Chern check is skipped
(it is also three dimensional, which skips it on its own).

    python3 demos/custom_manifest.py
"""

import tempfile
from pathlib import Path

from curvgap import load_manifest, run_checks
from curvgap.cli import cmd_frame, RunConfig
from curvgap.quadrature import GridSpec

MANIFEST = """\
manifold "warped"
dim 3
param a = 0.2
domain x1 0.1 pi-0.1 open
domain x2 0 2*pi periodic
domain x3 0 2*pi periodic
metric 1 1 = "1"
metric 2 2 = "(1 + a*cos(x1))^2"
metric 3 3 = "sin(x1)^2"
"""

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "warped.mf"
    path.write_text(MANIFEST)
    m = load_manifest(path)
    print(f"loaded {m.name}: dim {m.dim}, chi {m.chi}")
    for name, value in cmd_frame(RunConfig(manifest=str(path)), (1.0, 0.5, 2.0)).items():
        print(f"  {name:<7} {value: .6g}")
    for v in run_checks(m, ["bach-consistency", "kato", "gbc"], GridSpec.for_manifold(m, 8)):
        print(f"  {v.check:<17} {v.status}")
