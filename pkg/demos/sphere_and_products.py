"""Curvature invariants and theorem verdicts on the round 4-sphere and two products.

    python3 demos/sphere_and_products.py
"""

import math

from curvgap import build_catalog_entry, run_checks
from curvgap.quadrature import GridSpec
from curvgap.verify import CheckOptions

ALPHA0 = 8 * math.sqrt(6) * math.pi  # Yamabe constant of the unit 4-sphere

for selector in ("s4", "scaled(s2xs2, 1/3)", "scaled(s1xs3, 1/2)"):
    m = build_catalog_entry(selector)
    grid = GridSpec.for_manifold(m, 12)
    verdicts = run_checks(m, ["gbc", "thmA", "thmB", "thmC"], grid, options=CheckOptions(alpha0=ALPHA0))
    print(f"{m.name}  (chi = {m.chi})")
    for v in verdicts:
        keys = [k for k in ("total", "target", "s", "eps0", "tau0", "integral_W_sq", "threshold", "hypotheses_met")
                if k in v.values]
        shown = "  ".join(f"{k}={v.values[k]:.6g}" for k in keys)
        print(f"  {v.check:<5} {v.status:<8} {shown}")
