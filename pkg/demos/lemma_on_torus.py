"""The Lemma 2.2 integral identity on the flat 4-torus with h_12 = sin x1.

Both sides equal theta / (1 + theta^2) * (2 pi)^4; the Codazzi slack is
(1 + theta^2)^-1 times the integral of |C_theta h|^2 = (2 + 2 theta^2 - 2 theta) cos^2 x1.

    python3 demos/lemma_on_torus.py
"""

import math

from curvgap.catalog import SymmetricField, flat_torus
from curvgap.expr import Num, parse
from curvgap.verify import check_lemma22, check_prop_codazzi_inequality

m = flat_torus(4)
rows = [[Num(0.0)] * (i + 1) for i in range(4)]
rows[1][0] = parse("sin(x1)")
h = SymmetricField(4, tuple(tuple(r) for r in rows))

print(f"{'theta':>6} {'lhs':>12} {'rhs':>12} {'closed form':>12} {'slack':>12}")
for theta in (-1.0, 0.5, 1.0, 2.0):
    v = check_lemma22(m, h, theta)
    w = check_prop_codazzi_inequality(m, h, theta)
    closed = theta / (1 + theta**2) * (2 * math.pi) ** 4
    print(f"{theta:>6} {v.values['lhs']:>12.6f} {v.values['rhs']:>12.6f} {closed:>12.6f} {w.values['slack']:>12.6f}")
