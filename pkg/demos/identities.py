"""Pointwise G2 algebra on random structures.

Draws random GL pullbacks of the flat 3-form, prints the identity suite,
then decomposes a random endomorphism and shows how each piece acts on
phi through the diamond operator.

    python3 demos/identities.py
"""

import numpy as np

from g2flow import algebra
from g2flow.identities import algebra_suite, p_matrix

for check in algebra_suite(count=200):
    print(check.line())

rng = np.random.default_rng(4)
phis, _ = algebra.random_positive_phis(rng, 1)
pt = algebra.PointG2.from_phi(phis)
A = rng.standard_normal((1, 7, 7))
parts = algebra.decompose_endo(A, pt)
print()
for name in ("A1", "A7", "A14", "A27"):
    piece = getattr(parts, name)
    print(f"|{name}⋄phi| = {np.abs(algebra.diamond(piece, 'phi', pt)).max():.3e}")
# A14 is the stabilizer algebra: it moves the metric but not phi
print(f"|A14| = {np.abs(parts.A14).max():.3e}")
ev = np.sort(np.linalg.eigvals(p_matrix(pt))[0].real)
print("P spectrum:", np.round(ev, 10))
