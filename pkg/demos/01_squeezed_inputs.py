"""
Squeezed vacuum inputs
======================

A single-mode squeezed vacuum trades noise between X and Y while
keeping the uncertainty product at the vacuum floor.
"""

import math

import numpy as np

from eprsim import SqueezeParams, heisenberg_product, squeezed_state, vacuum

# vacuum: unit variance in both quadratures
print(vacuum(1).cov)

# squeeze X by r = 1
s = squeezed_state(SqueezeParams(1.0, 0.0))
print(np.diag(s.cov), math.exp(-2), math.exp(2))

# on the principal axes the X.Y product sits at the floor of 1;
# a tilted ellipse has correlated X and Y, so the lab-frame product grows
for theta in (0.0, 0.4, math.pi / 2):
    print(theta, heisenberg_product(squeezed_state(SqueezeParams(1.0, theta)), 0))
