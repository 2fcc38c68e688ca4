"""Convergence of the interface error for the radially expanding bubble.

A point source at the origin (removed from the domain by a square hole)
drives a circle of radius ``r(t) = sqrt(r0^2 + 2 alpha t)``.  Halving
``h`` and shrinking ``tau`` tenfold should cut the interface error by
roughly an order of magnitude for both schemes.

    python demos/expanding_bubble.py
"""

from dataclasses import replace

from bsflow import harness as hs

ROWS = [(3, 1e-2), (6, 1e-3)]

for scheme in ("bgn", "gd"):
    base = replace(hs.preset("expanding"), scheme=scheme)
    print(f"scheme {scheme}")
    print(hs.convergence_study(base, ROWS))
