"""
Schrodinger cocycles: growth, rotation and density of states
============================================================

The operator (Hu)_n = u_{n+1} + u_{n-1} + lam V(theta + n alpha) u_n turns
into the cocycle S_E(theta) = [[E - lam V(theta), -1], [1, 0]] over the
rotation theta -> theta + alpha.  This script compares a spectral gap with
the bulk of the spectrum.
"""

import math

import numpy as np

from qpholder.cocycle import (SchrodingerCocycle, ids, lyapunov_exponent, rotation_number,
                              uniform_hyperbolicity_probe)
from qpholder.torus import AnalyticTorusFunction, FrequencyVector
from qpholder.weyl import TruncatedOperator, ids_by_counting

alpha = FrequencyVector([(math.sqrt(5) - 1) / 2])
V = AnalyticTorusFunction.cosine_potential(1)
lam = 0.1

# Free case first: rho = arccos(E/2) / 2 pi inside [-2, 2], zero outside
for E in (0.0, 1.0, 2.0, 3.0):
    sc = SchrodingerCocycle(E, 0.0, V, alpha)
    print(f"free E={E:4.1f}  LE={lyapunov_exponent(sc):.6f}  rho={rotation_number(sc).rho:.6f}")
print("log((3 + sqrt5)/2) =", math.log((3 + math.sqrt(5)) / 2))

# Almost Mathieu at lam = 0.1: zero Lyapunov exponent on the spectrum
sc = SchrodingerCocycle(0.0, lam, V, alpha)
print("\nAMO lam=0.1, E=0: LE =", lyapunov_exponent(sc, n=200_000))

# IDS from the rotation number against eigenvalue counting
op = TruncatedOperator(V, lam, alpha, [0.0], 10_000)
grid = np.linspace(-2.3, 2.3, 9)
counted = ids_by_counting(op, grid)
print("\n     E     N = 1 - 2 rho   counting")
for E, c in zip(grid, counted):
    print(f"{E:7.3f}   {ids(sc.with_energy(E)):.6f}      {c:.6f}")

# Above the spectrum the cocycle is uniformly hyperbolic
for E in (0.0, 2.6):
    p = uniform_hyperbolicity_probe(sc.with_energy(E))
    print(f"\nE={E}: hyperbolic={p.hyperbolic}, growth rate {p.margin:.4f}")
