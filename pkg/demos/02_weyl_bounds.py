"""
From transfer matrices to spectral measure
==========================================

P_k = sum_{j<=k} A_{2j-1}^* A_{2j-1} sets a length scale
eps_k = 1 / (2 sqrt(det P_k)).  At that scale the spectral measure of the
interval (E - eps_k, E + eps_k) is bounded by the resolvent, and the
resolvent is bounded by ||P_k||.  Here the three quantities come from
independent computations.
"""

import math

import numpy as np

from qpholder.cocycle import SchrodingerCocycle
from qpholder.torus import AnalyticTorusFunction, FrequencyVector
from qpholder.weyl import (TruncatedOperator, accumulate_Pk, borel_transform, det_via_solutions,
                           m_functions, prop21_chain)

alpha = FrequencyVector([math.sqrt(2) - 1, math.sqrt(3) - 1])
V = AnalyticTorusFunction.cosine_potential(2)
lam = 0.05
sc = SchrodingerCocycle(0.3, lam, V, alpha)
theta = np.zeros(2)

acc = accumulate_Pk(sc, theta, 50)
print("P_50 =\n", acc.P)
print("det P_50 =", acc.det_P, " eps_50 =", acc.eps_k)
# the determinant is also an infimum over solutions with orthogonal initial data
print("inf over beta of ||u^b|| ||u^(b+pi/2)|| =", det_via_solutions(sc, theta, 50, beta_grid=7200))

# the three-term chain on a 2*10^4-site truncation
for k in (10, 100, 1000):
    rep = prop21_chain(sc, theta, k, 20_000)
    print(f"k={k:5d} eps_k={rep.eps_k:.2e}  mu={rep.mass:.3e} <= {rep.bound_mid:.3e} <= {rep.bound_right:.3e}"
          f"  holds={rep.holds}")

# Borel transform against the half-line m-functions
op = TruncatedOperator(V, lam, alpha, theta, 10_000)
z = 0.3 + 0.01j
m = m_functions(op, z)
print("\nM(z) from two solves      :", borel_transform(op, z))
print("M(z) = (m+ m- - 1)/(m+ + m-):", m.M())
