"""
Almost reducibility in practice
===============================

For small lam the Schrodinger cocycle is A_0 e^{f_0} with A_0 = [[E, -1], [1, 0]]
and f_0 nilpotent.  Each KAM step solves a homological equation for the
non-resonant modes, or first rotates away a resonant mode n (the
conjugacy then has degree n).  The error eps_j shrinks roughly quadratically.
"""

import math

import numpy as np

from qpholder.cocycle import Cocycle, SchrodingerCocycle, rotation_number
from qpholder.kam import cn_bound_check, schrodinger_kam
from qpholder.torus import AnalyticTorusFunction, FrequencyVector

alpha = FrequencyVector([math.sqrt(2) - 1, math.sqrt(3) - 1])
V = AnalyticTorusFunction.cosine_potential(2)

for E in (0.1, 0.5, -0.7, 3.0):
    sc = SchrodingerCocycle(E, 0.05, V, alpha)
    st = schrodinger_kam(sc, r0=0.05)
    print(f"\nE = {E}")
    for rec in st.ledger:
        res = "" if rec.resonance is None else f" n={rec.resonance}"
        print(f"  step {rec.j}: {rec.kind:13s}{res:10s} eps {rec.eps:.2e} -> {rec.eps_next:.2e}"
              f"  ||B|| {rec.B_norm:.3f}  residual {rec.residual:.1e}")
    print("  degree", st.degree, " final xi", np.round(st.xi_j, 6), " c_n check", cn_bound_check(st).holds)

# The degree moves the rotation number by <deg, alpha>/2
sc = SchrodingerCocycle(-0.7, 0.05, V, alpha)
st = schrodinger_kam(sc)
reduced = Cocycle(alpha, st.cocycle_matrix, check=False)
r0, r1 = rotation_number(sc).raw, rotation_number(reduced).raw
print("\nrho(S_E) - rho(reduced) - <deg,alpha>/2 mod 1/2:",
      (r0 - r1 - 0.5 * st.degree @ alpha.array) % 0.5)
