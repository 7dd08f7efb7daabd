"""
The square-root modulus of continuity
=====================================

mu(E - eps, E + eps) / sqrt(eps) stays bounded over energies and scales.
The ratio is largest at the spectral edges, where the density of states has
a square-root singularity, so the exponent 1/2 cannot be improved.
"""

import math

import numpy as np

from qpholder.holder import ScanConfig, edge_exponent, holder_scan, lemma_P_check, log_grid, scan_energy_grid
from qpholder.torus import AnalyticTorusFunction, FrequencyVector

V = AnalyticTorusFunction.cosine_potential(2)
alpha = FrequencyVector([math.sqrt(2) - 1, math.sqrt(3) - 1])
cfg = ScanConfig(V, 0.05, alpha, [0.0, 0.0], [], log_grid(1e-3, 1e-0, 2), min_decades=3.0)
cfg.E_grid = scan_energy_grid(cfg, n=8)

rep = holder_scan(cfg)
s = rep.summary
print("C_emp =", round(s["C_emp"], 4), " spread across decades =", round(s["spread"], 3),
      " chain violations =", s["chain_violations"])
for E, c in s["per_E"]:
    print(f"  E={E: .4f}  sup_eps mu/sqrt(eps) = {c:.4f}")

slope, masses = edge_exponent(E=2.0)
print("\nfree edge: mu(2 - eps, 2 + eps) ~ eps^%.4f" % slope)

# ||P_k|| ||P_k^-1||^3 does not grow with k on the spectrum
rep = lemma_P_check(cfg, 0.3, k_list=np.unique(np.logspace(1, 4, 7).astype(int)))
print("\n||P_k|| ||P_k^-1||^3 at E=0.3:", np.array2string(rep.ratios, precision=3), " slope", round(rep.slope, 3))
