"""Acceptance criteria, each at its stated tolerance.

Every test prints one PASS/FAIL line.  Run ``pytest tests/test_acceptance.py -s``
to see them inline, or ``python tests/test_acceptance.py`` for the summary only.
"""

import math
import sys
import time

import numpy as np
import pytest

from qpholder import mat2
from qpholder.cocycle import SchrodingerCocycle, rotation_number
from qpholder.holder import (ScanConfig, edge_exponent, lemma_P_check, log_grid, phase_robustness,
                             scan_energy_grid)
from qpholder.kam import cn_bound_check, schrodinger_kam
from qpholder.torus import (AnalyticTorusFunction, DiophantineCertificate, FrequencyVector,
                            check_diophantine, exp_sl2, norm_r)
from qpholder.triangular import (TriangularUnimodular, brute_force_Xk, closed_form_Xk,
                                 det_Xk_closed_form)
from qpholder.weyl import (TruncatedOperator, accumulate_Pk, det_via_solutions, ids_by_counting,
                           in_spectrum, prop21_chain)

GOLDEN = (math.sqrt(5) - 1) / 2
ALPHA2 = (math.sqrt(2) - 1, math.sqrt(3) - 1)


@pytest.fixture
def report(capsys):
    def _report(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail}"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return _report


def model(d, lam):
    alpha = FrequencyVector((GOLDEN,) if d == 1 else ALPHA2)
    return AnalyticTorusFunction.cosine_potential(d), lam, alpha


def spectrum_energies(d, lam, n, lo=-1.8, hi=1.8, L=4000):
    """n energies spread over (lo, hi), each moved to the nearest eigenvalue of a
    truncation and kept only if the spectrum probe accepts it."""
    V, lam, alpha = model(d, lam)
    op = TruncatedOperator(V, lam, alpha, np.zeros(d), L)
    ev = op.eigenvalues()
    out = []
    for E in np.linspace(lo, hi, n):
        Es = float(ev[np.argmin(np.abs(ev - E))])
        assert in_spectrum(V, lam, alpha, np.zeros(d), Es)
        out.append(Es)
    return out


def test_criterion_1_closed_form_fidelity(report):
    t0 = time.time()
    rng = np.random.default_rng(2024)
    n = 1000
    g = rng.uniform(-1, 1, n)
    c = (rng.normal(size=n) + 1j * rng.normal(size=n)) * 10 ** rng.uniform(-3, 1, n)
    k = rng.integers(1, 1001, n)
    ref = brute_force_Xk(g, c, k)
    Ts = [TriangularUnimodular(a, b) for a, b in zip(g, c)]
    cf = np.array([closed_form_Xk(T, kk) for T, kk in zip(Ts, k)])
    dets = np.array([det_Xk_closed_form(T, kk) for T, kk in zip(Ts, k)])
    rel = np.abs(cf - ref).max(axis=(1, 2)) / np.abs(ref).max(axis=(1, 2))
    det_ref = np.linalg.det(ref).real
    det_rel = np.abs(dets - det_ref) / np.abs(det_ref)
    dt = time.time() - t0
    ok = rel.max() < 1e-9 and det_rel.max() < 1e-9 and dt < 10
    report(1, "closed-form X_k", ok,
           f"max rel err {rel.max():.1e}, det rel err {det_rel.max():.1e}, {dt:.1f} s")


def test_criterion_2_variational_determinant(report):
    t0 = time.time()
    rng = np.random.default_rng(7)
    V, _, alpha = model(1, 0.0)
    worst = 0.0
    for _ in range(100):
        lam = rng.uniform(0, 0.1)
        sc = SchrodingerCocycle(rng.uniform(-2, 2), lam, V, alpha)
        th = [rng.random()]
        k = int(rng.integers(1, 51))
        det = accumulate_Pk(sc, th, k).det_P
        worst = max(worst, abs(det_via_solutions(sc, th, k, beta_grid=7200) - det) / det)
    free = det_via_solutions(SchrodingerCocycle(0.0, 0.0, V, alpha), [0.0], 10, beta_grid=7200)
    dt = time.time() - t0
    ok = worst <= 0.01 and abs(free - 100) <= 0.5 and dt < 30
    report(2, "variational det P_k", ok, f"worst rel gap {worst:.1e}, free det P_10 = {free:.6f}, {dt:.1f} s")


@pytest.mark.slow
def test_criterion_3_measure_chain(report):
    t0 = time.time()
    failures, worst_left, worst_mid = [], 0.0, 0.0
    for d in (1, 2):
        V, lam, alpha = model(d, 0.05)
        for E in spectrum_energies(d, lam, 20):
            sc = SchrodingerCocycle(E, lam, V, alpha)
            for k in (20, 100):
                rep = prop21_chain(sc, np.zeros(d), k, 20_000, slack=0.05)
                worst_left = max(worst_left, rep.mass / rep.bound_mid)
                worst_mid = max(worst_mid, rep.bound_mid / rep.bound_right)
                if not rep.holds:
                    failures.append((d, E, k))
    dt = time.time() - t0
    report(3, "measure <= resolvent <= P_k chain", not failures,
           f"80 chains, max mu/mid {worst_left:.3f}, max mid/right {worst_mid:.3f}, "
           f"failures {failures}, {dt:.0f} s")


@pytest.mark.slow
def test_criterion_4_holder_scaling(report):
    t0 = time.time()
    V, lam, alpha = model(2, 0.05)
    base = ScanConfig(V, lam, alpha, [0.0, 0.0], [], log_grid(1e-4, 1e-1, 3))
    base.E_grid = scan_energy_grid(base, n=20)
    rng = np.random.default_rng(11)
    thetas = [[0.0, 0.0]] + [list(rng.random(2)) for _ in range(7)]
    reports, ratio = phase_robustness(base, thetas)
    spreads = [r.summary["spread"] for r in reports]
    cs = [r.summary["C_emp"] for r in reports]
    violations = sum(r.summary["chain_violations"] for r in reports)
    finite = all(r.summary["finite"] for r in reports)
    dt = time.time() - t0
    ok = finite and max(spreads) <= 10 and ratio <= 2 and dt <= 15 * 60
    report(4, "Holder-1/2 scan", ok,
           f"C_emp {min(cs):.3f}..{max(cs):.3f} (ratio {ratio:.2f}), max spread {max(spreads):.2f}, "
           f"chain violations {violations}, {dt:.0f} s")


def test_criterion_5_edge_sharpness(report):
    slope, _ = edge_exponent(E=2.0, eps_grid=log_grid(1e-4, 1e-1, 3))
    report(5, "edge exponent", abs(slope - 0.5) <= 0.05, f"fitted exponent {slope:.4f}")


@pytest.mark.slow
def test_criterion_6_kam_contraction(report):
    t0 = time.time()
    V, lam, alpha = model(2, 0.05)
    checks = {"converged": True, "superlinear": True, "residual": True, "B_bound": True, "c_n": True}
    worst_B, worst_exp, steps, at_floor = 0.0, np.inf, [], 0
    for E in spectrum_energies(2, lam, 10, -1.5, 1.5):
        st = schrodinger_kam(SchrodingerCocycle(E, lam, V, alpha), max_steps=8, floor=1e-12)
        steps.append(st.j)
        checks["converged"] &= st.eps_j < 1e-12 and st.j <= 8
        # f_+ is the log of a product of O(||A_0||) matrices: below this it is roundoff
        floor = 16 * np.finfo(float).eps * mat2.opnorm(st.A0) ** 2
        for rec in st.ledger:
            if rec.kind == "non-resonant" and rec.eps_next > 0:
                if rec.eps ** 1.5 > floor:
                    checks["superlinear"] &= rec.eps_next <= rec.eps ** 1.5
                    worst_exp = min(worst_exp, rec.exponent)
                else:
                    at_floor += 1
                    checks["superlinear"] &= rec.eps_next <= floor
            checks["residual"] &= rec.residual <= 10 * rec.eps
            allowed = rec.eps ** (-1 / 800)  # eps_{j-1} for B_j
            worst_B = max(worst_B, rec.B_norm / allowed)
            checks["B_bound"] &= rec.B_norm <= allowed
        checks["c_n"] &= cn_bound_check(st, strict=False).holds
    dt = time.time() - t0
    checks["runtime"] = dt <= 300
    failed = [k for k, v in checks.items() if not v]
    report(6, "KAM contraction", not failed,
           f"steps {steps}, min non-resonant exponent {worst_exp:.2f} ({at_floor} steps at roundoff), "
           f"max ||B_j|| / eps_(j-1)^(-1/800) {worst_B:.3f}, failed checks {failed or 'none'}, {dt:.0f} s")


@pytest.mark.slow
def test_criterion_7_ids_consistency(report):
    t0 = time.time()
    V, lam, alpha = model(1, 0.1)
    op = TruncatedOperator(V, lam, alpha, [0.0], 10_000)
    grid = np.linspace(-2.3, 2.3, 50)
    counted = ids_by_counting(op, grid)
    rot = np.array([1 - 2 * rotation_number(SchrodingerCocycle(E, lam, V, alpha)).rho for E in grid])
    err = float(np.max(np.abs(rot - counted)))
    dt = time.time() - t0
    report(7, "IDS = 1 - 2 rho", err <= 2e-3 and dt <= 120, f"max |N_rot - N_count| {err:.1e}, {dt:.0f} s")


@pytest.mark.slow
def test_criterion_8_P_ratio(report):
    V, lam, alpha = model(2, 0.05)
    cfg = ScanConfig(V, lam, alpha, [0.0, 0.0], [0.0], log_grid(1e-4, 1e-1))
    k_list = np.unique(np.round(np.logspace(1, 4, 31)).astype(int))
    slopes, skipped = [], 0
    for E in spectrum_energies(2, lam, 10):
        rep = lemma_P_check(cfg, E, k_list=k_list)
        skipped += rep.skipped
        slopes.append(rep.slope)
    ok = not skipped and max(slopes) <= 0.1
    report(8, "P_k ratio without growth", ok,
           f"log-log slopes {min(slopes):.3f}..{max(slopes):.3f} (k = 10..1e4), skipped {skipped}")


def test_criterion_9_analytic_infrastructure(report):
    cos = AnalyticTorusFunction.cosine_potential(1)
    norm_err = max(abs(norm_r(cos, r, grid=512) - math.cosh(2 * math.pi * r)) for r in (0.0, 0.05, 0.1, 0.2))
    c1 = check_diophantine(FrequencyVector([GOLDEN]), 0.25, 1.5, 10_000)
    c2 = check_diophantine(FrequencyVector(ALPHA2), 0.05, 2.5, 200)
    f = AnalyticTorusFunction(1, cos.keys, np.array([[[0, 0], [0.05, 0]]] * 2, dtype=complex) * 0.5, "sl2R")
    pts = np.linspace(0, 1, 33)[:, None]
    exact = np.array_equal(exp_sl2(f)(pts), np.eye(2) + f(pts))
    ok = (norm_err < 1e-6 and isinstance(c1, DiophantineCertificate) and isinstance(c2, DiophantineCertificate)
          and exact)
    report(9, "analytic infrastructure", ok,
           f"norm_r err {norm_err:.1e}, golden-mean cert {bool(c1)}, two-frequency cert {bool(c2)}, "
           f"nilpotent exp exact {exact}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
