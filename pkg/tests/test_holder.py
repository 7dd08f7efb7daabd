import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpholder.holder import (ScanConfig, edge_exponent, epsk_policy, holder_scan, lemma_P_check,
                             log_grid, modulus_estimate, phase_robustness, scan_energy_grid,
                             spectrum_edges)
from qpholder.torus import AnalyticTorusFunction, FrequencyVector
from qpholder.weyl import TruncatedOperator, accumulate_Pk, spectral_measure

from conftest import ALPHA2, GOLDEN


def config(lam=0.05, d=1, E_grid=(0.0,), eps_grid=None, L_oracle=2000, min_decades=1.0):
    alpha = (GOLDEN,) if d == 1 else ALPHA2
    return ScanConfig(AnalyticTorusFunction.cosine_potential(d), lam, FrequencyVector(alpha), [0.0] * d,
                      list(E_grid), eps_grid or log_grid(1e-3, 1e-1, 2), L_oracle, min_decades=min_decades)


def test_log_grid():
    g = log_grid(1e-4, 1e-1, 3)
    assert len(g) == 10 and g[0] == pytest.approx(1e-4) and g[-1] == pytest.approx(1e-1)


def test_config_validation():
    cfg = config(eps_grid=log_grid(1e-4, 1e-1), min_decades=3.0)
    assert cfg.validate() is cfg
    with pytest.raises(ValueError):
        config(lam=0.2).validate()
    with pytest.raises(ValueError):
        config(eps_grid=[1e-2, 1e-1], min_decades=3.0).validate()


def test_config_json_round_trip(tmp_path):
    cfg = config(d=2, E_grid=[0.1, 0.4])
    path = tmp_path / "scan.json"
    path.write_text(json.dumps(cfg.to_dict()))
    back = ScanConfig.from_json(str(path))
    assert back.E_grid == cfg.E_grid and np.allclose(back.eps_grid, cfg.eps_grid)
    assert np.allclose(back.alpha.array, cfg.alpha.array) and back.lam == cfg.lam
    # potential by path and generated grids
    (tmp_path / "v.json").write_text(cfg.potential.to_json())
    doc = dict(cfg.to_dict(), potential="v.json", E_grid={"n": 6}, eps_grid={"lo": 1e-4, "hi": 1e-1})
    path.write_text(json.dumps(doc))
    back = ScanConfig.from_json(str(path))
    assert len(back.E_grid) == 6 and len(back.eps_grid) == 10


@pytest.mark.parametrize("eps", [0.3, 0.01, 1e-3, 3.7e-4])
def test_epsk_free_case(eps):
    k, acc = epsk_policy(config(lam=0.0), 0.0, [0.0], eps)
    assert k == math.floor(1 / (2 * eps))
    assert acc.eps_k >= eps > 1 / (2 * (k + 1))


def test_epsk_bracket_amo():
    cfg = config(lam=0.05)
    k, acc = epsk_policy(cfg, 0.0, [0.0], 1e-3)
    sc = cfg.cocycle(0.0)
    th = np.array([GOLDEN])
    nxt = accumulate_Pk(sc, th, k + 1)
    assert accumulate_Pk(sc, th, k).eps_k >= 1e-3 > nxt.eps_k
    assert acc.k == k


def test_spectrum_edges_free():
    lo, hi = spectrum_edges(AnalyticTorusFunction.cosine_potential(1), 0.0, [GOLDEN], [0.0])
    assert -2 < lo < -2 + 1e-5 and 2 - 1e-5 < hi < 2


def test_energy_grid_contains_edges():
    cfg = config(d=2)
    grid = scan_energy_grid(cfg, n=20)
    lo, hi = spectrum_edges(cfg.potential, cfg.lam, cfg.alpha, cfg.theta)
    assert len(grid) == 20 and grid[0] == lo and grid[-1] == hi
    assert np.all(np.diff(grid) > 0)


def test_case1_out_of_spectrum():
    row = modulus_estimate(config(lam=0.05), 3.0, 0.1)
    assert row.case == 1 and row.mu_mass == 0.0 and row.chain_ok


def test_free_center_mass_against_arcsine():
    eps = 1e-3
    row = modulus_estimate(config(lam=0.0, L_oracle=20_000), 0.0, eps)
    # density of mu_{d0} + mu_{d1} at E is 2 / (pi sqrt(4 - E^2)) per unit
    exact = 2 * (2 / math.pi) * (math.asin(eps / 2))
    # a window holding ~13 eigenvalues: the discrete sum is good to a few percent
    assert abs(row.mu_mass - exact) < 0.05 * exact
    assert row.sqrt_bound_ratio < 1 and row.chain_ok and row.case == 0


def test_case2_gap_energy():
    cfg = config(lam=0.05, d=2)
    lo, _ = spectrum_edges(cfg.potential, cfg.lam, cfg.alpha, cfg.theta)
    row = modulus_estimate(cfg, lo - 0.01, 0.05)
    assert row.case == 2 and row.shifted_mass >= row.mu_mass and row.chain_ok


@settings(max_examples=10, deadline=None)
@given(st.floats(-2.2, 2.2), st.floats(1e-3, 0.1))
def test_doubling_never_decreases_mass(E, eps):
    sc = config(lam=0.05)
    op = TruncatedOperator(sc.potential, 0.05, sc.alpha, [0.0], 2000)
    m1 = spectral_measure(op, (E - eps, E + eps)).mass
    m2 = spectral_measure(op, (E - 2 * eps, E + 2 * eps)).mass
    assert m2 >= m1 - 1e-12


def test_free_scan_spread():
    cfg = config(lam=0.0, E_grid=[-2.0, -1.0, 0.0, 1.5, 2.0], eps_grid=log_grid(1e-3, 1e-1, 3))
    rep = holder_scan(cfg)
    s = rep.summary
    assert s["finite"] and s["spread"] <= 4 and s["chain_violations"] == 0
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("theta,E,eps,mu_mass") and len(lines) == 1 + 5 * 7
    assert json.loads(rep.to_json())["rows"] == 35


def test_phase_robustness_small():
    cfg = config(lam=0.05, E_grid=[-1.0, 0.0, 1.0], eps_grid=log_grid(1e-2, 1e-1, 1))
    reps, ratio = phase_robustness(cfg, [[0.0], [0.3]])
    assert len(reps) == 2 and 1 <= ratio < 2


def test_lemma_P_free():
    rep = lemma_P_check(config(lam=0.0), 0.0, k_list=[10, 100, 1000])
    assert np.allclose(rep.ratios, np.array([10, 100, 1000.0]) ** -2)
    assert rep.slope == pytest.approx(-2)


def test_lemma_P_amo_plateau():
    rep = lemma_P_check(config(lam=0.05), 0.0)
    assert not rep.skipped and rep.slope <= 0.1 and np.isfinite(rep.sup)


def test_lemma_P_skips_gap():
    rep = lemma_P_check(config(lam=0.05), 3.0)
    assert rep.skipped and "outside" in rep.note


def test_lemma_P_kam_cross_check():
    rep = lemma_P_check(config(lam=0.05, d=2), 0.3, k_list=[10, 100], kam_k=(10, 100))
    assert rep.kam["upper_ok"] and rep.kam["lower_ok"]


def test_edge_exponent_free():
    slope, masses = edge_exponent(eps_grid=log_grid(1e-3, 1e-1, 2))
    assert abs(slope - 0.5) < 0.05 and np.all(np.diff(masses) > 0)
