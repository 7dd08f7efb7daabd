import json
import math
import warnings

import numpy as np
from hypothesis import given, settings, strategies as st

from qpholder import mat2
from qpholder.torus import (AnalyticTorusFunction, DiophantineCertificate, DiophantineFailure,
                            FrequencyVector, TruncationWarning, check_diophantine, evaluate,
                            exp_sl2, lattice_ball, norm_r, truncate)

from conftest import ALPHA2, GOLDEN


def cos1():
    return AnalyticTorusFunction.cosine_potential(1)


def random_series(rng, d, deg, value_class="sl2R", scale=1.0):
    keys = lattice_ball(d, deg)
    half = keys[: (len(keys) + 1) // 2]
    coeffs = {}
    for n in half:
        a, b, c = rng.normal(size=3) + 1j * rng.normal(size=3)
        m = np.array([[a, b], [c, -a]]) * scale
        if not np.any(n):
            m = m.real.astype(complex)
        coeffs[tuple(n)] = m
        coeffs[tuple(-n)] = np.conj(m)
    ks = np.array(list(coeffs), dtype=np.int64).reshape(-1, d)
    return AnalyticTorusFunction(d, ks, np.array(list(coeffs.values())), value_class)


def test_evaluate_constant_identity():
    f = AnalyticTorusFunction.constant(np.eye(2), 2)
    assert np.allclose(evaluate(f, [0.3, 0.7]), np.eye(2))


def test_evaluate_cosine_real_and_complex():
    f = cos1()
    assert np.allclose(evaluate(f, 0.0), np.eye(2))
    r = 0.07
    assert np.allclose(evaluate(f, 0.0, r), math.cosh(2 * math.pi * r) * np.eye(2))


@given(st.floats(0, 1), st.floats(-0.2, 0.2))
def test_evaluate_cosine_matches_complex_cos(x, y):
    val = evaluate(cos1(), x, y)[0, 0]
    assert abs(val - np.cos(2 * np.pi * complex(x, y))) < 1e-12


def test_norm_r_values():
    assert norm_r(AnalyticTorusFunction.zero(1), 0.3) == 0.0
    M = np.array([[2.0, 1.0], [0.0, 0.5]])
    assert abs(norm_r(AnalyticTorusFunction.constant(M, 2), 0.2) - mat2.opnorm(M)) < 1e-12
    for r in (0.0, 0.01, 0.1, 0.3):
        assert abs(norm_r(cos1(), r, grid=512) - math.cosh(2 * math.pi * r)) < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.1))
def test_norm_r_submultiplicative(seed, r):
    rng = np.random.default_rng(seed)
    f = random_series(rng, 1, 2, scale=0.3)
    g = random_series(rng, 1, 3, scale=0.3)
    assert norm_r(f @ g, r) <= norm_r(f, r) * norm_r(g, r) * (1 + 1e-9)
    assert norm_r(f, r) <= f.weighted_sum(r) * (1 + 1e-12)


def test_truncate():
    f = random_series(np.random.default_rng(1), 1, 3)
    g = truncate(f, 5)
    assert np.array_equal(g.keys, f.keys) and np.allclose(g.coeffs, f.coeffs)
    h = truncate(f, 0)
    assert h.keys.tolist() == [[0]]
    assert np.allclose(h.coeffs[0], f.coeff((0,)))


def test_product_is_pointwise(rng):
    f = random_series(rng, 2, 2)
    g = random_series(rng, 2, 1)
    pts = rng.random((10, 2))
    assert np.allclose((f @ g)(pts), f(pts) @ g(pts), atol=1e-12)


def test_shift(rng):
    f = random_series(rng, 2, 2)
    a = np.array(ALPHA2)
    pts = rng.random((5, 2))
    assert np.allclose(f.shifted(a)(pts), f(pts + a))


def test_diophantine_rational_fails_at_two():
    out = check_diophantine(FrequencyVector([0.5]), 0.01, 1.5, 10)
    assert isinstance(out, DiophantineFailure) and not out
    assert out.n == (2,) and out.small_divisor == 0.0


def test_diophantine_golden_mean():
    cert = check_diophantine(FrequencyVector([GOLDEN]), 0.25, 1.5, 10_000)
    assert isinstance(cert, DiophantineCertificate) and cert
    assert cert.worst_ratio > 1


def test_diophantine_two_frequencies():
    cert = check_diophantine(FrequencyVector(ALPHA2), 0.05, 2.5, 200, norm="l2")
    assert cert and cert.checked_radius == 200


def test_diophantine_witness_is_a_violation():
    out = check_diophantine(FrequencyVector(ALPHA2), 0.5, 1.5, 20)
    assert not out
    n = np.array(out.n)
    div = abs(n @ np.array(ALPHA2) - round(n @ np.array(ALPHA2)))
    assert div <= 0.5 / np.linalg.norm(n) ** 1.5


def test_exp_nilpotent_exact():
    V = cos1()
    c = np.zeros((len(V), 2, 2), dtype=complex)
    c[:, 1, 0] = 0.05 * V.scalar_coeffs()
    f = AnalyticTorusFunction(1, V.keys, c, "sl2R")
    e = exp_sl2(f)
    pts = np.linspace(0, 1, 17)[:, None]
    assert np.array_equal(e(pts), np.eye(2) + f(pts))


def test_exp_zero_is_identity():
    e = exp_sl2(AnalyticTorusFunction.zero(2))
    assert np.allclose(e((0.1, 0.2)), np.eye(2))


def test_exp_small_series(rng):
    f = random_series(rng, 2, 2)
    f = f.scale(1e-3 / norm_r(f, 0.0))
    e = exp_sl2(f)
    rem = e - f - AnalyticTorusFunction.constant(np.eye(2), 2)
    assert norm_r(rem, 0.0) <= 1e-6
    pts = rng.random((8, 2))
    assert np.allclose(e(pts), mat2.expm_traceless(f(pts)), atol=1e-14)


def test_exp_warns_on_short_reexpansion(rng):
    f = random_series(rng, 1, 2, scale=3.0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        exp_sl2(f, order=1)
    assert any(issubclass(w.category, TruncationWarning) for w in caught)


def test_json_round_trip(rng):
    f = random_series(rng, 2, 2)
    g = AnalyticTorusFunction.from_json(json.dumps(json.loads(f.to_json())))
    assert np.array_equal(g.keys, f.keys) and np.allclose(g.coeffs, f.coeffs)
    assert g.value_class == f.value_class


def test_immutable():
    f = cos1()
    try:
        f.d = 3
    except AttributeError:
        pass
    else:
        raise AssertionError("mutation allowed")


def test_lattice_ball_order():
    pts = lattice_ball(2, 2)
    assert len(pts) == 25 and pts[0].tolist() == [0, 0]
    size = np.max(np.abs(pts), axis=1)
    assert np.all(np.diff(size) >= 0)
