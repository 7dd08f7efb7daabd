"""Compiled inner loops over orbits of 2x2 matrices."""

import math

import numpy as np
from numba import njit

RENORM_EVERY = 32


@njit(cache=True)
def product(mats):
    """mats[n-1] @ ... @ mats[0]."""
    a, b, c, d = mats.dtype.type(1), mats.dtype.type(0), mats.dtype.type(0), mats.dtype.type(1)
    for j in range(mats.shape[0]):
        m = mats[j]
        a, b, c, d = (m[0, 0] * a + m[0, 1] * c, m[0, 0] * b + m[0, 1] * d,
                      m[1, 0] * a + m[1, 1] * c, m[1, 0] * b + m[1, 1] * d)
    out = np.empty((2, 2), dtype=mats.dtype)
    out[0, 0], out[0, 1], out[1, 0], out[1, 1] = a, b, c, d
    return out


@njit(cache=True)
def log_norm_growth(mats, every):
    """log ||mats[n-1] ... mats[0]|| with periodic renormalization of the frame."""
    a, b, c, d = 1.0 + 0j, 0j, 0j, 1.0 + 0j
    acc = 0.0
    n = mats.shape[0]
    for j in range(n):
        m = mats[j]
        a, b, c, d = (m[0, 0] * a + m[0, 1] * c, m[0, 0] * b + m[0, 1] * d,
                      m[1, 0] * a + m[1, 1] * c, m[1, 0] * b + m[1, 1] * d)
        if (j + 1) % every == 0 or j == n - 1:
            s = math.sqrt(abs(a) ** 2 + abs(b) ** 2 + abs(c) ** 2 + abs(d) ** 2)
            acc += math.log(s)
            a, b, c, d = a / s, b / s, c / s, d / s
    # convert the final Frobenius normalization into the operator norm
    fro2 = abs(a) ** 2 + abs(b) ** 2 + abs(c) ** 2 + abs(d) ** 2
    det2 = abs(a * d - b * c) ** 2
    op = math.sqrt(0.5 * (fro2 + math.sqrt(max(fro2 * fro2 - 4 * det2, 0.0))))
    return acc + math.log(op)


@njit(cache=True)
def schrodinger_log_growth(energy, pot, every):
    """Same as log_norm_growth for S = [[E - v, -1], [1, 0]] without materializing matrices."""
    a, b, c, d = 1.0, 0.0, 0.0, 1.0
    acc = 0.0
    n = pot.shape[0]
    for j in range(n):
        t = energy - pot[j]
        a, b, c, d = t * a - c, t * b - d, a, b
        if (j + 1) % every == 0 or j == n - 1:
            s = math.sqrt(a * a + b * b + c * c + d * d)
            acc += math.log(s)
            a, b, c, d = a / s, b / s, c / s, d / s
    fro2 = a * a + b * b + c * c + d * d
    det2 = (a * d - b * c) ** 2
    op = math.sqrt(0.5 * (fro2 + math.sqrt(max(fro2 * fro2 - 4 * det2, 0.0))))
    return acc + math.log(op)


@njit(cache=True)
def rotation_lift(mats, psis, x0, y0):
    """Accumulated lifted angle of v under mats[0], mats[1], ...

    Each step splits A = R_psi P (polar form, P positive definite); the
    increment is psi plus the angle from v to P v, which lies in (-pi/2, pi/2).
    ``psis`` holds the lifted polar angles (any branch of atan2(c - b, a + d)).
    Returns the total and the total after the first half of the steps.
    """
    x, y = x0, y0
    total = 0.0
    half_total = 0.0
    n = mats.shape[0]
    for j in range(n):
        a, b, c, d = mats[j, 0, 0], mats[j, 0, 1], mats[j, 1, 0], mats[j, 1, 1]
        psi = psis[j]
        cp, sp = math.cos(psi), math.sin(psi)
        wx, wy = a * x + b * y, c * x + d * y
        px, py = cp * wx + sp * wy, -sp * wx + cp * wy
        total += psi + math.atan2(x * py - y * px, x * px + y * py)
        nrm = math.hypot(wx, wy)
        x, y = wx / nrm, wy / nrm
        if j + 1 == n // 2:
            half_total = total
    return total, half_total


@njit(cache=True)
def schrodinger_rotation_lift(energy, pot, x0, y0):
    x, y = x0, y0
    total = 0.0
    half_total = 0.0
    n = pot.shape[0]
    for j in range(n):
        t = energy - pot[j]
        psi = math.atan2(2.0, t)
        cp, sp = math.cos(psi), math.sin(psi)
        wx, wy = t * x - y, x
        px, py = cp * wx + sp * wy, -sp * wx + cp * wy
        total += psi + math.atan2(x * py - y * px, x * px + y * py)
        nrm = math.hypot(wx, wy)
        x, y = wx / nrm, wy / nrm
        if j + 1 == n // 2:
            half_total = total
    return total, half_total


@njit(cache=True)
def odd_gram_sums(mats, k):
    """P_j = sum_{i<=j} A_{2i-1}^* A_{2i-1} for j = 1..k with A_m = mats[m-1]...mats[0].

    ``mats`` must be complex128.  Returns an array (k, 2, 2) of the running
    sums.  Needs 2k-1 matrices.
    """
    out = np.zeros((k, 2, 2), dtype=np.complex128)
    a, b, c, d = 1.0 + 0j, 0j, 0j, 1.0 + 0j
    p00, p01, p11 = 0.0, 0j, 0.0
    for m in range(1, 2 * k):
        g = mats[m - 1]
        a, b, c, d = (g[0, 0] * a + g[0, 1] * c, g[0, 0] * b + g[0, 1] * d,
                      g[1, 0] * a + g[1, 1] * c, g[1, 0] * b + g[1, 1] * d)
        if m % 2 == 1:
            j = (m - 1) // 2
            p00 += abs(a) ** 2 + abs(c) ** 2
            p11 += abs(b) ** 2 + abs(d) ** 2
            p01 += np.conj(a) * b + np.conj(c) * d
            out[j, 0, 0] = p00
            out[j, 0, 1] = p01
            out[j, 1, 0] = np.conj(p01)
            out[j, 1, 1] = p11
    return out


@njit(cache=True)
def schrodinger_odd_gram_sums(energy, pot, k):
    """odd_gram_sums specialised to real Schrodinger matrices built from ``pot``."""
    out = np.zeros((k, 2, 2))
    a, b, c, d = 1.0, 0.0, 0.0, 1.0
    p00, p01, p11 = 0.0, 0.0, 0.0
    for m in range(1, 2 * k):
        t = energy - pot[m - 1]
        a, b, c, d = t * a - c, t * b - d, a, b
        if m % 2 == 1:
            j = (m - 1) // 2
            p00 += a * a + c * c
            p11 += b * b + d * d
            p01 += a * b + c * d
            out[j, 0, 0] = p00
            out[j, 0, 1] = p01
            out[j, 1, 0] = p01
            out[j, 1, 1] = p11
    return out


@njit(cache=True)
def solution_norms(energy, pot, u1, u0, n):
    """sum_{m=1}^{n} |u_m|^2 for (u_{m+1}, u_m) = S(pot[m-1]) (u_m, u_{m-1})."""
    acc = u1 * u1
    prev, cur = u0, u1
    for m in range(1, n):
        nxt = (energy - pot[m - 1]) * cur - prev
        prev, cur = cur, nxt
        acc += cur * cur
    return acc


@njit(cache=True)
def sturm_count(diag, energy):
    """Number of eigenvalues below ``energy`` of the Jacobi matrix with unit
    off-diagonals, from the signs of the LDL^T pivots of H - energy."""
    count = 0
    piv = 1.0
    for i in range(diag.shape[0]):
        piv = diag[i] - energy - (1.0 / piv if i > 0 else 0.0)
        if piv == 0.0:
            piv = -1e-300
        if piv < 0.0:
            count += 1
    return count


@njit(cache=True)
def riccati_right(diag, z):
    """q_{n-1} = -1/(z - v_n + q_n) from q_last = 0 down to the first site.

    ``diag`` holds v_1, ..., v_L; returns q_0.
    """
    q = 0j
    for i in range(diag.shape[0] - 1, -1, -1):
        q = -1.0 / (z - diag[i] + q)
    return q


@njit(cache=True)
def riccati_left(diag, z):
    """g_n = z - v_n - 1/g_{n-1} from the left boundary; ``diag`` holds
    v_{-L}, ..., v_0 and the return value is g_0."""
    g = z - diag[0]
    for i in range(1, diag.shape[0]):
        g = z - diag[i] - 1.0 / g
    return g


@njit(cache=True)
def pinned_green(diag, energies):
    """Green function s = <d_last, (H_half - E)^{-1} d_last> of the half-line
    block whose sites are listed in ``diag`` from the free end toward the pinned
    site, together with ds/dE, for each real energy.

    Recursion: s_n = 1 / (v_n - E - s_{n-1}), ds_n = s_n^2 (1 + ds_{n-1}).
    Energies are the inner loop so the divisions pipeline.
    """
    m = energies.shape[0]
    s = np.zeros(m)
    ds = np.zeros(m)
    for i in range(diag.shape[0]):
        v = diag[i]
        for e in range(m):
            den = v - energies[e] - s[e]
            if den == 0.0:
                den = 1e-300
            q = 1.0 / den
            s[e] = q
            ds[e] = min(q * q * (1.0 + ds[e]), 1e300)
    return s, ds


@njit(cache=True)
def bisect_eigenvalues(diag, lo, hi, tol):
    """All eigenvalues in (lo, hi] of the unit off-diagonal Jacobi matrix, by
    simultaneous Sturm bisection (one lane per eigenvalue index)."""
    n_lo = sturm_count(diag, lo)
    n_hi = sturm_count(diag, hi)
    k = n_hi - n_lo
    a = np.full(k, lo)
    b = np.full(k, hi)
    target = np.arange(n_lo, n_hi)
    mid = np.empty(k)
    piv = np.empty(k)
    cnt = np.empty(k, dtype=np.int64)
    if k == 0:
        return a
    while np.max(b - a) > tol:
        for e in range(k):
            mid[e] = 0.5 * (a[e] + b[e])
            piv[e] = 1.0
            cnt[e] = 0
        for i in range(diag.shape[0]):
            v = diag[i]
            for e in range(k):
                p = v - mid[e] - (1.0 / piv[e] if i > 0 else 0.0)
                if p == 0.0:
                    p = -1e-300
                piv[e] = p
                if p < 0.0:
                    cnt[e] += 1
        for e in range(k):
            # cnt = #eigenvalues below mid; eigenvalue number target[e] lies above mid iff cnt <= target
            if cnt[e] <= target[e]:
                a[e] = mid[e]
            else:
                b[e] = mid[e]
    return 0.5 * (a + b)
