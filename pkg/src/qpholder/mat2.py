"""Vectorized helpers for 2x2 matrices.

Every function accepts arrays of shape ``(..., 2, 2)`` and works elementwise
over the leading axes.
"""

import numpy as np

__all__ = [
    "det",
    "opnorm",
    "min_singular",
    "inv_sl2",
    "expm_traceless",
    "logm_sl2",
    "rotation",
    "sl2_to_vec",
    "vec_to_sl2",
    "SL2_BASIS",
]

# basis of sl(2): H, E, F
SL2_BASIS = np.array([[[1.0, 0.0], [0.0, -1.0]],
                      [[0.0, 1.0], [0.0, 0.0]],
                      [[0.0, 0.0], [1.0, 0.0]]])


def det(a):
    return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]


def _sv_parts(a):
    fro2 = np.sum(np.abs(a) ** 2, axis=(-2, -1))
    d2 = np.abs(det(a)) ** 2
    disc = np.sqrt(np.maximum(fro2 * fro2 - 4.0 * d2, 0.0))
    return fro2, d2, disc


def opnorm(a):
    """Largest singular value."""
    fro2, _, disc = _sv_parts(np.asarray(a))
    return np.sqrt(0.5 * (fro2 + disc))


def min_singular(a):
    """Smallest singular value, computed as |det| / opnorm to avoid cancellation."""
    a = np.asarray(a)
    top = opnorm(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.abs(det(a)) / top
    return np.where(top > 0, out, 0.0)


def inv_sl2(a):
    """Inverse of a determinant-one matrix (the adjugate)."""
    a = np.asarray(a)
    out = np.empty_like(a)
    out[..., 0, 0] = a[..., 1, 1]
    out[..., 1, 1] = a[..., 0, 0]
    out[..., 0, 1] = -a[..., 0, 1]
    out[..., 1, 0] = -a[..., 1, 0]
    return out


def _cosh_sinhc(q):
    # cosh(sqrt(q)) and sinh(sqrt(q))/sqrt(q); both even in sqrt(q)
    q = np.asarray(q, dtype=complex)
    s = np.sqrt(q)
    small = np.abs(q) < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        c0 = np.where(small, 1 + q / 2 + q * q / 24, np.cosh(s))
        c1 = np.where(small, 1 + q / 6 + q * q / 120, np.sinh(s) / np.where(small, 1.0, s))
    return c0, c1


def expm_traceless(x):
    """Exponential of trace-free matrices: cosh(s) I + sinh(s)/s X, s^2 = -det X."""
    x = np.asarray(x)
    c0, c1 = _cosh_sinhc(-det(x))
    out = c1[..., None, None] * x
    out[..., 0, 0] += c0
    out[..., 1, 1] += c0
    if not np.iscomplexobj(x):
        out = out.real
    return out


def logm_sl2(m):
    """Principal logarithm of determinant-one matrices with trace > -2.

    Uses X = (s / sinh s) (M - tr(M)/2 I) with cosh s = tr(M)/2.
    """
    m = np.asarray(m)
    half_tr = 0.5 * (m[..., 0, 0] + m[..., 1, 1])
    s = np.arccosh(np.asarray(half_tr, dtype=complex))
    small = np.abs(s) < 1e-4
    s2 = s * s
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(small, 1 - s2 / 6 + 7 * s2 * s2 / 360,
                         s / np.sinh(np.where(small, 1.0, s)))
    trfree = np.array(m, dtype=complex)
    trfree[..., 0, 0] -= half_tr
    trfree[..., 1, 1] -= half_tr
    out = ratio[..., None, None] * trfree
    if not np.iscomplexobj(m):
        out = out.real
    return out


def rotation(turns):
    """R_t = [[cos 2 pi t, -sin 2 pi t], [sin 2 pi t, cos 2 pi t]]."""
    t = 2 * np.pi * np.asarray(turns, dtype=float)
    c, s = np.cos(t), np.sin(t)
    out = np.empty(t.shape + (2, 2))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def sl2_to_vec(x):
    """Coordinates of trace-free matrices in the (H, E, F) basis."""
    x = np.asarray(x)
    return np.stack([0.5 * (x[..., 0, 0] - x[..., 1, 1]), x[..., 0, 1], x[..., 1, 0]], axis=-1)


def vec_to_sl2(v):
    v = np.asarray(v)
    out = np.zeros(v.shape[:-1] + (2, 2), dtype=v.dtype)
    out[..., 0, 0] = v[..., 0]
    out[..., 1, 1] = -v[..., 0]
    out[..., 0, 1] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    return out
