"""Finite Fourier series on the d-torus and Diophantine frequency checks.

A function is stored as a sparse, lexicographically sorted map from lattice
points ``n`` to complex 2x2 matrices; scalar functions are embedded as
multiples of the identity.  All objects are immutable.
"""

import itertools
import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import mat2

__all__ = [
    "VALUE_CLASSES",
    "FrequencyVector",
    "DiophantineCertificate",
    "DiophantineFailure",
    "AnalyticTorusFunction",
    "TruncationWarning",
    "evaluate",
    "norm_r",
    "truncate",
    "check_diophantine",
    "exp_sl2",
    "lattice_ball",
    "lattice_norm",
    "dist_to_int",
]

VALUE_CLASSES = ("real-scalar", "sl2R", "SL2R", "sl2C", "SL2C")
_REAL = {"real-scalar", "sl2R", "SL2R"}
_TRACE_FREE = {"sl2R", "sl2C"}
_GROUP = {"SL2R", "SL2C"}


class TruncationWarning(UserWarning):
    """Re-expansion of a pointwise operation left a tail above tolerance."""


def dist_to_int(x):
    """|x|_{R/Z}: distance to the nearest integer."""
    x = np.asarray(x, dtype=float)
    return np.abs(x - np.rint(x))


def lattice_ball(d, N, include_zero=True):
    """All n in Z^d with max_i |n_i| <= N, sorted by (|n|, lexicographic)."""
    rng = np.arange(-N, N + 1)
    pts = np.array(list(itertools.product(rng, repeat=d)), dtype=np.int64).reshape(-1, d)
    if not include_zero:
        pts = pts[np.any(pts != 0, axis=1)]
    size = np.max(np.abs(pts), axis=1) if len(pts) else np.zeros(0, dtype=np.int64)
    order = np.lexsort(tuple(pts[:, i] for i in range(d - 1, -1, -1)) + (size,))
    return pts[order]


@dataclass(frozen=True)
class FrequencyVector:
    alpha: tuple

    def __post_init__(self):
        a = tuple(float(x) % 1.0 for x in np.atleast_1d(self.alpha))
        if len(a) < 1:
            raise ValueError("frequency vector needs d >= 1")
        object.__setattr__(self, "alpha", a)

    @property
    def d(self):
        return len(self.alpha)

    @property
    def array(self):
        return np.array(self.alpha)

    def is_rationally_independent(self, N=50, tol=1e-12):
        """Heuristic: no 0 < |n| <= N with <n, alpha> within tol of an integer."""
        pts = lattice_ball(self.d, N, include_zero=False)
        return bool(np.all(dist_to_int(pts @ self.array) > tol))


@dataclass(frozen=True)
class DiophantineCertificate:
    kappa: float
    tau: float
    checked_radius: int
    worst_ratio: float
    worst_n: tuple = ()
    norm: str = "l2"


@dataclass(frozen=True)
class DiophantineFailure:
    """Witness that the Diophantine inequality fails at lattice point ``n``."""
    n: tuple
    small_divisor: float
    kappa: float
    tau: float

    def __bool__(self):
        return False


def check_diophantine(alpha, kappa, tau, N_check, norm="l2"):
    """Scan the sup-norm ball 0 < max|n_i| <= N_check for
    |<n, alpha>|_{R/Z} > kappa / |n|^tau.

    ``norm`` selects the |n| entering the inequality ("l2", "sup" or "l1");
    the enumerated region is always the sup-norm ball.  Returns a
    :class:`DiophantineCertificate`, or a :class:`DiophantineFailure` carrying
    the worst violating lattice point (smallest ratio, then smallest |n|).
    """
    if not isinstance(alpha, FrequencyVector):
        alpha = FrequencyVector(alpha)
    d = alpha.d
    if kappa <= 0 or tau <= d - 1:
        raise ValueError("need kappa > 0 and tau > d - 1")
    pts = lattice_ball(d, int(N_check), include_zero=False)
    # n and -n give the same divisor; keep the half whose first nonzero entry is positive
    first = np.array([row[np.flatnonzero(row)[0]] for row in pts]) if d > 1 else pts[:, 0]
    pts = pts[first > 0]
    size = lattice_norm(pts, norm)
    div = dist_to_int(pts @ alpha.array)
    ratio = div * size ** tau / kappa
    i = int(np.argmin(ratio))  # pts sorted by |n|, argmin picks the first minimizer
    if ratio[i] <= 1.0:
        return DiophantineFailure(tuple(int(v) for v in pts[i]), float(div[i]), kappa, tau)
    return DiophantineCertificate(kappa, tau, int(N_check), float(ratio[i]),
                                  tuple(int(v) for v in pts[i]), norm)


def lattice_norm(pts, norm="l2"):
    pts = np.asarray(pts, dtype=float)
    if norm == "l2":
        return np.sqrt(np.sum(pts * pts, axis=-1))
    if norm == "sup":
        return np.max(np.abs(pts), axis=-1)
    if norm == "l1":
        return np.sum(np.abs(pts), axis=-1)
    raise ValueError(f"unknown lattice norm {norm!r}")


def _fft_index(keys, M):
    return tuple(np.mod(keys[:, i], M) for i in range(keys.shape[1]))


def _grid_size(degree, minimum=8):
    m = max(int(minimum), 2 * int(degree) + 2)
    return 1 << (m - 1).bit_length()


class AnalyticTorusFunction:
    """Finite Fourier series ``sum_n c_n exp(2 pi i <n, theta>)`` with 2x2 coefficients."""

    __slots__ = ("d", "keys", "coeffs", "value_class")

    def __init__(self, d, keys, coeffs, value_class="SL2C", check=True):
        if value_class not in VALUE_CLASSES:
            raise ValueError(f"unknown value class {value_class!r}")
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, d)
        coeffs = np.asarray(coeffs, dtype=complex).reshape(-1, 2, 2)
        if len(keys) != len(coeffs):
            raise ValueError("keys and coeffs differ in length")
        if len(keys):
            # merge duplicates and sort lexicographically
            uniq, inv = np.unique(keys, axis=0, return_inverse=True)
            inv = np.asarray(inv).reshape(-1)
            merged = np.zeros((len(uniq), 2, 2), dtype=complex)
            np.add.at(merged, inv, coeffs)
            keys, coeffs = uniq, merged
        keys.setflags(write=False)
        coeffs.setflags(write=False)
        object.__setattr__(self, "d", int(d))
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "value_class", value_class)
        if check:
            self._check_structure()

    def __setattr__(self, name, value):
        raise AttributeError("AnalyticTorusFunction is immutable")

    # ---------------------------------------------------------------- constructors
    @classmethod
    def zero(cls, d, value_class="sl2R"):
        return cls(d, np.zeros((0, d)), np.zeros((0, 2, 2)), value_class)

    @classmethod
    def constant(cls, matrix, d, value_class="SL2R"):
        return cls(d, np.zeros((1, d)), np.asarray(matrix, dtype=complex)[None], value_class)

    @classmethod
    def from_scalar(cls, d, coeffs, value_class="real-scalar"):
        """Scalar series from ``{n: c_n}``; coefficients are embedded as c_n * I."""
        keys = np.array([np.atleast_1d(n) for n in coeffs], dtype=np.int64).reshape(-1, d)
        vals = np.array([complex(c) for c in coeffs.values()])
        return cls(d, keys, vals[:, None, None] * np.eye(2), value_class)

    @classmethod
    def cosine_potential(cls, d, modes=None):
        """sum over the given modes of cos(2 pi <n, theta>); default: one per coordinate."""
        if modes is None:
            modes = [tuple(int(i == j) for i in range(d)) for j in range(d)]
        coeffs = {}
        for n in modes:
            n = tuple(int(v) for v in np.atleast_1d(n))
            m = tuple(-v for v in n)
            coeffs[n] = coeffs.get(n, 0) + 0.5
            coeffs[m] = coeffs.get(m, 0) + 0.5
        return cls.from_scalar(d, coeffs)

    @classmethod
    def from_grid(cls, values, value_class, max_degree=None, tol=0.0, real=None):
        """Fourier coefficients of samples on the uniform grid j/M (axes 0..d-1).

        The Nyquist index is dropped.  Coefficients with modulus <= tol are
        discarded, as are modes with |n| > max_degree.
        """
        values = np.asarray(values)
        d = values.ndim - 2
        M = values.shape[0]
        if real is None:
            real = value_class in _REAL
        if real:
            values = values.real
        c = np.fft.fftn(values, axes=tuple(range(d))) / M ** d
        freqs = np.fft.fftfreq(M, 1.0 / M).astype(np.int64)
        mesh = np.meshgrid(*([freqs] * d), indexing="ij")
        keys = np.stack([m.reshape(-1) for m in mesh], axis=1)
        c = c.reshape(-1, 2, 2)
        keep = np.all(np.abs(keys) < M // 2, axis=1)
        if max_degree is not None:
            keep &= np.max(np.abs(keys), axis=1) <= max_degree
        keep &= np.max(np.abs(c), axis=(1, 2)) > tol
        keys, c = keys[keep], c[keep]
        if real:
            # exact conjugate symmetry
            f = cls(d, keys, c, "SL2C", check=False)
            neg = f._coeffs_at(-keys)
            c = 0.5 * (c + neg.conj())
        if value_class in _TRACE_FREE:
            tr = 0.5 * (c[:, 0, 0] + c[:, 1, 1])
            c = c.copy()
            c[:, 0, 0] -= tr
            c[:, 1, 1] -= tr
        return cls(d, keys, c, value_class, check=False)

    # -------------------------------------------------------------------- basics
    @property
    def degree(self):
        if len(self.keys) == 0:
            return 0
        return int(np.max(np.abs(self.keys)))

    @property
    def is_scalar(self):
        return self.value_class == "real-scalar"

    def coeff(self, n):
        return self._coeffs_at(np.atleast_2d(np.asarray(n, dtype=np.int64)))[0]

    def _coeffs_at(self, pts):
        out = np.zeros((len(pts), 2, 2), dtype=complex)
        if len(self.keys) == 0 or len(pts) == 0:
            return out
        lookup = {tuple(k): i for i, k in enumerate(self.keys.tolist())}
        for j, p in enumerate(np.asarray(pts).tolist()):
            i = lookup.get(tuple(p))
            if i is not None:
                out[j] = self.coeffs[i]
        return out

    def scalar_coeffs(self):
        return self.coeffs[:, 0, 0]

    def items(self):
        for k, c in zip(self.keys, self.coeffs):
            yield tuple(int(v) for v in k), c

    def __len__(self):
        return len(self.keys)

    def __repr__(self):
        return (f"AnalyticTorusFunction(d={self.d}, value_class={self.value_class!r}, "
                f"terms={len(self)}, degree={self.degree})")

    def _check_structure(self, tol=1e-12):
        scale = max(1.0, float(np.max(np.abs(self.coeffs)))) if len(self) else 1.0
        if self.value_class in _REAL and len(self):
            neg = self._coeffs_at(-self.keys)
            if np.max(np.abs(neg - self.coeffs.conj())) > tol * scale:
                raise ValueError("real value class requires coeff(-n) = conj(coeff(n))")
        if self.value_class in _TRACE_FREE and len(self):
            if np.max(np.abs(self.coeffs[:, 0, 0] + self.coeffs[:, 1, 1])) > tol * scale:
                raise ValueError("sl2 value class requires trace-free coefficients")
        if self.is_scalar and len(self):
            c = self.coeffs
            off = np.abs(c[:, 0, 1]) + np.abs(c[:, 1, 0]) + np.abs(c[:, 0, 0] - c[:, 1, 1])
            if np.max(off) > tol * scale:
                raise ValueError("scalar class requires multiples of the identity")

    def validate(self, grid=32, tol=1e-10):
        """Full invariant check, including det = 1 on a sample grid for group classes."""
        self._check_structure()
        if self.value_class in _GROUP:
            vals = self.on_grid(max(grid, _grid_size(self.degree)))
            err = float(np.max(np.abs(mat2.det(vals) - 1.0)))
            if err > tol:
                raise ValueError(f"determinant deviates from 1 by {err:.2e}")
        return True

    # ----------------------------------------------------------------- evaluation
    def __call__(self, theta, imag_offset=None):
        """Values at points ``theta`` of shape (..., d); returns (..., 2, 2)."""
        theta = np.asarray(theta, dtype=float)
        if theta.ndim == 0:
            theta = theta.reshape(1)
        shape = theta.shape[:-1]
        pts = theta.reshape(-1, self.d)
        z = pts.astype(complex)
        if imag_offset is not None:
            z = z + 1j * np.broadcast_to(np.asarray(imag_offset, dtype=float), z.shape)
        out = np.zeros((len(pts), 2, 2), dtype=complex)
        if len(self):
            flat = self.coeffs.reshape(-1, 4)
            step = max(1, 2_000_000 // max(1, len(self)))
            for s in range(0, len(pts), step):
                ph = np.exp(2j * np.pi * (z[s:s + step] @ self.keys.T))
                out[s:s + step] = (ph @ flat).reshape(-1, 2, 2)
        out = out.reshape(shape + (2, 2))
        if self.value_class in _REAL and imag_offset is None:
            out = out.real
        return out

    def on_grid(self, M, imag_offset=None, shift=None):
        """Values on the uniform grid theta_j = j / M, shape (M,)*d + (2, 2).

        ``shift`` evaluates at theta_j + shift; ``imag_offset`` at theta_j + i*y.
        """
        if M <= 2 * self.degree:
            raise ValueError(f"grid {M} too coarse for degree {self.degree}")
        weights = np.ones(len(self), dtype=complex)
        if imag_offset is not None:
            y = np.broadcast_to(np.asarray(imag_offset, dtype=float), (self.d,))
            weights *= np.exp(-2 * np.pi * (self.keys @ y))
        if shift is not None:
            a = np.broadcast_to(np.asarray(shift, dtype=float), (self.d,))
            weights *= np.exp(2j * np.pi * (self.keys @ a))
        arr = np.zeros((M,) * self.d + (2, 2), dtype=complex)
        arr[_fft_index(self.keys, M)] = weights[:, None, None] * self.coeffs
        vals = np.fft.ifftn(arr, axes=tuple(range(self.d))) * M ** self.d
        if self.value_class in _REAL and imag_offset is None:
            vals = vals.real
        return vals

    # ----------------------------------------------------------------- arithmetic
    def _binary(self, other, sign):
        if isinstance(other, AnalyticTorusFunction):
            if other.d != self.d:
                raise ValueError("dimension mismatch")
            vc = self.value_class if self.value_class == other.value_class else _join(self, other)
            return AnalyticTorusFunction(self.d, np.concatenate([self.keys, other.keys]),
                                         np.concatenate([self.coeffs, sign * other.coeffs]), vc,
                                         check=False)
        return NotImplemented

    def __add__(self, other):
        return self._binary(other, 1)

    def __sub__(self, other):
        return self._binary(other, -1)

    def __neg__(self):
        return self.scale(-1)

    def scale(self, s, value_class=None):
        vc = value_class or (self.value_class if np.isrealobj(s) and self.value_class not in _GROUP
                             else "sl2C" if self.value_class in _TRACE_FREE else "SL2C")
        return AnalyticTorusFunction(self.d, self.keys, s * self.coeffs, vc, check=False)

    def __mul__(self, s):
        if np.isscalar(s):
            return self.scale(s)
        return NotImplemented

    __rmul__ = __mul__

    def __matmul__(self, other):
        """Pointwise matrix product (exact: computed on a grid fine enough for both degrees)."""
        if isinstance(other, AnalyticTorusFunction):
            deg = self.degree + other.degree
            M = _grid_size(deg)
            vals = self.on_grid(M) @ other.on_grid(M)
            vc = "SL2R" if {self.value_class, other.value_class} <= {"SL2R"} else "SL2C"
            return AnalyticTorusFunction.from_grid(vals, vc, max_degree=deg)
        mat = np.asarray(other, dtype=complex)
        return AnalyticTorusFunction(self.d, self.keys, self.coeffs @ mat,
                                     "SL2C" if self.value_class in _GROUP else self.value_class,
                                     check=False)

    def __rmatmul__(self, other):
        mat = np.asarray(other, dtype=complex)
        return AnalyticTorusFunction(self.d, self.keys, mat @ self.coeffs,
                                     "SL2C" if self.value_class in _GROUP else self.value_class,
                                     check=False)

    def shifted(self, alpha):
        """theta -> f(theta + alpha)."""
        a = np.broadcast_to(np.asarray(alpha, dtype=float), (self.d,))
        ph = np.exp(2j * np.pi * (self.keys @ a))
        return AnalyticTorusFunction(self.d, self.keys, ph[:, None, None] * self.coeffs,
                                     self.value_class, check=False)

    def with_class(self, value_class):
        return AnalyticTorusFunction(self.d, self.keys, self.coeffs, value_class)

    def coeff_norms(self):
        """Operator norm of every coefficient."""
        return mat2.opnorm(self.coeffs)

    def weighted_sum(self, r):
        """sum_n ||c_n|| exp(2 pi |n| r): an upper bound for ||f||_r."""
        if not len(self):
            return 0.0
        return float(np.sum(self.coeff_norms() * np.exp(2 * np.pi * np.max(np.abs(self.keys), axis=1) * r)))

    # --------------------------------------------------------------- serialization
    def to_dict(self):
        return {
            "d": self.d,
            "value_class": self.value_class,
            "coeffs": [{"n": [int(v) for v in k], "re": c.real.tolist(), "im": c.imag.tolist()}
                       for k, c in zip(self.keys, self.coeffs)],
        }

    @classmethod
    def from_dict(cls, doc):
        d = int(doc["d"])
        entries = doc["coeffs"]
        keys = np.array([e["n"] for e in entries], dtype=np.int64).reshape(-1, d)
        coeffs = np.array([np.asarray(e["re"]) + 1j * np.asarray(e.get("im", np.zeros((2, 2))))
                           for e in entries]).reshape(-1, 2, 2)
        return cls(d, keys, coeffs, doc.get("value_class", "SL2C"))

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _join(f, g):
    classes = {f.value_class, g.value_class}
    if classes <= _REAL - _GROUP:
        return "sl2R" if classes == {"sl2R"} else "real-scalar" if classes == {"real-scalar"} else "SL2C"
    if classes <= _TRACE_FREE:
        return "sl2C"
    return "SL2C"


def evaluate(f, theta, imag_offset=None):
    """f(theta + i * imag_offset) as a complex 2x2 matrix."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    off = None if imag_offset is None else np.atleast_1d(np.asarray(imag_offset, dtype=float))
    val = f(theta.reshape(1, f.d), imag_offset=off if off is not None else np.zeros(f.d))
    return np.asarray(val[0], dtype=complex)


def default_norm_grid(d):
    return int(min(512, max(64, 2 ** int(np.floor(21 / d)))))


def norm_r(f, r, grid=None):
    """Approximation of sup_{|Im theta| < r} ||f(theta)|| on the strip boundary.

    Takes the maximum of the operator norm over a uniform real grid and the 2^d
    extreme imaginary offsets (+-r per coordinate).
    """
    if grid is None:
        grid = default_norm_grid(f.d)
    if grid < 64:
        raise ValueError("norm grid must have at least 64 samples per dimension")
    if len(f) == 0:
        return 0.0
    M = max(int(grid), _grid_size(f.degree))
    best = 0.0
    signs = itertools.product((-1.0, 1.0), repeat=f.d) if r > 0 else [(0.0,) * f.d]
    for sg in signs:
        vals = f.on_grid(M, imag_offset=r * np.array(sg))
        best = max(best, float(np.max(mat2.opnorm(vals))))
    return best


def truncate(f, N):
    """Drop every coefficient with |n| > N (sup norm)."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    if len(f) == 0:
        return f
    keep = np.max(np.abs(f.keys), axis=1) <= N
    return AnalyticTorusFunction(f.d, f.keys[keep], f.coeffs[keep], f.value_class, check=False)


def exp_sl2(f, order=8, tol=1e-12):
    """Pointwise exponential of an sl2-valued series, re-expanded to degree order*deg(f).

    Pointwise nilpotent inputs are handled exactly: exp(f) = I + f.
    """
    if f.value_class not in _TRACE_FREE:
        raise ValueError("exp_sl2 needs an sl2R or sl2C valued function")
    group = "SL2R" if f.value_class == "sl2R" else "SL2C"
    ident = AnalyticTorusFunction.constant(np.eye(2), f.d, group)
    if len(f) == 0:
        return ident
    M = _grid_size(max(order, 1) * f.degree, minimum=16)
    vals = f.on_grid(M)
    scale = float(np.max(np.abs(vals)))
    if float(np.max(np.abs(mat2.det(vals)))) <= 1e-14 * max(scale, 1e-300) ** 2 * 4:
        return AnalyticTorusFunction(f.d, np.concatenate([ident.keys, f.keys]),
                                     np.concatenate([ident.coeffs, f.coeffs]), group, check=False)
    ev = mat2.expm_traceless(vals)
    out = AnalyticTorusFunction.from_grid(ev, group, max_degree=order * f.degree)
    resid = float(np.max(np.abs(out.on_grid(M) - ev)))
    if resid > tol:
        warnings.warn(f"exp_sl2 truncation residual {resid:.2e} exceeds {tol:.0e}",
                      TruncationWarning, stacklevel=2)
    return out
