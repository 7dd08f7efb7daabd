"""Odd power sums of upper-triangular unimodular matrices.

For T = [[e^{2 pi i g}, c], [0, e^{-2 pi i g}]] the sums
X_k = sum_{j=1}^k (T^{2j-1})^* T^{2j-1} have the form [[k, x1], [conj x1, x2]]
with geometric-sum closed forms.  This module evaluates them in O(1), checks the
two-case bounds on ||X_k|| and ||X_k^{-1}||^{-1}, the perturbation estimate for
cocycles close to T, and computes unitary Schur forms of SL(2,R) matrices.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels, mat2
from .torus import AnalyticTorusFunction, norm_r

__all__ = [
    "TriangularUnimodular",
    "SchurForm",
    "closed_form_Xk",
    "det_Xk_closed_form",
    "brute_force_Xk",
    "TwoCaseBounds",
    "xk_two_case_bounds",
    "PerturbationHypothesisError",
    "perturbed_sum_bound",
    "triangularize",
    "LOWER_CONSTANT",
    "UPPER_CONSTANT",
]

LOWER_CONSTANT = 1.0 / 1600.0
UPPER_CONSTANT = 800.0

# below these values of k*|a| the closed forms lose digits; use Taylor series instead
_X1_SWITCH = 1e-5
_X2_SWITCH = 1e-3


@dataclass(frozen=True)
class TriangularUnimodular:
    """T = [[e^{2 pi i gamma}, c], [0, e^{-2 pi i gamma}]]."""
    gamma: float
    c: complex

    def matrix(self):
        s = np.exp(2j * np.pi * float(self.gamma))
        return np.array([[s, self.c], [0, 1 / s]], dtype=complex)

    def reduced(self):
        """(sigma, a) with e^{2 pi i gamma} = sigma e^{i a}, sigma = +-1, a in [-pi/2, pi/2)."""
        two_g = 2.0 * float(self.gamma)
        n0 = np.floor(two_g + 0.5)
        delta = two_g - n0
        return (1.0 if int(n0) % 2 == 0 else -1.0), np.pi * delta


@dataclass(frozen=True)
class SchurForm:
    """U A U^{-1} = [[e^{i xi}, c], [0, e^{-i xi}]] with U unitary in SL(2,C)."""
    U: np.ndarray
    xi: complex
    c: complex

    def triangular(self):
        return np.array([[np.exp(1j * self.xi), self.c], [0, np.exp(-1j * self.xi)]])

    def as_unimodular(self):
        """The TriangularUnimodular with gamma = Re xi / 2 pi (drops Im xi)."""
        return TriangularUnimodular(float(np.real(self.xi)) / (2 * np.pi), complex(self.c))


def _dirichlet(n, y):
    """sin(n y) / sin(y), reducing y modulo pi first; n * |y'| tiny uses the series."""
    j = np.floor(y / np.pi + 0.5)
    yr = y - j * np.pi
    sign = -1.0 if (int(j) * (n - 1)) % 2 else 1.0
    if abs(n * yr) < 1e-4:
        return sign * n * (1.0 - (n * n - 1.0) * yr * yr / 6.0)
    return sign * np.sin(n * yr) / np.sin(yr)


def _odd_sums(k):
    k = float(k)
    s1 = k * k
    s2 = k * (4 * k * k - 1) / 3
    s3 = k * k * (2 * k * k - 1)
    s4 = k * (2 * k - 1) * (2 * k + 1) * (12 * k * k - 7) / 15
    return s1, s2, s3, s4


def _x1(T, k):
    sigma, a = T.reduced()
    c = complex(T.c)
    if k * abs(a) < _X1_SWITCH:
        # sum over odd m of e^{-i(m-1)a} sin(ma)/sin(a), to second order in a
        s1, s2, s3, _ = _odd_sums(k)
        first = s2 - s1
        second = 0.5 * (s3 - 2 * s2 + s1) + (s3 - s1) / 6.0
        series = s1 - 1j * a * first - a * a * second
        return c * sigma * np.exp(-1j * a) * series
    num = np.exp(-2j * k * a) * _dirichlet(k, 2 * a) - k
    return 1j * c * sigma * num / (2.0 * np.sin(a))


def _x2(T, k):
    _, a = T.reduced()
    c2 = abs(complex(T.c)) ** 2
    if k * abs(a) < _X2_SWITCH:
        _, s2, _, s4 = _odd_sums(k)
        return k + c2 * (s2 - a * a * (s4 - s2) / 3.0)
    S = (k - 0.5 * _dirichlet(2 * k, 2 * a)) / (2.0 * np.sin(a) ** 2)
    return k + c2 * S


def closed_form_Xk(T, k):
    """X_k = sum_{j<=k} (T^{2j-1})^* T^{2j-1} in closed form."""
    if k < 1:
        raise ValueError("k must be >= 1")
    k = int(k)
    x1 = complex(_x1(T, k))
    x2 = float(_x2(T, k))
    return np.array([[k, x1], [np.conj(x1), x2]], dtype=complex)


def det_Xk_closed_form(T, k):
    """k^2 (1 + |c|^2 / |e^{-4 pi i g} - 1|^2 (1 - (sin 4 pi k g / (k sin 4 pi g))^2))."""
    k = int(k)
    _, a = T.reduced()
    c2 = abs(complex(T.c)) ** 2
    if k * abs(a) < _X2_SWITCH:
        # (1 - (D/k)^2) / (4 sin^2 a) to order a^2, D = sin(2ka)/sin(2a)
        p = (k * k - 1.0) / 6.0
        q = (3.0 * k ** 4 - 10.0 * k * k + 7.0) / 360.0
        ratio = 2 * p + a * a * (2 * p / 3.0 - 4 * (p * p + 2 * q))
    else:
        r = _dirichlet(k, 2 * a) / k
        ratio = (1 - r) * (1 + r) / (4.0 * np.sin(a) ** 2)
    return float(k * k * (1 + c2 * ratio))


def brute_force_Xk(gammas, cs, ks):
    """Direct odd power sums in extended precision, batched over instances.

    Returns an array (len(gammas), 2, 2) of complex128.
    """
    g = np.atleast_1d(np.asarray(gammas, dtype=np.longdouble))
    c = np.atleast_1d(np.asarray(cs, dtype=np.clongdouble))
    ks = np.atleast_1d(np.asarray(ks, dtype=int))
    m = g.size
    s = np.exp(2j * np.pi * g.astype(np.clongdouble))
    T = np.zeros((m, 2, 2), dtype=np.clongdouble)
    T[:, 0, 0], T[:, 0, 1], T[:, 1, 1] = s, c, 1 / s
    T2 = T @ T
    P = T.copy()
    X = np.zeros_like(T)
    for j in range(1, int(ks.max()) + 1):
        live = (j <= ks)[:, None, None]
        X += np.where(live, np.conj(np.swapaxes(P, -1, -2)) @ P, 0)
        P = P @ T2
    return X.astype(complex)


@dataclass(frozen=True)
class TwoCaseBounds:
    lower: float
    upper: float
    case: int
    smallest_singular: float
    norm: float

    def __iter__(self):
        return iter((self.lower, self.upper))


def xk_two_case_bounds(T, k):
    """Bounds k/1600 <= ||X_k^{-1}||^{-1} and ||X_k|| <= 800 k (1 + k^2 |c|^2).

    ``case`` is 1 when k ||4 gamma|| >= 2/3 and 2 otherwise.  Raises
    AssertionError if either bound fails (they are theorems, so a failure
    points at a bug in the closed forms).
    """
    X = closed_form_Xk(T, k)
    lower = LOWER_CONSTANT * k
    upper = UPPER_CONSTANT * k * (1 + k * k * abs(T.c) ** 2)
    smin = float(mat2.min_singular(X))
    nrm = float(mat2.opnorm(X))
    four_g = 4.0 * float(T.gamma)
    case = 1 if k * abs(four_g - np.round(four_g)) >= 2.0 / 3.0 else 2
    assert smin >= lower * (1 - 1e-12), f"lower bound fails: {smin} < {lower}"
    assert nrm <= upper * (1 + 1e-12), f"upper bound fails: {nrm} > {upper}"
    return TwoCaseBounds(lower, upper, case, smin, nrm)


class PerturbationHypothesisError(ValueError):
    """||T~ - T||_0 exceeds (1/100) k^-2 (1 + 2|c|k)^-2."""


def perturbed_sum_bound(T, T_tilde, k, alpha, grid=16, check=True):
    """max over a phase grid of ||X~_k(theta) - X_k||.

    X~_k(theta) = sum_{j<=k} T~_{2j-1}(theta)^* T~_{2j-1}(theta) along the
    rotation by ``alpha``; T~ is an SL2C-valued AnalyticTorusFunction.
    """
    k = int(k)
    Tm = T.matrix()
    threshold = 0.01 / (k * k * (1 + 2 * abs(T.c) * k) ** 2)
    diff = T_tilde - AnalyticTorusFunction.constant(Tm, T_tilde.d, "SL2C")
    dist = norm_r(diff, 0.0, grid=max(64, 2 * diff.degree + 2))
    if check and dist > threshold * (1 + 1e-9):
        raise PerturbationHypothesisError(f"||T~ - T||_0 = {dist:.3e} exceeds {threshold:.3e}")
    alpha = np.asarray(getattr(alpha, "array", alpha), dtype=float)
    d = T_tilde.d
    Xk = closed_form_Xk(T, k)
    axes = [np.arange(grid) / grid] * d
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    steps = np.arange(2 * k - 1, dtype=float)
    worst = 0.0
    for th in pts:
        mats = np.ascontiguousarray(T_tilde(th[None, :] + steps[:, None] * alpha[None, :]), dtype=complex)
        Xt = _kernels.odd_gram_sums(mats, k)[-1]
        worst = max(worst, float(mat2.opnorm(Xt - Xk)))
    return worst


def _eigvec(A, lam, disc):
    a, b, c, d = A[0, 0], A[0, 1], A[1, 0], A[1, 1]
    h = 0.5 * (d - a)
    v1 = np.array([b, h + disc], dtype=complex)
    v2 = np.array([-h + disc, c], dtype=complex)
    v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
    n = np.linalg.norm(v)
    if n < 1e-300:
        return np.array([1.0, 0.0], dtype=complex)
    return v / n


def triangularize(A):
    """Unitary Schur form of a real determinant-one matrix.

    Convention: e^{i xi} is the eigenvalue of modulus >= 1; for elliptic A
    it is the one with argument in (0, pi].
    """
    A = np.asarray(A, dtype=float)
    tr = A[0, 0] + A[1, 1]
    # tr^2/4 - det written without the cancellation near tr = +-2
    d2 = 0.25 * (A[0, 0] - A[1, 1]) ** 2 + A[0, 1] * A[1, 0]
    disc = np.sqrt(complex(d2))
    l1, l2 = tr / 2 + disc, tr / 2 - disc
    # branch on the accurate discriminant; tr may round to +-2 for elliptic A
    if d2 < 0:
        pick = l1.imag > 0
    else:
        pick = abs(l1) >= abs(l2)
    lam = l1 if pick else l2
    if d2 >= 0:
        lam = complex(lam.real, 0.0)
    v = _eigvec(A, lam, disc if pick else -disc)
    p, q = v
    Uinv = np.array([[p, -np.conj(q)], [q, np.conj(p)]])
    U = np.conj(Uinv.T)
    tri = U @ A @ Uinv
    xi = -1j * np.log(lam)
    return SchurForm(U, complex(xi), complex(tri[0, 1]))
