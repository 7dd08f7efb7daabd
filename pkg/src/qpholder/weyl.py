"""Weyl-type bounds for the spectral measure.

P_k sums over odd transfer matrices, the scale eps_k, the variational
determinant over solutions, and truncated-operator oracles for the universal
spectral measure mu = mu_{delta_0} + mu_{delta_1}, its Borel transform and the
half-line m-functions.

Phase conventions: a solution starting from (u_1, u_0) is propagated by the
cocycle at phase ``theta``, i.e. site n carries lam V(theta + (n-1) alpha).
The matching operator with sites V(phi + n alpha) therefore has
phi = theta - alpha; :func:`prop21_chain` takes the operator phase and
shifts it internally.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal, solve_banded

from . import _kernels, mat2
from .cocycle import SchrodingerCocycle, _theta

__all__ = [
    "SaturationError",
    "WeylAccumulator",
    "accumulate_Pk",
    "Pk_series",
    "det_via_solutions",
    "TruncatedOperator",
    "SpectralMeasureEstimate",
    "spectral_measure",
    "borel_transform",
    "MFunctions",
    "m_functions",
    "Prop21Report",
    "prop21_chain",
    "CHAIN_CONSTANT",
    "ids_by_counting",
    "in_spectrum",
    "oracle_csv",
]

CHAIN_CONSTANT = 4.0 * (5.0 + np.sqrt(24.0))
SATURATION = 1e300


class SaturationError(OverflowError):
    """||P_k|| left the representable range."""


@dataclass
class WeylAccumulator:
    """Running P_k = sum_{j<=k} A_{2j-1}^* A_{2j-1} for a Schrodinger cocycle."""
    k: int
    P: np.ndarray
    det_P: float
    eps_k: float
    energy: float
    theta: np.ndarray
    transfer: np.ndarray = field(repr=False)  # A_{2k-1}(theta)
    cocycle: SchrodingerCocycle = field(repr=False, compare=False, default=None)

    @property
    def norm(self):
        return float(mat2.opnorm(self.P))

    @property
    def inv_norm(self):
        smin = float(mat2.min_singular(self.P))
        # fall back on ||P^-1|| = ||P|| / det P when the smallest eigenvalue is lost to cancellation
        return 1.0 / smin if smin > 1e-12 * self.norm else self.norm / self.det_P

    def condition(self):
        """||P|| ||P^-1|| and the self-adjoint identity residual ||P|| - det ||P^-1||."""
        n, ni = self.norm, self.inv_norm
        return {"cond": n * ni, "identity_residual": abs(n - self.det_P * ni) / n}

    def advance(self, steps=1):
        """Extend to k + steps reusing the stored transfer matrix."""
        if self.cocycle is None:
            raise ValueError("accumulator has no cocycle attached")
        if steps < 1:
            return self
        sc = self.cocycle
        m0 = 2 * self.k - 1  # A_{m0} is stored
        pot = sc.potential_orbit(self.theta, 2 * steps, start=m0)
        P = self.P.copy()
        T = self.transfer.copy()
        for j in range(steps):
            for t in (sc.E - pot[2 * j], sc.E - pot[2 * j + 1]):
                T = np.array([[t, -1.0], [1.0, 0.0]]) @ T
            P = P + T.T @ T
        return _make(self.k + steps, P, T, sc, self.theta)

    def to_dict(self):
        return {
            "k": int(self.k),
            "P": [[float(x) for x in row] for row in np.real(self.P)],
            "det_P": float(self.det_P),
            "eps_k": float(self.eps_k),
            "energy": float(self.energy),
            "theta": [float(x) for x in self.theta],
            "P_norm": self.norm,
            "P_inv_norm": self.inv_norm,
        }


def _make(k, P, T, sc, theta):
    P = 0.5 * (P + P.conj().T)
    if not np.all(np.isfinite(P)) or mat2.opnorm(P) > SATURATION:
        raise SaturationError(f"||P_k|| exceeds {SATURATION:g} at k={k}")
    # det P_k >= k^2 (Minkowski, every term has determinant one); the clamp
    # only matters when cond(P) > 1e16 and the 2x2 formula cancels
    dp = max(float(np.real(mat2.det(P))), float(k) * k)
    return WeylAccumulator(int(k), P, dp, float(np.sqrt(1.0 / (4.0 * dp))), float(sc.E),
                           np.array(theta, dtype=float), T, sc)


def Pk_series(sc, theta, k):
    """All P_1, ..., P_k as an array (k, 2, 2)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    theta = _theta(theta, sc.d)
    pot = sc.potential_orbit(theta, 2 * k - 1)
    out = _kernels.schrodinger_odd_gram_sums(float(sc.E), pot, int(k))
    if not np.all(np.isfinite(out)) or np.max(np.abs(out[-1])) > SATURATION:
        raise SaturationError(f"||P_k|| exceeds {SATURATION:g} before k={k}")
    return out


def accumulate_Pk(sc, theta, k):
    """WeylAccumulator for P_k(E) at phase theta."""
    if k < 1:
        raise ValueError("k must be >= 1")
    theta = _theta(theta, sc.d)
    P = Pk_series(sc, theta, k)[-1]
    T = np.eye(2)
    for t in sc.E - sc.potential_orbit(theta, 2 * k - 1):
        T = np.array([[t, -1.0], [1.0, 0.0]]) @ T
    return _make(k, P, T, sc, theta)


def _solution_norms(E, pot, u1, u0, n):
    """sum_{m=1}^{n} u_m^2 for arrays of initial data, propagated together."""
    prev, cur = np.array(u0, dtype=float), np.array(u1, dtype=float)
    acc = cur * cur
    for m in range(1, n):
        prev, cur = cur, (E - pot[m - 1]) * cur - prev
        acc += cur * cur
    return acc


def det_via_solutions(sc, theta, k, beta_grid=360):
    """min over a beta grid of ||u^beta||^2 ||u^{beta+pi/2}||^2 on sites 1..2k.

    u^beta starts from (u_1, u_0) = (cos beta, -sin beta).  The grid covers
    [0, pi/2) since the product is invariant under beta -> beta + pi/2.
    """
    if beta_grid < 1:
        raise ValueError("beta_grid must be positive")
    theta = _theta(theta, sc.d)
    pot = sc.potential_orbit(theta, 2 * k)
    b = np.arange(beta_grid) * (0.5 * np.pi / beta_grid)
    n1 = _solution_norms(sc.E, pot, np.cos(b), -np.sin(b), 2 * k)
    n2 = _solution_norms(sc.E, pot, -np.sin(b), -np.cos(b), 2 * k)
    return float(np.min(n1 * n2))


class TruncatedOperator:
    """Dirichlet restriction of (Hu)_n = u_{n+1} + u_{n-1} + lam V(theta + n alpha) u_n
    to the sites -L..L."""

    def __init__(self, V, lam, alpha, theta, L):
        sc = SchrodingerCocycle(0.0, lam, V, alpha)
        self.L = int(L)
        self.lam = float(lam)
        self.theta = _theta(theta, sc.d)
        self.diagonal = np.ascontiguousarray(sc.potential_orbit(self.theta, 2 * self.L + 1, start=-self.L))
        self.boundary = "Dirichlet"
        self.potential_sup = abs(self.lam) * float(np.sum(np.abs(V.scalar_coeffs())))

    @classmethod
    def from_diagonal(cls, diagonal):
        op = cls.__new__(cls)
        op.diagonal = np.ascontiguousarray(diagonal, dtype=float)
        if op.diagonal.size % 2 == 0:
            raise ValueError("need an odd number of sites")
        op.L = op.diagonal.size // 2
        op.lam = 1.0
        op.theta = np.zeros(0)
        op.boundary = "Dirichlet"
        op.potential_sup = float(np.max(np.abs(op.diagonal)))
        return op

    @property
    def size(self):
        return self.diagonal.size

    def spectral_bounds(self):
        b = 2.0 + self.potential_sup
        return -b, b

    def count_below(self, E):
        return int(_kernels.sturm_count(self.diagonal, float(E)))

    def eigenvalues(self, lo=None, hi=None, rtol=1e-13):
        if lo is None:
            return eigvalsh_tridiagonal(self.diagonal, np.ones(self.size - 1))
        if not hi > lo:
            return np.zeros(0)
        tol = rtol * max(1.0, abs(lo), abs(hi))
        return _kernels.bisect_eigenvalues(self.diagonal, float(lo), float(hi), tol)

    def dense(self):
        n = self.size
        return np.diag(self.diagonal) + np.eye(n, k=1) + np.eye(n, k=-1)

    def weights(self, energies, pole_tol=1e-8):
        """|v(0)|^2 + |v(1)|^2 for normalized eigenvectors at the given eigenvalues.

        Each term is the residue of the diagonal Green function:
        |v(p)|^2 = 1 / (1 + s_left'(E) + s_right'(E)) with s the Green functions of
        the two blocks left after removing site p.  The formula only applies at
        a pole of G_pp, i.e. where v_p - E - s_left - s_right vanishes to within
        ``pole_tol`` times the slope; otherwise the eigenvector is invisible at p
        (for instance a boundary state in a gap) and the term is zero.
        """
        e = np.ascontiguousarray(energies, dtype=float)
        if e.size == 0:
            return np.zeros(0)
        out = np.zeros(e.size)
        L, v = self.L, self.diagonal
        tol = pole_tol * np.maximum(1.0, np.abs(e))
        for p in (L, L + 1):
            sl, dl = _kernels.pinned_green(np.ascontiguousarray(v[:p]), e)
            sr, dr = _kernels.pinned_green(np.ascontiguousarray(v[p + 1:][::-1]), e)
            slope = 1.0 + dl + dr
            pole = np.abs(v[p] - e - sl - sr) <= tol * slope
            out += np.where(pole, 1.0 / slope, 0.0)
        return out


@dataclass(frozen=True)
class SpectralMeasureEstimate:
    interval: tuple
    mass: float
    L: int
    richness: int
    edge_flag: bool = False
    edge_window: float = 0.0


def spectral_measure(op, interval, edge_window=None, flag_window=None):
    """mu(a, b) from eigenpairs of the truncation.

    Eigenvalues within ``edge_window`` (default 0.5/L) of an endpoint count
    with half weight.  ``edge_flag`` is raised when an eigenvalue sits within
    ``flag_window`` (default 10/L) of an endpoint.  When the interval holds
    most of the spectrum the mass is computed as 2 minus the complement.
    """
    a, b = map(float, interval)
    if not a < b:
        raise ValueError("empty interval")
    L = op.L
    w = 0.5 / L if edge_window is None else float(edge_window)
    w = min(w, 0.25 * (b - a))
    fw = 10.0 / L if flag_window is None else float(flag_window)
    lo, hi = op.spectral_bounds()
    # select="v" ranges are half-open (lo, hi]: the three pieces tile (a - w, b + w]
    rtol = 1e-11
    band = np.zeros(0)
    if w > 0:
        band = np.concatenate([op.eigenvalues(a - w, a + w, rtol), op.eigenvalues(b - w, b + w, rtol)])
    inner_lo, inner_hi = a + w, b - w
    count_inner = op.count_below(inner_hi) - op.count_below(inner_lo)
    if count_inner > op.size // 2:
        outside = np.concatenate([op.eigenvalues(lo - 1.0, inner_lo, rtol), op.eigenvalues(inner_hi, hi + 1.0, rtol)])
        inner_mass = 2.0 - float(np.sum(op.weights(outside)))
    elif count_inner > 0:
        inner_mass = float(np.sum(op.weights(op.eigenvalues(inner_lo, inner_hi, rtol))))
    else:
        inner_mass = 0.0
    mass = inner_mass + 0.5 * float(np.sum(op.weights(band)))
    near = sum(op.count_below(x + fw) - op.count_below(x - fw) for x in (a, b))
    mass = min(max(mass, 0.0), 2.0)
    return SpectralMeasureEstimate((a, b), mass, L, int(count_inner + band.size), near > 0, w)


def borel_transform(op, z):
    """M(z) = G_00(z) + G_11(z) from two banded solves of (H - z) x = delta."""
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("need Im z > 0")
    n, L = op.size, op.L
    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:] = 1.0
    ab[1] = op.diagonal - z
    ab[2, :-1] = 1.0
    rhs = np.zeros((n, 2), dtype=complex)
    rhs[L, 0] = 1.0
    rhs[L + 1, 1] = 1.0
    x = solve_banded((1, 1), ab, rhs, check_finite=False)
    return complex(x[L, 0] + x[L + 1, 1])


@dataclass(frozen=True)
class MFunctions:
    """m+ = -u+(1)/u+(0) and m- = u-(1)/u-(0) from the decaying half-line solutions.

    ``m_minus_std`` is the more common left function -u-(-1)/u-(0); the two
    are related by m- = z - v_0 + m_minus_std.
    """
    m_plus: complex
    m_minus: complex
    m_minus_std: complex

    def M(self):
        return (self.m_plus * self.m_minus - 1.0) / (self.m_plus + self.m_minus)

    def __iter__(self):
        return iter((self.m_plus, self.m_minus))


def m_functions(op, z):
    """Backward Riccati recursions from the Dirichlet boundaries toward site 0."""
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("need Im z > 0")
    L, v = op.L, op.diagonal
    mp = _kernels.riccati_right(np.ascontiguousarray(v[L + 1:]).astype(float), z)
    mm = _kernels.riccati_left(np.ascontiguousarray(v[:L + 1]).astype(float), z)
    return MFunctions(complex(mp), complex(mm), complex(mm - z + v[L]))


@dataclass(frozen=True)
class Prop21Report:
    k: int
    eps_k: float
    mass: float
    bound_mid: float
    bound_right: float
    holds: bool
    slack: float
    edge_flag: bool
    L: int

    def as_tuple(self):
        return (self.mass, self.bound_mid, self.bound_right)


def prop21_chain(sc, theta, k, L, slack=0.05, V=None):
    """mu(E - eps_k, E + eps_k) <= 2 eps_k Im M(E + i eps_k) <= 4(5+sqrt24) eps_k^2 ||P_k||.

    ``theta`` is the operator phase; P_k is accumulated by the cocycle at
    theta + alpha so that both sides refer to the same solutions.
    """
    theta = _theta(theta, sc.d)
    acc = accumulate_Pk(sc, theta + sc.alpha.array, k)
    op = TruncatedOperator(sc.V if V is None else V, sc.lam, sc.alpha, theta, L)
    eps = acc.eps_k
    E = sc.E
    est = spectral_measure(op, (E - eps, E + eps))
    mid = 2.0 * eps * borel_transform(op, E + 1j * eps).imag
    right = CHAIN_CONSTANT * eps * eps * acc.norm
    holds = est.mass <= (1 + slack) * mid and mid <= (1 + slack) * right
    return Prop21Report(int(k), float(eps), float(est.mass), float(mid), float(right), bool(holds),
                        float(slack), est.edge_flag, int(L))


def ids_by_counting(op, energies):
    """Fraction of eigenvalues of the truncation below each energy."""
    return np.array([op.count_below(E) for E in np.atleast_1d(energies)], dtype=float) / op.size


def in_spectrum(V, lam, alpha, theta, E, L=(2000, 4000), window=5.0):
    """E counts as in the spectrum when both truncations have an eigenvalue
    within window/L of it."""
    for size in L:
        op = TruncatedOperator(V, lam, alpha, theta, size)
        d = window / size
        if op.count_below(E + d) - op.count_below(E - d) == 0:
            return False
    return True


ORACLE_COLUMNS = ("E", "epsilon", "mass", "L", "k", "bound_mid", "bound_right")


def oracle_csv(rows):
    """CSV text with columns E, epsilon, mass, L, k, bound_mid, bound_right.

    ``rows`` are mappings or :class:`Prop21Report` objects paired with E.
    """
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(ORACLE_COLUMNS)
    for row in rows:
        if isinstance(row, tuple) and isinstance(row[1], Prop21Report):
            E, r = row
            row = {"E": E, "epsilon": r.eps_k, "mass": r.mass, "L": r.L, "k": r.k,
                   "bound_mid": r.bound_mid, "bound_right": r.bound_right}
        wr.writerow([_fmt(row[c]) for c in ORACLE_COLUMNS])
    return buf.getvalue()


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")
