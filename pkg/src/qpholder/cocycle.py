"""Quasi-periodic SL(2) cocycles: iterates, Lyapunov exponent, fibered
rotation number, integrated density of states and a hyperbolicity probe."""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, mat2
from .torus import AnalyticTorusFunction, FrequencyVector

__all__ = [
    "Cocycle",
    "SchrodingerCocycle",
    "RotationNumberEstimate",
    "HyperbolicityProbe",
    "iterate",
    "lyapunov_exponent",
    "rotation_number",
    "ids",
    "uniform_hyperbolicity_probe",
    "conjugate",
    "rotation_conjugacy",
]


def _as_alpha(alpha):
    return alpha if isinstance(alpha, FrequencyVector) else FrequencyVector(alpha)


def _theta(theta, d):
    return np.broadcast_to(np.asarray(theta, dtype=float), (d,)).copy()


class Cocycle:
    """The skew product (theta, v) -> (theta + alpha, A(theta) v).

    ``A`` is either an :class:`AnalyticTorusFunction` or any callable mapping
    points of shape (P, d) to matrices (P, 2, 2); the latter is how
    conjugated cocycles with half-integer degree are represented.
    """

    def __init__(self, alpha, A, check=True):
        self.alpha = _as_alpha(alpha)
        self.A = A
        if check and isinstance(A, AnalyticTorusFunction):
            if A.d != self.alpha.d:
                raise ValueError("dimension mismatch between alpha and A")
            A.validate()

    @property
    def d(self):
        return self.alpha.d

    def orbit_points(self, theta, n, start=0):
        j = np.arange(start, start + n, dtype=float)
        return _theta(theta, self.d)[None, :] + j[:, None] * self.alpha.array[None, :]

    def orbit(self, theta, n, start=0):
        """A(theta + j alpha) for j = start, ..., start + n - 1."""
        return np.asarray(self.A(self.orbit_points(theta, n, start)))

    def is_real(self):
        return not np.iscomplexobj(self.orbit(np.zeros(self.d), 4))


@dataclass(frozen=True)
class SchrodingerCocycle:
    """S_E(theta) = [[E - lam V(theta), -1], [1, 0]] over the rotation by alpha."""
    E: float
    lam: float
    V: AnalyticTorusFunction
    alpha: FrequencyVector
    base: Cocycle = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        alpha = _as_alpha(self.alpha)
        object.__setattr__(self, "alpha", alpha)
        if self.V.value_class != "real-scalar":
            raise ValueError("potential must be a real-scalar series")
        v = self.V.scalar_coeffs()
        keys = np.concatenate([np.zeros((1, alpha.d), dtype=np.int64), self.V.keys])
        coeffs = np.zeros((len(keys), 2, 2), dtype=complex)
        coeffs[0] = [[self.E, -1], [1, 0]]
        coeffs[1:, 0, 0] = -self.lam * v
        A = AnalyticTorusFunction(alpha.d, keys, coeffs, "SL2R")
        object.__setattr__(self, "base", Cocycle(alpha, A, check=False))

    @property
    def d(self):
        return self.alpha.d

    def with_energy(self, E):
        return SchrodingerCocycle(float(E), self.lam, self.V, self.alpha)

    def potential_orbit(self, theta, n, start=0):
        """lam V(theta + j alpha) for j = start, ..., start + n - 1."""
        pts = self.base.orbit_points(theta, n, start)
        return self.lam * np.asarray(self.V(pts))[..., 0, 0]

    def orbit(self, theta, n, start=0):
        return self.base.orbit(theta, n, start)

    def A0(self):
        return np.array([[self.E, -1.0], [1.0, 0.0]])

    def f0(self):
        """sl2R series with S_E = A0 exp(f0): the nilpotent [[0, 0], [lam V, 0]]."""
        c = np.zeros((len(self.V), 2, 2), dtype=complex)
        c[:, 1, 0] = self.lam * self.V.scalar_coeffs()
        return AnalyticTorusFunction(self.d, self.V.keys, c, "sl2R")


def _cocycle(c):
    return c.base if isinstance(c, SchrodingerCocycle) else c


def iterate(c, n, theta):
    """A_n(theta) = A(theta + (n-1) alpha) ... A(theta); for n < 0 the inverse product."""
    cc = _cocycle(c)
    n = int(n)
    if n == 0:
        return np.eye(2)
    if n > 0:
        return _kernels.product(np.ascontiguousarray(cc.orbit(theta, n)))
    # A^{-1}(theta + n alpha) ... A^{-1}(theta - alpha): apply A^{-1}(theta - alpha) first
    mats = mat2.inv_sl2(cc.orbit(theta, -n, start=n))[::-1]
    return _kernels.product(np.ascontiguousarray(mats))


def lyapunov_exponent(c, n=10_000, theta_samples=8, seed=0):
    """Average over random phases of (1/n) log ||A_n(theta)||."""
    if n < 1000:
        raise ValueError("need n >= 1000")
    rng = np.random.default_rng(seed)
    d = c.alpha.d
    vals = []
    for _ in range(theta_samples):
        th = rng.random(d)
        if isinstance(c, SchrodingerCocycle):
            g = _kernels.schrodinger_log_growth(float(c.E), c.potential_orbit(th, n),
                                                _kernels.RENORM_EVERY)
        else:
            mats = np.ascontiguousarray(c.orbit(th, n), dtype=complex)
            g = _kernels.log_norm_growth(mats, _kernels.RENORM_EVERY)
        vals.append(g / n)
    return float(np.mean(vals))


@dataclass(frozen=True)
class RotationNumberEstimate:
    rho: float
    iterations: int
    uncertainty: float
    raw: float  # mean lifted increment in turns, reduced mod 1, before folding


def rotation_number(c, n=100_000, theta=None):
    """Fibered rotation number from the lifted projective orbit of (1, 0).

    The raw value is the mean angle increment (in turns) mod 1; ``rho`` folds
    it into [0, 1/2] with rho <-> 1 - rho.
    """
    if n < 10_000:
        raise ValueError("need n >= 10^4")
    d = c.alpha.d
    theta = np.zeros(d) if theta is None else _theta(theta, d)
    if isinstance(c, SchrodingerCocycle):
        total, half = _kernels.schrodinger_rotation_lift(float(c.E), c.potential_orbit(theta, n), 1.0, 0.0)
    else:
        mats = c.orbit(theta, n)
        if np.iscomplexobj(mats):
            if np.max(np.abs(mats.imag)) > 1e-12:
                raise ValueError("rotation number needs a real cocycle")
            mats = mats.real
        psis = _lifted_polar_angles(c, mats, c.orbit_points(theta, n))
        total, half = _kernels.rotation_lift(np.ascontiguousarray(mats), psis, 1.0, 0.0)
    turns = total / (2 * np.pi)
    first = half / (2 * np.pi) / (n // 2)
    second = (turns - half / (2 * np.pi)) / (n - n // 2)
    raw = (turns / n) % 1.0
    rho = raw if raw <= 0.5 else 1.0 - raw
    return RotationNumberEstimate(float(rho), int(n), float(1.0 / n + abs(first - second)), float(raw))


def _polar_angle(mats):
    return np.arctan2(mats[..., 1, 0] - mats[..., 0, 1], mats[..., 0, 0] + mats[..., 1, 1])


def _unwrap_nd(T):
    """Continuous lift of a periodic angle table sampled on a grid."""
    if T.ndim == 1:
        return np.unwrap(T)
    base = _unwrap_nd(T[..., 0])
    U = np.unwrap(T, axis=-1)
    return U + (base - U[..., 0])[..., None]


def _lifted_polar_angles(c, mats, points):
    """Polar angles of the orbit matrices on a branch continuous over the torus.

    The principal branch jumps where the polar angle crosses pi, which would
    make the rotation number depend on that artificial cut.  The lift is read
    off a grid table unwrapped along every axis; it only exists when the
    polar angle has degree zero.
    """
    d = c.d
    grid = 256 if d == 1 else 64 if d == 2 else 16
    axes = [np.arange(grid) / grid] * d
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    table = _polar_angle(np.real(np.asarray(c.A(pts)))).reshape((grid,) * d)
    lifted = _unwrap_nd(table)
    for ax in range(d):
        closure = np.take(lifted, 0, axis=ax) - np.take(lifted, -1, axis=ax)
        if np.max(np.abs(closure)) > np.pi:
            raise ValueError("polar angle of the cocycle has nonzero degree; no lift exists")
    idx = np.rint(np.mod(points, 1.0) * grid).astype(np.int64) % grid
    ref = lifted[tuple(idx.T)]
    psi = _polar_angle(mats)
    return np.ascontiguousarray(psi + 2 * np.pi * np.rint((ref - psi) / (2 * np.pi)))


def ids(sc, n=100_000, theta=None):
    """Integrated density of states N(E) = 1 - 2 rho(E)."""
    return 1.0 - 2.0 * rotation_number(sc, n, theta).rho


@dataclass(frozen=True)
class HyperbolicityProbe:
    hyperbolic: bool
    margin: float
    rates: tuple


def uniform_hyperbolicity_probe(c, n=500, grid=16):
    """Exponential-dichotomy heuristic on a phase grid.

    With g_m(theta) = log ||A_m(theta)||, the fitted rate is
    min_theta (g_{2n} - g_n) / n.  The cocycle is declared uniformly
    hyperbolic when that rate is well above polynomial growth and agrees
    with min_theta g_n / n up to a factor 2.
    """
    cc = _cocycle(c)
    d = cc.d
    axes = [np.arange(grid) / grid] * d
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    g1 = np.empty(len(pts))
    g2 = np.empty(len(pts))
    for i, th in enumerate(pts):
        if isinstance(c, SchrodingerCocycle):
            pot = c.potential_orbit(th, 2 * n)
            g1[i] = _kernels.schrodinger_log_growth(float(c.E), pot[:n], _kernels.RENORM_EVERY)
            g2[i] = _kernels.schrodinger_log_growth(float(c.E), pot, _kernels.RENORM_EVERY)
        else:
            mats = np.ascontiguousarray(cc.orbit(th, 2 * n), dtype=complex)
            g1[i] = _kernels.log_norm_growth(mats[:n], _kernels.RENORM_EVERY)
            g2[i] = _kernels.log_norm_growth(mats, _kernels.RENORM_EVERY)
    r1 = float(np.min(g1) / n)
    rate = float(np.min(g2 - g1) / n)
    floor = 2.0 * np.log(n) / n
    hyperbolic = rate > floor and r1 > floor and 0.5 * r1 <= rate <= 2.0 * r1
    return HyperbolicityProbe(bool(hyperbolic), rate, (r1, rate))


def conjugate(c, B):
    """The cocycle theta -> B(theta + alpha)^{-1} A(theta) B(theta).

    ``B`` is any callable on points (P, d) returning SL(2) matrices; it is
    evaluated on the real lift, so half-integer degree rotations are allowed.
    """
    cc = _cocycle(c)
    alpha = cc.alpha.array

    def A(points):
        points = np.asarray(points, dtype=float).reshape(-1, cc.d)
        return mat2.inv_sl2(B(points + alpha)) @ np.asarray(cc.A(points)) @ B(points)

    return Cocycle(cc.alpha, A, check=False)


def rotation_conjugacy(n):
    """theta -> R_{<n, theta>/2}, a PSL(2,R) map of degree n."""
    n = np.asarray(n, dtype=float)

    def B(points):
        points = np.asarray(points, dtype=float).reshape(-1, len(n))
        return mat2.rotation(0.5 * (points @ n))

    return B
