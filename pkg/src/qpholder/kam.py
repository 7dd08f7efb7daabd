"""Quantitative almost reducibility by KAM iteration.

One step conjugates A e^{f(theta)} to A_+ e^{f_+(theta)} by
B(theta) = Q R_{<n, theta>/2} e^{Y(theta)}: a rotation removes a resonance
n (when there is one) and Y solves the truncated homological equation
e^{2 pi i <m, alpha>} Ad_{A^{-1}} Y(m) - Y(m) = f(m), m != 0.
The zero mode is absorbed into the constant.

Conventions.  rho = Re xi / 2 pi is signed by the orientation of A; the
resonance condition is ||2 rho - <n, alpha>||_{R/Z} < threshold.  B_j is the
ordered product of the step factors and is evaluated on the real lift of theta,
so an odd degree makes it PSL(2,R)-valued: B_j(theta + e_i) = (-1)^{deg_i} B_j(theta).
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import mat2
from .torus import (AnalyticTorusFunction, FrequencyVector, default_norm_grid, dist_to_int,
                    lattice_ball, norm_r, truncate)
from .triangular import triangularize

__all__ = [
    "KamAbort",
    "KamConfig",
    "StepConjugation",
    "StepRecord",
    "KamState",
    "resonance_scan",
    "rotation_adjoint",
    "kam_step",
    "kam_iterate",
    "schrodinger_kam",
    "conjugation_residual",
    "CnReport",
    "cn_bound_check",
    "ImXiReport",
    "im_xi_check",
    "signed_rotation",
    "kam_trace_lines",
]

# rotation generator and the two symmetric directions it rotates
_J = np.array([[0.0, -1.0], [1.0, 0.0]])
_SA = np.array([[1.0, 0.0], [0.0, -1.0]])
_SB = np.array([[0.0, 1.0], [1.0, 0.0]])


class KamAbort(RuntimeError):
    """Raised when a step cannot proceed; carries the partial state."""

    def __init__(self, message, state=None, record=None):
        super().__init__(message)
        self.state = state
        self.record = record


@dataclass(frozen=True)
class KamConfig:
    """Numerical choices for the iteration.

    threshold = resonance_scale * eps**resonance_exponent; resonances are only
    looked for among modes whose weighted coefficient exceeds
    active_factor * eps**2.  N is capped at ``max_N``; f_+ is computed on a
    ``grid``^d sample (default by dimension); coefficients of f_+ below
    coeff_tol * ||A|| are dropped as roundoff.
    """
    resonance_exponent: float = 0.5
    resonance_scale: float = 1.0 / (2 * np.pi)
    active_factor: float = 1.0
    max_N: int = 16
    grid: int = 0
    divisor_floor: float = 1e-14
    coeff_tol: float = 1e-16
    enforce_gate: bool = False
    gate_tau: float = 1.0
    residual_grid: int = 64

    def threshold(self, eps):
        if eps <= 0:
            return 0.0
        return self.resonance_scale * eps ** self.resonance_exponent

    def sample_grid(self, d):
        if self.grid:
            return int(self.grid)
        return 256 if d == 1 else 64 if d == 2 else 16


def signed_rotation(A):
    """Signed rotation number of a constant SL(2,R) matrix in turns.

    Elliptic A: +-arg(e^{i xi}) / 2 pi with the sign of the rotation sense;
    otherwise Re xi / 2 pi (0 or 1/2).
    """
    A = np.asarray(A, dtype=float)
    xi = triangularize(A).xi
    rho = float(np.real(xi)) / (2 * np.pi)
    if abs(A[0, 0] + A[1, 1]) < 2 and A[1, 0] - A[0, 1] < 0:
        rho = -rho
    return rho


def resonance_scan(xi, alpha, N, threshold, support=None):
    """First n with 0 < |n| <= N and ||2 Re(xi)/2pi - <n, alpha>||_{R/Z} < threshold.

    Candidates are ordered by sup-norm |n| with lexicographic ties; ``support``
    restricts the scan to the given lattice points.  Returns a tuple or None.
    """
    alpha = alpha if isinstance(alpha, FrequencyVector) else FrequencyVector(alpha)
    if N < 1:
        raise ValueError("N must be >= 1")
    two_rho = 2.0 * float(np.real(xi)) / (2 * np.pi)
    pts = lattice_ball(alpha.d, int(N), include_zero=False)
    if support is not None:
        sup = {tuple(int(v) for v in s) for s in support}
        pts = np.array([p for p in pts if tuple(int(v) for v in p) in sup], dtype=np.int64).reshape(-1, alpha.d)
    if not len(pts):
        return None
    dist = dist_to_int(two_rho - pts @ alpha.array)
    hit = np.nonzero(dist < threshold)[0]
    if not len(hit):
        return None
    return tuple(int(v) for v in pts[hit[0]])


def rotation_adjoint(F, n):
    """theta -> R_{<n,theta>/2} F(theta) R_{-<n,theta>/2} as an exact Fourier series.

    The identity and rotation-generator parts commute with R; the symmetric
    trace-free part rotates at twice the angle, which shifts its two complex
    components by +-n.
    """
    n = np.asarray(n, dtype=np.int64)
    if not np.any(n):
        return F
    C = F.coeffs
    x0 = 0.5 * (C[:, 0, 0] + C[:, 1, 1])
    xj = 0.5 * (C[:, 1, 0] - C[:, 0, 1])
    xa = 0.5 * (C[:, 0, 0] - C[:, 1, 1])
    xb = 0.5 * (C[:, 0, 1] + C[:, 1, 0])
    w, v = xa + 1j * xb, xa - 1j * xb
    keep = x0[:, None, None] * np.eye(2) + xj[:, None, None] * _J
    up = (0.5 * w)[:, None, None] * (_SA - 1j * _SB)
    down = (0.5 * v)[:, None, None] * (_SA + 1j * _SB)
    keys = np.concatenate([F.keys, F.keys + n, F.keys - n])
    coeffs = np.concatenate([keep, up, down])
    out = AnalyticTorusFunction(F.d, keys, coeffs, F.value_class, check=False)
    return _drop_zeros(out)


def _drop_zeros(F, tol=0.0):
    if not len(F):
        return F
    mask = mat2.opnorm(F.coeffs) > tol
    return AnalyticTorusFunction(F.d, F.keys[mask], F.coeffs[mask], F.value_class, check=False)


def _real_rotation_form(A):
    """Real Q with det Q = 1 and signed phi with A = Q R_phi Q^{-1} (A elliptic)."""
    a, b, c, d = A[0, 0], A[0, 1], A[1, 0], A[1, 1]
    half = 0.5 * (a + d)
    s = math.sqrt(max(1.0 - half * half, 0.0))
    # A = cos(phi) I + sin(phi) K with K^2 = -I; K = Q J Q^{-1}
    K = (A - half * np.eye(2)) / s
    # solve K Q = Q J for Q = [[p, q], [0, 1/p]]-type upper-triangular up to orientation
    # K = [[k11, k12], [k21, -k11]], k21 != 0 for elliptic A
    k11, k12, k21 = K[0, 0], K[0, 1], K[1, 0]
    sign = 1.0 if k21 > 0 else -1.0
    # for K' = sign*K with k21' > 0: Q = [[sqrt(k21'), ...]] gives Q^{-1} K' Q = J
    kp11, kp21 = sign * k11, sign * k21
    t = math.sqrt(kp21)
    Q = np.array([[1.0 / t, kp11 / t], [0.0, t]])
    phi = sign * math.atan2(s, half) / (2 * np.pi)
    return Q, phi


@dataclass(frozen=True)
class StepConjugation:
    """theta -> Q R_{<n,theta>/2} exp(Y(theta))."""
    Q: np.ndarray
    n: tuple
    Y: AnalyticTorusFunction

    @classmethod
    def identity(cls, d):
        return cls(np.eye(2), (0,) * d, AnalyticTorusFunction.zero(d, "sl2R"))

    def __call__(self, points):
        points = np.asarray(points, dtype=float).reshape(-1, self.Y.d)
        eY = mat2.expm_traceless(np.real(self.Y(points))) if len(self.Y) else np.broadcast_to(np.eye(2), (len(points), 2, 2))
        R = mat2.rotation(0.5 * (points @ np.asarray(self.n, dtype=float)))
        return self.Q @ R @ eY

    def deviation_from_identity(self, r, grid=None):
        """||B - Id||_r for a degree-zero factor (uses the series of e^Y)."""
        eY = mat2.expm_traceless(self.Y.on_grid(grid or _grid_for(self.Y), imag_offset=None))
        return float(np.max(mat2.opnorm(self.Q @ eY - np.eye(2))))


def _grid_for(f, minimum=64):
    M = minimum
    while M <= 2 * f.degree + 1:
        M *= 2
    return M


@dataclass
class StepRecord:
    j: int
    kind: str
    N: int
    resonance: tuple
    smallest_divisor: float
    norms: tuple  # (||B_bar||_0, ||f_+||_{r'}, ||A_+ - A||)
    eps: float
    eps_next: float
    r: float
    r_next: float
    threshold: float
    gate_ok: bool
    exponent: float = float("nan")  # log eps_next / log eps
    A_double_prime: float = float("nan")  # ||log(+-A_+)|| after a resonant step
    B_norm: float = float("nan")
    residual: float = float("nan")
    xi: complex = 0j
    c: complex = 0j

    def to_json(self):
        return {
            "j": self.j,
            "kind": self.kind,
            "N": self.N,
            "resonance": list(self.resonance) if self.resonance is not None else None,
            "eps": _f(self.eps),
            "eps_next": _f(self.eps_next),
            "B_norm": _f(self.B_norm),
            "A_spec": {"re_xi": _f(np.real(self.xi)), "im_xi": _f(np.imag(self.xi)),
                       "c": [_f(np.real(self.c)), _f(np.imag(self.c))]},
            "residual": _f(self.residual),
            "smallest_divisor": _f(self.smallest_divisor),
            "exponent": _f(self.exponent),
        }


def _f(x):
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return None
    return float(format(x, ".17g"))


def _divisor_operator(A, alpha, keys):
    """3x3 matrices e^{2 pi i <n,alpha>} Ad_{A^{-1}} - I in the (H, E, F) basis."""
    Ainv = mat2.inv_sl2(A)
    ad = np.stack([mat2.sl2_to_vec(Ainv @ X @ A) for X in mat2.SL2_BASIS], axis=-1)
    ph = np.exp(2j * np.pi * (keys @ alpha))
    return ph[:, None, None] * ad[None] - np.eye(3)[None]


def _solve_homological(A, g, alpha, floor):
    """Y with e^{2 pi i <n,alpha>} Ad_{A^{-1}} Y(n) - Y(n) = g(n) for the nonzero modes of g."""
    d = g.d
    nz = np.any(g.keys != 0, axis=1)
    keys, coeffs = g.keys[nz], g.coeffs[nz]
    if not len(keys):
        return AnalyticTorusFunction.zero(d, "sl2R"), np.inf
    M = _divisor_operator(A, alpha, keys)
    divisors = np.min(np.abs(np.linalg.eigvals(M)), axis=1)
    smallest = float(np.min(divisors))
    if smallest < floor:
        raise KamAbort(f"small divisor {smallest:.3e} below floor {floor:.1e}")
    rhs = mat2.sl2_to_vec(coeffs)
    sol = np.linalg.solve(M, rhs[..., None])[..., 0]
    Y = AnalyticTorusFunction(d, keys, mat2.vec_to_sl2(sol), "sl2R", check=False)
    return Y, smallest


def _active_modes(f, eps, r, factor):
    if not len(f) or eps <= 0:
        return []
    w = f.coeff_norms() * np.exp(2 * np.pi * np.max(np.abs(f.keys), axis=1) * r)
    keep = (w > factor * eps * eps) & np.any(f.keys != 0, axis=1)
    return [tuple(int(v) for v in k) for k in f.keys[keep]]


def _log_sign(A):
    """log of +-A with the sign that makes the trace positive."""
    s = 1.0 if A[0, 0] + A[1, 1] >= 0 else -1.0
    return mat2.logm_sl2(s * A)


def kam_step(A, f, r, r_next, alpha, config=None, j=0):
    """One conjugation step.  Returns (B_bar, A_plus, f_plus, StepRecord)."""
    cfg = config or KamConfig()
    alpha = alpha if isinstance(alpha, FrequencyVector) else FrequencyVector(alpha)
    A = np.asarray(A, dtype=float)
    d = alpha.d
    if not 0 < r_next < r:
        raise ValueError("need 0 < r_next < r")
    grid = cfg.sample_grid(d)
    eps = norm_r(f, r, grid=max(default_norm_grid(d) if d > 2 else 64, _grid_for(f))) if len(f) else 0.0
    gap = r - r_next
    nA = float(mat2.opnorm(A))
    gate_ok = eps <= 1e-3 * gap ** (2 * cfg.gate_tau) / (1 + nA) ** 4
    if cfg.enforce_gate and not gate_ok:
        raise KamAbort(f"step gate fails: eps={eps:.3e}")
    N_log = 2.0 * abs(math.log(eps)) / gap if eps > 0 else np.inf
    N = int(min(max(math.floor(min(N_log, cfg.max_N)), 1), grid // 2 - 1))

    kind, resonance = "non-resonant", None
    Q, n_res = np.eye(2), (0,) * d
    A1, f1 = A, f
    threshold = cfg.threshold(eps)
    elliptic = abs(A[0, 0] + A[1, 1]) < 2
    if elliptic and eps > 0:
        support = _active_modes(truncate(f, N), eps, r, cfg.active_factor)
        rho = signed_rotation(A)
        hit = resonance_scan(2 * np.pi * rho, alpha, N, threshold, support=support) if support else None
        if hit is not None:
            kind, resonance = "resonant", hit
            Q, phi = _real_rotation_form(A)
            n_res = hit
            nvec = np.asarray(hit, dtype=float)
            A1 = mat2.rotation(phi - 0.5 * float(nvec @ alpha.array))
            Qinv = mat2.inv_sl2(Q)
            f_q = AnalyticTorusFunction(d, f.keys, Qinv[None] @ f.coeffs @ Q[None], "sl2R", check=False)
            f1 = rotation_adjoint(f_q, -np.asarray(hit))

    # homological equation on the truncated error
    g = truncate(f1, N)
    zero = np.all(g.keys == 0, axis=1)
    g0 = g.coeffs[zero][0] if np.any(zero) else np.zeros((2, 2), dtype=complex)
    Y, smallest = _solve_homological(A1, g, alpha.array, cfg.divisor_floor)
    A_plus = A1 @ mat2.expm_traceless(np.real(g0))

    # f_+ from the exact conjugated cocycle on a sample grid
    M = grid
    pts_f = f1.on_grid(M).real if len(f1) else np.zeros((M,) * d + (2, 2))
    if len(Y):
        Yv = Y.on_grid(M).real
        Ys = Y.shifted(alpha.array).on_grid(M).real
    else:
        Yv = Ys = np.zeros((M,) * d + (2, 2))
    G = (mat2.inv_sl2(A_plus) @ mat2.expm_traceless(-Ys) @ A1 @ mat2.expm_traceless(pts_f)
         @ mat2.expm_traceless(Yv))
    logs = mat2.logm_sl2(G)
    # coefficients at the roundoff level of the product are noise, and the analytic weight would amplify them
    tol = cfg.coeff_tol * float(np.max(mat2.opnorm(A1)))
    f_plus = AnalyticTorusFunction.from_grid(logs, "sl2R", max_degree=M // 2 - 1, tol=tol)
    eps_next = norm_r(f_plus, r_next, grid=max(64, _grid_for(f_plus))) if len(f_plus) else 0.0

    B_bar = StepConjugation(Q, tuple(int(v) for v in n_res), Y)
    pts0 = _sample_points(d, cfg.residual_grid)
    B_norm = float(np.max(mat2.opnorm(B_bar(pts0))))
    dA = float(mat2.opnorm(A_plus - A))
    rec = StepRecord(j=j, kind=kind, N=N, resonance=resonance, smallest_divisor=smallest,
                     norms=(B_norm, eps_next, dA), eps=eps, eps_next=eps_next, r=r, r_next=r_next,
                     threshold=threshold, gate_ok=bool(gate_ok))
    if eps > 0 and eps < 1:
        rec.exponent = math.log(eps_next) / math.log(eps) if eps_next > 0 else float("inf")
    if kind == "resonant":
        rec.A_double_prime = float(mat2.opnorm(_log_sign(A_plus)))
    sf = triangularize(A_plus)
    rec.xi, rec.c = sf.xi, sf.c
    if eps > 0 and eps_next > eps:
        raise KamAbort(f"no contraction at step {j}: {eps:.3e} -> {eps_next:.3e}", record=rec)
    return B_bar, A_plus, f_plus, rec


def _sample_points(d, M):
    axes = [np.arange(M) / M] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


@dataclass
class KamState:
    """Iteration state: B_j^{-1}(theta + alpha) A_0 e^{f_0(theta)} B_j(theta) = A_j e^{f_j(theta)}."""
    j: int
    r_j: float
    eps_j: float
    A_j: np.ndarray
    xi_j: complex
    f_j: AnalyticTorusFunction
    alpha: FrequencyVector
    A0: np.ndarray
    f0: AnalyticTorusFunction
    r0: float
    r: float
    factors: list = field(default_factory=list)
    ledger: list = field(default_factory=list)
    eps_history: list = field(default_factory=list)
    B_norm_history: list = field(default_factory=list)
    config: KamConfig = field(default_factory=KamConfig)

    @property
    def d(self):
        return self.alpha.d

    @property
    def degree(self):
        deg = np.zeros(self.d, dtype=np.int64)
        for fac in self.factors:
            deg += np.asarray(fac.n, dtype=np.int64)
        return deg

    @property
    def sign_flag(self):
        """Parity of the degree: B_j(theta + e_i) = (-1)^{flag_i} B_j(theta)."""
        return tuple(int(v) % 2 for v in self.degree)

    def B(self, points):
        """B_j evaluated on the real lift of the given points (P, d)."""
        points = np.asarray(points, dtype=float).reshape(-1, self.d)
        out = np.broadcast_to(np.eye(2), (len(points), 2, 2)).copy()
        for fac in self.factors:
            out = out @ fac(points)
        return out

    def B_norm0(self, grid=None):
        return float(np.max(mat2.opnorm(self.B(_sample_points(self.d, grid or self.config.residual_grid)))))

    def B_series(self, grid=None, tol=1e-16):
        """(B_int, degree) with B_j(theta) = B_int(theta) R_{<degree, theta>/2}; B_int is periodic."""
        M = grid or max(64, self.config.sample_grid(self.d))
        pts = _sample_points(self.d, M)
        deg = self.degree
        vals = self.B(pts) @ mat2.rotation(-0.5 * (pts @ deg.astype(float)))
        vals = vals.reshape((M,) * self.d + (2, 2))
        return AnalyticTorusFunction.from_grid(vals, "SL2R", max_degree=M // 2 - 1, tol=tol), deg

    def cocycle_matrix(self, points):
        """A_j e^{f_j(theta)} at the given points."""
        points = np.asarray(points, dtype=float).reshape(-1, self.d)
        if not len(self.f_j):
            return np.broadcast_to(self.A_j, (len(points), 2, 2)).copy()
        return self.A_j @ mat2.expm_traceless(np.real(self.f_j(points)))

    def trace_lines(self):
        return kam_trace_lines(self)


def conjugation_residual(state, grid=None):
    """max over a grid of ||B(theta+alpha)^{-1} A_0 e^{f_0(theta)} B(theta) - A_j e^{f_j(theta)}||."""
    M = grid or state.config.residual_grid
    pts = _sample_points(state.d, M)
    left = state.A0 @ (mat2.expm_traceless(np.real(state.f0(pts))) if len(state.f0) else np.eye(2))
    conj = mat2.inv_sl2(state.B(pts + state.alpha.array)) @ left @ state.B(pts)
    return float(np.max(mat2.opnorm(conj - state.cocycle_matrix(pts))))


def kam_iterate(A0, f0, r0, r, alpha, max_steps=8, floor=1e-12, config=None, check_residual=True):
    """Iterate kam_step on r_j - r_{j+1} = (r0 - r)/4^{j+1} until eps_j < floor."""
    cfg = config or KamConfig()
    alpha = alpha if isinstance(alpha, FrequencyVector) else FrequencyVector(alpha)
    A0 = np.asarray(A0, dtype=float)
    if not 0 < r < r0:
        raise ValueError("need 0 < r < r0")
    eps0 = norm_r(f0, r0, grid=max(64, _grid_for(f0))) if len(f0) else 0.0
    state = KamState(j=0, r_j=r0, eps_j=eps0, A_j=A0, xi_j=triangularize(A0).xi, f_j=f0, alpha=alpha,
                     A0=A0, f0=f0, r0=r0, r=r, config=cfg)
    state.eps_history.append(eps0)
    state.B_norm_history.append(1.0)
    while state.eps_j >= floor and state.j < max_steps:
        j = state.j
        r_next = state.r_j - (r0 - r) / 4 ** (j + 1)
        try:
            B_bar, A_plus, f_plus, rec = kam_step(state.A_j, state.f_j, state.r_j, r_next, alpha, cfg, j=j)
        except KamAbort as exc:
            exc.state = state
            if exc.record is not None:
                state.ledger.append(exc.record)
            raise
        state.factors.append(B_bar)
        state.j = j + 1
        state.r_j = r_next
        state.A_j = A_plus
        state.f_j = f_plus
        state.eps_j = rec.eps_next
        state.xi_j = rec.xi
        rec.B_norm = state.B_norm0()
        if check_residual:
            rec.residual = conjugation_residual(state)
        state.ledger.append(rec)
        state.eps_history.append(state.eps_j)
        state.B_norm_history.append(rec.B_norm)
    return state


def schrodinger_kam(sc, r0=0.05, r=None, max_steps=8, floor=1e-12, config=None, check_residual=True):
    """kam_iterate for S_E = A0 e^{f0} with A0 = [[E, -1], [1, 0]] and f0 = [[0, 0], [lam V, 0]]."""
    r = r0 / 2 if r is None else r
    return kam_iterate(sc.A0(), sc.f0(), r0, r, sc.alpha, max_steps, floor, config, check_residual)


@dataclass(frozen=True)
class CnReport:
    values: tuple  # |c_j| ||B_j||_0^8 per step
    bound: float  # 4 ||A_0||
    c: tuple
    B_norms: tuple
    holds: bool


def cn_bound_check(state, strict=True):
    """|c_j| ||B_j||_0^8 <= 4 ||A_0|| at every recorded step."""
    bound = 4.0 * float(mat2.opnorm(state.A0))
    cs = [abs(triangularize(state.A0).c)] + [abs(rec.c) for rec in state.ledger]
    bn = list(state.B_norm_history)
    vals = tuple(float(c * b ** 8) for c, b in zip(cs, bn))
    holds = all(v <= bound for v in vals)
    if strict and not holds:
        dump = "\n".join(json.dumps(r.to_json()) for r in state.ledger)
        raise AssertionError(f"|c_n| ||B_n||^8 exceeds {bound:.4g}: {vals}\n{dump}")
    return CnReport(vals, bound, tuple(cs), tuple(bn), bool(holds))


@dataclass(frozen=True)
class ImXiReport:
    values: tuple  # |Im xi_j|
    bounds: tuple  # eps_j^{1/4}
    holds: bool
    skipped: bool = False


def im_xi_check(state, sc=None, in_spectrum=True, strict=True):
    """|Im xi_j| <= eps_j^{1/4} at every step (only meaningful for E in the spectrum)."""
    if not in_spectrum:
        return ImXiReport((), (), True, skipped=True)
    xis = [triangularize(state.A0).xi] + [rec.xi for rec in state.ledger]
    vals = tuple(abs(float(np.imag(x))) for x in xis)
    bounds = tuple(float(e) ** 0.25 for e in state.eps_history)
    holds = all(v <= b + 1e-15 for v, b in zip(vals, bounds))
    if strict and not holds:
        raise AssertionError(f"|Im xi| exceeds eps^(1/4): {vals} vs {bounds}")
    return ImXiReport(vals, bounds, bool(holds))


def kam_trace_lines(state):
    """JSON lines, one per step."""
    return "\n".join(json.dumps(rec.to_json()) for rec in state.ledger)
