"""Hoelder-1/2 continuity of the spectral measure: Lemma P ratios, the
eps_k bracketing policy and the scan of mu(E - eps, E + eps) / eps^{1/2}.

Phases: ``theta`` is always the operator phase (site n carries
lam V(theta + n alpha)); the matching P_k is accumulated by the cocycle at
theta + alpha.
"""

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from . import _kernels, mat2
from .cocycle import SchrodingerCocycle
from .kam import schrodinger_kam
from .torus import AnalyticTorusFunction, FrequencyVector
from .weyl import (CHAIN_CONSTANT, SaturationError, TruncatedOperator, _make, borel_transform,
                   in_spectrum, spectral_measure)

__all__ = [
    "ScanConfig",
    "ScanRow",
    "ScanReport",
    "LemmaPReport",
    "lemma_P_check",
    "epsk_policy",
    "modulus_estimate",
    "holder_scan",
    "phase_robustness",
    "spectrum_edges",
    "scan_energy_grid",
    "log_grid",
    "edge_exponent",
    "K_MAX",
]

K_MAX = 1_000_000
RESOLUTION = 10.0  # L >= RESOLUTION / eps


def log_grid(lo, hi, per_decade=3):
    """Log-spaced values from lo to hi inclusive."""
    n = int(round(per_decade * math.log10(hi / lo))) + 1
    return list(np.logspace(math.log10(lo), math.log10(hi), n))


@dataclass
class ScanConfig:
    potential: AnalyticTorusFunction
    lam: float
    alpha: FrequencyVector
    theta: np.ndarray
    E_grid: list
    eps_grid: list
    L_oracle: int = 2000
    k_window_policy: str = "bracket"
    lambda_gate: float = 0.1
    min_decades: float = 3.0

    def __post_init__(self):
        if not isinstance(self.alpha, FrequencyVector):
            self.alpha = FrequencyVector(self.alpha)
        self.theta = np.broadcast_to(np.asarray(self.theta, dtype=float), (self.alpha.d,)).copy()
        self.E_grid = [float(e) for e in self.E_grid]
        self.eps_grid = sorted(float(e) for e in self.eps_grid)

    @property
    def d(self):
        return self.alpha.d

    def validate(self):
        if self.potential.d != self.d:
            raise ValueError("potential and alpha dimensions differ")
        if abs(self.lam) > self.lambda_gate:
            raise ValueError(f"lambda {self.lam} above the gate {self.lambda_gate}")
        if not self.eps_grid or min(self.eps_grid) <= 0:
            raise ValueError("eps_grid must be positive")
        span = math.log10(max(self.eps_grid) / min(self.eps_grid))
        if span < self.min_decades - 1e-9:
            raise ValueError(f"eps_grid spans {span:.2f} decades, need {self.min_decades}")
        if self.k_window_policy != "bracket":
            raise ValueError(f"unknown k_window_policy {self.k_window_policy!r}")
        return self

    def cocycle(self, E):
        return SchrodingerCocycle(float(E), self.lam, self.potential, self.alpha)

    def L_for(self, eps):
        return int(max(self.L_oracle, math.ceil(RESOLUTION / eps)))

    def with_theta(self, theta):
        return ScanConfig(self.potential, self.lam, self.alpha, theta, self.E_grid, self.eps_grid,
                          self.L_oracle, self.k_window_policy, self.lambda_gate, self.min_decades)

    def to_dict(self):
        return {
            "potential": self.potential.to_dict(),
            "lambda": self.lam,
            "alpha": [float(a) for a in self.alpha.array],
            "theta": [float(t) for t in self.theta],
            "E_grid": self.E_grid,
            "eps_grid": self.eps_grid,
            "L_oracle": self.L_oracle,
            "k_window_policy": self.k_window_policy,
            "lambda_gate": self.lambda_gate,
        }

    @classmethod
    def from_dict(cls, doc, base_dir="."):
        """Build from a JSON document; ``potential`` is inline or a path to a series file.

        ``E_grid`` may be a list or {"n": .., "edges": true}; ``eps_grid`` may
        be a list or {"lo": .., "hi": .., "per_decade": ..}.
        """
        pot = doc["potential"]
        if isinstance(pot, str):
            import os
            path = pot if os.path.isabs(pot) else os.path.join(base_dir, pot)
            with open(path) as fh:
                pot = json.load(fh)
        V = AnalyticTorusFunction.from_dict(pot)
        alpha = FrequencyVector(doc["alpha"])
        theta = doc.get("theta", [0.0] * alpha.d)
        eps = doc["eps_grid"]
        if isinstance(eps, dict):
            eps = log_grid(eps["lo"], eps["hi"], eps.get("per_decade", 3))
        cfg = cls(V, float(doc["lambda"]), alpha, theta, [], eps,
                  int(doc.get("L_oracle", 2000)), doc.get("k_window_policy", "bracket"),
                  float(doc.get("lambda_gate", 0.1)))
        grid = doc["E_grid"]
        if isinstance(grid, dict):
            grid = scan_energy_grid(cfg, int(grid.get("n", 20)), edges=bool(grid.get("edges", True)))
        cfg.E_grid = [float(e) for e in grid]
        return cfg

    @classmethod
    def from_json(cls, path):
        import os
        with open(path) as fh:
            doc = json.load(fh)
        return cls.from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))


def spectrum_edges(V, lam, alpha, theta, L=4000):
    """Lowest and highest eigenvalue of the truncation: estimates of min and max of the spectrum."""
    op = TruncatedOperator(V, lam, alpha, theta, L)
    n = op.size
    ends = eigvalsh_tridiagonal(op.diagonal, np.ones(n - 1), select="i", select_range=(0, 0))
    top = eigvalsh_tridiagonal(op.diagonal, np.ones(n - 1), select="i", select_range=(n - 1, n - 1))
    return float(ends[0]), float(top[0])


def scan_energy_grid(config, n=20, edges=True, L=4000):
    """n energies: the two outer spectral edges and n - 2 evenly spaced between them.

    With edges=False the n energies are spread over a margin around the spectrum.
    """
    lo, hi = spectrum_edges(config.potential, config.lam, config.alpha, config.theta, L)
    if edges:
        return [lo] + list(np.linspace(lo, hi, n)[1:-1]) + [hi]
    pad = 0.05 * (hi - lo)
    return list(np.linspace(lo - pad, hi + pad, n))


def _p_series_until(sc, theta_c, eps, k_max=K_MAX):
    """P_1..P_k with k doubled until eps_k < eps (or k_max)."""
    k = 64
    while True:
        k = min(k, k_max)
        P = _p_series_checked(sc, theta_c, k)
        dets = np.real(mat2.det(P))
        eps_k = 0.5 / np.sqrt(np.maximum(dets, np.arange(1, len(dets) + 1, dtype=float) ** 2))
        if eps_k[-1] < eps or k >= k_max:
            return P, eps_k
        k *= 4


def _p_series_checked(sc, theta_c, k):
    pot = sc.potential_orbit(theta_c, 2 * k - 1)
    out = _kernels.schrodinger_odd_gram_sums(float(sc.E), pot, int(k))
    finite = np.all(np.isfinite(out.reshape(len(out), -1)), axis=1) & (np.max(np.abs(out), axis=(1, 2)) < 1e150)
    if not finite[-1]:
        last = int(np.argmin(finite)) if not np.all(finite) else len(out)
        if last == 0:
            raise SaturationError("P_1 is not finite")
        return out[:last]
    return out


def epsk_policy(config, E, theta, eps, k_max=K_MAX):
    """The k with eps_{k+1} < eps <= eps_k and the WeylAccumulator at that k.

    det P_k is nondecreasing in k, so eps_k is monotone and the bracket is a
    searchsorted.  Raises ValueError when eps > eps_1 or no bracket exists
    below k_max.
    """
    sc = config.cocycle(E)
    theta_c = np.asarray(theta, dtype=float) + sc.alpha.array
    P, eps_k = _p_series_until(sc, theta_c, eps, k_max)
    if eps > eps_k[0]:
        raise ValueError(f"eps={eps:.3e} above eps_1={eps_k[0]:.3e}")
    if eps_k[-1] >= eps:
        raise ValueError(f"no bracket for eps={eps:.3e} with k <= {len(eps_k)}")
    # first index with eps_k < eps is k + 1 (1-based); eps_k is decreasing
    idx = int(np.searchsorted(-eps_k, -eps, side="right"))
    k = idx  # 1-based k with eps_k >= eps > eps_{k+1}
    acc = _accumulator(sc, theta_c, P, k)
    return k, acc


def _accumulator(sc, theta_c, P, k):
    T = np.eye(2)
    for t in sc.E - sc.potential_orbit(theta_c, 2 * k - 1):
        T = np.array([[t, -1.0], [1.0, 0.0]]) @ T
    return _make(k, np.real(P[k - 1]), T, sc, theta_c)


@dataclass
class ScanRow:
    E: float
    eps: float
    mu_mass: float
    sqrt_bound_ratio: float
    k_used: int
    eps_k: float
    P_norm: float
    bound_mid: float = float("nan")
    bound_right: float = float("nan")
    predicted: float = float("nan")
    L: int = 0
    case: int = 0  # 0: E in the spectrum, 1: interval misses it, 2: shifted to E'
    E_shift: float = float("nan")
    shifted_mass: float = float("nan")
    chain_ok: bool = True
    flagged: bool = False
    theta: tuple = ()

    COLUMNS = ("E", "eps", "mu_mass", "sqrt_bound_ratio", "k_used", "eps_k", "P_norm", "bound_mid",
               "bound_right", "predicted", "L", "case", "E_shift", "shifted_mass", "chain_ok", "flagged")


def _lemma_constant(P_series, eps_k, upto):
    """max over k' <= upto of ||P_k'|| eps_k'^{3/2}."""
    n = mat2.opnorm(np.real(P_series[:upto]))
    return float(np.max(n * eps_k[:upto] ** 1.5))


def modulus_estimate(config, E, eps, theta=None, op=None, slack=0.05):
    """One scan row: the measure of (E - eps, E + eps), the resolvent bound and the P_k bound.

    For E with eps_{k+1} < eps <= eps_k, monotonicity of Im M(E + i eps)/eps
    bounds the middle term by the P_{k+1} chain, so ``bound_right`` uses
    P_{k+1}; ``predicted`` = 4(5+sqrt24) C_P (eps/eps_{k+1})^{3/2} eps^{1/2}
    with C_P = max_{k' <= k+1} ||P_k'|| eps_k'^{3/2}.
    """
    theta = config.theta if theta is None else np.asarray(theta, dtype=float)
    L = config.L_for(eps)
    if op is None or op.L != L:
        op = TruncatedOperator(config.potential, config.lam, config.alpha, theta, L)
    est = spectral_measure(op, (E - eps, E + eps))
    mid = 2.0 * eps * borel_transform(op, E + 1j * eps).imag
    sc = config.cocycle(E)
    theta_c = theta + sc.alpha.array
    try:
        P, eps_k = _p_series_until(sc, theta_c, eps)
        idx = int(np.searchsorted(-eps_k, -eps, side="right"))
        if idx < 1 or idx >= len(eps_k):
            raise ValueError("no bracket")
        k_used = idx + 1  # P_{k+1}
        P_next = np.real(P[k_used - 1])
        P_norm = float(mat2.opnorm(P_next))
        eps_next = float(eps_k[k_used - 1])
        right = CHAIN_CONSTANT * eps * eps * P_norm
        C_P = _lemma_constant(P, eps_k, k_used)
        predicted = CHAIN_CONSTANT * C_P * (eps / eps_next) ** 1.5 * math.sqrt(eps)
        bracket_ok = True
    except (ValueError, SaturationError):
        k_used, P_norm, eps_next, right, predicted, bracket_ok = 0, float("nan"), float("nan"), float("nan"), float("nan"), False
    # spectrum membership at the row resolution
    lo_c = op.count_below(E - eps)
    hits = op.count_below(E + eps) - lo_c
    d_in = RESOLUTION / (2 * L)
    inside = op.count_below(E + d_in) - op.count_below(E - d_in) > 0
    row = ScanRow(float(E), float(eps), float(est.mass), float(est.mass / math.sqrt(eps)), int(k_used),
                  eps_next, P_norm, float(mid), float(right), float(predicted), int(L),
                  theta=tuple(float(t) for t in theta))
    if not inside:
        if hits == 0:
            row.case = 1
        else:
            row.case = 2
            ev = op.eigenvalues(E - eps, E + eps)
            Ep = float(ev[np.argmin(np.abs(ev - E))])
            L2 = config.L_for(eps)  # same resolution suffices for the doubled window
            est2 = spectral_measure(op if op.L == L2 else TruncatedOperator(config.potential, config.lam, config.alpha,
                                                                            theta, L2), (Ep - 2 * eps, Ep + 2 * eps))
            row.E_shift, row.shifted_mass = Ep, float(est2.mass)
    ok = est.mass <= (1 + slack) * mid + 1e-15
    if bracket_ok:
        ok = ok and mid <= (1 + slack) * right and right <= (1 + slack) * predicted
    if row.case == 2:
        ok = ok and row.mu_mass <= row.shifted_mass + 1e-12
    row.chain_ok = bool(ok)
    row.flagged = bool(est.edge_flag and est.richness < 2) or not bracket_ok
    return row


@dataclass
class ScanReport:
    rows: list
    summary: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(("theta",) + ScanRow.COLUMNS)
        for r in self.rows:
            vals = [getattr(r, c) for c in ScanRow.COLUMNS]
            wr.writerow([" ".join(_fmt(t) for t in r.theta)] + [_fmt(v) for v in vals])
        return buf.getvalue()

    def to_json(self):
        return json.dumps(self.summary, default=_json_default, indent=1)


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def _rows_for_L(args):
    config, theta, L, pairs = args
    op = TruncatedOperator(config.potential, config.lam, config.alpha, theta, L)
    return [modulus_estimate(config, E, eps, theta, op=op) for E, eps in pairs]


def _summarize(rows, config):
    ratios = np.array([r.sqrt_bound_ratio for r in rows])
    finite = bool(np.all(np.isfinite(ratios)))
    sup = float(np.max(ratios)) if len(ratios) else 0.0
    eps = np.array([r.eps for r in rows])
    lo = math.floor(math.log10(min(config.eps_grid)) + 1e-9)
    hi = math.ceil(math.log10(max(config.eps_grid)) - 1e-9)
    decades = []
    for p in range(lo, hi):
        m = (eps >= 10.0 ** p * (1 - 1e-12)) & (eps <= 10.0 ** (p + 1) * (1 + 1e-12))
        if np.any(m):
            decades.append({"decade": [10.0 ** p, 10.0 ** (p + 1)], "sup_ratio": float(np.max(ratios[m]))})
    sups = [d["sup_ratio"] for d in decades]
    spread = float(max(sups) / min(sups)) if sups and min(sups) > 0 else float("inf")
    per_E = {}
    for r in rows:
        per_E[r.E] = max(per_E.get(r.E, 0.0), r.sqrt_bound_ratio)
    return {
        "C_emp": sup,
        "finite": finite,
        "per_decade": decades,
        "spread": spread,
        "per_E": [[E, c] for E, c in sorted(per_E.items())],
        "chain_violations": int(sum(1 for r in rows if not r.chain_ok and not r.flagged)),
        "flagged": int(sum(1 for r in rows if r.flagged)),
        "case_counts": {str(c): int(sum(1 for r in rows if r.case == c)) for c in (0, 1, 2)},
        "theta": [float(t) for t in config.theta],
        "rows": len(rows),
    }


def holder_scan(config, workers=1):
    """modulus_estimate over the (E, eps) grid at config.theta.

    Rows are grouped by oracle size L so one truncation serves all energies;
    ``workers`` > 1 spreads the groups over processes.  Output is ordered by
    (E, eps).
    """
    config.validate()
    groups = {}
    for eps in config.eps_grid:
        groups.setdefault(config.L_for(eps), []).extend((E, eps) for E in config.E_grid)
    tasks = [(config, config.theta, L, pairs) for L, pairs in sorted(groups.items())]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            chunks = list(ex.map(_rows_for_L, tasks))
    else:
        chunks = [_rows_for_L(t) for t in tasks]
    rows = sorted((r for ch in chunks for r in ch), key=lambda r: (r.E, r.eps))
    return ScanReport(rows, _summarize(rows, config))


def phase_robustness(config, thetas, workers=1):
    """holder_scan at each phase; returns (reports, max C_emp / min C_emp)."""
    reports = [holder_scan(config.with_theta(t), workers) for t in thetas]
    cs = [r.summary["C_emp"] for r in reports]
    return reports, float(max(cs) / min(cs))


@dataclass
class LemmaPReport:
    E: float
    k: np.ndarray
    ratios: np.ndarray  # ||P_k|| ||P_k^{-1}||^3
    sup: float
    slope: float  # least-squares slope of log ratio against log k
    skipped: bool = False
    note: str = ""
    kam: dict = None

    def to_dict(self):
        out = asdict(self)
        out["k"] = [int(v) for v in self.k]
        out["ratios"] = [float(v) for v in self.ratios]
        return out


def lemma_P_check(config, E, theta=None, k_list=None, kam_k=(), kam_kwargs=None, check_spectrum=True):
    """Ratios ||P_k|| ||P_k^{-1}||^3 along k_list at the operator phase theta.

    Skips (with a note) energies outside the spectrum.  For each k in
    ``kam_k`` the bounds ||P_k|| <= ||Phi||^4 ||X~_k|| and
    ||P_k^{-1}||^{-1} >= ||Phi||^{-4} ||X~_k^{-1}||^{-1} are checked with
    Phi = B_n U_n^{-1} from a KAM run.
    """
    theta = config.theta if theta is None else np.asarray(theta, dtype=float)
    if k_list is None:
        k_list = np.unique(np.round(np.logspace(1, 4, 31)).astype(int))
    k_list = np.asarray(sorted(set(int(k) for k in k_list)), dtype=int)
    if check_spectrum and not in_spectrum(config.potential, config.lam, config.alpha, theta, E):
        return LemmaPReport(float(E), k_list, np.zeros(0), float("nan"), float("nan"), True,
                            "energy outside the spectrum; P_k grows exponentially there")
    sc = config.cocycle(E)
    theta_c = theta + sc.alpha.array
    P = np.real(_p_series_checked(sc, theta_c, int(k_list[-1])))
    Pk = P[k_list - 1]
    ratios = mat2.opnorm(Pk) / mat2.min_singular(Pk) ** 3
    slope = float(np.polyfit(np.log(k_list), np.log(ratios), 1)[0]) if len(k_list) > 1 else 0.0
    rep = LemmaPReport(float(E), k_list, ratios, float(np.max(ratios)), slope)
    if len(kam_k):
        rep.kam = _kam_cross_check(sc, theta_c, P, kam_k, kam_kwargs or {})
    return rep


def _kam_cross_check(sc, theta_c, P, ks, kwargs):
    from .triangular import triangularize
    st = schrodinger_kam(sc, check_residual=False, **kwargs)
    U = triangularize(st.A_j).U
    Uinv = np.conj(U.T)
    phi = st.B_norm0(grid=64)
    out = {"steps": st.j, "eps": float(st.eps_j), "Phi_norm": phi, "upper_ok": True, "lower_ok": True, "rows": []}
    kmax = int(max(ks))
    pts = theta_c[None, :] + np.arange(2 * kmax - 1)[:, None] * sc.alpha.array[None, :]
    mats = U[None] @ st.cocycle_matrix(pts) @ Uinv[None]
    Xt = _kernels.odd_gram_sums(np.ascontiguousarray(mats, dtype=complex), kmax)
    for k in ks:
        Pk = P[int(k) - 1]
        X = Xt[int(k) - 1]
        upper = phi ** 4 * float(mat2.opnorm(X))
        lower = phi ** -4 * float(mat2.min_singular(X))
        pn, pm = float(mat2.opnorm(Pk)), float(mat2.min_singular(Pk))
        up_ok = pn <= upper * (1 + 1e-8)
        lo_ok = pm >= lower * (1 - 1e-8)
        out["upper_ok"] &= up_ok
        out["lower_ok"] &= lo_ok
        out["rows"].append({"k": int(k), "P_norm": pn, "upper": upper, "P_min": pm, "lower": lower})
    return out


def edge_exponent(E=2.0, eps_grid=None, L_oracle=2000, lam=0.0, d=1):
    """Least-squares exponent of mu(E - eps, E + eps) against eps (free edge by default)."""
    eps_grid = log_grid(1e-4, 1e-1, 3) if eps_grid is None else eps_grid
    V = AnalyticTorusFunction.cosine_potential(d)
    alpha = [(math.sqrt(5) - 1) / 2] if d == 1 else [math.sqrt(2) - 1, math.sqrt(3) - 1][:d]
    masses = []
    for eps in eps_grid:
        L = int(max(L_oracle, math.ceil(RESOLUTION / eps)))
        op = TruncatedOperator(V, lam, alpha, np.zeros(d), L)
        masses.append(spectral_measure(op, (E - eps, E + eps)).mass)
    slope = np.polyfit(np.log(eps_grid), np.log(masses), 1)[0]
    return float(slope), np.asarray(masses)
