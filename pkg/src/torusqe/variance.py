"""Quantum variance sums over eigenspaces and spectral windows.

Every theorem-side quantity is computed without its unspecified constant;
reports expose LHS / RHS so the constants appear as measured ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lattice import (
    LatticeError,
    LatticeShell,
    ball_points,
    enumerate_shell,
    lattice_count,
    min_separation_sq,
    nonempty_shells,
    primitive_norm,
    window_pair_count,
)
from .measures import TorusMeasure, convolve_many
from .observables import (
    Observable,
    basis_integrals,
    coupling_matrix,
    density_coeffs,
    integrate_density,
    l4_norm,
    zygmund_excess,
)
from .spectral import EigenBasis, random_onb

SLACK = 1e-9

BasisProvider = Callable[[LatticeShell], EigenBasis]


class InvariantViolation(AssertionError):
    """An inequality that must hold for every orthonormal basis failed beyond tolerance."""


# ---------------------------------------------------------------------------
# single eigenspace
# ---------------------------------------------------------------------------


def _require_real(a: Observable):
    if not a.is_real:
        raise ValueError("quantum variance is defined here for real-valued observables only")


def deviations(a: Observable, basis: EigenBasis, M: np.ndarray | None = None) -> np.ndarray:
    """int a |psi_j|^2 dx - int a dx for every row of the basis."""
    return basis_integrals(a, basis, M) - a.mean


def s2(a: Observable, basis: EigenBasis, M: np.ndarray | None = None) -> float:
    """S_2 = sum_j |int a |psi_j|^2 dx - int a dx|^2 over one eigenspace."""
    _require_real(a)
    dev = deviations(a, basis, M)
    return float(np.sum(np.abs(dev) ** 2))


def moment_bound_rhs(a: Observable, shell: LatticeShell) -> float:
    """sum over 1 <= |n| <= 2 sqrt(E) of |a_n|^2 * pair_count(shell, n)."""
    if a.dim != shell.dim:
        raise ValueError("dimension mismatch")
    nsq = (a.keys * a.keys).sum(axis=1)
    sel = (nsq >= 1) & (nsq <= 4 * shell.norm_sq)
    if not sel.any():
        return 0.0
    N, w = a.keys[sel], np.abs(a.values[sel]) ** 2
    # |k + n| = |k|  <=>  2<n, k> + |n|^2 = 0, counted for all n at once
    counts = np.count_nonzero(2 * (shell.points @ N.T) + nsq[sel][None, :] == 0, axis=0)
    return float(np.sum(w * counts))


@dataclass(frozen=True)
class EigenspaceBound:
    norm_sq: int
    r: int
    s2: float
    normalized_variance: float  # s2 / r
    d2_bound: float | None      # 2 ||a||^2 / r_2, d = 2 only
    general_bound: float        # ||a||^2 min{1, lambda^(d-2) / r_d}, constant omitted
    moment_rhs: float


def eigenspace_bound_report(a: Observable, shell: LatticeShell, provider: BasisProvider) -> EigenspaceBound:
    if len(shell) < 1:
        raise LatticeError("empty shell")
    S = s2(a, provider(shell))
    r = len(shell)
    norm = a.l2_norm_sq
    d2 = 2 * norm / r if shell.dim == 2 else None
    if d2 is not None and S / r > d2 + SLACK:
        raise InvariantViolation(f"E={shell.norm_sq}: S2/r = {S / r} exceeds 2||a||^2/r = {d2}")
    general = norm * min(1.0, shell.lam ** (shell.dim - 2) / r)
    return EigenspaceBound(shell.norm_sq, r, S, S / r, d2, general, moment_bound_rhs(a, shell))


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralWindow:
    """Eigenvalues E with E_lo <= E <= E_hi (all endpoints inclusive on the integer side)."""

    dim: int
    E_lo: int
    E_hi: int
    lam: float
    mode: str = "custom"

    @property
    def eigenvalues(self) -> list[int]:
        if self.E_hi < self.E_lo:
            return []
        return nonempty_shells(self.dim, self.E_hi, self.E_lo)

    @property
    def cardinality(self) -> int:
        """|{k : E_lo <= |k|^2 <= E_hi}|, the number of eigenfunctions in the window."""
        return lattice_count(self.dim, self.E_hi, self.E_lo) if self.E_hi >= self.E_lo else 0


def window(d: int, c: float, lam: float) -> SpectralWindow:
    """c <= lambda_j <= lam, inclusive at both ends."""
    if c < 0 or lam < c:
        raise ValueError("need 0 <= c <= lam")
    return SpectralWindow(d, max(0, math.ceil(c * c - 1e-9)), math.floor(lam * lam + 1e-9), lam, "interval")


def long_window(d: int, lam: float) -> SpectralWindow:
    return SpectralWindow(d, 0, math.floor(lam * lam + 1e-9), lam, "long")


def short_window(d: int, lam: float) -> SpectralWindow:
    """lam - 1 < lambda_j <= lam, i.e. integers E in ((lam-1)^2, lam^2]."""
    lo = math.floor((lam - 1) ** 2 + 1e-9) + 1
    return SpectralWindow(d, lo, math.floor(lam * lam + 1e-9), lam, "short")


def eigenspace_window(d: int, E: int) -> SpectralWindow:
    return SpectralWindow(d, E, E, math.sqrt(E), "eigenspace")


@dataclass(frozen=True)
class ShellRow:
    norm_sq: int
    r: int
    s2: float
    moment_rhs: float
    deviations: np.ndarray = field(repr=False)


@dataclass
class VarianceReport:
    dim: int
    window: SpectralWindow
    basis_label: str
    rows: list[ShellRow]
    v2: float
    rhs: float
    a_l2: float
    extras: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.v2 / self.rhs if self.rhs > 0 else (0.0 if self.v2 == 0 else math.inf)

    def shell_table(self) -> list[dict]:
        return [
            {"E": r.norm_sq, "r": r.r, "s2": r.s2, "moment_rhs": r.moment_rhs}
            for r in self.rows
        ]

    def row_table(self) -> list[dict]:
        out = []
        for r in self.rows:
            for j, dev in enumerate(r.deviations):
                out.append({"E": r.norm_sq, "j": j, "dev_re": dev.real, "dev_im": dev.imag, "abs_dev": abs(dev)})
        return out

    def summary(self) -> dict:
        return {
            "dim": self.dim,
            "mode": self.window.mode,
            "E_lo": self.window.E_lo,
            "E_hi": self.window.E_hi,
            "lambda": self.window.lam,
            "basis": self.basis_label,
            "n_eigenvalues": len(self.rows),
            "n_eigenfunctions": int(sum(r.r for r in self.rows)),
            "V2": self.v2,
            "prop_rhs": self.rhs,
            "ratio": self.ratio,
            "a_l2_sq": self.a_l2,
            **self.extras,
        }


def prop_rhs(a: Observable, win: SpectralWindow) -> float:
    """sum_n |a_n|^2 |{k in window : |k + n| = |k|}| / |{k in window}|."""
    N = win.cardinality
    if N == 0:
        return math.nan
    nsq = (a.keys * a.keys).sum(axis=1)
    sel = (nsq >= 1) & (nsq <= 4 * win.E_hi)
    total = 0.0
    for n, v in zip(a.keys[sel], a.values[sel]):
        cnt = window_pair_count(win.dim, n, win.E_lo, win.E_hi)
        if cnt:
            total += abs(v) ** 2 * cnt
    return total / N


def maintheo_rhs(a: Observable, lam: float) -> float:
    """(1/lam) sum_{1 <= |n| <= 2 lam} |a_n|^2 / |n_hat|, constant omitted."""
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    nsq = (a.keys * a.keys).sum(axis=1)
    sel = (nsq >= 1) & (nsq <= 4 * lam * lam + 1e-9)
    if not sel.any():
        return 0.0
    w = np.abs(a.values[sel]) ** 2 / primitive_norm(a.keys[sel])
    return float(w.sum() / lam)


def shell_rows(a: Observable, win: SpectralWindow, provider: BasisProvider) -> list[ShellRow]:
    rows = []
    for E in win.eigenvalues:
        shell = enumerate_shell(win.dim, E)
        dev = deviations(a, provider(shell))
        rows.append(ShellRow(E, len(shell), float(np.sum(np.abs(dev) ** 2)), moment_bound_rhs(a, shell), dev))
    return rows


def v2(a: Observable, win: SpectralWindow, provider: BasisProvider, label: str = "",
       slack: float = SLACK, check: bool = True) -> VarianceReport:
    """Window-averaged variance V_2 against the pair-count bound of the window."""
    _require_real(a)
    if a.dim != win.dim:
        raise ValueError("dimension mismatch")
    rows = shell_rows(a, win, provider)
    if not rows:
        raise ValueError(f"empty spectral window [{win.E_lo}, {win.E_hi}]")
    N = sum(r.r for r in rows)
    V = sum(r.s2 for r in rows) / N
    rhs = prop_rhs(a, win)
    if check and V > rhs + slack:
        raise InvariantViolation(f"V2 = {V} exceeds the window bound {rhs} on [{win.E_lo}, {win.E_hi}]")
    rep = VarianceReport(win.dim, win, label, rows, V, rhs, a.l2_norm_sq)
    if win.lam >= 1:
        mt = maintheo_rhs(a, win.lam)
        rep.extras["maintheo_rhs"] = mt
        rep.extras["maintheo_ratio"] = V / mt if mt > 0 else None
    return rep


def short_interval_report(a: Observable, lam: float, provider: BasisProvider, label: str = "") -> VarianceReport:
    """V_2 over ((lam-1)^2, lam^2] with the 1/lam ratio and the short-interval pair cap."""
    if lam < 2:
        raise ValueError("lambda must be >= 2")
    win = short_window(a.dim, lam)
    if not win.eigenvalues:
        return VarianceReport(a.dim, win, label, [], math.nan, math.nan, a.l2_norm_sq, {"empty": True})
    rep = v2(a, win, provider, label)
    norm = a.l2_norm_sq
    rep.extras["short_scaled_ratio"] = rep.v2 * lam / norm if norm > 0 else None
    # LR-short: per-n window pair count against lam^(d-2)
    cap = 0.0
    for n in a.keys:
        if n.any():
            cap = max(cap, window_pair_count(win.dim, n, win.E_lo, win.E_hi) / lam ** (win.dim - 2))
    rep.extras["short_pair_cap"] = cap
    return rep


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------


def measure_coupling(a: Observable, mu: TorusMeasure, shell: LatticeShell) -> np.ndarray:
    """G[k, l] = int a e_k conj(e_l) dmu = sum_p a_p mu_hat(l - k - p)."""
    P = shell.points
    D = (P[None, :, :] - P[:, None, :]).reshape(-1, shell.dim)
    uniq, inv = np.unique(D, axis=0, return_inverse=True)
    vals = convolve_many(a, mu, uniq)
    return vals[inv.reshape(-1)].reshape(len(P), len(P))


def measure_integrals(a: Observable, mu: TorusMeasure, basis: EigenBasis) -> np.ndarray:
    """int a |psi_j|^2 dmu for every row of the basis."""
    G = measure_coupling(a, mu, basis.shell)
    U = basis.matrix
    return np.sum((U @ G) * U.conj(), axis=1)


def alpha_sum(d: int, alpha: float, lam: float) -> float:
    """sum over 1 <= |n| <= lam of 1 / (|n_hat| |n|^alpha)."""
    pts = ball_points(d, math.floor(lam * lam + 1e-9), 1)
    nrm = np.sqrt((pts * pts).sum(axis=1).astype(np.float64))
    return float(np.sum(1.0 / (primitive_norm(pts) * nrm**alpha)))


def alpha_case(d: int, alpha: float, tol: float = 1e-12) -> str:
    if alpha > d - 1 + tol:
        return "alpha>d-1"
    if alpha < d - 1 - tol:
        return "alpha<d-1"
    return "alpha=d-1"


def alpha_envelopes(d: int, alpha: float, lam: float) -> dict:
    """The three candidate growth envelopes of alpha_sum: (log)^2, log and no log factor."""
    base = lam ** max(d - 1 - alpha, 0.0)
    L = math.log(lam) if lam > 1 else 0.0
    return {"log2": L * L * base, "log1": L * base, "log0": base}


def log_power_fit(d: int, alpha: float, lams) -> float:
    """Exponent k in alpha_sum ~ (log lam)^k lam^max(d-1-alpha, 0), by least squares."""
    lams = np.asarray([l for l in lams if l > math.e], dtype=np.float64)
    if len(lams) < 2:
        raise ValueError("need at least two lambdas above e")
    y = [math.log(alpha_sum(d, alpha, l) / l ** max(d - 1 - alpha, 0.0)) for l in lams]
    slope, _ = np.polyfit(np.log(np.log(lams)), y, 1)
    return float(slope)


@dataclass
class MeasureVarianceReport:
    dim: int
    window: SpectralWindow
    basis_label: str
    mode: str
    norm_sqs: np.ndarray          # eigenvalue of each row, sorted
    deviations: np.ndarray        # int a|psi_j|^2 dmu - int a dmu
    target: complex               # int a dmu
    v2: float
    rhs: float                    # (1/lam) sum |int a e^{-inx} dmu|^2 / |n_hat|
    extras: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.v2 / self.rhs if self.rhs > 0 else (0.0 if self.v2 == 0 else math.inf)

    def row_table(self) -> list[dict]:
        return [
            {"E": int(E), "j": j, "dev_re": d.real, "dev_im": d.imag, "abs_dev": abs(d)}
            for j, (E, d) in enumerate(zip(self.norm_sqs, self.deviations))
        ]

    def summary(self) -> dict:
        return {
            "dim": self.dim,
            "mode": self.mode,
            "E_lo": self.window.E_lo,
            "E_hi": self.window.E_hi,
            "lambda": self.window.lam,
            "basis": self.basis_label,
            "n_eigenfunctions": int(len(self.deviations)),
            "target_re": self.target.real,
            "target_im": self.target.imag,
            "V2": self.v2,
            "rhs": self.rhs,
            "ratio": self.ratio,
            **self.extras,
        }


def measure_variance(a: Observable, mu: TorusMeasure, win: SpectralWindow, provider: BasisProvider,
                     mode: str = "raw", label: str = "") -> MeasureVarianceReport:
    """Variance of int a |psi_j|^2 dmu over a window.

    ``mode="probability"`` requires mu to be a probability measure carrying a
    decay exponent and adds the alpha pipeline (sum, case, envelopes and the
    predicted rate); ``mode="raw"`` uses mu as given (hypersurface measure).
    """
    if mode not in ("raw", "probability"):
        raise ValueError("mode must be 'raw' or 'probability'")
    if mode == "probability":
        if mu.alpha is None:
            raise ValueError("probability mode needs the measure's decay exponent alpha")
        if abs(mu.mass - 1.0) > 1e-12:
            raise ValueError("probability mode needs a normalized measure (use mu.normalized())")
    if a.dim != mu.dim or a.dim != win.dim:
        raise ValueError("dimension mismatch")
    Es, devs = [], []
    target = complex(convolve_many(a, mu, np.zeros((1, a.dim), dtype=np.int64))[0])
    for E in win.eigenvalues:
        shell = enumerate_shell(win.dim, E)
        vals = measure_integrals(a, mu, provider(shell))
        devs.append(vals - target)
        Es.extend([E] * len(shell))
    if not Es:
        raise ValueError("empty spectral window")
    dev = np.concatenate(devs)
    V = float(np.mean(np.abs(dev) ** 2))
    lam = win.lam
    rhs = math.nan
    if lam >= 1:
        ns = ball_points(win.dim, math.floor(4 * lam * lam + 1e-9), 1)
        conv = convolve_many(a, mu, ns)
        rhs = float(np.sum(np.abs(conv) ** 2 / primitive_norm(ns)) / lam)
    rep = MeasureVarianceReport(win.dim, win, label, mode, np.asarray(Es), dev, target, V, rhs)
    if mode == "probability" and lam > 1 and math.isfinite(mu.alpha):
        d, alpha = win.dim, mu.alpha
        rep.extras.update(
            alpha=alpha,
            alpha_case=alpha_case(d, alpha),
            alpha_sum=alpha_sum(d, alpha, lam),
            **{f"envelope_{k}": v for k, v in alpha_envelopes(d, alpha, lam).items()},
            predicted_rate=math.log(lam) ** 2 * lam ** max(d - 2 - alpha, -1.0),
        )
    elif mode == "raw" and lam > 1:
        rep.extras["predicted_rate"] = math.log(lam) ** 2 / lam
    return rep


@dataclass(frozen=True)
class DensityOneResult:
    indices: np.ndarray
    density: float
    n_total: int


def density_one_extract(report, R: Callable[[float], float]) -> DensityOneResult:
    """Indices j with |dev_j| <= R(lambda_j) log(lambda_j) lambda_j^(-1/2), and their share.

    A finite-scale diagnostic; lambda_j <= 1 gets threshold 0.
    """
    if isinstance(report, VarianceReport):
        Es = np.concatenate([[r.norm_sq] * r.r for r in report.rows]).astype(np.float64)
        dev = np.concatenate([r.deviations for r in report.rows])
    else:
        Es, dev = report.norm_sqs.astype(np.float64), report.deviations
    order = np.argsort(Es, kind="stable")
    Es, dev = Es[order], dev[order]
    lam = np.sqrt(Es)
    thr = np.zeros_like(lam)
    big = lam > 1
    thr[big] = np.array([R(l) for l in lam[big]]) * np.log(lam[big]) / np.sqrt(lam[big])
    keep = np.abs(dev) <= thr
    idx = np.nonzero(keep)[0]
    return DensityOneResult(idx, len(idx) / len(dev), len(dev))


# ---------------------------------------------------------------------------
# exact cancellation (d = 2, separated eigenvalues)
# ---------------------------------------------------------------------------


def haar_vectors(shell: LatticeShell, count: int, seed: int = 0) -> list:
    """``count`` Haar-random unit eigenfunctions: first rows of independent bases."""
    return [random_onb(shell, seed + i)[0] for i in range(count)]


def exact_cancellation_check(shell: LatticeShell, p, n_samples: int = 20, seed: int = 0,
                             tol: float = 1e-12) -> bool:
    """True iff min_separation(shell) > |p|; then int e_p |psi|^2 dx is verified exact.

    For p != 0 every sampled psi must give 0 (no k - l = p on the shell); for
    p = 0 the integral is the L2 mass 1.
    """
    if shell.dim != 2:
        raise ValueError("exact cancellation is a d = 2 statement")
    p = np.asarray(p, dtype=np.int64)
    separated = len(shell) < 2 or min_separation_sq(shell) > int(p @ p)
    if not separated:
        return False
    a = Observable.exponential(p)
    want = 1.0 if not p.any() else 0.0
    for psi in haar_vectors(shell, n_samples, seed):
        val = integrate_density(a, psi)
        if abs(val - want) > tol:
            raise InvariantViolation(f"E={shell.norm_sq}, p={p.tolist()}: integral {val} != {want}")
    return True


def cancellation_residual(shell: LatticeShell, psis, radius_sq: int) -> float:
    """max over psi and 0 < |p|^2 < radius_sq of |int e_p |psi|^2 dx|, via the density support."""
    ps = ball_points(2, radius_sq - 1, 1) if radius_sq > 1 else np.zeros((0, 2), dtype=np.int64)
    worst = 0.0
    for psi in psis:
        dens = density_coeffs(psi)
        # int e_p |psi|^2 dx = conj(dens_p) since |psi|^2 is real
        worst = max(worst, float(np.abs(dens.lookup(ps)).max()) if len(ps) else 0.0)
    return worst


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


ZYGMUND_BOUND = 3 ** 0.25


@dataclass(frozen=True)
class ZygmundSample:
    norm_sq: int
    l4: float
    excess: float  # X = int |psi|^4 dx - 1; the chain gives X^2 <= 2X


def zygmund_sample(E_max: int, i: int, seed: int = 0) -> ZygmundSample:
    """Sample i: first row of a Haar basis (seed + i) on the i-th nonempty d=2 shell, cyclically."""
    Es = nonempty_shells(2, E_max, 1)
    E = Es[i % len(Es)]
    psi = random_onb(enumerate_shell(2, E), seed + i)[0]
    return ZygmundSample(E, l4_norm(psi), zygmund_excess(psi))


@dataclass
class InequalityTally:
    checks: int = 0
    violations: list = field(default_factory=list)
    max_ratio: float = 0.0


def master_inequality_sweep(d: int, Es, observables: dict, families: dict, slack: float = SLACK,
                            tally: InequalityTally | None = None) -> InequalityTally:
    """S_2(a, B) <= moment_bound_rhs(a, shell) for every shell, observable and basis family."""
    tally = tally or InequalityTally()
    for E in Es:
        shell = enumerate_shell(d, E)
        bases = {name: fam(shell) for name, fam in families.items()}
        for oname, a in observables.items():
            M = coupling_matrix(a, shell)
            rhs = moment_bound_rhs(a, shell)
            for bname, B in bases.items():
                lhs = s2(a, B, M)
                tally.checks += 1
                if lhs > rhs + slack:
                    tally.violations.append((d, E, oname, bname, lhs, rhs))
                if rhs > 0:
                    tally.max_ratio = max(tally.max_ratio, lhs / rhs)
    return tally
