"""Restriction and period integrals of eigenfunctions over hypersurfaces.

Everything goes through the measure's Fourier coefficients: for
sigma_hat(n) = int e^{-i<n,x>} dsigma one has int_S f dsigma =
sum_m f_m sigma_hat(-m) for any trigonometric polynomial f, so the integrals
below are finite sums once |psi|^2 is expanded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import enumerate_shell, nonempty_shells
from .measures import TorusMeasure
from .observables import Observable, density_coeffs
from .spectral import EigenBasis, Eigenfunction
from .variance import BasisProvider, InvariantViolation, measure_coupling

CS_SLACK = 1e-9
REAL_TOL = 1e-9


def _pair(f: Observable, sigma: TorusMeasure) -> complex:
    """int f dsigma = sum_m f_m sigma_hat(-m)."""
    if f.dim != sigma.dim:
        raise ValueError(f"dimension mismatch: observable d={f.dim}, measure d={sigma.dim}")
    if not len(f):
        return 0.0j
    return complex(np.sum(f.values * sigma.coeffs(-f.keys)))


def coefficient_errors(sigma: TorusMeasure, ns) -> np.ndarray:
    """Recorded quadrature error of sigma_hat at each n (zero for closed forms)."""
    ns = np.asarray(ns, dtype=np.int64).reshape(-1, sigma.dim)
    errs = sigma.meta.get("errors")
    if sigma.kind != "quadrature" or errs is None:
        return np.zeros(len(ns))
    return np.array([errs.get(tuple(n), sigma.meta.get("tol", 0.0)) for n in ns.tolist()])


def _as_real(z: complex, scale: float, what: str) -> float:
    if abs(z.imag) > REAL_TOL * max(1.0, scale):
        raise InvariantViolation(f"{what} has imaginary part {z.imag:.3e} for a real observable")
    return z.real


def restriction_integral(a: Observable, psi: Eigenfunction, sigma: TorusMeasure):
    """int_S a |psi|^2 dsigma; real for real a, complex otherwise."""
    if a.dim != psi.dim:
        raise ValueError("dimension mismatch")
    z = _pair(a * density_coeffs(psi), sigma)
    if a.is_real:
        return _as_real(z, abs(sigma.mass) * float(np.abs(a.values).sum()), "restriction integral")
    return z


def restriction_error_budget(a: Observable, psi: Eigenfunction, sigma: TorusMeasure) -> float:
    """Additive propagation of the per-coefficient quadrature errors into the finite sum."""
    f = a * density_coeffs(psi)
    sigma.coeffs(-f.keys)  # make sure the errors are recorded
    return float(np.sum(np.abs(f.values) * coefficient_errors(sigma, -f.keys)))


def target_integral(a: Observable, sigma: TorusMeasure) -> complex:
    """int_S a dsigma."""
    return _pair(a, sigma)


def period_integral(psi: Eigenfunction, sigma: TorusMeasure) -> tuple[complex, float]:
    """(int_S psi dsigma, Cauchy-Schwarz bound (sum_k |sigma_hat(k)|^2)^(1/2))."""
    P = psi.shell.points
    value = complex(np.sum(psi.coeffs * sigma.coeffs(-P)))
    bound = float(np.sqrt(np.sum(np.abs(sigma.coeffs(P)) ** 2)))
    if abs(value) > bound + CS_SLACK:
        raise InvariantViolation(f"|period| = {abs(value)} exceeds the Cauchy-Schwarz bound {bound}")
    return value, bound


def cs_extremal(shell, sigma: TorusMeasure) -> Eigenfunction:
    """The eigenfunction attaining the Cauchy-Schwarz bound: c_k proportional to conj(sigma_hat(-k))."""
    c = np.conj(sigma.coeffs(-shell.points))
    nrm = np.linalg.norm(c)
    if nrm == 0:
        raise ValueError("sigma_hat vanishes on the whole shell")
    return Eigenfunction(shell, c / nrm)


def br_ratio(psi: Eigenfunction, sigma: TorusMeasure) -> float:
    """||psi||_{L2(S)} / ||psi||_{L2(T^2)} for a curve measure."""
    if psi.dim != 2 or sigma.dim != 2:
        raise ValueError("the L2 restriction ratio is taken on curves in T^2")
    val = restriction_integral(Observable.constant(2), psi, sigma)
    return math.sqrt(max(val, 0.0))


@dataclass(frozen=True)
class RestrictionRecord:
    norm_sq: int
    j: int
    restriction_value: float
    target: float
    period: complex
    cs_bound: float
    l2_ratio: float

    def as_row(self) -> dict:
        return {
            "E": self.norm_sq, "j": self.j, "restriction_value": self.restriction_value,
            "target": self.target, "period_re": self.period.real, "period_im": self.period.imag,
            "cs_bound": self.cs_bound, "l2_ratio": self.l2_ratio,
        }


def _basis_values(a: Observable, basis: EigenBasis, sigma: TorusMeasure) -> np.ndarray:
    G = measure_coupling(a, sigma, basis.shell)
    U = basis.matrix
    return np.sum((U @ G) * U.conj(), axis=1)


def restriction_records(a: Observable, basis: EigenBasis, sigma: TorusMeasure) -> list[RestrictionRecord]:
    """One record per basis row, all integrals through sigma_hat."""
    shell = basis.shell
    target = target_integral(a, sigma)
    scale = abs(sigma.mass) * float(np.abs(a.values).sum()) if len(a) else 1.0
    vals = _basis_values(a, basis, sigma)
    one = _basis_values(Observable.constant(a.dim), basis, sigma)
    P = shell.points
    sig_minus = sigma.coeffs(-P)
    bound = float(np.sqrt(np.sum(np.abs(sigma.coeffs(P)) ** 2)))
    periods = basis.matrix @ sig_minus
    out = []
    for j in range(len(shell)):
        v = complex(vals[j])
        if a.is_real:
            v = _as_real(v, scale, "restriction integral")
        if abs(periods[j]) > bound + CS_SLACK:
            raise InvariantViolation(f"E={shell.norm_sq} row {j}: period exceeds Cauchy-Schwarz bound")
        l2 = math.sqrt(max(one[j].real, 0.0))
        out.append(RestrictionRecord(shell.norm_sq, j, v, target.real if a.is_real else target,
                                     complex(periods[j]), bound, l2))
    return out


@dataclass(frozen=True)
class PeriodRow:
    norm_sq: int
    lam: float
    max_period: float
    cs_bound: float
    scaled: float  # lam^(1/2 - delta) * cs_bound


def period_decay_sweep(sigma: TorusMeasure, E_max: int, provider: BasisProvider, delta: float = 0.1,
                       E_min: int = 1, curvature: float | None = None) -> list[PeriodRow]:
    """Per-shell max over the basis of |int_S psi dsigma| with the Cauchy-Schwarz bound.

    ``curvature`` is the sampled minimum curvature of the underlying surface;
    pass it to have flat surfaces rejected.
    """
    if curvature is not None and curvature <= 0:
        raise ValueError("period decay needs a surface with nonvanishing curvature")
    rows = []
    for E in nonempty_shells(sigma.dim, E_max, max(E_min, 1)):
        shell = enumerate_shell(sigma.dim, E)
        B = provider(shell)
        P = shell.points
        periods = B.matrix @ sigma.coeffs(-P)
        bound = float(np.sqrt(np.sum(np.abs(sigma.coeffs(P)) ** 2)))
        mx = float(np.abs(periods).max())
        if mx > bound + CS_SLACK:
            raise InvariantViolation(f"E={E}: period {mx} exceeds Cauchy-Schwarz bound {bound}")
        lam = math.sqrt(E)
        rows.append(PeriodRow(E, lam, mx, bound, lam ** (0.5 - delta) * bound))
    return rows


@dataclass(frozen=True)
class BRSummary:
    ratio_min: float
    ratio_max: float
    n_rows: int
    argmin: tuple[int, int]
    argmax: tuple[int, int]


def br_sweep(sigma: TorusMeasure, E_max: int, provider: BasisProvider, E_min: int = 1) -> BRSummary:
    """Running min and max of the L2 restriction ratio over every row of every shell."""
    if sigma.dim != 2:
        raise ValueError("the L2 restriction ratio is taken on curves in T^2")
    one = Observable.constant(2)
    lo, hi = math.inf, -math.inf
    arg_lo = arg_hi = (0, 0)
    n = 0
    for E in nonempty_shells(2, E_max, max(E_min, 1)):
        vals = _basis_values(one, provider(enumerate_shell(2, E)), sigma).real
        ratios = np.sqrt(np.maximum(vals, 0.0))
        n += len(ratios)
        j = int(ratios.argmin())
        if ratios[j] < lo:
            lo, arg_lo = float(ratios[j]), (E, j)
        j = int(ratios.argmax())
        if ratios[j] > hi:
            hi, arg_hi = float(ratios[j]), (E, j)
    if n == 0:
        raise ValueError("no eigenfunctions in range")
    return BRSummary(lo, hi, n, arg_lo, arg_hi)


@dataclass(frozen=True)
class EquidistributionRow:
    norm_sq: int
    lam: float
    max_deviation: float
    budget: float  # lam^(-(1-delta)/2) * max_j sum_{k != l} |c_k||c_l|


def curve_equidistribution_sweep(a: Observable, sigma: TorusMeasure, Es, provider: BasisProvider,
                                 delta: float = 0.2) -> list[EquidistributionRow]:
    """For each E, max over the basis of |int_S a|psi|^2 dsigma - int_S a dsigma|."""
    if a.dim != 2 or sigma.dim != 2:
        raise ValueError("curve equidistribution is a d = 2 sweep")
    target = target_integral(a, sigma)
    rows = []
    for E in Es:
        shell = enumerate_shell(2, E)
        B = provider(shell)
        dev = np.abs(_basis_values(a, B, sigma) - target)
        l1 = np.abs(B.matrix).sum(axis=1)
        offdiag = float((l1 * l1 - 1.0).max())
        lam = math.sqrt(E)
        rows.append(EquidistributionRow(E, lam, float(dev.max()), lam ** (-(1 - delta) / 2) * offdiag))
    return rows
