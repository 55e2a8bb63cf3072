"""Laplace eigenfunctions on T^d as coefficient vectors over lattice shells."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeError, LatticeShell, as_point, enumerate_shell

NORM_TOL = 1e-12
UNITARY_TOL = 1e-10


@dataclass(frozen=True)
class Eigenfunction:
    """psi = sum_k coeffs[k] e_k with k running over ``shell.points``."""

    shell: LatticeShell
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != (len(self.shell),):
            raise ValueError(f"coeffs shape {c.shape} does not match shell size {len(self.shell)}")
        norm = float(np.vdot(c, c).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"eigenfunction not L2-normalized: sum |c|^2 = {norm!r}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def dim(self) -> int:
        return self.shell.dim

    @property
    def norm_sq(self) -> int:
        return self.shell.norm_sq

    @classmethod
    def from_points(cls, dim: int, E: int, entries: dict) -> Eigenfunction:
        """Build from {point: coefficient}; the result is normalized."""
        shell = enumerate_shell(dim, E)
        c = np.zeros(len(shell), dtype=np.complex128)
        for k, v in entries.items():
            if k not in shell:
                raise LatticeError(f"{k} is not on the shell |k|^2 = {E}")
            c[shell.index_of(k)] = v
        c /= np.linalg.norm(c)
        return cls(shell, c)


@dataclass(frozen=True)
class EigenBasis:
    """Orthonormal basis of one eigenspace; row j holds the coefficients of psi_j."""

    shell: LatticeShell
    matrix: np.ndarray = field(repr=False)
    label: str = ""

    def __post_init__(self):
        U = np.asarray(self.matrix, dtype=np.complex128)
        r = len(self.shell)
        if U.shape != (r, r):
            raise ValueError(f"basis matrix shape {U.shape} != ({r}, {r})")
        err = np.abs(U @ U.conj().T - np.eye(r)).max() if r else 0.0
        if err > UNITARY_TOL:
            raise ValueError(f"basis rows not orthonormal (max deviation {err:.3e})")
        U.setflags(write=False)
        object.__setattr__(self, "matrix", U)

    def __len__(self) -> int:
        return len(self.shell)

    def __getitem__(self, j: int) -> Eigenfunction:
        return Eigenfunction(self.shell, self.matrix[j])

    def __iter__(self):
        return (self[j] for j in range(len(self)))


def exponential_basis(shell: LatticeShell) -> EigenBasis:
    return EigenBasis(shell, np.eye(len(shell), dtype=np.complex128), "exponential")


def shell_rng(seed: int, shell: LatticeShell) -> np.random.Generator:
    """PCG64 stream keyed by (seed, d, E); independent of call order and thread count."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(shell.dim, shell.norm_sq))
    return np.random.Generator(np.random.PCG64(ss))


def _haar_unitary(z: np.ndarray) -> np.ndarray:
    q, rmat = np.linalg.qr(z)
    diag = np.diag(rmat)
    q = q * (diag / np.abs(diag))[None, :]  # R gets a positive diagonal
    # rows are the eigenfunctions; fixing their phases leaves |psi_j|^2 untouched
    dq = np.diag(q).copy()
    dq[np.abs(dq) == 0] = 1.0
    q = q * (np.abs(dq) / dq)[:, None]
    q[np.diag_indices_from(q)] = q.diagonal().real
    return q


def random_onb(shell: LatticeShell, seed: int, real: bool = False) -> EigenBasis:
    """Haar-distributed orthonormal basis of the eigenspace, reproducible from seed.

    With ``real=True`` the basis is a Haar orthogonal rotation of the cos/sin
    frame, so every row is a real-valued eigenfunction.
    """
    r = len(shell)
    if r == 0:
        raise LatticeError(f"empty shell E={shell.norm_sq}")
    rng = shell_rng(seed, shell)
    if real:
        g = rng.standard_normal((r, r))
        q, rmat = np.linalg.qr(g)
        q = q * np.sign(np.diag(rmat))[None, :]
        U = q @ paired_basis(shell, phase="real").matrix
        return EigenBasis(shell, U, f"haar-real:{seed}")
    z = (rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))) / math.sqrt(2)
    return EigenBasis(shell, _haar_unitary(z), f"haar:{seed}")


def _pair_rows(shell: LatticeShell, partner: np.ndarray, scale_minus: complex) -> np.ndarray:
    idx = shell.point_set()
    r = len(shell)
    U = np.zeros((r, r), dtype=np.complex128)
    row = 0
    seen = set()
    h = 1 / math.sqrt(2)
    for i, k in enumerate(shell.points.tolist()):
        if i in seen:
            continue
        kp = tuple(partner[i].tolist())
        assert kp in idx
        j = shell.index_of(kp)
        if j == i:
            U[row, i] = 1.0
            row += 1
            seen.add(i)
            continue
        U[row, i], U[row, j] = h, h
        U[row + 1, i], U[row + 1, j] = h * scale_minus, -h * scale_minus
        row += 2
        seen.update((i, j))
    return U


def paired_basis(shell: LatticeShell, phase: str = "complex") -> EigenBasis:
    """Rows (e_k + e_-k)/sqrt2 and (e_k - e_-k)/sqrt2 for antipodal pairs.

    ``phase="real"`` multiplies the odd rows by -i, giving the real cos/sin frame.
    """
    s = -1j if phase == "real" else 1.0
    U = _pair_rows(shell, -shell.points, s)
    return EigenBasis(shell, U, f"paired-{phase}")


def reflected_basis(shell: LatticeShell) -> EigenBasis:
    """Pairs k with its mirror image in the last coordinate.

    On E = n^2 + 1 (d=2) the row built from (n, 1), (n, -1) is exactly the
    non-equidistributing sequence phi_q.
    """
    mirror = shell.points.copy()
    mirror[:, -1] *= -1
    U = _pair_rows(shell, mirror, 1.0)
    return EigenBasis(shell, U, "reflected")


def sharpness_sequence(n_q: int) -> Eigenfunction:
    """phi_q = (e_(n_q, 1) + e_(n_q, -1)) / sqrt2 on the shell E = n_q^2 + 1."""
    if n_q < 1:
        raise LatticeError("n_q must be >= 1")
    return Eigenfunction.from_points(2, n_q * n_q + 1, {(n_q, 1): 1.0, (n_q, -1): 1.0})


def flat_counterexample(d: int, k: int) -> Eigenfunction:
    """exp(i k x_d): equal to 1 on the flat subtorus {x_d = 0}."""
    if k == 0:
        raise LatticeError("k must be nonzero")
    pt = (0,) * (d - 1) + (k,)
    return Eigenfunction.from_points(d, k * k, {pt: 1.0})


def evaluate(psi: Eigenfunction, x) -> np.ndarray | complex:
    """psi(x) = sum_k c_k exp(i <k, x>) at one point or an (m, d) array of points."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    vals = np.exp(1j * (X @ psi.shell.points.T.astype(np.float64))) @ psi.coeffs
    return complex(vals[0]) if single else vals


def basis_family(name: str):
    """Return a callable shell -> EigenBasis for a family name.

    Names: ``exponential``, ``paired``, ``paired-real``, ``reflected``,
    ``haar:<seed>`` and ``haar-real:<seed>``.
    """
    if name == "exponential":
        return exponential_basis
    if name == "paired":
        return paired_basis
    if name == "paired-real":
        return lambda sh: paired_basis(sh, phase="real")
    if name == "reflected":
        return reflected_basis
    kind, _, seed = name.partition(":")
    if kind in ("haar", "haar-real") and seed:
        seed_i = int(seed)
        return lambda sh: random_onb(sh, seed_i, real=kind == "haar-real")
    raise ValueError(f"unknown basis family {name!r}")


def point_eigenfunction(d: int, k) -> Eigenfunction:
    k = as_point(k)
    return Eigenfunction.from_points(d, int(k @ k), {tuple(k.tolist()): 1.0})
