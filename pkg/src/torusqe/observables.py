"""Trigonometric polynomials on T^d and exact integrals against |psi|^2 dx.

All integrals use the normalized volume measure, so int a dx = a_hat[0].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Mapping

import numpy as np

from .lattice import as_point
from .spectral import EigenBasis, Eigenfunction

EXACT_TOL = 1e-10


class ObservableError(ValueError):
    pass


def _encode(keys: np.ndarray, K: int) -> np.ndarray:
    """Mixed-radix int64 code of rows with |coords| <= K."""
    base = 2 * K + 1
    code = np.zeros(len(keys), dtype=np.int64)
    for j in range(keys.shape[1]):
        code = code * base + (keys[:, j] + K)
    return code


@dataclass(frozen=True, eq=False)
class Observable:
    """a = sum_n coeffs[n] e_n with finite support, rows of ``keys`` sorted lexicographically."""

    dim: int
    keys: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        keys = np.asarray(self.keys, dtype=np.int64).reshape(-1, self.dim)
        vals = np.asarray(self.values, dtype=np.complex128).reshape(-1)
        if len(keys) != len(vals):
            raise ObservableError("keys and values differ in length")
        if len(keys):
            order = np.lexsort(keys.T[::-1])
            keys, vals = keys[order], vals[order]
            if len(keys) > 1 and np.any(np.all(keys[1:] == keys[:-1], axis=1)):
                raise ObservableError("duplicate frequencies")
        keys.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "values", vals)
        K = int(np.abs(keys).max()) if len(keys) else 0
        object.__setattr__(self, "_K", K)
        if (2 * K + 1) ** self.dim < 2**62:
            object.__setattr__(self, "_codes", _encode(keys, K))
        else:
            object.__setattr__(self, "_codes", None)
            object.__setattr__(self, "_table", {tuple(k): v for k, v in zip(keys.tolist(), vals)})

    # -- construction ----------------------------------------------------

    @classmethod
    def from_dict(cls, dim: int, coeffs: Mapping, drop_zeros: bool = True) -> Observable:
        items = [(tuple(int(v) for v in k), complex(c)) for k, c in coeffs.items()]
        if drop_zeros:
            items = [(k, c) for k, c in items if c != 0]
        for k, _ in items:
            if len(k) != dim:
                raise ObservableError(f"frequency {k} does not have {dim} coordinates")
        keys = np.array([k for k, _ in items], dtype=np.int64).reshape(-1, dim)
        return cls(dim, keys, np.array([c for _, c in items], dtype=np.complex128))

    @classmethod
    def constant(cls, dim: int, value: complex = 1.0) -> Observable:
        return cls.from_dict(dim, {(0,) * dim: value})

    @classmethod
    def exponential(cls, p) -> Observable:
        p = as_point(p)
        return cls.from_dict(len(p), {tuple(p.tolist()): 1.0})

    @classmethod
    def cosine(cls, p, amp: float = 1.0) -> Observable:
        """amp * (e_p + e_-p) = 2 amp cos<p, x>."""
        p = tuple(as_point(p).tolist())
        q = tuple(-v for v in p)
        if p == q:
            return cls.constant(len(p), 2 * amp)
        return cls.from_dict(len(p), {p: amp, q: amp})

    @classmethod
    def sine(cls, p, amp: float = 1.0) -> Observable:
        """amp * i (e_p - e_-p) = -2 amp sin<p, x>."""
        p = tuple(as_point(p).tolist())
        q = tuple(-v for v in p)
        return cls.from_dict(len(p), {p: 1j * amp, q: -1j * amp})

    @classmethod
    def random_real(cls, dim: int, radius: float, seed: int, decay: float = 0.0) -> Observable:
        """Real trig polynomial with Gaussian coefficients on the ball |n| <= radius."""
        from .lattice import ball_points

        rng = np.random.default_rng(seed)
        pts = ball_points(dim, int(math.floor(radius * radius)))
        coeffs = {}
        for n in pts.tolist():
            n = tuple(n)
            m = tuple(-v for v in n)
            if m in coeffs:
                coeffs[n] = np.conj(coeffs[m])
                continue
            w = (1 + math.sqrt(sum(v * v for v in n))) ** (-decay)
            if n == m:
                coeffs[n] = complex(rng.standard_normal() * w)
            else:
                coeffs[n] = complex(rng.standard_normal(), rng.standard_normal()) * w / math.sqrt(2)
        return cls.from_dict(dim, coeffs)

    # -- access ----------------------------------------------------------

    def __len__(self) -> int:
        return len(self.keys)

    def items(self):
        for k, v in zip(self.keys.tolist(), self.values.tolist()):
            yield tuple(k), v

    def as_dict(self) -> dict[tuple[int, ...], complex]:
        return dict(self.items())

    def coeff(self, n) -> complex:
        return complex(self.lookup(np.asarray(n, dtype=np.int64)[None, :])[0])

    def lookup(self, ns: np.ndarray) -> np.ndarray:
        """Coefficients at every row of ``ns`` (shape (..., d)); zero off the support."""
        ns = np.asarray(ns, dtype=np.int64)
        shape = ns.shape[:-1]
        flat = ns.reshape(-1, self.dim)
        out = np.zeros(len(flat), dtype=np.complex128)
        if not len(self.keys):
            return out.reshape(shape)
        inside = np.all(np.abs(flat) <= self._K, axis=1)
        if self._codes is None:
            for i in np.nonzero(inside)[0]:
                out[i] = self._table.get(tuple(flat[i].tolist()), 0)
            return out.reshape(shape)
        q = _encode(flat[inside], self._K)
        pos = np.searchsorted(self._codes, q)
        pos_c = np.minimum(pos, len(self._codes) - 1)
        hit = self._codes[pos_c] == q
        sub = np.zeros(len(q), dtype=np.complex128)
        sub[hit] = self.values[pos_c[hit]]
        out[inside] = sub
        return out.reshape(shape)

    @cached_property
    def mean(self) -> complex:
        """int a dx = a_hat[0]."""
        return self.coeff((0,) * self.dim)

    @cached_property
    def l2_norm_sq(self) -> float:
        """||a||^2_{L^2} by Parseval."""
        return float(np.sum(np.abs(self.values) ** 2))

    @cached_property
    def is_real(self) -> bool:
        if not len(self):
            return True
        mirror = self.lookup(-self.keys)
        scale = max(1.0, float(np.abs(self.values).max()))
        return bool(np.all(np.abs(mirror - np.conj(self.values)) <= EXACT_TOL * scale))

    @property
    def max_frequency(self) -> int:
        return self._K

    def norms(self) -> np.ndarray:
        return np.sqrt((self.keys * self.keys).sum(axis=1).astype(np.float64))

    # -- algebra ---------------------------------------------------------

    def __add__(self, other: Observable) -> Observable:
        self._check_dim(other)
        acc = self.as_dict()
        for k, v in other.items():
            acc[k] = acc.get(k, 0) + v
        return Observable.from_dict(self.dim, acc)

    def scale(self, c: complex) -> Observable:
        return Observable(self.dim, self.keys, self.values * c)

    def __mul__(self, other: Observable) -> Observable:
        """Pointwise product = convolution of coefficient maps."""
        self._check_dim(other)
        if not len(self) or not len(other):
            return Observable(self.dim, np.zeros((0, self.dim)), np.zeros(0))
        S = (self.keys[:, None, :] + other.keys[None, :, :]).reshape(-1, self.dim)
        W = (self.values[:, None] * other.values[None, :]).reshape(-1)
        uniq, inv = np.unique(S, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        re = np.bincount(inv, W.real, minlength=len(uniq))
        im = np.bincount(inv, W.imag, minlength=len(uniq))
        return Observable(self.dim, uniq, re + 1j * im)

    def conj(self) -> Observable:
        """Coefficients of conj(a): n -> conj(a_hat[-n])."""
        return Observable(self.dim, -self.keys, np.conj(self.values))

    def _check_dim(self, other: Observable):
        if other.dim != self.dim:
            raise ObservableError(f"dimension mismatch {self.dim} vs {other.dim}")

    # -- serialization ---------------------------------------------------

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "entries": [[list(k), v.real, v.imag] for k, v in self.items()],
        }

    @classmethod
    def from_json(cls, doc: dict | str | Path) -> Observable:
        if isinstance(doc, Path) or (isinstance(doc, str) and not doc.lstrip().startswith("{")):
            doc = json.loads(Path(doc).read_text())
        elif isinstance(doc, str):
            doc = json.loads(doc)
        dim = int(doc["dim"])
        coeffs: dict = {}
        for n, re, im in doc["entries"]:
            key = tuple(int(v) for v in n)
            if key in coeffs:
                raise ObservableError(f"duplicate frequency {key} in JSON observable")
            coeffs[key] = complex(re, im)
        return cls.from_dict(dim, coeffs)


def truncate(a: Observable, lam: float) -> Observable:
    """a_lambda: keep the frequencies with |n| <= 2 lambda (inclusive)."""
    if lam < 0:
        raise ObservableError("lambda must be >= 0")
    nsq = (a.keys * a.keys).sum(axis=1)
    keep = nsq <= 4 * lam * lam + 1e-9
    return Observable(a.dim, a.keys[keep], a.values[keep])


def density_coeffs(psi: Eigenfunction) -> Observable:
    """Fourier coefficients of |psi|^2: m -> sum_{k - l = m} c_k conj(c_l)."""
    nz = psi.coeffs != 0
    P = psi.shell.points[nz]
    c = psi.coeffs[nz]
    D = (P[:, None, :] - P[None, :, :]).reshape(-1, psi.dim)
    W = (c[:, None] * np.conj(c)[None, :]).reshape(-1)
    uniq, inv = np.unique(D, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    re = np.bincount(inv, W.real, minlength=len(uniq))
    im = np.bincount(inv, W.imag, minlength=len(uniq))
    return Observable(psi.dim, uniq, re + 1j * im)


def coupling_matrix(a: Observable, shell) -> np.ndarray:
    """M[k, l] = a_hat[l - k]; int a |psi|^2 dx = c^T M conj(c)."""
    P = shell.points
    return a.lookup(P[None, :, :] - P[:, None, :])


def basis_integrals(a: Observable, basis: EigenBasis, M: np.ndarray | None = None) -> np.ndarray:
    """int a |psi_j|^2 dx for every row psi_j of the basis."""
    if a.dim != basis.shell.dim:
        raise ObservableError("dimension mismatch between observable and basis")
    if M is None:
        M = coupling_matrix(a, basis.shell)
    U = basis.matrix
    return np.sum((U @ M) * U.conj(), axis=1)


def integrate_density(a: Observable, psi: Eigenfunction, tol: float = EXACT_TOL) -> complex:
    """int a |psi|^2 dx, computed by two exact routes that must agree."""
    if a.dim != psi.dim:
        raise ObservableError("dimension mismatch between observable and eigenfunction")
    c = psi.coeffs
    direct = complex(c @ coupling_matrix(a, psi.shell) @ np.conj(c))
    dens = density_coeffs(psi)
    paired = complex(np.sum(a.lookup(dens.keys) * np.conj(dens.values)))
    if abs(direct - paired) > tol * max(1.0, math.sqrt(a.l2_norm_sq)):
        raise ArithmeticError(f"integration routes disagree: {direct} vs {paired}")
    return direct


def l4_norm(psi: Eigenfunction) -> float:
    """||psi||_{L^4} via Parseval applied to |psi|^2."""
    dens = density_coeffs(psi)
    return float(np.sum(np.abs(dens.values) ** 2)) ** 0.25


def zygmund_excess(psi: Eigenfunction) -> float:
    """X = int |psi|^4 dx - 1 = sum over m != 0 of |(|psi|^2)_m|^2."""
    dens = density_coeffs(psi)
    off = dens.keys.any(axis=1)
    return float(np.sum(np.abs(dens.values[off]) ** 2))


def _grid(d: int, n: int) -> np.ndarray:
    ax = 2 * np.pi * np.arange(n) / n
    mesh = np.meshgrid(*([ax] * d), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def eval_observable(a: Observable, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return np.exp(1j * (x @ a.keys.T.astype(np.float64))) @ a.values


def grid_integral_oracle(a: Observable, psi: Eigenfunction, grid_n: int) -> complex:
    """Tensor trapezoid value of int a |psi|^2 dx on a uniform grid_n^d grid.

    Exact for trigonometric polynomials once grid_n exceeds twice the largest
    coordinate frequency of a |psi|^2.
    """
    P = psi.shell.points
    fpsi = int(np.abs(P[:, None, :] - P[None, :, :]).max()) if len(P) else 0
    F = a.max_frequency + fpsi
    if grid_n <= 2 * F:
        raise ObservableError(f"grid_n={grid_n} aliases: needs > {2 * F}")
    from .spectral import evaluate

    X = _grid(psi.dim, grid_n)
    vals = eval_observable(a, X) * np.abs(evaluate(psi, X)) ** 2
    return complex(vals.mean())


def dictionary(d: int) -> dict[str, Observable]:
    """Twelve real test observables used by the inequality sweeps."""
    return dict(_dictionary(d))


@lru_cache(maxsize=None)
def _dictionary(d: int) -> dict[str, Observable]:

    def vec(*head):
        v = list(head) + [0] * (d - len(head))
        return tuple(v[:d])

    bump = {}
    from .lattice import ball_points

    for n in ball_points(d, 36).tolist():
        bump[tuple(n)] = math.exp(-sum(v * v for v in n) / 8.0)
    out = {
        "cos_e1": Observable.cosine(vec(1)),
        "cos_2ed": Observable.cosine(tuple([0] * (d - 1) + [2])),
        "cos_e1+e2": Observable.cosine(vec(1, 1)),
        "sin_2e1+e2": Observable.sine(vec(2, 1)),
        "cos_6e1+8e2": Observable.cosine(vec(6, 8)),
        "cos_3e1+4e2": Observable.cosine(vec(3, 4)),
        "mix": Observable.cosine(vec(1, -1)) + Observable.cosine(vec(2), amp=0.5),
        "one+cos_e1": Observable.constant(d) + Observable.cosine(vec(1)),
        "rand_r3": Observable.random_real(d, 3, seed=1),
        "rand_r6": Observable.random_real(d, 6, seed=2, decay=1.0),
        "rand_r10": Observable.random_real(d, 10, seed=3, decay=2.0),
        "bump": Observable.from_dict(d, bump),
    }
    return out
