"""Exact integer arithmetic on lattice shells {k in Z^d : |k|^2 = E}.

Eigenvalues are always indexed by the integer E = lambda^2.  Every routine
here works on int64 arrays and only takes square roots at the very end.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

MIN_DIM = 2
MAX_DIM = 8
MAX_NORM_SQ = 2**60


class LatticeError(ValueError):
    pass


def _check_dim(d: int) -> None:
    if not MIN_DIM <= d <= MAX_DIM:
        raise LatticeError(f"dimension {d} outside supported range [{MIN_DIM}, {MAX_DIM}]")


def _check_norm(E: int) -> None:
    if E < 0:
        raise LatticeError(f"norm_sq must be non-negative, got {E}")
    if E > MAX_NORM_SQ:
        raise LatticeError(f"norm_sq {E} exceeds overflow guard 2**60")


def norm_sq_of(lam: float, tol: float = 1e-9) -> int:
    """Convert a real eigenvalue lambda to E = lambda^2, insisting on exactness."""
    E = round(lam * lam)
    if abs(E - lam * lam) > tol * max(1.0, lam * lam):
        raise LatticeError(f"lambda={lam!r} is not the square root of an integer")
    return int(E)


def as_point(n: Sequence[int] | np.ndarray) -> np.ndarray:
    arr = np.asarray(n)
    if arr.ndim != 1 or not np.issubdtype(arr.dtype, np.integer):
        if arr.ndim == 1 and np.all(np.mod(arr, 1) == 0):
            arr = arr.astype(np.int64)
        else:
            raise LatticeError(f"not an integer vector: {n!r}")
    return arr.astype(np.int64)


# ---------------------------------------------------------------------------
# shells
# ---------------------------------------------------------------------------


def _isqrt_vec(x: np.ndarray) -> np.ndarray:
    """floor(sqrt(x)) for non-negative int64, exact up to 2**60."""
    r = np.floor(np.sqrt(x.astype(np.float64))).astype(np.int64)
    r = np.where(r * r > x, r - 1, r)
    r = np.where((r + 1) * (r + 1) <= x, r + 1, r)
    return r


def _two_square_reps(R: int) -> np.ndarray:
    """All (a, b) in Z^2 with a^2 + b^2 = R, as an (m, 2) array."""
    if R == 0:
        return np.zeros((1, 2), dtype=np.int64)
    s = math.isqrt(R)
    a = np.arange(-s, s + 1, dtype=np.int64)
    rest = R - a * a
    b = _isqrt_vec(rest)
    hit = b * b == rest
    a, b = a[hit], b[hit]
    pos = b > 0
    out = np.concatenate(
        [np.stack([a, b], axis=1), np.stack([a[pos], -b[pos]], axis=1)]
    )
    return out


def _descend(d: int, R: int) -> list[np.ndarray]:
    # recursive descent over leading coordinates; the last two are solved directly
    if d == 2:
        return [_two_square_reps(R)]
    out = []
    s = math.isqrt(R)
    for x in range(-s, s + 1):
        for tail in _descend(d - 1, R - x * x):
            if len(tail):
                head = np.full((len(tail), 1), x, dtype=np.int64)
                out.append(np.hstack([head, tail]))
    return out


def _lexsort_rows(pts: np.ndarray) -> np.ndarray:
    if len(pts) == 0:
        return pts
    order = np.lexsort(pts.T[::-1])
    return pts[order]


@dataclass(frozen=True)
class LatticeShell:
    """All k in Z^d with |k|^2 = E, in lexicographic order."""

    dim: int
    norm_sq: int
    points: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        self.points.setflags(write=False)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def r(self) -> int:
        return len(self.points)

    @property
    def lam(self) -> float:
        return math.sqrt(self.norm_sq)

    def point_set(self) -> frozenset[tuple[int, ...]]:
        return frozenset(map(tuple, self.points.tolist()))

    def index_of(self, k) -> int:
        """Row of k in ``points``; raises KeyError when absent."""
        return _row_index(self)[tuple(int(v) for v in k)]

    def __contains__(self, k) -> bool:
        return tuple(int(v) for v in k) in _row_index(self)


@lru_cache(maxsize=4096)
def _row_index(shell: LatticeShell) -> dict[tuple[int, ...], int]:
    return {tuple(p): i for i, p in enumerate(shell.points.tolist())}


@lru_cache(maxsize=8192)
def enumerate_shell(d: int, E: int) -> LatticeShell:
    """Every lattice point of norm_sq E in dimension d (deterministic order)."""
    _check_dim(d)
    E = int(E)
    _check_norm(E)
    parts = _descend(d, E)
    pts = np.vstack(parts) if parts else np.zeros((0, d), dtype=np.int64)
    return LatticeShell(d, E, _lexsort_rows(pts))


def r_d(d: int, E: int) -> int:
    return len(enumerate_shell(d, E))


@lru_cache(maxsize=256)
def ball_points(d: int, E_hi: int, E_lo: int = 0) -> np.ndarray:
    """Lattice points with E_lo <= |k|^2 <= E_hi, lexicographically ordered."""
    _check_dim(d)
    _check_norm(E_hi)
    s = math.isqrt(E_hi)
    axis = np.arange(-s, s + 1, dtype=np.int64)
    pts = np.zeros((1, 0), dtype=np.int64)
    nsq = np.zeros(1, dtype=np.int64)
    for _ in range(d):
        # grow one coordinate at a time, pruning on the residual norm
        new = nsq[:, None] + axis[None, :] ** 2
        keep = new <= E_hi
        rows, cols = np.nonzero(keep)
        pts = np.hstack([pts[rows], axis[cols][:, None]])
        nsq = new[rows, cols]
    sel = nsq >= E_lo
    out = pts[sel]
    out.setflags(write=False)
    return out


def lattice_count(d: int, E_hi: int, E_lo: int = 0) -> int:
    return len(ball_points(d, E_hi, E_lo))


# ---------------------------------------------------------------------------
# primitive vectors and pair counts
# ---------------------------------------------------------------------------


def primitive(n) -> np.ndarray:
    """n divided by the gcd of its coordinates."""
    n = as_point(n)
    g = math.gcd(*(int(abs(v)) for v in n))
    if g == 0:
        raise LatticeError("the zero vector has no primitive generator")
    return n // g


def primitive_norm(ns: np.ndarray) -> np.ndarray:
    """|n_hat| for each row of ``ns`` (rows must be nonzero)."""
    ns = np.atleast_2d(np.asarray(ns, dtype=np.int64))
    g = np.gcd.reduce(np.abs(ns), axis=1)
    if np.any(g == 0):
        raise LatticeError("the zero vector has no primitive generator")
    hat = ns // g[:, None]
    return np.sqrt((hat * hat).sum(axis=1).astype(np.float64))


def _check_pair_args(shell: LatticeShell, n) -> np.ndarray:
    n = as_point(n)
    if len(n) != shell.dim:
        raise LatticeError(f"dimension mismatch: n has {len(n)} coords, shell has {shell.dim}")
    if not n.any():
        raise LatticeError("pair counts are defined for n != 0")
    return n


def pair_count(shell: LatticeShell, n) -> int:
    """|{k in shell : |k + n|^2 = E}| through the linear condition |n|^2 + 2<n,k> = 0."""
    n = _check_pair_args(shell, n)
    nn = int(n @ n)
    if nn % 2:
        return 0
    dots = shell.points @ n
    return int(np.count_nonzero(dots == -nn // 2))


def pair_count_direct(shell: LatticeShell, n) -> int:
    """Same count by filtering |k + n|^2 == E over the shell."""
    n = _check_pair_args(shell, n)
    moved = shell.points + n
    return int(np.count_nonzero((moved * moved).sum(axis=1) == shell.norm_sq))


def difference_multiplicities(shell: LatticeShell) -> tuple[np.ndarray, np.ndarray]:
    """Distinct nonzero differences n = l - k over the shell and their counts.

    The count attached to n is exactly pair_count(shell, n); every n absent
    from the returned array has pair count zero.
    """
    P = shell.points
    if len(P) < 2:
        return np.zeros((0, shell.dim), dtype=np.int64), np.zeros(0, dtype=np.int64)
    diff = (P[None, :, :] - P[:, None, :]).reshape(-1, shell.dim)
    diff = diff[diff.any(axis=1)]
    uniq, counts = np.unique(diff, axis=0, return_counts=True)
    return uniq, counts


def interval_pair_count(d: int, n, c: float, lam: float) -> int:
    """|{k : c <= |k| <= lam and |k|^2 = |n + k|^2}|, both ends inclusive."""
    if c < 0 or lam < c:
        raise LatticeError(f"need 0 <= c <= lam, got c={c}, lam={lam}")
    E_lo = max(0, math.ceil(c * c - 1e-9))
    E_hi = math.floor(lam * lam + 1e-9)
    return window_pair_count(d, n, E_lo, E_hi)


def window_pair_count(d: int, n, E_lo: int, E_hi: int) -> int:
    """Pair count summed over the integer window E_lo <= |k|^2 <= E_hi."""
    n = as_point(n)
    if len(n) != d:
        raise LatticeError("dimension mismatch")
    if not n.any():
        raise LatticeError("pair counts are defined for n != 0")
    if E_hi < E_lo:
        return 0
    nn = int(n @ n)
    if nn % 2:
        return 0
    pts = ball_points(d, E_hi, E_lo)
    return int(np.count_nonzero(pts @ n == -nn // 2))


# ---------------------------------------------------------------------------
# sums of two squares and separation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectrumInfo:
    values: list[int]
    N: int
    density_ratio: float  # count / (N / sqrt(log N)); nan for N < 3


def sum_two_squares_spectrum(N: int) -> SpectrumInfo:
    """Integers 0 <= E <= N that are a sum of two squares."""
    if N < 0:
        raise LatticeError("N must be >= 0")
    mark = np.zeros(N + 1, dtype=bool)
    s = math.isqrt(N)
    for a in range(s + 1):
        b = np.arange(a, math.isqrt(N - a * a) + 1, dtype=np.int64)
        mark[a * a + b * b] = True
    values = np.nonzero(mark)[0].tolist()
    if N >= 3:
        ratio = (len(values) - 1) / (N / math.sqrt(math.log(N)))
    else:
        ratio = float("nan")
    return SpectrumInfo(values, N, ratio)


def min_separation_sq(shell: LatticeShell) -> int:
    """Squared minimum distance between two distinct shell points, exact in integers."""
    P = shell.points
    if len(P) < 2:
        raise LatticeError("min_separation needs at least two shell points")
    D = P[:, None, :] - P[None, :, :]
    dsq = (D * D).sum(axis=2)
    np.fill_diagonal(dsq, np.iinfo(np.int64).max)
    return int(dsq.min())


def min_separation(shell: LatticeShell) -> float:
    """Smallest Euclidean distance between two distinct shell points."""
    return math.sqrt(min_separation_sq(shell))


@dataclass(frozen=True)
class SeparationRecord:
    norm_sq: int
    r2: int
    min_sep: float
    threshold: float
    is_separated: bool


@dataclass(frozen=True)
class SeparationSurvey:
    records: list[SeparationRecord]
    N: int
    delta: float
    n_not_separated: int
    fraction_not_separated: float
    ratio_to_bound: float  # n_not_separated / N^(1 - delta/3)


def separation_survey(N: int, delta: float) -> SeparationSurvey:
    """Bourgain-Rudnick separation statistics for every E <= N in the d=2 spectrum."""
    if N < 1:
        raise LatticeError("N must be >= 1")
    if not 0 < delta < 1:
        raise LatticeError("delta must lie in (0, 1)")
    records = []
    for E in sum_two_squares_spectrum(N).values:
        if E == 0:
            continue
        shell = enumerate_shell(2, E)
        sep_sq = min_separation_sq(shell)
        thr = E ** ((1 - delta) / 2)
        sep = math.sqrt(sep_sq)
        records.append(SeparationRecord(E, len(shell), sep, thr, sep > thr))
    bad = sum(not rec.is_separated for rec in records)
    return SeparationSurvey(
        records=records,
        N=N,
        delta=delta,
        n_not_separated=bad,
        fraction_not_separated=bad / len(records),
        ratio_to_bound=bad / N ** (1 - delta / 3),
    )


# ---------------------------------------------------------------------------
# factorization (deterministic Miller-Rabin + Pollard rho, 64-bit)
# ---------------------------------------------------------------------------

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47)


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _pollard_brent(n: int, rng: random.Random) -> int:
    if n % 2 == 0:
        return 2
    while True:
        y, c, m = rng.randrange(1, n), rng.randrange(1, n), 128
        g = r = q = 1
        while g == 1:
            x = y
            for _ in range(r):
                y = (y * y + c) % n
            k = 0
            while k < r and g == 1:
                ys = y
                for _ in range(min(m, r - k)):
                    y = (y * y + c) % n
                    q = q * abs(x - y) % n
                g = math.gcd(q, n)
                k += m
            r *= 2
        if g == n:
            g = 1
            while g == 1:
                ys = (ys * ys + c) % n
                g = math.gcd(abs(x - ys), n)
        if g != n:
            return g


def factorize(n: int) -> list[int]:
    """Prime factors of n >= 1 with multiplicity, ascending."""
    if n < 1:
        raise LatticeError("factorize needs n >= 1")
    out: list[int] = []
    for p in _SMALL_PRIMES:
        while n % p == 0:
            out.append(p)
            n //= p
    stack = [n] if n > 1 else []
    rng = random.Random(0x5EED)
    while stack:
        m = stack.pop()
        if is_prime(m):
            out.append(m)
            continue
        f = _pollard_brent(m, rng)
        stack.extend((f, m // f))
    return sorted(out)


@dataclass(frozen=True)
class IwaniecEntry:
    n: int
    norm_sq: int
    factors: tuple[int, ...]
    r2: int

    @property
    def factor_count(self) -> int:
        return len(self.factors)


def iwaniec_search(limit: int) -> list[IwaniecEntry]:
    """All 1 <= n <= limit with n^2 + 1 prime or a product of two primes."""
    if limit < 2:
        raise LatticeError("limit must be >= 2")
    out = []
    for n in range(1, limit + 1):
        E = n * n + 1
        fac = factorize(E)
        if len(fac) <= 2:
            out.append(IwaniecEntry(n, E, tuple(fac), r_d(2, E)))
    return out


def r2_formula(E: int) -> int:
    """r_2 from the divisor-class formula 4 (d_1(E) - d_3(E)); independent of enumeration."""
    if E == 0:
        return 1
    count = 1
    exps: dict[int, int] = {}
    for p in factorize(E):
        exps[p] = exps.get(p, 0) + 1
    for p, e in exps.items():
        if p % 4 == 1:
            count *= e + 1
        elif p % 4 == 3 and e % 2:
            return 0
    return 4 * count


def r4_formula(E: int) -> int:
    """Jacobi: r_4(E) = 8 * sum of divisors of E not divisible by 4."""
    if E == 0:
        return 1
    total = 0
    for q in range(1, math.isqrt(E) + 1):
        if E % q == 0:
            for dv in {q, E // q}:
                if dv % 4:
                    total += dv
    return 8 * total


def nonempty_shells(d: int, E_max: int, E_min: int = 0) -> list[int]:
    """E in [E_min, E_max] with r_d(sqrt E) > 0."""
    pts = ball_points(d, E_max, E_min)
    nsq = np.unique((pts * pts).sum(axis=1))
    return nsq.tolist()


def shells_in(d: int, Es: Iterable[int]) -> list[LatticeShell]:
    return [enumerate_shell(d, E) for E in Es]
