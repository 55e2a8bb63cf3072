"""Measures on T^d through their Fourier coefficients mu_hat(n) = int exp(-i<n,x>) dmu.

Hypersurface measures are carried unnormalized (arclength / area); call
``normalized()`` for the probability version.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .lattice import as_point, enumerate_shell, nonempty_shells
from .observables import Observable

SERIES_CUTOFF = 12.0


class MeasureError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Bessel J0
# ---------------------------------------------------------------------------


def _j0_series(x: np.ndarray) -> np.ndarray:
    q = -(x * x) / 4.0
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, 80):
        term = term * q / (k * k)
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _j0_hankel(x: np.ndarray) -> np.ndarray:
    # DLMF 10.17.3 with nu = 0; each series is cut at its smallest term
    P = np.ones_like(x)
    Q = np.zeros_like(x)
    a = 1.0
    prev = np.full_like(x, np.inf)
    live = np.ones(x.shape, dtype=bool)
    for k in range(1, 120):
        a = a * (-((2 * k - 1) ** 2)) / (8.0 * k)
        term = a / x**k
        mag = np.abs(term)
        live &= mag < prev
        if not live.any():
            break
        # odd k feed Q with sign (-1)^((k-1)/2), even k feed P with sign (-1)^(k/2)
        if k % 2:
            Q = np.where(live, Q + (-1) ** ((k - 1) // 2) * term, Q)
        else:
            P = np.where(live, P + (-1) ** (k // 2) * term, P)
        prev = np.where(live, mag, prev)
        live &= mag > 1e-17
    w = x - math.pi / 4
    return np.sqrt(2.0 / (math.pi * x)) * (P * np.cos(w) - Q * np.sin(w))


def bessel_j0(x) -> np.ndarray | float:
    """J0 by power series for |x| <= 12 and Hankel's asymptotic expansion beyond."""
    arr = np.abs(np.asarray(x, dtype=np.float64))
    out = np.empty_like(arr)
    small = arr <= SERIES_CUTOFF
    if small.any():
        out[small] = _j0_series(arr[small])
    if (~small).any():
        out[~small] = _j0_hankel(arr[~small])
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# torus measures
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class TorusMeasure:
    """Fourier-side description of a finite measure on T^d."""

    dim: int
    mass: float
    coeff_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    kind: str = "closed_form"
    alpha: float | None = None  # declared decay exponent, |mu_hat(n)|^2 <~ |n|^-alpha
    label: str = ""
    meta: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    def coeffs(self, ns) -> np.ndarray:
        """mu_hat at each row of ``ns`` (shape (..., d))."""
        ns = np.asarray(ns, dtype=np.int64)
        shape = ns.shape[:-1]
        flat = ns.reshape(-1, self.dim)
        if self.kind != "quadrature":
            return np.asarray(self.coeff_fn(flat), dtype=np.complex128).reshape(shape)
        # quadrature values are cached; the cache fill is deterministic
        uniq, inv = np.unique(flat, axis=0, return_inverse=True)
        keys = [tuple(u) for u in uniq.tolist()]
        missing = [i for i, k in enumerate(keys) if k not in self._cache]
        if missing:
            vals = self.coeff_fn(uniq[missing])
            for i, v in zip(missing, vals):
                self._cache[keys[i]] = complex(v)
        vals = np.array([self._cache[k] for k in keys], dtype=np.complex128)
        return vals[inv.reshape(-1)].reshape(shape)

    def __call__(self, n) -> complex:
        return complex(self.coeffs(as_point(n)[None, :])[0])

    def normalized(self) -> TorusMeasure:
        """The probability measure mu / mass."""
        if self.mass <= 0:
            raise MeasureError("cannot normalize a measure with non-positive mass")
        m = self.mass
        return TorusMeasure(
            self.dim,
            1.0,
            lambda ns: self.coeffs(ns) / m,
            kind="closed_form" if self.kind != "tabulated" else "tabulated",
            alpha=self.alpha,
            label=f"{self.label}/mass",
            meta=dict(self.meta, normalized_from=self.mass),
        )


def circle_measure(center=(0.0, 0.0), r: float = 1.0) -> TorusMeasure:
    """Arclength on the circle |x - center| = r in T^2: 2 pi r e^{-i<n,c>} J0(r|n|)."""
    if not 0 < r < math.pi:
        raise MeasureError(f"radius {r} must lie in (0, pi) for an embedded circle")
    c = np.asarray(center, dtype=np.float64)

    def fn(ns):
        ns = ns.astype(np.float64)
        rho = np.sqrt((ns * ns).sum(axis=1))
        return 2 * math.pi * r * np.exp(-1j * (ns @ c)) * bessel_j0(r * rho)

    return TorusMeasure(2, 2 * math.pi * r, fn, "closed_form", alpha=1.0, label=f"circle(r={r})")


def sphere_measure(center=(0.0, 0.0, 0.0), r: float = 1.0) -> TorusMeasure:
    """Area on the sphere |x - center| = r in T^3: 4 pi r^2 e^{-i<n,c>} sin(r|n|)/(r|n|)."""
    if not 0 < r < math.pi:
        raise MeasureError(f"radius {r} must lie in (0, pi) for an embedded sphere")
    c = np.asarray(center, dtype=np.float64)

    def fn(ns):
        ns = ns.astype(np.float64)
        rho = np.sqrt((ns * ns).sum(axis=1))
        return 4 * math.pi * r * r * np.exp(-1j * (ns @ c)) * np.sinc(r * rho / math.pi)

    return TorusMeasure(3, 4 * math.pi * r * r, fn, "closed_form", alpha=2.0, label=f"sphere(r={r})")


def dirac_measure(point) -> TorusMeasure:
    x0 = np.asarray(point, dtype=np.float64)
    return TorusMeasure(
        len(x0), 1.0, lambda ns: np.exp(-1j * (ns.astype(np.float64) @ x0)),
        "closed_form", alpha=0.0, label="dirac",
    )


def tabulated_measure(dim: int, entries: dict, mass: float | None = None, alpha=None, label="tabulated") -> TorusMeasure:
    """Measure given by finitely many coefficients; every other mu_hat(n) is zero."""
    obs = Observable.from_dict(dim, entries)
    m0 = obs.coeff((0,) * dim)
    if mass is None:
        mass = m0.real
    elif abs(m0 - mass) > 1e-12 * max(1.0, abs(mass)):
        raise MeasureError(f"declared mass {mass} disagrees with mu_hat(0) = {m0}")
    return TorusMeasure(dim, float(mass), obs.lookup, "tabulated", alpha=alpha, label=label,
                        meta={"table": obs})


def lebesgue_measure(dim: int) -> TorusMeasure:
    """The normalized volume dx: mu_hat = indicator of 0."""
    return tabulated_measure(dim, {(0,) * dim: 1.0}, mass=1.0, alpha=math.inf, label="dx")


def measure_to_json(mu: TorusMeasure, ns) -> dict:
    ns = np.asarray(ns, dtype=np.int64)
    vals = mu.coeffs(ns)
    return {
        "dim": mu.dim,
        "mass": mu.mass,
        "entries": [[list(map(int, n)), v.real, v.imag] for n, v in zip(ns.tolist(), vals)],
    }


def measure_from_json(doc) -> TorusMeasure:
    if isinstance(doc, (str, Path)) and not str(doc).lstrip().startswith("{"):
        doc = json.loads(Path(doc).read_text())
    elif isinstance(doc, str):
        doc = json.loads(doc)
    entries = {tuple(int(v) for v in n): complex(re, im) for n, re, im in doc["entries"]}
    return tabulated_measure(int(doc["dim"]), entries, mass=doc.get("mass"), alpha=doc.get("alpha"))


# ---------------------------------------------------------------------------
# parameterized hypersurfaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ParamHypersurface:
    """gamma: parameter box -> T^d with first and second derivatives.

    ``point(u)`` maps an (m, d-1) array of parameters to (m, d) points,
    ``jac(u)`` returns (m, d, d-1) and ``hess(u)`` returns (m, d, d-1, d-1).
    """

    dim: int
    point: Callable
    jac: Callable
    hess: Callable
    domain: tuple
    periodic: tuple
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def surface_element(self, u: np.ndarray) -> np.ndarray:
        J = self.jac(u)
        if self.dim == 2:
            return np.sqrt((J[:, :, 0] ** 2).sum(axis=1))
        if self.dim == 3:
            return np.linalg.norm(np.cross(J[:, :, 0], J[:, :, 1]), axis=1)
        raise MeasureError("hypersurfaces are supported in d = 2, 3")


def _curve(point, d1, d2, lo, hi, periodic, kind, **params):
    return ParamHypersurface(
        2,
        lambda u: point(u[:, 0]),
        lambda u: d1(u[:, 0])[:, :, None],
        lambda u: d2(u[:, 0])[:, :, None, None],
        ((lo, hi),),
        (periodic,),
        kind,
        params,
    )


def circle_curve(center=(0.0, 0.0), r: float = 1.0) -> ParamHypersurface:
    c = np.asarray(center, dtype=np.float64)
    return _curve(
        lambda t: c + r * np.stack([np.cos(t), np.sin(t)], axis=1),
        lambda t: r * np.stack([-np.sin(t), np.cos(t)], axis=1),
        lambda t: r * np.stack([-np.cos(t), -np.sin(t)], axis=1),
        0.0, 2 * math.pi, True, "circle", center=tuple(c), r=r,
    )


def ellipse_curve(a: float, b: float, center=(0.0, 0.0)) -> ParamHypersurface:
    c = np.asarray(center, dtype=np.float64)
    return _curve(
        lambda t: c + np.stack([a * np.cos(t), b * np.sin(t)], axis=1),
        lambda t: np.stack([-a * np.sin(t), b * np.cos(t)], axis=1),
        lambda t: np.stack([-a * np.cos(t), -b * np.sin(t)], axis=1),
        0.0, 2 * math.pi, True, "ellipse", a=a, b=b, center=tuple(c),
    )


def line_curve(height: float = 0.0) -> ParamHypersurface:
    """The closed flat geodesic {x_2 = height}: a flat subtorus of T^2."""
    return _curve(
        lambda t: np.stack([t, np.full_like(t, height)], axis=1),
        lambda t: np.stack([np.ones_like(t), np.zeros_like(t)], axis=1),
        lambda t: np.zeros((len(t), 2)),
        0.0, 2 * math.pi, True, "line", height=height,
    )


def segment_curve(p0, p1) -> ParamHypersurface:
    """Open straight segment from p0 to p1 (zero curvature)."""
    p0 = np.asarray(p0, dtype=np.float64)
    v = np.asarray(p1, dtype=np.float64) - p0
    return _curve(
        lambda t: p0 + t[:, None] * v,
        lambda t: np.tile(v, (len(t), 1)),
        lambda t: np.zeros((len(t), 2)),
        0.0, 1.0, False, "segment", p0=tuple(p0), p1=tuple(p0 + v),
    )


def curve_from_samples(samples) -> ParamHypersurface:
    """Closed curve through equispaced samples, by trigonometric interpolation."""
    X = np.asarray(samples, dtype=np.float64)
    m = len(X)
    if X.ndim != 2 or X.shape[1] != 2 or m < 5:
        raise MeasureError("need an (m >= 5, 2) array of closed-curve samples")
    F = np.fft.fft(X, axis=0) / m
    freqs = np.fft.fftfreq(m, 1.0 / m)
    if m % 2 == 0:
        F[m // 2] = 0  # drop the unpaired Nyquist mode so the interpolant stays real
    E = lambda t: np.exp(1j * np.outer(t, freqs))  # noqa: E731
    return _curve(
        lambda t: (E(t) @ F).real,
        lambda t: (E(t) @ (F * (1j * freqs)[:, None])).real,
        lambda t: (E(t) @ (F * (-(freqs**2))[:, None])).real,
        0.0, 2 * math.pi, True, "samples", m=m,
    )


def sphere_surface(center=(0.0, 0.0, 0.0), r: float = 1.0) -> ParamHypersurface:
    c = np.asarray(center, dtype=np.float64)

    def point(u):
        th, ph = u[:, 0], u[:, 1]
        return c + r * np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1)

    def jac(u):
        th, ph = u[:, 0], u[:, 1]
        g_th = r * np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)], axis=1)
        g_ph = r * np.stack([-np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph), np.zeros_like(th)], axis=1)
        return np.stack([g_th, g_ph], axis=2)

    def hess(u):
        th, ph = u[:, 0], u[:, 1]
        z = np.zeros_like(th)
        tt = r * np.stack([-np.sin(th) * np.cos(ph), -np.sin(th) * np.sin(ph), -np.cos(th)], axis=1)
        tp = r * np.stack([-np.cos(th) * np.sin(ph), np.cos(th) * np.cos(ph), z], axis=1)
        pp = r * np.stack([-np.sin(th) * np.cos(ph), -np.sin(th) * np.sin(ph), z], axis=1)
        H = np.empty((len(th), 3, 2, 2))
        H[:, :, 0, 0], H[:, :, 0, 1], H[:, :, 1, 0], H[:, :, 1, 1] = tt, tp, tp, pp
        return H

    return ParamHypersurface(
        3, point, jac, hess, ((0.0, math.pi), (0.0, 2 * math.pi)), (False, True),
        "sphere", {"center": tuple(c), "r": r},
    )


def _rule(lo: float, hi: float, periodic: bool, level: int) -> tuple[np.ndarray, np.ndarray]:
    if periodic:
        n = 16 * 2**level
        h = (hi - lo) / n
        return lo + h * np.arange(n), np.full(n, h)
    # composite 12-point Gauss-Legendre, panels doubling
    panels = 2**level
    x, w = np.polynomial.legendre.leggauss(12)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).reshape(-1)
    weights = (half[:, None] * w[None, :]).reshape(-1)
    return nodes, weights


def _tensor_rule(surf: ParamHypersurface, level: int):
    rules = [_rule(lo, hi, per, level) for (lo, hi), per in zip(surf.domain, surf.periodic)]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    u = np.stack([g.reshape(-1) for g in grids], axis=1)
    w = np.prod(np.stack([g.reshape(-1) for g in wgrids], axis=1), axis=1)
    return u, w


def quadrature_measure(surf: ParamHypersurface, tol: float = 1e-12, max_level: int = 12) -> TorusMeasure:
    """Hypersurface measure whose coefficients come from refined quadrature.

    Each batch of coefficients is refined by doubling until two successive
    levels agree to ``tol``; the achieved differences are kept in
    ``meta["errors"]`` keyed by frequency.
    """
    if tol < 1e-12:
        raise MeasureError("tol must be >= 1e-12")
    rules = {}

    def nodes(level):
        if level not in rules:
            u, w = _tensor_rule(surf, level)
            rules[level] = (surf.point(u), w * surf.surface_element(u))
        return rules[level]

    errors: dict = {}

    def integrate(ns: np.ndarray, level: int) -> np.ndarray:
        X, W = nodes(level)
        out = np.empty(len(ns), dtype=np.complex128)
        for s in range(0, len(ns), 256):
            blk = ns[s:s + 256].astype(np.float64)
            out[s:s + 256] = np.exp(-1j * (blk @ X.T)) @ W
        return out

    def fn(ns: np.ndarray) -> np.ndarray:
        ext = max(1.0, float(np.abs(ns).max()) if len(ns) else 1.0)
        # start where the finest oscillation is roughly resolved
        level = max(0, int(math.ceil(math.log2(max(1.0, ext * 6 / 16)))) - 1)
        prev = integrate(ns, level)
        scale = max(1.0, float(np.abs(prev).max()))
        for lvl in range(level + 1, max_level + 1):
            cur = integrate(ns, lvl)
            diff = np.abs(cur - prev)
            if diff.max() < tol * scale:
                for n, e in zip(map(tuple, ns.tolist()), diff):
                    errors[n] = float(e)
                meta["level"] = lvl
                meta["last_error"] = float(diff.max())
                return cur
            prev = cur
        raise QuadratureError(f"quadrature did not reach tol={tol} within {max_level} refinements")

    meta = {"errors": errors, "tol": tol, "surface": surf.kind, "params": surf.params}
    mass = float(fn(np.zeros((1, surf.dim), dtype=np.int64))[0].real)
    alpha = float(surf.dim - 1) if surf.kind in ("circle", "ellipse", "sphere") else None
    return TorusMeasure(surf.dim, mass, fn, "quadrature", alpha=alpha, label=f"quad:{surf.kind}", meta=meta)


def _sample_params(surf: ParamHypersurface, samples: int) -> np.ndarray:
    axes = []
    for (lo, hi), per in zip(surf.domain, surf.periodic):
        h = (hi - lo) / samples
        # open axes use midpoints so coordinate poles are never sampled
        axes.append(lo + h * (np.arange(samples) + (0.0 if per else 0.5)))
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def curvature_min(surf: ParamHypersurface, samples: int = 256) -> float:
    """Smallest |curvature| (d=2) or |principal curvature| (d=3) over a sample grid."""
    u = _sample_params(surf, samples)
    J, H = surf.jac(u), surf.hess(u)
    if surf.dim == 2:
        g1, g2 = J[:, :, 0], H[:, :, 0, 0]
        speed = np.sqrt((g1 * g1).sum(axis=1))
        if speed.min() < 1e-12:
            raise MeasureError("degenerate parameterization: |gamma'| vanishes")
        kappa = (g1[:, 0] * g2[:, 1] - g1[:, 1] * g2[:, 0]) / speed**3
        return float(np.abs(kappa).min())
    if surf.dim == 3:
        gu, gv = J[:, :, 0], J[:, :, 1]
        nrm = np.cross(gu, gv)
        area = np.linalg.norm(nrm, axis=1)
        if area.min() < 1e-12:
            raise MeasureError("degenerate parameterization: tangent vectors are dependent")
        nu = nrm / area[:, None]
        I = np.einsum("mia,mib->mab", J, J)
        II = np.einsum("miab,mi->mab", H, nu)
        shape_op = np.linalg.solve(I, II)
        kappas = np.linalg.eigvals(shape_op).real
        return float(np.abs(kappas).min())
    raise MeasureError("curvature is implemented for d = 2, 3")


def check_embedded(surf: ParamHypersurface, samples: int = 256, eps: float = 1e-6) -> float:
    """Minimum torus distance between samples whose parameters are far apart.

    Returns that distance; raises when it falls below ``eps`` (self-intersection).
    """
    u = _sample_params(surf, samples if surf.dim == 2 else int(math.sqrt(samples)) + 1)
    X = np.mod(surf.point(u), 2 * math.pi)
    span = np.array([hi - lo for lo, hi in surf.domain])
    du = np.abs(u[:, None, :] - u[None, :, :])
    for ax, per in enumerate(surf.periodic):
        if per:
            du[:, :, ax] = np.minimum(du[:, :, ax], span[ax] - du[:, :, ax])
    far = np.sqrt(((du / span) ** 2).sum(axis=2)) > 0.125
    dx = np.abs(X[:, None, :] - X[None, :, :])
    dx = np.minimum(dx, 2 * math.pi - dx)
    dist = np.sqrt((dx * dx).sum(axis=2))
    if not far.any():
        return math.inf
    m = float(dist[far].min())
    if m < eps and surf.kind not in ("sphere",):
        raise MeasureError(f"surface is not embedded: far-apart parameters map {m:.2e} apart")
    return m


# ---------------------------------------------------------------------------
# decay and convolution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    alpha: float
    C: float
    alpha_shifted: float  # fit against (1 + |n|)
    C_shifted: float
    n_shells: int
    radii: np.ndarray = field(repr=False)
    envelope: np.ndarray = field(repr=False)


def shell_sup(mu: TorusMeasure, E: int) -> float:
    """sup over |n|^2 = E of |mu_hat(n)|^2."""
    pts = enumerate_shell(mu.dim, E).points
    return float(np.max(np.abs(mu.coeffs(pts)) ** 2))


def decay_fit(mu: TorusMeasure, E_max: int) -> DecayFit:
    """Least-squares exponent of the decaying upper envelope of per-shell sups.

    For each nonempty shell the sup of |mu_hat|^2 is taken, then replaced by
    the sup over all shells of equal or larger radius (so oscillation zeros
    do not enter the logarithm).  The fit is log env = log C - alpha log|n|.
    """
    if E_max < 16:
        raise MeasureError("E_max must be >= 16")
    Es = nonempty_shells(mu.dim, E_max, 1)
    if len(Es) < 3:
        raise MeasureError("too few shells to fit a decay exponent")
    sups = np.array([shell_sup(mu, E) for E in Es])
    env = np.maximum.accumulate(sups[::-1])[::-1]
    if np.any(env <= 0):
        raise MeasureError("measure coefficients vanish identically on a tail of shells")
    rho = np.sqrt(np.asarray(Es, dtype=np.float64))
    y = np.log(env)
    s1, i1 = np.polyfit(np.log(rho), y, 1)
    s2, i2 = np.polyfit(np.log1p(rho), y, 1)
    return DecayFit(-s1, math.exp(i1), -s2, math.exp(i2), len(Es), rho, env)


def convolve_many(a: Observable, mu: TorusMeasure, ns) -> np.ndarray:
    """int a(x) exp(-i<n,x>) dmu = sum_p a_hat[p] mu_hat(n - p) for each row n."""
    ns = np.atleast_2d(np.asarray(ns, dtype=np.int64))
    if a.dim != mu.dim or ns.shape[1] != a.dim:
        raise MeasureError("dimension mismatch")
    if not len(a):
        return np.zeros(len(ns), dtype=np.complex128)
    shifted = ns[:, None, :] - a.keys[None, :, :]
    return mu.coeffs(shifted) @ a.values


def convolve_observable(a: Observable, mu: TorusMeasure, n) -> complex:
    return complex(convolve_many(a, mu, as_point(n)[None, :])[0])
