"""Batch experiment runner: ``torusqe <subcommand> [flags]``.

Every subcommand writes ``<out>/<name>.csv``, ``<out>/<name>.json`` and a
gnuplot-ready ``<out>/<name>.dat``.  Exit codes: 0 success, 1 usage or
configuration error, 2 an inequality failed beyond tolerance.

Settings come from (lowest to highest priority) built-in defaults, the JSON
document given by ``--config`` and explicit flags.  The worker thread count
is ``--threads`` if given, else ``TORUSQE_THREADS``, else the config, else
the number of available cores.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .lattice import (
    LatticeError,
    difference_multiplicities,
    enumerate_shell,
    iwaniec_search,
    lattice_count,
    nonempty_shells,
    pair_count,
    separation_survey,
)
from .measures import (
    MeasureError,
    QuadratureError,
    circle_curve,
    circle_measure,
    curvature_min,
    decay_fit,
    dirac_measure,
    ellipse_curve,
    lebesgue_measure,
    line_curve,
    measure_from_json,
    quadrature_measure,
    segment_curve,
    sphere_measure,
    sphere_surface,
)
from .observables import Observable, ObservableError, dictionary, l4_norm
from .restriction import br_sweep, period_decay_sweep, restriction_records
from .spectral import basis_family, sharpness_sequence
from .variance import (
    ZYGMUND_BOUND,
    InvariantViolation,
    SpectralWindow,
    eigenspace_bound_report,
    eigenspace_window,
    long_window,
    measure_variance,
    short_interval_report,
    short_window,
    v2,
    window,
    zygmund_sample,
)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# spec parsing
# ---------------------------------------------------------------------------


def _kv(parts: list[str]) -> dict[str, str]:
    out = {}
    for p in parts:
        if "=" not in p:
            raise UsageError(f"expected key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_basis(spec: str) -> list[tuple[str, object]]:
    """Basis spec -> list of (label, provider).

    ``exponential``, ``paired``, ``paired-real``, ``reflected``,
    ``haar:seed=S:count=C`` (C independent Haar bases, seeds S..S+C-1),
    ``haar-real:seed=S:count=C``; ``haar:S`` is short for count 1.
    """
    kind, *rest = spec.split(":")
    if kind in ("exponential", "paired", "paired-real", "reflected"):
        if rest:
            raise UsageError(f"basis {kind!r} takes no parameters")
        return [(kind, basis_family(kind))]
    if kind in ("haar", "haar-real"):
        if len(rest) == 1 and "=" not in rest[0]:
            opts = {"seed": rest[0]}
        else:
            opts = _kv(rest)
        unknown = set(opts) - {"seed", "count"}
        if unknown:
            raise UsageError(f"unknown basis parameters {sorted(unknown)}")
        try:
            seed, count = int(opts.get("seed", 0)), int(opts.get("count", 1))
        except ValueError as e:
            raise UsageError(f"bad basis spec {spec!r}: {e}") from None
        if count < 1:
            raise UsageError("basis count must be >= 1")
        return [(f"{kind}:{s}", basis_family(f"{kind}:{s}")) for s in range(seed, seed + count)]
    raise UsageError(f"unknown basis spec {spec!r}")


def parse_observable(spec: str, d: int) -> Observable:
    """Observable spec: inline JSON, a JSON file path, or ``dict:<name>``."""
    if spec.startswith("dict:"):
        name = spec[5:]
        table = dictionary(d)
        if name not in table:
            raise UsageError(f"unknown dictionary observable {name!r}; choose from {sorted(table)}")
        return table[name]
    try:
        if spec.lstrip().startswith("{"):
            a = Observable.from_json(json.loads(spec))
        else:
            p = Path(spec)
            if not p.exists():
                raise UsageError(f"observable file {spec!r} not found")
            a = Observable.from_json(p)
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise UsageError(f"malformed observable: {e}") from None
    if a.dim != d:
        raise UsageError(f"observable has d={a.dim} but --d is {d}")
    return a


def _floats(opts: dict, *names, **defaults) -> list[float]:
    unknown = set(opts) - set(names)
    if unknown:
        raise UsageError(f"unknown measure parameters {sorted(unknown)}")
    try:
        return [float(opts.get(n, defaults.get(n, 0.0))) for n in names]
    except ValueError as e:
        raise UsageError(str(e)) from None


def parse_measure(spec: str):
    """Measure spec -> (TorusMeasure, sampled minimum curvature or None).

    ``circle:r=1:cx=0:cy=0``, ``sphere:r=1:cx=..:cy=..:cz=..`` (closed
    forms), ``quad-circle:r=1``, ``ellipse:a=1:b=0.5``, ``line:h=0`` (the flat
    closed geodesic x_2 = h), ``segment:x0=..:y0=..:x1=..:y1=..``,
    ``quad-sphere:r=1``, ``lebesgue:d=2``, ``dirac:x=..:y=..[:z=..]`` or a
    tabulated-measure JSON file.
    """
    kind, *rest = spec.split(":")
    opts = _kv(rest)
    if kind == "circle":
        r, cx, cy = _floats(opts, "r", "cx", "cy", r=1.0)
        return circle_measure((cx, cy), r), 1.0 / r
    if kind == "sphere":
        r, cx, cy, cz = _floats(opts, "r", "cx", "cy", "cz", r=1.0)
        return sphere_measure((cx, cy, cz), r), 1.0 / r
    if kind in ("quad-circle", "ellipse", "line", "segment", "quad-sphere"):
        if kind == "quad-circle":
            r, cx, cy = _floats(opts, "r", "cx", "cy", r=1.0)
            surf = circle_curve((cx, cy), r)
        elif kind == "ellipse":
            a, b, cx, cy = _floats(opts, "a", "b", "cx", "cy", a=1.0, b=0.5)
            surf = ellipse_curve(a, b, (cx, cy))
        elif kind == "line":
            (h,) = _floats(opts, "h")
            surf = line_curve(h)
        elif kind == "segment":
            x0, y0, x1, y1 = _floats(opts, "x0", "y0", "x1", "y1", x1=1.0)
            surf = segment_curve((x0, y0), (x1, y1))
        else:
            r, cx, cy, cz = _floats(opts, "r", "cx", "cy", "cz", r=1.0)
            surf = sphere_surface((cx, cy, cz), r)
        return quadrature_measure(surf), curvature_min(surf, 256)
    if kind == "lebesgue":
        (d,) = _floats(opts, "d", d=2.0)
        return lebesgue_measure(int(d)), None
    if kind == "dirac":
        names = [n for n in ("x", "y", "z") if n in opts] or ["x", "y"]
        return dirac_measure(_floats(opts, *names)), None
    p = Path(spec)
    if p.exists():
        return measure_from_json(json.loads(p.read_text())), None
    raise UsageError(f"unknown measure spec {spec!r}")


def parse_lambdas(spec) -> list[float]:
    """``20`` or ``10:50:5`` (start:stop:step, stop inclusive) or a list."""
    if isinstance(spec, (int, float)):
        return [float(spec)]
    if isinstance(spec, list):
        return [float(v) for v in spec]
    parts = str(spec).split(":")
    try:
        if len(parts) == 1:
            return [float(parts[0])]
        if len(parts) == 3:
            a, b, s = map(float, parts)
            if s <= 0:
                raise UsageError("lambda step must be positive")
            n = int(math.floor((b - a) / s + 1e-9))
            return [a + i * s for i in range(n + 1)]
    except ValueError:
        pass
    raise UsageError(f"bad lambda spec {spec!r}")


def parse_point(spec) -> tuple[int, ...]:
    if isinstance(spec, (list, tuple)):
        return tuple(int(v) for v in spec)
    try:
        return tuple(int(v) for v in str(spec).split(","))
    except ValueError:
        raise UsageError(f"bad lattice point {spec!r}") from None


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (tuple, list)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else None
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


class Output:
    """Collects one table, one summary and one plot series for a run."""

    def __init__(self, name: str):
        self.name = name
        self.columns: list[str] = []
        self.rows: list[dict] = []
        self.summary: dict = {}
        self.plot_cols: list[str] = []
        self.plot_rows: list[tuple] = []
        self.plot_title = ""

    def table(self, columns, rows):
        self.columns, self.rows = list(columns), list(rows)

    def plot(self, columns, rows, title=""):
        self.plot_cols, self.plot_rows, self.plot_title = list(columns), list(rows), title

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in self.columns])
        return buf.getvalue()

    def dat_text(self) -> str:
        lines = [f"# {self.plot_title or self.name}", "# columns: " + " ".join(self.plot_cols)]
        if len(self.plot_cols) >= 2:
            lines.append(f"# gnuplot: plot '{self.name}.dat' using 1:2 with linespoints")
        lines += [" ".join(_fmt(v) for v in r) for r in self.plot_rows]
        return "\n".join(lines) + "\n"

    def write(self, out_dir: Path, command: str, config: dict):
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{self.name}.csv").write_text(self.csv_text())
        (out_dir / f"{self.name}.dat").write_text(self.dat_text())
        doc = {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "config": {k.rstrip("_"): v for k, v in sorted(config.items()) if k not in ("threads", "out", "name")},
            "csv_columns": self.columns,
            "summary": self.summary,
        }
        (out_dir / f"{self.name}.json").write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def ordered_map(fn, items, threads: int):
    """Map over items on a thread pool, results in input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _need(cfg: dict, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise UsageError(f"--{k.replace('_', '-')} is required")


def cmd_shell(cfg, out: Output, threads: int):
    d = cfg["d"]
    if cfg.get("emax") is not None:
        Es = list(range(cfg.get("emin") or 0, cfg["emax"] + 1))
        rs = ordered_map(lambda E: len(enumerate_shell(d, E)), Es, threads)
        rows = [{"E": E, "r": r} for E, r in zip(Es, rs)]
        out.table(["E", "r"], rows)
        out.plot(["E", "r"], [(E, r) for E, r in zip(Es, rs)], f"r_{d}(sqrt E)")
        out.summary = {"d": d, "n_shells": len(Es), "n_nonempty": sum(r > 0 for r in rs),
                       "lattice_count": lattice_count(d, cfg["emax"], cfg.get("emin") or 0)}
        return
    _need(cfg, "E")
    shell = enumerate_shell(d, cfg["E"])
    cols = [f"k{i + 1}" for i in range(d)]
    out.table(cols, [dict(zip(cols, p)) for p in shell.points.tolist()])
    out.plot(cols, [tuple(p) for p in shell.points.tolist()], f"shell |k|^2 = {cfg['E']}")
    out.summary = {"d": d, "E": cfg["E"], "r": len(shell), "lambda": shell.lam}
    print(f"r={len(shell)}")


def cmd_paircount(cfg, out: Output, threads: int):
    d = cfg["d"]
    lo = cfg.get("emin") or cfg.get("E") or 1
    hi = cfg.get("emax") or cfg.get("E")
    if hi is None:
        raise UsageError("give --E or --emax")
    Es = nonempty_shells(d, hi, lo)
    if cfg.get("n") is not None:
        n = parse_point(cfg["n"])
        if len(n) != d:
            raise UsageError("--n has the wrong dimension")
        cnts = ordered_map(lambda E: pair_count(enumerate_shell(d, E), n), Es, threads)
        out.table(["E", "pair_count"], [{"E": E, "pair_count": c} for E, c in zip(Es, cnts)])
        out.plot(["E", "pair_count"], list(zip(Es, cnts)), f"pair count for n={n}")
        out.summary = {"d": d, "n": list(n), "max_pair_count": max(cnts, default=0)}
        return

    def worst(E):
        diffs, mult = difference_multiplicities(enumerate_shell(d, E))
        if not len(mult):
            return 0, None
        i = int(np.argmax(mult))
        return int(mult[i]), tuple(diffs[i].tolist())

    res = ordered_map(worst, Es, threads)
    rows = [{"E": E, "max_pair_count": m, "argmax_n": n if n else ""} for E, (m, n) in zip(Es, res)]
    out.table(["E", "max_pair_count", "argmax_n"], rows)
    out.plot(["E", "max_pair_count"], [(E, m) for E, (m, _) in zip(Es, res)], "max pair count per shell")
    top = max((m for m, _ in res), default=0)
    out.summary = {"d": d, "E_lo": lo, "E_hi": hi, "max_pair_count": top}
    if d == 2 and top > 2:
        bad = [r for r in rows if r["max_pair_count"] > 2][0]
        raise InvariantViolation(f"d=2 pair count {top} > 2 at E={bad['E']}")


def cmd_separation(cfg, out: Output, threads: int):
    surv = separation_survey(cfg["N"], cfg["delta"])
    cols = ["E", "r2", "min_sep", "threshold", "is_separated"]
    out.table(cols, [{"E": r.norm_sq, "r2": r.r2, "min_sep": r.min_sep, "threshold": r.threshold,
                      "is_separated": r.is_separated} for r in surv.records])
    out.plot(["E", "min_sep_over_threshold"],
             [(r.norm_sq, r.min_sep / r.threshold) for r in surv.records if math.isfinite(r.min_sep)],
             "min separation / E^((1-delta)/2)")
    out.summary = {"N": surv.N, "delta": surv.delta, "n_eigenvalues": len(surv.records),
                   "n_not_separated": surv.n_not_separated,
                   "fraction_not_separated": surv.fraction_not_separated,
                   "ratio_to_bound": surv.ratio_to_bound}


def cmd_iwaniec(cfg, out: Output, threads: int):
    ents = iwaniec_search(cfg["limit"])
    out.table(["n", "E", "factors", "r2"], [{"n": e.n, "E": e.norm_sq, "factors": "*".join(map(str, e.factors)),
                                           "r2": e.r2} for e in ents])
    out.plot(["n", "r2"], [(e.n, e.r2) for e in ents], "r2(n^2+1) along the search")
    out.summary = {"limit": cfg["limit"], "count": len(ents),
                   "r2_values": sorted({e.r2 for e in ents}), "n_values": [e.n for e in ents]}


def cmd_zygmund(cfg, out: Output, threads: int):
    if cfg["d"] != 2:
        raise UsageError("the L4 bound is a d = 2 statement")
    if cfg["emax"] < 1 or cfg["samples"] < 1:
        raise UsageError("--emax and --samples must be positive")
    n = cfg["samples"]
    res = [(z.norm_sq, z.l4, z.excess)
           for z in ordered_map(lambda i: zygmund_sample(cfg["emax"], i, cfg["seed"]), range(n), threads)]
    tol = cfg["tol"]
    rows = [{"sample": i, "E": E, "l4": l4, "X": X, "chain_ok": X * X <= 2 * X + tol}
            for i, (E, l4, X) in enumerate(res)]
    out.table(["sample", "E", "l4", "X", "chain_ok"], rows)
    out.plot(["E", "l4"], [(E, l4) for E, l4, _ in res], "L4 norms of Haar eigenfunctions")
    mx = max(l4 for _, l4, _ in res)
    phi = l4_norm(sharpness_sequence(1))
    out.summary = {"samples": n, "emax": cfg["emax"], "max_l4": mx, "bound": ZYGMUND_BOUND,
                   "phi_q_l4": phi, "phi_q_expected": 1.5 ** 0.25}
    print(f"max L4 = {mx!r} (bound {ZYGMUND_BOUND!r})")
    if mx > ZYGMUND_BOUND + tol or not all(r["chain_ok"] for r in rows):
        raise InvariantViolation(f"L4 norm {mx} exceeds 3^(1/4)")


def _window_for(cfg, d: int, lam: float) -> SpectralWindow:
    mode = cfg["mode"]
    if mode == "long":
        return long_window(d, lam) if cfg.get("c") is None else window(d, cfg["c"], lam)
    if mode == "short":
        return short_window(d, lam)
    raise UsageError(f"unknown window mode {mode!r}")


def cmd_variance(cfg, out: Output, threads: int):
    d = cfg["d"]
    _need(cfg, "obs")
    a = parse_observable(cfg["obs"], d)
    bases = parse_basis(cfg["basis"])
    rows, plot, per = [], [], []
    if cfg["mode"] == "eigenspace":
        _need(cfg, "E")
        shell = enumerate_shell(d, cfg["E"])
        for label, prov in bases:
            rec = eigenspace_bound_report(a, shell, prov)
            rows.append({"basis": label, "E": rec.norm_sq, "r": rec.r, "s2": rec.s2,
                         "moment_rhs": rec.moment_rhs, "s2_over_r": rec.normalized_variance,
                         "d2_bound": rec.d2_bound if rec.d2_bound is not None else "",
                         "general_bound": rec.general_bound})
            plot.append((rec.norm_sq, rec.normalized_variance, rec.d2_bound or rec.general_bound))
            if rec.s2 > rec.moment_rhs + cfg["tol"]:
                raise InvariantViolation(f"S2 = {rec.s2} exceeds the moment bound {rec.moment_rhs}")
        out.table(list(rows[0]), rows)
        out.plot(["E", "s2_over_r", "bound"], plot, "eigenspace variance")
        out.summary = {"d": d, "E": cfg["E"], "mode": "eigenspace",
                       "max_s2_over_r": max(r["s2_over_r"] for r in rows)}
        return
    _need(cfg, "lambda_")
    lams = parse_lambdas(cfg["lambda_"])

    def run(job):
        lam, (label, prov) = job
        if cfg["mode"] == "short":
            return short_interval_report(a, lam, prov, label)
        return v2(a, _window_for(cfg, d, lam), prov, label, slack=cfg["tol"])

    jobs = [(lam, b) for lam in lams for b in bases]
    reps = ordered_map(run, jobs, threads)
    for rep in reps:
        if not rep.rows:
            per.append(rep.summary())
            continue
        for r in rep.shell_table():
            if r["s2"] > r["moment_rhs"] + cfg["tol"]:
                raise InvariantViolation(f"S2 exceeds the moment bound at E={r['E']}")
            rows.append({"lambda": rep.window.lam, "basis": rep.basis_label, **r})
        per.append(rep.summary())
        plot.append((rep.window.lam, rep.v2, rep.rhs, rep.extras.get("maintheo_rhs", math.nan)))
    out.table(["lambda", "basis", "E", "r", "s2", "moment_rhs"], rows)
    out.plot(["lambda", "V2", "prop_rhs", "maintheo_rhs"], plot, f"{cfg['mode']}-window variance")
    ratios = [p["maintheo_ratio"] for p in per if p.get("maintheo_ratio") is not None]
    short = [p["short_scaled_ratio"] for p in per if p.get("short_scaled_ratio") is not None]
    summ = {"d": d, "mode": cfg["mode"], "windows": per,
            "max_V2": max((p["V2"] for p in per if math.isfinite(p["V2"])), default=None),
            "max_maintheo_ratio": max(ratios, default=None)}
    if short:
        summ["max_short_scaled_ratio"] = max(short)
    out.summary = summ
    if len(per) == 1:
        p = per[0]
        print(f"V2 = {p['V2']!r}  ratio(maintheo) = {p.get('maintheo_ratio')!r}")


def cmd_measure_variance(cfg, out: Output, threads: int):
    mu, _ = parse_measure(cfg["measure"])
    d = mu.dim
    _need(cfg, "obs", "lambda_")
    a = parse_observable(cfg["obs"], d)
    if cfg["mu_mode"] == "probability":
        mu = mu.normalized()
    lam = parse_lambdas(cfg["lambda_"])
    if len(lam) != 1:
        raise UsageError("measure-variance takes a single --lambda")
    win = eigenspace_window(d, cfg["E"]) if cfg["mode"] == "eigenspace" else _window_for(cfg, d, lam[0])
    rows, per = [], []
    for label, prov in parse_basis(cfg["basis"]):
        rep = measure_variance(a, mu, win, prov, mode=cfg["mu_mode"], label=label)
        rows += [{"basis": label, **r} for r in rep.row_table()]
        per.append(rep.summary())
    out.table(["basis", "E", "j", "dev_re", "dev_im", "abs_dev"], rows)
    out.plot(["E", "abs_dev"], [(r["E"], r["abs_dev"]) for r in rows], "measure deviations")
    out.summary = {"measure": cfg["measure"], "reports": per}


def cmd_restriction(cfg, out: Output, threads: int):
    sigma, _ = parse_measure(cfg["measure"])
    d = sigma.dim
    a = parse_observable(cfg["obs"], d) if cfg.get("obs") else Observable.constant(d)
    bases = parse_basis(cfg["basis"])
    Es = [cfg["E"]] if cfg.get("E") is not None else nonempty_shells(d, cfg["emax"] or 0, 1)
    if not Es:
        raise UsageError("give --E or --emax")
    jobs = [(E, b) for E in Es for b in bases]
    recs = ordered_map(lambda j: (j[1][0], restriction_records(a, j[1][1](enumerate_shell(d, j[0])), sigma)),
                       jobs, threads)
    rows = [{"basis": lab, **r.as_row()} for lab, rs in recs for r in rs]
    cols = ["basis", "E", "j", "restriction_value", "target", "period_re", "period_im", "cs_bound", "l2_ratio"]
    out.table(cols, rows)
    out.plot(["E", "l2_ratio"], [(r["E"], r["l2_ratio"]) for r in rows], "L2 restriction ratio")
    ratios = [r["l2_ratio"] for r in rows]
    out.summary = {"measure": cfg["measure"], "n_rows": len(rows), "l2_ratio_min": min(ratios),
                   "l2_ratio_max": max(ratios), "mass": sigma.mass}
    if d == 2 and cfg.get("emax") and cfg.get("E") is None:
        for lab, prov in bases:
            s = br_sweep(sigma, cfg["emax"], prov)
            out.summary.setdefault("br", {})[lab] = {"min": s.ratio_min, "max": s.ratio_max, "n_rows": s.n_rows}


def cmd_period_decay(cfg, out: Output, threads: int):
    sigma, curv = parse_measure(cfg["measure"])
    rows = []
    for label, prov in parse_basis(cfg["basis"]):
        for r in period_decay_sweep(sigma, cfg["emax"], prov, cfg["delta"],
                                    curvature=curv if cfg["require_curved"] else None):
            rows.append({"basis": label, "E": r.norm_sq, "lambda": r.lam, "max_period": r.max_period,
                         "cs_bound": r.cs_bound, "scaled": r.scaled})
    out.table(["basis", "E", "lambda", "max_period", "cs_bound", "scaled"], rows)
    out.plot(["lambda", "max_period", "cs_bound", "scaled"],
             [(r["lambda"], r["max_period"], r["cs_bound"], r["scaled"]) for r in rows], "period decay")
    out.summary = {"measure": cfg["measure"], "delta": cfg["delta"], "curvature_min": curv,
                   "max_scaled": max((r["scaled"] for r in rows), default=None),
                   "max_period": max((r["max_period"] for r in rows), default=None)}


def cmd_decay_fit(cfg, out: Output, threads: int):
    mu, curv = parse_measure(cfg["measure"])
    fit = decay_fit(mu, cfg["emax"])
    rows = [{"radius": float(r), "envelope": float(e)} for r, e in zip(fit.radii, fit.envelope)]
    out.table(["radius", "envelope"], rows)
    out.plot(["log_radius", "log_envelope"],
             [(math.log(r["radius"]), math.log(r["envelope"])) for r in rows], "log-log decay envelope")
    littman = float(np.max(fit.envelope * fit.radii ** (mu.dim - 1)))
    out.summary = {"measure": cfg["measure"], "emax": cfg["emax"], "alpha": fit.alpha, "C": fit.C,
                   "alpha_shifted": fit.alpha_shifted, "C_shifted": fit.C_shifted,
                   "n_shells": fit.n_shells, "curvature_min": curv, "littman_sup": littman}
    print(f"alpha = {float(fit.alpha)!r}")


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

# name -> (handler, {dest: (default, type, help)}, csv column note)
COMMANDS = {
    "shell": (cmd_shell, {
        "d": (2, int, "dimension"), "E": (None, int, "single eigenvalue |k|^2"),
        "emin": (None, int, "with --emax: count r_d for every E in [emin, emax]"),
        "emax": (None, int, "upper end of an E range"),
    }, "points k1..kd, or E,r with --emax"),
    "paircount": (cmd_paircount, {
        "d": (2, int, "dimension"), "E": (None, int, "single eigenvalue"),
        "emin": (None, int, "lower end of the E range"), "emax": (None, int, "upper end of the E range"),
        "n": (None, str, "frequency n as comma list; omit for the per-shell maximum over all n"),
    }, "E,pair_count or E,max_pair_count,argmax_n"),
    "separation": (cmd_separation, {
        "N": (1000, int, "largest eigenvalue"), "delta": (0.2, float, "separation exponent"),
    }, "E,r2,min_sep,threshold,is_separated"),
    "iwaniec": (cmd_iwaniec, {"limit": (100, int, "largest n")}, "n,E,factors,r2"),
    "zygmund": (cmd_zygmund, {
        "d": (2, int, "dimension (must be 2)"), "emax": (500, int, "largest eigenvalue sampled"),
        "samples": (200, int, "number of Haar eigenfunctions"), "seed": (0, int, "base seed"),
        "tol": (1e-9, float, "slack on the L4 bound"),
    }, "sample,E,l4,X,chain_ok"),
    "variance": (cmd_variance, {
        "d": (2, int, "dimension"), "lambda_": (None, str, "lambda or start:stop:step"),
        "mode": ("long", str, "long | short | eigenspace"), "c": (None, float, "lower window end for long mode"),
        "E": (None, int, "eigenvalue for eigenspace mode"),
        "basis": ("haar:seed=0:count=1", str, "basis spec"), "obs": (None, str, "observable spec"),
        "tol": (1e-9, float, "inequality slack"),
    }, "lambda,basis,E,r,s2,moment_rhs (eigenspace mode: basis,E,r,s2,moment_rhs,s2_over_r,...)"),
    "measure-variance": (cmd_measure_variance, {
        "measure": ("circle:r=1", str, "measure spec"), "lambda_": (None, str, "window lambda"),
        "mode": ("long", str, "long | short | eigenspace"), "c": (None, float, "lower window end"),
        "E": (None, int, "eigenvalue for eigenspace mode"),
        "mu_mode": ("raw", str, "raw (hypersurface measure) | probability (normalized, alpha pipeline)"),
        "basis": ("haar:seed=0:count=1", str, "basis spec"), "obs": (None, str, "observable spec"),
    }, "basis,E,j,dev_re,dev_im,abs_dev"),
    "restriction": (cmd_restriction, {
        "measure": ("circle:r=1", str, "measure spec"), "E": (None, int, "single eigenvalue"),
        "emax": (None, int, "sweep all shells up to emax (d=2 adds the L2 ratio range)"),
        "basis": ("haar:seed=0:count=1", str, "basis spec"), "obs": (None, str, "observable spec (default 1)"),
    }, "basis,E,j,restriction_value,target,period_re,period_im,cs_bound,l2_ratio"),
    "period-decay": (cmd_period_decay, {
        "measure": ("circle:r=1", str, "measure spec"), "emax": (400, int, "largest eigenvalue"),
        "delta": (0.1, float, "exponent slack in the scaled column"),
        "basis": ("haar:seed=0:count=1", str, "basis spec"),
        "require_curved": (True, bool, "reject surfaces with vanishing sampled curvature"),
    }, "basis,E,lambda,max_period,cs_bound,scaled"),
    "decay-fit": (cmd_decay_fit, {
        "measure": ("circle:r=1", str, "measure spec"), "emax": (400, int, "largest eigenvalue"),
    }, "radius,envelope"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _flag(dest: str) -> str:
    return "--lambda" if dest == "lambda_" else "--" + dest.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="torusqe", description="Quantum variance experiments on flat tori.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name, (_, opts, cols) in COMMANDS.items():
        sp = sub.add_parser(name, help=f"CSV columns: {cols}", description=f"CSV columns: {cols}")
        for dest, (default, typ, hlp) in opts.items():
            if typ is bool:
                sp.add_argument(_flag(dest), dest=dest, default=None, action=argparse.BooleanOptionalAction,
                                help=f"{hlp} (default: {default})")
            else:
                sp.add_argument(_flag(dest), dest=dest, default=None, type=typ, help=f"{hlp} (default: {default})")
        sp.add_argument("--config", default=None, help="JSON config; explicit flags override its fields")
        sp.add_argument("--out", default=None, help="output directory (default: .)")
        sp.add_argument("--name", default=None, help="output file stem (default: subcommand name)")
        sp.add_argument("--threads", default=None, type=int,
                        help="worker threads (default: TORUSQE_THREADS, then config, then core count)")
    sub.add_parser("reference", help="print the option reference as markdown")
    return p


def reference_markdown() -> str:
    lines = ["# torusqe command reference", "",
             "Generated by `torusqe reference`.  Every subcommand also accepts `--config FILE`, "
             "`--out DIR`, `--name STEM` and `--threads N`.", ""]
    for name, (_, opts, cols) in COMMANDS.items():
        lines += [f"## {name}", "", f"CSV columns: `{cols}`", "", "| flag | default | meaning |", "|---|---|---|"]
        for dest, (default, _, hlp) in opts.items():
            hlp = hlp.replace("|", "\\|")  # keep table cells intact
            lines.append(f"| `{_flag(dest)}` | `{default}` | {hlp} |")
        lines.append("")
    return "\n".join(lines)


def resolve_config(name: str, args: argparse.Namespace) -> dict:
    _, opts, _ = COMMANDS[name]
    cfg = {dest: default for dest, (default, _, _) in opts.items()}
    cfg.update(out=".", name=name, threads=None)
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config!r}: {e}") from None
        if not isinstance(doc, dict):
            raise UsageError("config must be a JSON object")
        for k, v in doc.items():
            key = "lambda_" if k == "lambda" else k.replace("-", "_")
            if key not in cfg:
                raise UsageError(f"unknown config field {k!r} for {name}")
            cfg[key] = v
    for k in list(cfg) + ["out", "name", "threads"]:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def thread_count(cfg: dict, explicit: int | None) -> int:
    if explicit is not None:
        n = explicit
    elif os.environ.get("TORUSQE_THREADS"):
        try:
            n = int(os.environ["TORUSQE_THREADS"])
        except ValueError:
            raise UsageError("TORUSQE_THREADS must be an integer") from None
    elif cfg.get("threads") is not None:
        n = int(cfg["threads"])
    else:
        n = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
    if n < 1:
        raise UsageError("thread count must be >= 1")
    return n


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return EXIT_USAGE
        if args.command == "reference":
            print(reference_markdown())
            return EXIT_OK
        cfg = resolve_config(args.command, args)
        threads = thread_count(cfg, args.threads)
        out = Output(cfg["name"])
        COMMANDS[args.command][0](cfg, out, threads)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantViolation as e:
        print(f"invariant violated: {e}", file=sys.stderr)
        return EXIT_VIOLATION
    except (LatticeError, MeasureError, ObservableError, QuadratureError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    out.write(Path(cfg["out"]), args.command, cfg)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
