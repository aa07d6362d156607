"""Experiment pipelines behind the command-line subcommands.

Each ``run_*`` function takes an :class:`ExperimentConfig` and returns a
:class:`RunReport` holding a per-lambda table, named checks and provenance.
Independent work items may run on a thread pool; results are always
assembled in input order so the output bytes do not depend on scheduling.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .errors import ExtrapolationError
from .excess import CutoffProfile, cutoff_weights, extrapolate_R, occupations, vector_weights
from .operators import Grid, build_free, build_perturbed
from .resolvent import (boundary_limit_probe, extrapolate_to_zero, smoothing_schedule,
                        ssf_contour, ssf_determinant, w_trace_probe)
from .scattering import (bound_state_count, default_l_max, levinson_check, levinson_offset,
                         phase_curve, total_phase)
from .spectral import TestFunction, counting_curve, eigendecompose, krein_lhs, krein_rhs


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


@dataclass
class RunReport:
    command: str
    columns: list
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"command": self.command, "passed": bool(self.passed), "columns": self.columns,
                "rows": [[_jsonable(v) for v in row] for row in self.rows],
                "checks": [{k: _jsonable(v) for k, v in c.__dict__.items()} for c in self.checks],
                "provenance": self.provenance, "notes": self.notes}


def _jsonable(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if np.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _pmap(fn, items, threads: int):
    items = list(items)
    if threads == 1 or len(items) < 2:
        return [fn(x) for x in items]
    workers = threads if threads > 0 else (os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def provenance(cfg: ExperimentConfig) -> dict:
    return {"config_hash": cfg.digest, "version": __version__, "source": cfg.source}


# ---------------------------------------------------------------- systems

@dataclass
class Channel:
    """One angular-momentum channel (or the whole line in 1D)."""

    l: int
    weight: int
    grid: Grid
    eigH: object
    eigH0: object
    local: np.ndarray | None = None
    local0: np.ndarray | None = None


def channel_list(cfg: ExperimentConfig, lam_max: float | None = None) -> list:
    """Angular momenta and their multiplicities: [(0, 1)] in 1D, (l, 2l+1) radially."""
    if cfg.dimension == 1:
        return [(0, 1)]
    l_max = cfg["scattering"]["l_max"]
    if l_max is None:
        lam_max = float(cfg.lambdas.max()) if lam_max is None else lam_max
        l_max = default_l_max(cfg.potential(), np.sqrt(max(lam_max, 0.0)))
    return [(l, 2 * l + 1) for l in range(l_max + 1)]


def build_channels(cfg: ExperimentConfig, radii=None, half_width=None, points=None,
                   threads: int = 1) -> list:
    """Eigen-systems per channel; with ``radii`` also per-level cutoff weights.

    Eigenvectors are reduced to local weights straight away and then dropped
    so that only one set of vectors is alive per worker.
    """
    pot = cfg.potential()
    plateau = cfg["excess"]["plateau"]

    def one(item):
        l, weight = item
        grid = cfg.grid(l, half_width, points)
        out = []
        for H in (build_perturbed(grid, pot), build_free(grid)):
            eig = eigendecompose(H, vectors=radii is not None)
            local = None
            if radii is not None:
                w = np.column_stack([cutoff_weights(grid, CutoffProfile(r, plateau)) for r in radii])
                local = vector_weights(eig, w)
                eig.vectors = None
            out.append((eig, local))
        (eH, loc), (eH0, loc0) = out
        return Channel(l, weight, grid, eH, eH0, loc, loc0)

    return _pmap(one, channel_list(cfg), threads)


def transform_for(cfg: ExperimentConfig, channels):
    lam_min = min(min(c.eigH.values[0], c.eigH0.values[0]) for c in channels)
    params = cfg.transform(min(lam_min, 0.0))
    params.check(min(lam_min, 0.0))
    return params


# ---------------------------------------------------------------- ssf

def ssf_values(cfg, channels, params, lambdas, threads=1, routes=("contour", "determinant")):
    """Channel-summed xi per route: {route: (xi, err)} plus the smallest energy eta."""
    factors = cfg["ssf"]["eta_factors"]
    tol = cfg["ssf"]["quad_tol"]

    def one(lam):
        res = {r: [0.0, 0.0] for r in routes}
        eta_min = np.inf
        for ch in channels:
            eta_e, eta_a = smoothing_schedule(ch.grid, lam, params, factors)
            eta_min = min(eta_min, eta_e[-1])
            if "contour" in routes:
                c = ssf_contour(ch.eigH, ch.eigH0, params, lam, eta_a, tol=tol)
                res["contour"][0] += ch.weight * c.xi
                res["contour"][1] += ch.weight * (c.err + c.quad_errors.max())
            if "determinant" in routes:
                vals = [ssf_determinant(ch.eigH, ch.eigH0, params, lam, e) for e in eta_a]
                v, spread = extrapolate_to_zero(eta_a, vals)
                res["determinant"][0] += ch.weight * v
                res["determinant"][1] += ch.weight * spread
        return res, eta_min

    return _pmap(one, lambdas, threads)


def run_ssf(cfg: ExperimentConfig, threads: int = 1) -> RunReport:
    channels = build_channels(cfg, threads=threads)
    params = transform_for(cfg, channels)
    rep = RunReport("ssf", ["lambda", "xi", "xi_err", "eta", "route"], provenance=provenance(cfg))
    results = ssf_values(cfg, channels, params, cfg.lambdas, threads)
    worst = 0.0
    for lam, (res, eta) in zip(cfg.lambdas, results):
        for route in ("contour", "determinant"):
            rep.rows.append([lam, res[route][0], res[route][1], eta, route])
        worst = max(worst, abs(res["contour"][0] - res["determinant"][0]))
    rep.checks.append(Check("contour_vs_determinant", worst <= cfg.tol("route"), worst,
                            cfg.tol("route")))
    rep.notes.append(f"shift M={params.shift:g}, power={params.power}, channels={len(channels)}")
    return rep


# ---------------------------------------------------------------- phase

def phase_channels(cfg: ExperimentConfig, lambdas, threads: int = 1) -> dict:
    pot = cfg.potential()
    ks = np.sqrt(lambdas[lambdas > 0])
    k_min = cfg["scattering"]["k_min"]
    keys = ["even", "odd"] if cfg.dimension == 1 else [l for l, _ in channel_list(cfg)]
    if ks.size == 0:
        ks = np.array([1.0])
    curves = _pmap(lambda key: phase_curve(pot, key, ks, k_min=k_min), keys, threads)
    return dict(zip(keys, curves))


def run_phase(cfg: ExperimentConfig, threads: int = 1) -> RunReport:
    pot = cfg.potential()
    lam = cfg.lambdas
    curves = phase_channels(cfg, lam, threads)
    tp = total_phase(curves, lam)
    rep = RunReport("phase", ["lambda", "theta", "theta_err"], provenance=provenance(cfg))
    for e, th, tail in zip(lam, tp.theta, tp.tail):
        rep.rows.append([e, th, tail])
    tol = cfg.tol("levinson")
    for key, curve in curves.items():
        if isinstance(key, int) and key > 2:
            continue
        count = bound_state_count(pot, key)
        ok, resid = levinson_check(curve, count, tol, levinson_offset(pot, key))
        rep.checks.append(Check(f"levinson_{key}", ok, resid, tol, f"bound states: {count}"))
    rep.notes.append(f"channels: {list(curves)}")
    return rep


# ---------------------------------------------------------------- excess

@dataclass
class ExcessPoint:
    lam: float
    charges: np.ndarray
    spreads: np.ndarray
    limit: float
    err: float
    exponent: float
    residual: float
    status: str


def excess_point(channels, params, lam, radii, factors, noise, rel) -> ExcessPoint:
    """Channel-summed Z_R for every R (eta -> 0 extrapolated), then the R -> inf fit."""
    radii = np.asarray(radii, dtype=float)
    charges = np.zeros(radii.size)
    spreads = np.zeros(radii.size)
    for ch in channels:
        # each channel has its own level spacing and hence its own eta schedule
        _, eta_a = smoothing_schedule(ch.grid, lam, params, factors)
        rows = np.array([occupations(ch.eigH.values, lam, params, eta) @ ch.local
                         - occupations(ch.eigH0.values, lam, params, eta) @ ch.local0
                         for eta in eta_a])
        for j in range(radii.size):
            v, s = extrapolate_to_zero(eta_a, rows[:, j])
            charges[j] += ch.weight * v
            spreads[j] += ch.weight * s
    floor = max(noise, float(spreads.max()))
    try:
        fit = extrapolate_R(radii, charges, lam, rel_threshold=rel, noise=floor)
        return ExcessPoint(lam, charges, spreads, fit.limit, fit.residual + floor,
                           fit.exponent, fit.residual, "ok")
    except ExtrapolationError:
        err = float(abs(charges[-1] - charges[-2]) + spreads[-1])
        return ExcessPoint(lam, charges, spreads, float(charges[-1]), err, float("nan"),
                           float("nan"), "extrapolation-failed")


def excess_values(cfg, lambdas, threads=1, half_width=None, points=None):
    radii = cfg["excess"]["radii"]
    channels = build_channels(cfg, radii, half_width, points, threads)
    params = transform_for(cfg, channels)
    factors = cfg["ssf"]["eta_factors"]
    noise = cfg["excess"]["noise"]
    rel = cfg.tol("cutoff_residual")
    pts = _pmap(lambda e: excess_point(channels, params, e, radii, factors, noise, rel),
                lambdas, threads)
    return pts, channels, params


def run_excess(cfg: ExperimentConfig, threads: int = 1) -> RunReport:
    radii = cfg["excess"]["radii"]
    cols = ["lambda", "z_inf", "z_inf_err", "epsilon", "fit_residual", "status"]
    for r in radii:
        cols += [f"z_R{r:g}", f"z_R{r:g}_err"]
    rep = RunReport("excess", cols, provenance=provenance(cfg))
    pts, _, _ = excess_values(cfg, cfg.lambdas, threads)
    for p in pts:
        row = [p.lam, p.limit, p.err, p.exponent, p.residual, p.status]
        for z, s in zip(p.charges, p.spreads):
            row += [z, s]
        rep.rows.append(row)
        if p.status == "ok":
            bound = cfg.tol("cutoff_residual") * abs(p.charges[0] - p.limit)
            ok = p.exponent > 0 and p.residual < bound
            rep.checks.append(Check(f"cutoff_fit_{p.lam:g}", ok, p.residual, bound,
                                    f"epsilon={p.exponent:.4g}"))
        else:
            rep.notes.append(f"lambda={p.lam:g}: R-extrapolation failed, Z_Rmax reported")
    if cfg["excess"]["double_box"]:
        lam0 = cfg["probes"]["lam"]
        g = cfg["grid"]
        base, _, _ = excess_values(cfg, [lam0], threads)
        dbl, _, _ = excess_values(cfg, [lam0], threads, 2 * g["half_width"], 2 * g["points"] + 1)
        diff = abs(base[0].limit - dbl[0].limit)
        rep.checks.append(Check("box_doubling", diff < cfg.tol("doubling"), diff,
                                cfg.tol("doubling"), f"lambda={lam0:g}"))
    return rep


# ---------------------------------------------------------------- friedel

def run_friedel_check(cfg: ExperimentConfig, threads: int = 1) -> RunReport:
    lam = cfg.lambdas
    cols = ["lambda", "theta", "theta_err", "xi", "xi_err", "z_inf", "z_inf_err",
            "max_discrepancy", "tolerance", "status"]
    rep = RunReport("friedel-check", cols, provenance=provenance(cfg))
    curves = phase_channels(cfg, lam, threads)
    tp = total_phase(curves, lam)
    pts, channels, params = excess_values(cfg, lam, threads)
    ssf = ssf_values(cfg, channels, params, lam, threads, routes=("contour",))
    tol = cfg.tol("friedel")
    worst = 0.0
    for i, e in enumerate(lam):
        xi, xi_err = ssf[i][0]["contour"]
        p = pts[i]
        trio = np.array([tp.theta[i], xi, p.limit])
        disc = float(np.ptp(trio))
        status = p.status
        if e <= 0:
            status = "below-threshold"
        else:
            worst = max(worst, disc)
        rep.rows.append([e, tp.theta[i], tp.tail[i], xi, xi_err, p.limit, p.err, disc, tol, status])
    rep.checks.append(Check("friedel_sum_rule", worst <= tol, worst, tol,
                            "max pairwise discrepancy of (theta, xi, Z_inf) over lambda > 0"))
    return rep


# ---------------------------------------------------------------- krein

def krein_battery(cfg: ExperimentConfig) -> list:
    k = cfg["krein"]
    funcs = [TestFunction("heat", t=t) for t in k["heat_t"]]
    funcs.append(TestFunction("bump", center=k["bump_center"], width=k["bump_width"]))
    return funcs


def krein_values(cfg, channels, f: TestFunction):
    """Channel-summed (lhs, rhs) for one test function."""
    tail = cfg["krein"]["tail"]
    lo_f, hi_f = f.support(tail)
    lhs = rhs = 0.0
    for ch in channels:
        floor = min(ch.eigH.values[0], ch.eigH0.values[0])
        if hi_f <= floor:
            # f vanishes on both spectra and xi vanishes below them
            continue
        lo = max(floor, lo_f) - 1.0
        hi = hi_f + 1.0
        curve = counting_curve(ch.eigH, ch.eigH0, lo, hi, f.scale / 40.0)
        lhs += ch.weight * krein_lhs(ch.eigH, ch.eigH0, f)
        rhs += ch.weight * krein_rhs(curve, f, tail)
    return lhs, rhs


def run_krein_check(cfg: ExperimentConfig, threads: int = 1) -> RunReport:
    channels = build_channels(cfg, threads=threads)
    rep = RunReport("krein-check", ["function", "parameter", "lhs", "rhs", "rel_err", "tolerance"],
                    provenance=provenance(cfg))
    tol = cfg.tol("krein")
    funcs = krein_battery(cfg)
    results = _pmap(lambda f: krein_values(cfg, channels, f), funcs, threads)
    for f, (lhs, rhs) in zip(funcs, results):
        scale = abs(lhs)
        rel = abs(lhs - rhs) / scale if scale > 0 else abs(lhs - rhs)
        param = f.t if f.family == "heat" else f.center
        rep.rows.append([f.family, param, lhs, rhs, rel, tol])
        rep.checks.append(Check(f"krein_{f.family}_{param:g}", rel <= tol, rel, tol))
    return rep


# ---------------------------------------------------------------- probes

def run_probes(cfg: ExperimentConfig, threads: int = 1) -> RunReport:
    pr = cfg["probes"]
    pot = cfg.potential()
    beta = cfg.beta()
    rep = RunReport("probes", ["probe", "index", "parameter", "value", "difference"],
                    provenance=provenance(cfg))
    kind = "line" if cfg.dimension == 1 else "radial"
    grids = [Grid(kind, pr["w_half_width"], n) for n in pr["w_points"]]
    g = cfg.grid(0)
    channels = [Channel(0, 1, g, eigendecompose(build_perturbed(g, pot)),
                        eigendecompose(build_free(g)))]
    params = transform_for(cfg, channels)
    w = w_trace_probe(grids, pot, params, beta, cfg.alpha())
    diffs = w.differences
    for i, (h, s) in enumerate(zip(w.spacings, w.sums)):
        rep.rows.append(["w_trace", i, h, s, diffs[i - 1] if i else float("nan")])
    mono = bool(np.all(np.diff(diffs) < 0))
    rel = float(diffs[-1] / abs(w.sums[-1]))
    rep.checks.append(Check("w_trace_monotone", mono, float(np.max(np.diff(diffs))), 0.0,
                            f"beta={beta:g}"))
    rep.checks.append(Check("w_trace_relative", rel < cfg.tol("w_relative"), rel,
                            cfg.tol("w_relative")))
    etas = pr["eta0"] * 2.0 ** -np.arange(pr["eta_steps"])
    ch = channels[0]
    norms = boundary_limit_probe(ch.eigH, ch.eigH0, params, pr["lam"], beta, etas)
    d = np.abs(np.diff(norms))
    for i, (eta, v) in enumerate(zip(etas, norms)):
        rep.rows.append(["boundary_limit", i, eta, v, d[i - 1] if i else float("nan")])
    ratios = d[:-1] / d[1:]
    rep.checks.append(Check("boundary_limit_ratio", bool(np.all(ratios >= cfg.tol("boundary_ratio"))),
                            float(ratios.min()), cfg.tol("boundary_ratio"),
                            f"lambda={pr['lam']:g}"))
    return rep


# ---------------------------------------------------------------- output

def write_report(rep: RunReport, out_dir: str, cfg: ExperimentConfig | None = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "curves.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(rep.columns)
        for row in rep.rows:
            w.writerow([_fmt(v) for v in row])
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(rep.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        fh.write(render_text(rep))
    if cfg is not None:
        with open(os.path.join(out_dir, "config.ini"), "w") as fh:
            fh.write(cfg.serialize())


def render_text(rep: RunReport) -> str:
    lines = [f"{rep.command}: {'PASS' if rep.passed else 'FAIL'}"]
    for k, v in sorted(rep.provenance.items()):
        lines.append(f"  {k}: {v}")
    for c in rep.checks:
        tag = "PASS" if c.passed else "FAIL"
        extra = f"  ({c.detail})" if c.detail else ""
        lines.append(f"  [{tag}] {c.name}: {c.value:.6g} vs {c.tolerance:.3g}{extra}")
    for n in rep.notes:
        lines.append(f"  note: {n}")
    lines.append("")
    lines.append("  " + "  ".join(rep.columns))
    for row in rep.rows:
        lines.append("  " + "  ".join(f"{v:.6g}" if isinstance(v, (float, np.floating)) else str(v)
                                      for v in row))
    return "\n".join(lines) + "\n"


def merge_reports(paths) -> RunReport:
    """Combine the checks of previously written report.json files."""
    merged = RunReport("report", ["source", "command", "check", "passed", "value", "tolerance"])
    for path in paths:
        file = os.path.join(path, "report.json") if os.path.isdir(path) else path
        with open(file) as fh:
            data = json.load(fh)
        for c in data["checks"]:
            value = float(c["value"]) if not isinstance(c["value"], str) else float("nan")
            tol = float(c["tolerance"]) if not isinstance(c["tolerance"], str) else float("nan")
            merged.checks.append(Check(f"{data['command']}:{c['name']}", bool(c["passed"]), value, tol,
                                       c.get("detail", "")))
            merged.rows.append([path, data["command"], c["name"], int(bool(c["passed"])), value, tol])
        merged.provenance[path] = data.get("provenance", {}).get("config_hash", "")
    return merged


PIPELINES = {
    "ssf": run_ssf,
    "phase": run_phase,
    "excess": run_excess,
    "friedel-check": run_friedel_check,
    "krein-check": run_krein_check,
    "probes": run_probes,
}
