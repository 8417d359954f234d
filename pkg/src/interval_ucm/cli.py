"""
Command-line driver: ``interval-ucm <command> [options]``.

Commands
--------
fit            per-location structural model fits, tests and components
test           trend/seasonal tests and annual-difference descriptives
deseasonalize  subtract the filtered seasonal component
cluster        complete-linkage regions from location correlations
mldfm          multi-level dynamic factor model on deseasonalised series
simulate       write a synthetic min/max panel
mc-critvals    Monte Carlo critical values of a test statistic
plotdata       polar-plot, correlation-map and component band data

Every option can also come from a JSON file given with ``--config`` (keys
are the option names with ``_`` for ``-``); explicit flags win. The output
directory defaults to ``$IVTS_OUTPUT_DIR``, then ``./interval_ucm_out``.
Artifacts carry the package version, a hash of the resolved configuration
and the seed; JSON is written with sorted keys so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    IntervalPanel,
    annual_descriptives,
    cluster_complete_linkage,
    correlation_matrix,
    interpolate_gaps,
    load_panel,
    synthetic_panel,
    to_centre_logrange,
    write_cluster_labels,
    write_csv,
    write_json,
    write_panel,
)
from .estimation import FitOptions, fit_ml, model_template
from .exceptions import NumericalError, ValidationError
from .mldfm import extract_factors, pc_extract, two_step_estimate
from .statespace import ObservationPanel
from .stattests import (
    KINDS,
    irw_test,
    mc_critical_values,
    model_trend_tests,
    rw_test,
    seasonal_cvm_test,
)
from .structural import build_fsbsm, deseasonalize, extract_components

log = logging.getLogger("interval_ucm")

OUTPUT_ENV = "IVTS_OUTPUT_DIR"
DEFAULT_OUTPUT = "interval_ucm_out"
EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
MODES = ("centre", "logrange")
DEFAULT_K = {"centre": 5, "logrange": 3}
DEFAULT_DYNAMICS = {"centre": "irw", "logrange": "rw"}
# settings that do not change artifact contents
_UNHASHED = ("config", "output_dir", "verbose", "workers", "handler")


class HardError(RuntimeError):
    """Failure that stops the whole command."""


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else f"{float(v):.10g}"


# ------------------------------------------------------------------ context

class Run:
    """Resolved configuration plus artifact helpers for one invocation."""

    def __init__(self, args):
        self.args = args
        out = args.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        cfg = {k: v for k, v in sorted(vars(args).items()) if k not in _UNHASHED}
        if getattr(args, "input", None):
            cfg["input_sha256"] = hashlib.sha256(Path(args.input).read_bytes()).hexdigest()
        blob = json.dumps(cfg, sort_keys=True, default=str).encode()
        self.config = cfg
        self.meta = {
            "tool": "interval_ucm",
            "version": __version__,
            "command": args.command,
            "config_hash": hashlib.sha256(blob).hexdigest()[:16],
            "seed": args.seed,
        }

    def path(self, *parts):
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def json(self, name, payload):
        body = dict(payload)
        body["meta"] = self.meta
        write_json(self.path(name), body)

    def csv(self, name, header, rows):
        write_csv(self.path(name), header, rows, self.meta)

    def child_seed(self, index):
        ss = np.random.SeedSequence(self.args.seed, spawn_key=(index,))
        return int(ss.generate_state(1)[0])


def _load(run):
    a = run.args
    panel = load_panel(a.input, interpolate=a.interpolate)
    if a.locations:
        wanted = [s.strip() for s in a.locations.split(",") if s.strip()]
        missing = sorted(set(wanted) - set(panel.ids))
        if missing:
            raise ValidationError(f"unknown locations: {missing}")
        idx = [panel.ids.index(w) for w in wanted]
        panel = IntervalPanel(tuple(panel.locations[i] for i in idx), panel.dates,
                              panel.tmin[:, idx], panel.tmax[:, idx])
    C, R = to_centre_logrange(panel)
    series = {"centre": C, "logrange": R}
    modes = MODES if a.mode == "both" else (a.mode,)
    return panel, {m: series[m] for m in modes}


def _map(fn, tasks, workers):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


# ---------------------------------------------------------------------- fit

def _fit_task(task):
    """Fit one location/mode; returns a plain record (never raises)."""
    loc_id, mode, y, dates, model, n_starts, seed, joint = task
    try:
        if joint:
            template = model_template(model["trend"], model["seasonal"], dim=2, correlated=True)
        else:
            template = model_template(model["trend"], model["seasonal"])
        fit = fit_ml(template, y, FitOptions(n_starts=n_starts, seed=seed))
        spec = build_fsbsm(fit.params)
        comp = extract_components(spec, fit.params, ObservationPanel(y, dates))
        return {"ok": True, "fit": fit, "components": comp}
    except (ValidationError, NumericalError, ArithmeticError, ValueError) as exc:
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def _test_entry(fn):
    try:
        return fn().to_dict()
    except (ValidationError, NumericalError) as exc:
        return {"error": str(exc)}


def _location_record(loc, mode, y, fit, comp):
    p = fit.params
    trends = model_trend_tests(y, p)
    term = comp.terminal()
    return {
        "location_id": loc.id,
        "location_name": loc.name,
        "mode": mode,
        "loglik": fit.loglik,
        "converged": fit.converged,
        "sigma2_eps": float(p.irregular[0, 0]),
        "sigma2_eta": float(p.level[0, 0]),
        "RWD": trends["RWD"].to_dict(),
        "sigma2_zeta": float(p.slope[0, 0]),
        "IRW": trends["IRW"].to_dict(),
        "sigma2_omega_I": float(p.seasonal_I[0, 0]),
        "H0I": _test_entry(lambda: seasonal_cvm_test(y, 1, params=p)),
        "sigma2_omega_II": float(p.seasonal_II[0, 0]),
        "H0II": _test_entry(lambda: seasonal_cvm_test(y, "II", params=p)),
        "mu_T": {"estimate": term["mu_T"][0], "se": term["mu_T_se"][0]},
        "beta_T": {"estimate": term["beta_T"][0], "se": term["beta_T_se"][0]},
    }


def _joint_record(loc, fit, comp):
    p = fit.params
    term = comp.terminal()
    rec = {"location_id": loc.id, "location_name": loc.name, "mode": "joint",
           "series": list(MODES), "loglik": fit.loglik, "converged": fit.converged}
    for key, name in (("sigma2_eps", "irregular"), ("sigma2_eta", "level"),
                      ("sigma2_zeta", "slope"), ("sigma2_omega_I", "seasonal_I"),
                      ("sigma2_omega_II", "seasonal_II")):
        rec[key] = p.block(name).tolist()
    rec["mu_T"] = {"estimate": term["mu_T"], "se": term["mu_T_se"]}
    rec["beta_T"] = {"estimate": term["beta_T"], "se": term["beta_T_se"]}
    return rec


def _write_components(run, folder, loc_id, comp, dates, column=0, suffix=""):
    for name in ("trend", "slope", "seasonal"):
        est = getattr(comp, name)[:, column]
        lo, hi = (b[:, column] for b in comp.band(name))
        rows = [(str(d), _fmt(e), _fmt(a), _fmt(b)) for d, e, a, b in zip(dates, est, lo, hi)]
        run.csv(Path("components", folder, f"{loc_id}_{name}{suffix}.csv"),
                ("date", "estimate", "lo95", "hi95"), rows)


def _fit_all(run, panel, series):
    a = run.args
    model = {"trend": a.trend, "seasonal": a.seasonal}
    tasks, keys = [], []
    if a.joint:
        C, R = to_centre_logrange(panel)
        for j, loc in enumerate(panel.locations):
            y2 = np.column_stack([C.values[:, j], R.values[:, j]])
            tasks.append((loc.id, "joint", y2, panel.dates, model, a.n_starts,
                          run.child_seed(j), True))
            keys.append((j, "joint"))
    else:
        for m_i, (mode, Y) in enumerate(series.items()):
            for j, loc in enumerate(panel.locations):
                tasks.append((loc.id, mode, Y.values[:, j], panel.dates, model, a.n_starts,
                              run.child_seed(m_i * panel.n_locations + j), False))
                keys.append((j, mode))
    results = _map(_fit_task, tasks, a.workers)
    return keys, tasks, results


def cmd_fit(run):
    a = run.args
    panel, series = _load(run)
    keys, tasks, results = _fit_all(run, panel, series)
    records = {}
    failures = []
    for (j, mode), task, res in zip(keys, tasks, results):
        loc = panel.locations[j]
        if not res["ok"]:
            log.error("fit failed for %s (%s): %s", loc.id, mode, res["error"])
            failures.append({"location_id": loc.id, "mode": mode, "error": res["error"]})
            continue
        fit, comp = res["fit"], res["components"]
        if not fit.converged:
            log.warning("%s (%s): optimiser did not converge (gradient %.2e)",
                        loc.id, mode, fit.gradient_norm)
        if mode == "joint":
            records.setdefault(mode, []).append(_joint_record(loc, fit, comp))
            for c, name in enumerate(MODES):
                _write_components(run, "joint", loc.id, comp, panel.dates, c, f"_{name}")
        else:
            records.setdefault(mode, []).append(_location_record(loc, mode, task[2], fit, comp))
            _write_components(run, mode, loc.id, comp, panel.dates)
    for mode, recs in records.items():
        run.json(f"fit_{mode}.json", {"model": {"trend": a.trend, "seasonal": a.seasonal},
                                     "locations": recs})
    n_unconv = sum(not r["converged"] for recs in records.values() for r in recs)
    run.json("fit_report.json", {"n_tasks": len(tasks), "n_failed": len(failures),
                                 "n_unconverged": n_unconv, "failures": failures})
    if tasks and len(failures) == len(tasks):
        raise HardError("every fit failed")
    return EXIT_OK


# --------------------------------------------------------------------- test

def cmd_test(run):
    a = run.args
    panel, series = _load(run)
    fs = True if a.finite_sample else None
    for mode, Y in series.items():
        recs = []
        for j, loc in enumerate(panel.locations):
            y = Y.values[:, j]
            y = y[~np.isnan(y)] if np.isnan(y).any() else y
            rec = {"location_id": loc.id, "location_name": loc.name,
                   "RW": _test_entry(lambda: rw_test(y, False, finite_sample=fs)),
                   "RWD": _test_entry(lambda: rw_test(y, True, finite_sample=fs)),
                   "IRW": _test_entry(lambda: irw_test(y, finite_sample=fs))}
            for h in (1, 2, 3, 4, 5, 6, "II"):
                rec[f"seasonal_{h}"] = _test_entry(
                    lambda h=h: seasonal_cvm_test(y, h, finite_sample=fs))
            try:
                rec["annual_differences"] = annual_descriptives(y).to_row()
            except ValidationError as exc:
                rec["annual_differences"] = {"error": str(exc)}
            recs.append(rec)
        run.json(f"tests_{mode}.json", {"locations": recs})
    return EXIT_OK


# ------------------------------------------------------------ deseasonalize

def _monthly_means_removed(values, dates):
    out = np.array(values, dtype=float)
    month = (dates.astype(int) % 12)
    for m in range(12):
        rows = month == m
        out[rows] -= np.nanmean(out[rows], axis=0)
    return out


def _deseason_task(task):
    y, dates, model, n_starts, seed = task
    try:
        fit = fit_ml(model_template(model["trend"], model["seasonal"]), y,
                     FitOptions(n_starts=n_starts, seed=seed))
        adj = deseasonalize(y, build_fsbsm(fit.params), fit.params).values[:, 0]
        return {"ok": True, "values": adj, "params": fit.params.to_dict(),
                "converged": fit.converged}
    except (ValidationError, NumericalError, ArithmeticError, ValueError) as exc:
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def _deseasonalized(run, panel, series, method):
    """{mode: (T, N) array}, plus per-location notes."""
    a = run.args
    out, notes = {}, []
    for m_i, (mode, Y) in enumerate(series.items()):
        if method == "dummies":
            out[mode] = _monthly_means_removed(Y.values, panel.dates)
            continue
        model = {"trend": a.trend, "seasonal": "two-group"}
        tasks = [(Y.values[:, j], panel.dates, model, a.n_starts,
                  run.child_seed(m_i * panel.n_locations + j))
                 for j in range(panel.n_locations)]
        cols = []
        for j, res in enumerate(_map(_deseason_task, tasks, a.workers)):
            loc = panel.locations[j]
            if res["ok"]:
                cols.append(res["values"])
                notes.append({"location_id": loc.id, "mode": mode, "params": res["params"],
                              "converged": res["converged"]})
            else:
                log.error("%s (%s): seasonal fit failed (%s); using monthly means",
                          loc.id, mode, res["error"])
                cols.append(_monthly_means_removed(Y.values[:, [j]], panel.dates)[:, 0])
                notes.append({"location_id": loc.id, "mode": mode, "error": res["error"]})
        out[mode] = np.column_stack(cols)
    return out, notes


def _wide_rows(dates, X):
    return [[str(d)] + [_fmt(v) for v in row] for d, row in zip(dates, X)]


def cmd_deseasonalize(run):
    a = run.args
    panel, series = _load(run)
    adj, notes = _deseasonalized(run, panel, series, a.method)
    for mode, X in adj.items():
        run.csv(f"deseasonalized_{mode}.csv", ("date",) + panel.ids, _wide_rows(panel.dates, X))
    run.json("deseasonalize_report.json", {"method": a.method, "locations": notes})
    return EXIT_OK


# ------------------------------------------------------------------ cluster

def _complete(X, what):
    X = interpolate_gaps(X)
    if np.isnan(X).any():
        bad = np.flatnonzero(np.isnan(X).any(axis=0)).tolist()
        raise HardError(f"{what}: series {bad} have gaps longer than the interpolation limit")
    return X


def _cluster_input(X, keep_global):
    Xs = (X - X.mean(axis=0)) / X.std(axis=0)
    if keep_global:
        return Xs
    f, p = pc_extract(Xs, standardize=False)
    return Xs - np.outer(f, p)


def _cluster(panel, X, k, keep_global):
    U = _cluster_input(_complete(X, "clustering"), keep_global)
    return cluster_complete_linkage(correlation_matrix(U), k)


def cmd_cluster(run):
    a = run.args
    panel, series = _load(run)
    adj, _ = _deseasonalized(run, panel, series, a.method)
    for mode, X in adj.items():
        k = a.k or DEFAULT_K[mode]
        res = _cluster(panel, X, k, a.keep_global)
        write_cluster_labels(run.path(f"clusters_{mode}.csv"), panel, res, run.meta)
        run.json(f"clusters_{mode}.json", {
            "k": k, "distance": "1 - correlation", "linkage": "complete",
            "global_factor_removed": not a.keep_global,
            "labels": res.labels.tolist(), "heights": res.heights.tolist(),
            "merges": [list(m) for m in res.merges]})
    return EXIT_OK


# -------------------------------------------------------------------- mldfm

def _read_regions(path, panel):
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [l for l in fh.read().splitlines() if not l.startswith("#")]
    rows = list(csv.DictReader(lines))
    if not rows or "location_id" not in rows[0] or "region" not in rows[0]:
        raise ValidationError(f"{path}: need columns location_id and region")
    mapping = {r["location_id"].strip(): int(r["region"]) for r in rows}
    missing = [i for i in panel.ids if i not in mapping]
    if missing:
        raise ValidationError(f"{path}: no region for {missing}")
    return np.array([mapping[i] for i in panel.ids])


def cmd_mldfm(run):
    a = run.args
    panel, series = _load(run)
    adj, _ = _deseasonalized(run, panel, series, a.deseasonalize)
    fixed = _read_regions(a.regions, panel) if a.regions else None
    for mode, X in adj.items():
        X = _complete(X, "ML-DFM")
        if fixed is not None:
            regions = fixed
        else:
            regions = _cluster(panel, X, a.k, False).labels
        dyn = a.global_dynamics or DEFAULT_DYNAMICS[mode]
        try:
            est = two_step_estimate(X, regions, dyn)
        except ValidationError as exc:
            raise HardError(f"{mode}: {exc}") from None
        for j in est.phi_clipped:
            log.warning("%s: region %d AR coefficient clipped", mode, j)
        fac = extract_factors(est, ObservationPanel(X, panel.dates, panel.ids))
        cols = fac.factor_table()
        run.csv(f"factors_{mode}.csv", ("date",) + tuple(cols),
                [[str(d)] + [_fmt(cols[c][t]) for c in cols] for t, d in enumerate(panel.dates)])
        rows = []
        for i, loc in enumerate(panel.locations):
            r = int(est.region_of[i])
            rows.append((loc.id, loc.name, repr(loc.lat), repr(loc.lon), r,
                         _fmt(est.loadings[i, 0]), _fmt(est.loadings[i, r]),
                         *(_fmt(s) for s in fac.shares[i])))
        run.csv(f"loadings_{mode}.csv",
                ("location_id", "location_name", "lat", "lon", "region", "loading_global",
                 "loading_regional", "share_global", "share_regional", "share_idiosyncratic"),
                rows)
        share_by_region = {
            str(r): np.mean(fac.shares[est.region_of == r], axis=0).tolist()
            for r in range(1, est.n_regions + 1)}
        run.json(f"mldfm_{mode}.json", {"global_dynamics": dyn,
                                        "deseasonalize": a.deseasonalize,
                                        "regions_from": "file" if fixed is not None else f"k={a.k}",
                                        "spec": est.to_dict(),
                                        "mean_shares_by_region": share_by_region})
    return EXIT_OK


# ---------------------------------------------------------------- simulate

def cmd_simulate(run):
    a = run.args
    panel, truth = synthetic_panel(a.n_locations, a.n_months, a.k_centre, a.k_logrange,
                                   seed=a.seed, start=a.start)
    write_panel(run.path("panel.csv"), panel, meta=run.meta)
    run.json("truth.json", {
        "regions_centre": truth["regions_centre"].tolist(),
        "regions_logrange": truth["regions_logrange"].tolist(),
        "spec_centre": truth["spec_centre"].to_dict(),
        "spec_logrange": truth["spec_logrange"].to_dict()})
    regions = [(loc.id, int(rc), int(rl)) for loc, rc, rl in
               zip(panel.locations, truth["regions_centre"], truth["regions_logrange"])]
    run.csv("regions_centre.csv", ("location_id", "region"), [(i, rc) for i, rc, _ in regions])
    run.csv("regions_logrange.csv", ("location_id", "region"), [(i, rl) for i, _, rl in regions])
    return EXIT_OK


# ------------------------------------------------------------- mc-critvals

def cmd_mc_critvals(run):
    a = run.args
    tables = {}
    for T in a.sizes:
        t = mc_critical_values(a.kind, T, reps=a.reps, seed=a.seed, n_jobs=a.workers)
        cv = t.critical_values(T)
        tables[str(T)] = {"critical_values": {f"{k:g}": v for k, v in sorted(cv.items())},
                          "table": t.to_dict()}
    run.json(f"critvals_{a.kind}.json", {"kind": a.kind, "reps": a.reps, "sizes": tables})
    return EXIT_OK


# ---------------------------------------------------------------- plotdata

def cmd_plotdata(run):
    a = run.args
    panel, series = _load(run)
    month = panel.dates.astype(int) % 12 + 1
    angle = 2 * np.pi * (month - 1) / 12
    for mode, Y in series.items():
        rows = [(loc.id, str(d), int(m), _fmt(th), _fmt(Y.values[t, j]))
                for j, loc in enumerate(panel.locations)
                for t, (d, m, th) in enumerate(zip(panel.dates, month, angle))]
        run.csv(f"polar_{mode}.csv", ("location_id", "date", "month", "angle", "radius"), rows)
        X = _monthly_means_removed(Y.values, panel.dates)
        C = correlation_matrix(X)
        run.csv(f"correlation_{mode}.csv", ("location_id",) + panel.ids,
                [[i] + [_fmt(v) for v in row] for i, row in zip(panel.ids, C)])
    if len(series) == 2:
        Cv = _monthly_means_removed(series["centre"].values, panel.dates)
        Rv = _monthly_means_removed(series["logrange"].values, panel.dates)
        rows = [(loc.id, _fmt(correlation_matrix(Cv[:, j], Rv[:, j])[0, 1]))
                for j, loc in enumerate(panel.locations)]
        run.csv("correlation_centre_logrange.csv", ("location_id", "correlation"), rows)
    if a.components:
        keys, tasks, results = _fit_all(run, panel, series)
        for (j, mode), res in zip(keys, results):
            if res["ok"]:
                _write_components(run, mode, panel.locations[j].id, res["components"],
                                  panel.dates)
            else:
                log.error("components for %s (%s) failed: %s",
                          panel.locations[j].id, mode, res["error"])
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option defaults")
    common.add_argument("--output-dir", help=f"artifact directory (default ${OUTPUT_ENV})")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=_positive_int, default=1,
                        help="worker processes for per-location work")
    common.add_argument("-v", "--verbose", action="count", default=0)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", help="long-format min/max CSV")
    data.add_argument("--mode", choices=("centre", "logrange", "both"), default="both")
    data.add_argument("--locations", help="comma-separated subset of location ids")
    data.add_argument("--interpolate", action="store_true",
                      help="fill interior gaps of up to 2 months linearly")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--trend", choices=("full", "rw", "irw", "deterministic"),
                       default="full")
    model.add_argument("--n-starts", type=_positive_int, default=3)

    parser = argparse.ArgumentParser(prog="interval-ucm", description=__doc__.split("\n")[1])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common, data, model], help="fit structural models")
    p.add_argument("--seasonal", choices=("two-group", "deterministic"), default="two-group")
    p.add_argument("--joint", action="store_true",
                   help="bivariate centre/log-range model per location")
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("test", parents=[common, data], help="trend and seasonality tests")
    p.add_argument("--finite-sample", action="store_true",
                   help="finite-sample instead of asymptotic critical values")
    p.set_defaults(handler=cmd_test)

    p = sub.add_parser("deseasonalize", parents=[common, data, model],
                       help="remove the filtered seasonal component")
    p.add_argument("--method", choices=("fsbsm", "dummies"), default="fsbsm")
    p.set_defaults(handler=cmd_deseasonalize)

    p = sub.add_parser("cluster", parents=[common, data, model], help="complete-linkage regions")
    p.add_argument("--k", type=_positive_int, help="clusters (default 5 centre, 3 log-range)")
    p.add_argument("--method", choices=("fsbsm", "dummies"), default="dummies",
                   help="deseasonalisation before correlating")
    p.add_argument("--keep-global", action="store_true",
                   help="cluster raw correlations instead of those net of the first PC")
    p.set_defaults(handler=cmd_cluster)

    p = sub.add_parser("mldfm", parents=[common, data, model], help="multi-level factor model")
    p.add_argument("--regions", help="CSV with location_id,region")
    p.add_argument("--k", type=_positive_int, help="cluster into k regions instead")
    p.add_argument("--global-dynamics", choices=("irw", "rw"),
                   help="default irw for centre, rw for log-range")
    p.add_argument("--deseasonalize", choices=("fsbsm", "dummies"), default="fsbsm")
    p.set_defaults(handler=cmd_mldfm)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic panel")
    p.add_argument("--n-locations", type=_positive_int, default=68)
    p.add_argument("--n-months", type=_positive_int, default=1092)
    p.add_argument("--k-centre", type=_positive_int, default=5)
    p.add_argument("--k-logrange", type=_positive_int, default=3)
    p.add_argument("--start", default="1930-01")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("mc-critvals", parents=[common], help="Monte Carlo critical values")
    p.add_argument("--kind", choices=KINDS, required=False, default="rw")
    p.add_argument("--sizes", type=_positive_int, nargs="+", default=[1000])
    p.add_argument("--reps", type=_positive_int, default=20000)
    p.set_defaults(handler=cmd_mc_critvals)

    p = sub.add_parser("plotdata", parents=[common, data, model], help="data for figures")
    p.add_argument("--components", action="store_true",
                   help="also fit models and write component bands")
    p.add_argument("--seasonal", choices=("two-group", "deterministic"), default="two-group")
    p.add_argument("--joint", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(handler=cmd_plotdata)
    return parser, sub.choices


def parse_args(argv=None):
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    sp = subparsers[args.command]
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            sp.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(cfg, dict):
            sp.error("config must be a JSON object")
        known = set(vars(args))
        unknown = sorted(set(k.replace("-", "_") for k in cfg) - known)
        if unknown:
            sp.error(f"unknown config keys: {unknown}")
        sp.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
        args = parser.parse_args(argv)
    if "input" in vars(args) and not args.input:
        sp.error("--input is required")
    if args.command == "mldfm" and not args.regions and not args.k:
        sp.error("give --regions FILE or --k for automatic clustering")
    return args


def main(argv=None):
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = Run(args)
        return args.handler(run)
    except ValidationError as exc:
        print(f"interval-ucm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HardError, NumericalError, OSError) as exc:
        print(f"interval-ucm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
