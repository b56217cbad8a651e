"""Command line entry point.

    lcsde run <config>                         run an experiment file
    lcsde geom "<expr>"                        evaluate a set expression
    lcsde proptest <suite> --cases N --seed S  run a property suite
    lcsde export <report> [--out DIR]          CSV tables from a solve report

Exit codes: 0 success, 1 property failure, 2 invalid input, 3 numerical
non-convergence. Outputs are assembled in memory and written only when the
whole run succeeds, so a failing run leaves no partial files.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time

import numpy as np

from . import __version__
from . import finance as fin
from . import geometry as geo
from . import integrals as itg
from . import presets, proptest, sde
from .config import ConfigError, dump_config, load_config
from .geomexpr import GeomParseError, evaluate, format_value
from .qp import QPNonConvergence

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2, 3
STABILITY_MAX_PATHS = 200
STABILITY_NODES = 16


class _NotConverged(Exception):
    """A requested tolerance was not reached (exit code 3, no outputs)."""


class _Failed(Exception):
    """A run finished but its own checks failed (exit code 1)."""

    def __init__(self, outputs, message):
        super().__init__(message)
        self.outputs = outputs


def apply_thread_cap():
    raw = os.environ.get("LCSDE_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"LCSDE_THREADS must be a positive integer, got {raw!r}") from None
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return n


def _csv(rows, header):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _r(x):
    return repr(float(x))


# ---------------------------------------------------------------------------
# export of solve reports


def report_tables(report: dict):
    """``rates.csv`` and ``moduli.csv`` text; a report without iterate pairs gives bounds only."""
    T, M = report["grid"]["T"], report["grid"]["M"]
    t = np.arange(M + 1) * (T / M)
    obs = report["iterate_distances"]
    out = {}
    if obs:
        rows = [(k, i, _r(t[i]), _r(obs[k][i]), _r(report["bounds"][k][i]))
                for k in range(len(obs)) for i in range(M + 1)]
        out["rates.csv"] = _csv(rows, ["iteration", "node", "t", "observed", "bound"])
        table = (report.get("stability") or {}).get("modulus_table", [])
        out["moduli.csv"] = _csv([(_r(r["s"]), _r(r["t"]), _r(r["modulus"])) for r in table],
                                 ["s", "t", "modulus"])
    else:
        b = sde.rate_bound(report["M"], report["xi_h2"], t, 0)
        out["bounds.csv"] = _csv([(0, i, _r(t[i]), _r(b[i])) for i in range(M + 1)],
                                 ["iteration", "node", "t", "bound"])
    return out


# ---------------------------------------------------------------------------
# run modes: each returns {file name: text}


def _mode_geom(cfg):
    results = []
    for expr in cfg["expressions"]:
        results.append({"expression": expr, "value": format_value(evaluate(expr))})
    return {"geom.json": json.dumps({"results": results}, indent=1, sort_keys=True)}


def _mode_integrate(cfg):
    pieces = [geo.from_literal(lit) for lit in cfg["field"]]
    grid = itg.TimeGrid(cfg["grid"]["T"], cfg["grid"]["M"])
    idx = (np.arange(grid.steps) * len(pieces)) // grid.steps
    field = [pieces[i] for i in idx]
    prefix = itg.riemann_prefix(field, grid.dt)
    path = itg.SetPath(grid, tuple(prefix))
    h2c = sde.h2_to_cone(prefix)
    summary = {"integral": geo.to_literal(prefix[-1]), "h2_to_cone": [float(v) for v in h2c],
               "cone_id": prefix[-1].cone.cone_id}
    return {"integral.csv": itg.set_paths_csv([path]),
            "integral.json": json.dumps(summary, indent=1, sort_keys=True)}


def _mode_solve(cfg):
    grid = itg.TimeGrid(cfg["grid"]["T"], cfg["grid"]["M"])
    cs = presets.get(cfg["preset"], grid.horizon)
    report = sde.picard_solve(cs.xi, cs.drift, cs.diffusion, grid, cfg["paths"], cfg["seed"],
                              cfg["iterations"], cfg["tol"], vertex_cap=cfg["vertex_cap"], config=cfg)
    if cfg["tol"] > 0 and not report.converged:
        last = float(report.iterate_distances[-1].max()) if report.iterate_distances.size else float("nan")
        raise _NotConverged(f"Picard iteration did not reach tol={cfg['tol']:g} in {report.iterations} "
                            f"iterates (last max-node mean h^2 {last:.3e})")
    if cfg["stability"]:
        st = sde.stability_report(report.final_paths, cs.xi,
                                  node_stride=max(1, grid.steps // STABILITY_NODES),
                                  max_paths=min(cfg["paths"], STABILITY_MAX_PATHS))
        report.stability = st
    d = report.to_dict()
    out = {"report.json": json.dumps(d, sort_keys=True, indent=1)}
    out.update(report_tables(d))
    if cfg["export_paths"]:
        out["paths.csv"] = itg.set_paths_csv(report.final_paths)
    violations = [r for r in sde.successive_differences(report) if r.violated]
    if violations:
        v = violations[0]
        raise _Failed(out, f"rate bound exceeded at k={v.k}, t={v.t:.3g}")
    return out


def _market(cfg):
    block = dict(presets.FINANCE_DEFAULT)
    block.pop("T", None)
    block.update({k: v for k, v in cfg.get("market", {}).items() if k != "strategy"})
    return fin.MarketParams.from_dict(block), cfg.get("market", {}).get("strategy")


def _mode_finance(cfg):
    params, strat = _market(cfg)
    grid = itg.TimeGrid(cfg["grid"]["T"], cfg["grid"]["M"])
    drift = fin.finance_drift(params, grid.horizon)
    diffusion = fin.finance_diffusion(params)
    tol_inc = fin.inclusion_tolerance(grid)
    tol_sel = fin.selector_tolerance(grid)
    inc_rows, sel_rows = [], []
    worst_inc = worst_sel = 0.0
    n_strat = 1 if strat else cfg["strategies"]
    for p in range(cfg["paths"]):
        path = itg.sample_brownian(grid, 1, cfg["seed"], p)
        prices = fin.simulate_price(params, path)
        cones = fin.cone_integral_prefix(fin.node_cones(params, prices))
        rng = itg.path_rng(cfg["seed"], p, 5)
        for s in range(n_strat):
            if strat:
                st = fin.StrategyRates.piecewise(grid.steps, strat["theta_L"], strat["theta_M"])
            else:
                st = fin.random_strategy(rng, grid.steps)
            pf = fin.simulate_portfolio(params, st, prices)
            h = fin.portfolio_unit(pf, prices)
            res = fin.inclusion_check(h, cones)
            sel = fin.sdi_selector_check(np.column_stack([pf.X, pf.Y]), drift, diffusion, path)
            pid = p * n_strat + s
            worst_inc, worst_sel = max(worst_inc, res.max()), max(worst_sel, sel.max())
            inc_rows += [(pid, i, _r(grid.t(i)), _r(res[i]), _r(tol_inc)) for i in range(grid.steps + 1)]
            sel_rows += [(pid, i, _r(grid.t(i)), _r(sel[i]), _r(tol_sel)) for i in range(grid.steps + 1)]
    header = ["path_id", "node", "t", "residual", "tolerance"]
    K = fin.constant_cone_K(params.lam, params.mu)
    summary = {
        "max_inclusion_residual": float(worst_inc),
        "inclusion_tolerance": tol_inc,
        "max_selector_residual": float(worst_sel),
        "selector_tolerance": tol_sel,
        "cone_K": K.generators.tolist(),
        "paths": cfg["paths"],
        "strategies_per_path": n_strat,
    }
    out = {"residuals.csv": _csv(inc_rows, header), "selector_residuals.csv": _csv(sel_rows, header),
           "finance.json": json.dumps(summary, indent=1, sort_keys=True)}
    if worst_inc > tol_inc or worst_sel > tol_sel:
        raise _Failed(out, "residuals exceed their tolerance")
    return out


def _mode_proptest(cfg):
    if cfg["suite"] not in proptest.SUITES:
        raise ConfigError(f"unknown suite {cfg['suite']!r}")
    res = proptest.run_suite(cfg["suite"], cfg["cases"], cfg["seed"])
    out = {"proptest.json": json.dumps(res, indent=1, sort_keys=True)}
    if res["failed"]:
        raise _Failed(out, f"{res['failed']} of {res['cases']} cases failed")
    return out


MODES = {"geom": _mode_geom, "integrate": _mode_integrate, "solve": _mode_solve,
         "finance": _mode_finance, "proptest": _mode_proptest}


def _write_outputs(outdir, cfg, outputs, started):
    os.makedirs(outdir, exist_ok=True)
    written = []
    try:
        digests = {}
        for name in sorted(outputs):
            data = outputs[name].encode("utf-8")
            path = os.path.join(outdir, name)
            with open(path, "wb") as fh:
                fh.write(data)
            written.append(path)
            digests[name] = hashlib.sha256(data).hexdigest()
        manifest = {"config": cfg, "version": __version__, "seed": cfg.get("seed"),
                    "wall_clock_seconds": time.time() - started, "outputs": digests}
        path = os.path.join(outdir, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
        written.append(path)
    except OSError:
        for p in written:
            if os.path.exists(p):
                os.remove(p)
        raise
    return digests


def run(config_path, outdir=None) -> int:
    started = time.time()
    try:
        apply_thread_cap()
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    outdir = outdir or cfg["output"]
    code = EXIT_OK
    try:
        outputs = MODES[cfg["mode"]](cfg)
    except _Failed as exc:
        print(f"failed: {exc}", file=sys.stderr)
        outputs, code = exc.outputs, EXIT_FAIL
    except (ConfigError, GeomParseError, geo.GeometryError, sde.AssumptionViolation, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (QPNonConvergence, _NotConverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    outputs["config.json"] = dump_config(cfg)
    digests = _write_outputs(outdir, cfg, outputs, started)
    for name, dg in sorted(digests.items()):
        print(f"{name} {dg}")
    return code


def geom(expr) -> int:
    try:
        print(format_value(evaluate(expr)))
    except GeomParseError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except geo.GeometryError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except QPNonConvergence as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def run_proptest(suite, cases, seed) -> int:
    if suite not in proptest.SUITES:
        print(f"unknown suite {suite!r}; available: {', '.join(sorted(proptest.SUITES))}", file=sys.stderr)
        return EXIT_INVALID
    res = proptest.run_suite(suite, cases, seed)
    status = "PASS" if not res["failed"] else "FAIL"
    print(f"{status} {suite}: {res['passed']}/{res['cases']} cases (seed {seed})")
    for f in res["failures"][:1]:
        print(f"case {f['case']}: {f['message']}")
        print("minimal counterexample: " + json.dumps(f["counterexample"], sort_keys=True))
    return EXIT_OK if not res["failed"] else EXIT_FAIL


def export(report_path, outdir=None) -> int:
    try:
        with open(report_path, encoding="utf-8") as fh:
            report = json.load(fh)
        tables = report_tables(report)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot read report: {exc}", file=sys.stderr)
        return EXIT_INVALID
    outdir = outdir or os.path.dirname(os.path.abspath(report_path))
    os.makedirs(outdir, exist_ok=True)
    for name in sorted(tables):
        data = tables[name].encode("utf-8")
        with open(os.path.join(outdir, name), "wb") as fh:
            fh.write(data)
        print(f"{name} {hashlib.sha256(data).hexdigest()}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="lcsde", description="Set-valued SDEs on cone-generated convex sets.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="output directory (overrides the config)")
    p = sub.add_parser("geom", help="evaluate a set expression")
    p.add_argument("expression")
    p = sub.add_parser("proptest", help="run a randomised property suite")
    p.add_argument("suite")
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p = sub.add_parser("export", help="CSV tables from a solve report")
    p.add_argument("report")
    p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run(args.config, args.out)
    if args.command == "geom":
        return geom(args.expression)
    if args.command == "proptest":
        return run_proptest(args.suite, args.cases, args.seed)
    return export(args.report, args.out)


if __name__ == "__main__":
    sys.exit(main())
