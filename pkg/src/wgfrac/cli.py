"""Command-line front end: ``wgfrac {ml,op,ibp,solve,el,presets}``.

Exit status: 0 on success, 2 when a solver does not converge (the JSON
report is still written), 1 on usage or validation errors.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import MODES, RunConfig, load, sample_names, sample_path
from .errors import NonConvergenceError, WgfracError
from .expr import evaluate, parse, variables
from .grid import Grid, GridFunction, format_float, write_atomic
from .ibp import adjointness_gap, ibp_residual
from .mittag_leffler import mittag_leffler2
from .ocp import ControlProblem, Fixed, Free, SolverConfig, solve
from .operators import apply_operator
from .variational import PRESETS, VariationalProblem, el_residual, solve_variational

__all__ = ["main", "run", "build_parser"]

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED = 0, 1, 2


class _Outputs:
    def __init__(self, csv_path, json_path):
        self.csv_path = Path(csv_path) if csv_path else None
        self.json_path = Path(json_path) if json_path else None

    def csv(self, text: str) -> None:
        if self.csv_path:
            write_atomic(self.csv_path, text)

    def report(self, doc: dict) -> None:
        text = json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
        if self.json_path:
            write_atomic(self.json_path, text)
        else:
            sys.stdout.write(text)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        return val if math.isfinite(val) else repr(val)
    return obj


def _csv(columns: dict) -> str:
    names = list(columns)
    rows = [",".join(names)]
    rows += [",".join(format_float(v) for v in r) for r in zip(*columns.values())]
    return "\n".join(rows) + "\n"


def _order_table(grids, metrics):
    """Successive differences on the common coarse nodes and their orders."""
    table = []
    for k, (grid, diff) in enumerate(zip(grids[1:], metrics)):
        row = {"n": grid.n, "difference": diff, "order": None}
        if k > 0 and metrics[k - 1] > 0 and diff > 0:
            row["order"] = math.log2(metrics[k - 1] / diff)
        table.append(row)
    return table


def _coarse(values, level):
    return np.asarray(values)[:: 2**level]


def _grid_function(cfg: RunConfig, key: str, grid: Grid) -> GridFunction:
    e = parse(cfg.str(key))
    extra = variables(e) - {"t"}
    if extra:
        raise WgfracError(f"{key} may only use t, found {sorted(extra)}")
    vals = evaluate(e, dict(t=grid.nodes))
    return GridFunction(grid, np.broadcast_to(vals, (grid.n,)))


def _resolved(params, w) -> dict:
    return {"operator": params.describe(), "weight": w.describe()}


# -- modes ----------------------------------------------------------------


def _mode_ml(cfg, out, refine, variational):
    beta, z = cfg.float("beta"), cfg.float("z")
    gamma = cfg.float("gamma", 1.0)
    value = mittag_leffler2(beta, gamma, z)
    if out.json_path:
        out.report({"result": {"value": value, "beta": beta, "gamma": gamma, "z": z}})
    sys.stdout.write(f"{value:.12g}\n")
    return EXIT_OK, None


def _mode_op(cfg, out, refine, variational):
    params, w = cfg.operator()
    side = cfg.str("op.side", "left", ("left", "right"))
    kind = cfg.str("op.kind", "derivative", ("derivative", "integral"))
    if cfg.has("op.input"):
        f = GridFunction.from_csv(cfg.path("op.input"), cfg.str("op.column", "") or None)
        grids = [f.grid]
        inputs = [f]
    else:
        grid = cfg.grid()
        grids = [grid.refined(k) for k in range(refine + 1)]
        inputs = [_grid_function(cfg, "op.f", g) for g in grids]
    outs = [apply_operator(params, w, f, side, kind) for f in inputs]
    res = outs[0]
    out.csv(_csv({"t": res.t, "value": res.values}))
    doc = {"result": {"n": res.grid.n, "sup": res.sup(), "side": side, "kind": kind},
           "resolved": _resolved(params, w)}
    if len(outs) > 1:
        diffs = [float(np.max(np.abs(_coarse(b.values, k + 1) - _coarse(a.values, k))))
                 for k, (a, b) in enumerate(zip(outs, outs[1:]))]
        doc["refinement"] = _order_table(grids, diffs)
    return EXIT_OK, doc


def _mode_ibp(cfg, out, refine, variational):
    params, w = cfg.operator()
    form = cfg.str("ibp.form", "eq8", ("eq8", "eq9"))
    base = cfg.grid()
    reports = []
    for k in range(refine + 1):
        g = base.refined(k)
        rep = ibp_residual(params, w, _grid_function(cfg, "ibp.f", g),
                           _grid_function(cfg, "ibp.g", g), form).to_dict()
        if cfg.bool("ibp.gap"):
            rep["adjointness_gap"] = adjointness_gap(params, w, g)
        reports.append(rep)
    doc = {"result": reports[0], "resolved": _resolved(params, w)}
    if refine:
        table = []
        for k, rep in enumerate(reports):
            row = {"n": rep["grid_n"], "rel_residual": rep["rel_residual"], "order": None}
            prev = reports[k - 1]["rel_residual"] if k else 0.0
            if k and prev > 0 and rep["rel_residual"] > 0:
                row["order"] = math.log2(prev / rep["rel_residual"])
            table.append(row)
        doc["refinement"] = table
    return EXIT_OK, doc


def _solver(cfg) -> SolverConfig:
    d = SolverConfig()
    return SolverConfig(
        max_sweeps=cfg.int("solver.max_sweeps", d.max_sweeps),
        tol_stationarity=cfg.float("solver.tol_stationarity", d.tol_stationarity),
        tol_state=cfg.float("solver.tol_state", d.tol_state),
        relaxation=cfg.float("solver.relaxation", d.relaxation),
        step0=cfg.float("solver.step0", d.step0),
        shooting_tol=cfg.float("solver.shooting_tol", d.shooting_tol),
        shooting_max_iters=cfg.int("solver.shooting_max_iters", d.shooting_max_iters))


def _build_problem(cfg, grid, variational):
    params, w = cfg.operator()
    solver = _solver(cfg)
    if variational:
        vp = VariationalProblem(cfg.str("problem.L"), params, w, grid,
                                cfg.float("problem.x_a"), cfg.float("problem.x_b"), solver)
        return vp, params, w
    mode = cfg.str("terminal.mode", "free", ("free", "fixed"))
    terminal = Fixed(cfg.float("terminal.x_b")) if mode == "fixed" else Free()
    cp = ControlProblem(cfg.str("problem.L"), cfg.str("problem.f"), params, w, grid,
                        cfg.float("problem.x_a"), terminal, solver)
    return cp, params, w


def _mode_solve(cfg, out, refine, variational):
    base = cfg.grid()
    results = []
    for k in range(refine + 1):
        problem, params, w = _build_problem(cfg, base.refined(k), variational)
        try:
            res = solve_variational(problem) if variational else solve(problem)
        except NonConvergenceError as exc:
            doc = {"result": {"converged": False, "error": str(exc), "history": exc.history,
                              "n": problem.grid.n},
                   "resolved": _resolved(params, w)}
            return EXIT_NONCONVERGED, doc
        if k == 0:
            first = (problem, res)
        results.append(res)
    problem, res = first
    out.csv(res.to_csv_text())
    summary = res.summary()
    summary["n"] = problem.grid.n
    summary["history"] = res.history
    if variational:
        r = el_residual(problem, res.x).values
        summary["el_residual_interior"] = float(np.max(np.abs(r[1:-1])))
    doc = {"result": summary, "resolved": _resolved(params, w)}
    if refine:
        grids = [base.refined(k) for k in range(refine + 1)]
        diffs = [float(np.max(np.abs(_coarse(b.x.values, k + 1) - _coarse(a.x.values, k))))
                 for k, (a, b) in enumerate(zip(results, results[1:]))]
        doc["refinement"] = _order_table(grids, diffs)
    status = EXIT_OK if all(r.converged for r in results) else EXIT_NONCONVERGED
    return status, doc


def _mode_el(cfg, out, refine, variational):
    params, w = cfg.operator()
    x = GridFunction.from_csv(cfg.path("el.input"), cfg.str("el.column", "x"))
    vp = VariationalProblem(cfg.str("problem.L"), params, w, x.grid,
                            cfg.float("problem.x_a", x.values[0]),
                            cfg.float("problem.x_b", x.values[-1]))
    r = el_residual(vp, x)
    out.csv(_csv({"t": r.t, "residual": r.values}))
    doc = {"result": {"n": x.grid.n, "sup_interior": float(np.max(np.abs(r.values[1:-1]))),
                      "sup": r.sup()},
           "resolved": _resolved(params, w)}
    return EXIT_OK, doc


def _mode_presets(cfg, out, refine, variational):
    table = [PRESETS[k].describe() for k in sorted(PRESETS)]
    return EXIT_OK, {"result": table}


_HANDLERS = {"ml": _mode_ml, "op": _mode_op, "ibp": _mode_ibp, "solve": _mode_solve,
             "el": _mode_el, "presets": _mode_presets}


def run(mode: str, config_path=None, overrides=(), out_csv=None, out_json=None,
        refine: int = 0, variational: bool = False) -> int:
    """Execute one mode; returns the process exit status."""
    out = _Outputs(out_csv, out_json)
    try:
        if mode not in MODES:
            raise WgfracError(f"unknown mode {mode!r}")
        if refine < 0:
            raise WgfracError("--refine must be non-negative")
        cfg = load(config_path, overrides) if config_path else RunConfig().override(overrides)
        if cfg.has("mode") and cfg.str("mode") != mode:
            raise WgfracError(f"config is for mode {cfg.str('mode')!r}, not {mode!r}")
        kind = cfg.str("problem.kind", "control", ("control", "variational"))
        variational = variational or kind == "variational"
        status, doc = _HANDLERS[mode](cfg, out, refine, variational)
    except WgfracError as exc:
        sys.stderr.write(f"wgfrac {mode}: error: {exc}\n")
        return EXIT_USAGE
    if doc is not None:
        doc.update({"version": __version__, "mode": mode, "config": cfg.as_dict()})
        if variational:
            doc["variational"] = True
        out.report(doc)
    if status == EXIT_NONCONVERGED:
        sys.stderr.write(f"wgfrac {mode}: solver did not converge\n")
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wgfrac", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", help="key = value configuration file")
        src.add_argument("--sample", choices=sample_names(), help="bundled sample configuration")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration key (repeatable)")
        p.add_argument("--out-csv")
        p.add_argument("--out-json")
        p.add_argument("--refine", type=int, default=0, metavar="K",
                       help="rerun with the grid refined K times and report empirical orders")
        if mode == "solve":
            p.add_argument("--variational", action="store_true",
                           help="treat problem.L as L(t, x, v) with v the left derivative of x "
                                "(same as problem.kind = variational)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = args.config or (str(sample_path(args.sample)) if args.sample else None)
    return run(args.mode, config, args.set, args.out_csv, args.out_json, args.refine,
               getattr(args, "variational", False))


if __name__ == "__main__":
    sys.exit(main())
