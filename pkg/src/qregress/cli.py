"""Command-line front end: ``qregress <subcommand> --config <path> [options]``.

Exit codes: 0 all thresholds met, 1 a threshold failed, 2 config could not be
parsed or resolved, 3 a precondition of the requested computation failed.
Failures print one ``key=value`` line to stderr.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import correlators as corr
from . import nonmarkov as nm
from . import oracle
from .config import ConfigError, Scenario, load_file, parse_grid, resolve
from .markov import evolve_one_point
from .qrt import qrt_n_point, qrt_otoc

SUBCOMMANDS = ("evolve", "corr", "qrt2", "qrt3", "qrt4", "qrtn", "otoc", "nonmarkov", "oracle-compare", "sweep")
FLOAT_FMT = "{:.16e}"


class PreconditionError(RuntimeError):
    pass


class Table:
    def __init__(self, columns):
        self.columns = list(columns)
        self.rows = []

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError("row length does not match header")
        self.rows.append(values)

    def column(self, name):
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FMT.format(float(v))


def _complex_cols(prefix):
    return [f"{prefix}_re", f"{prefix}_im"]


def _rows(sc: Scenario):
    for t in sc.time_rows():
        yield t, sc.times_at(t) if t is not None else list(sc.times)


def _spec(sc: Scenario):
    return corr.spin_boson_coupling(sc.model)


def run_evolve(sc: Scenario):
    tab = Table(["t"] + [f"o{i}{j}_{p}" for i in range(2) for j in range(2) for p in ("re", "im")]
                + _complex_cols("expect"))
    grid = sc.grid or [x for x in sc.times if x != "t"][:1] or [0.0]
    for t in grid:
        o = evolve_one_point(sc.model, sc.ops[0], t)
        ent = []
        for v in o.reshape(-1):
            ent += [v.real, v.imag]
        e = corr.correlator(o, sc.rho)
        tab.add(t, *ent, e.real, e.imag)
    return tab, {}


def run_corr(sc: Scenario):
    spec = _spec(sc)
    tab = Table(["t"] + _complex_cols("corr"))
    for t, times in _rows(sc):
        red = corr.reduced_n_point(spec, sc.ops, times)
        c = corr.correlator(red, sc.rho)
        tab.add(t if t is not None else times[-1], c.real, c.imag)
    return tab, {}


def _require(cond, msg):
    if not cond:
        raise PreconditionError(msg)


def run_qrt(sc: Scenario, n_expected: int | None):
    _require(sc.closed_set is not None, "qrt needs scenario.closed_set")
    n = len(sc.ops)
    if n_expected is not None:
        _require(n == n_expected, f"expected {n_expected} operators, got {n}")
    k = sc.diff_index if sc.diff_index is not None else n - 1
    _require(0 <= k < n, "diff_index out of range")
    spec = _spec(sc)
    tab = Table([f"t{k + 1}", "residual", "lhs_norm", "rhs_norm"])
    for t, times in _rows(sc):
        rep = qrt_n_point(spec, sc.closed_set, sc.ops, sc.mu, times, k, sc.h)
        d = rep.to_dict()
        tab.add(times[k], rep.residual, d["lhs_norm"], d["rhs_norm"])
    return tab, {"threshold_column": "residual", "threshold_key": "residual"}


def run_otoc(sc: Scenario):
    _require(sc.closed_set is not None, "otoc needs scenario.closed_set")
    _require(len(sc.ops) == 2, "otoc takes ops = [O1, O3]; A_mu and A_nu come from the closed sets")
    _require(len(sc.times) == 2, "otoc takes times = [t1, t2]")
    spec = _spec(sc)
    tab = Table(["t2", "residual", "lhs_norm", "rhs_norm", "f_norm"])
    for t, times in _rows(sc):
        t1, t2 = times
        rep = qrt_otoc(spec, sc.closed_set, sc.closed_set_nu, sc.ops[0], sc.ops[1], sc.mu, sc.nu, t1, t2, sc.h)
        d = rep.to_dict()
        tab.add(t2, rep.residual, d["lhs_norm"], d["rhs_norm"], rep.extra["f_norm"])
    return tab, {"threshold_column": "residual", "threshold_key": "residual"}


def run_nonmarkov(sc: Scenario):
    _require(sc.bath is not None, "nonmarkov needs a bath")
    _require(sc.closed_set is not None, "nonmarkov needs scenario.closed_set (operators; M is fitted)")
    _require(len(sc.ops) == 1 and len(sc.times) == 2, "nonmarkov takes ops = [O] and times = [t1, t2]")
    cset = nm.TimeDependentClosedSet(tuple(sc.closed_set.ops))
    tab = Table(["t1", "residual", "residual_without_corrections", "correction_norm", "main_norm", "fit_residual"])
    for t, times in _rows(sc):
        t1, t2 = times
        with_c = nm.nonmarkov_qrt_report(sc.bath, sc.model, cset, sc.ops[0], sc.mu, t1, t2, sc.h, sc.dt)
        without = nm.nonmarkov_qrt_report(sc.bath, sc.model, cset, sc.ops[0], sc.mu, t1, t2, sc.h, sc.dt,
                                          include_corrections=False)
        tab.add(t1, with_c.residual, without.residual, with_c.extra["correction_norm"],
                with_c.extra["main_norm"], with_c.extra["fit_residual"])
    return tab, {"threshold_column": "residual", "threshold_key": "residual"}


def run_oracle_compare(sc: Scenario):
    _require(sc.bath is not None, "oracle-compare needs a bath")
    try:
        tb = oracle.TruncatedBath.from_correlation(sc.bath, sc.fock_cutoff)
    except ValueError as exc:
        raise PreconditionError(str(exc)) from exc
    exact = oracle.ExactSystem(sc.model, tb)
    spec = _spec(sc)
    tab = Table(["t"] + _complex_cols("perturbative") + _complex_cols("exact") + ["rel_gap"])
    for t, times in _rows(sc):
        p = corr.correlator(corr.reduced_n_point(spec, sc.ops, times), sc.rho)
        e = complex(np.trace(exact.reduced_operator(sc.ops, times) @ sc.rho))
        gap = abs(p - e) / abs(e) if e != 0 else abs(p - e)
        tab.add(t if t is not None else times[-1], p.real, p.imag, e.real, e.imag, gap)
    return tab, {"threshold_column": "rel_gap", "threshold_key": "rel_gap"}


RUNNERS = {
    "evolve": run_evolve,
    "corr": run_corr,
    "qrt2": lambda sc: run_qrt(sc, 2),
    "qrt3": lambda sc: run_qrt(sc, 3),
    "qrt4": lambda sc: run_qrt(sc, 4),
    "qrtn": lambda sc: run_qrt(sc, None),
    "otoc": run_otoc,
    "nonmarkov": run_nonmarkov,
    "oracle-compare": run_oracle_compare,
}


def _sweep_point(args):
    target, raw, h_override = args
    sc = resolve(raw, h_override)
    tab, meta = RUNNERS[target](sc)
    return tab, meta, sc.to_dict()


def _sweep_points(raw: dict):
    sw = raw.get("sweep")
    if not isinstance(sw, dict):
        raise ConfigError("sweep subcommand needs a [sweep] table")
    target = sw.get("target", "corr")
    if target not in RUNNERS:
        raise ConfigError(f"sweep.target: unknown subcommand {target!r}")
    if "points" in sw:
        points = sw["points"]
        if not isinstance(points, list) or not points:
            raise ConfigError("sweep.points must be a non-empty list")
        try:
            return target, sw.get("parameter", "value"), [(float(p["value"]), p["config"]) for p in points]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("sweep.points entries need value and config") from exc
    param = sw.get("parameter")
    if param not in ("gamma", "omega0", "delta"):
        raise ConfigError("sweep.parameter must be gamma, omega0 or delta")
    values = sw.get("values")
    if values is None:
        values = parse_grid({k: sw[k] for k in ("start", "stop", "count") if k in sw})
    out = []
    for v in values:
        point = copy.deepcopy({k: val for k, val in raw.items() if k != "sweep"})
        point.setdefault("model", {})[param] = float(v)
        out.append((float(v), point))
    return target, param, out


def run_sweep(raw: dict, h_override, jobs: int):
    target, param, points = _sweep_points(raw)
    tasks = [(target, cfg, h_override) for _, cfg in points]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    first_tab = results[0][0]
    tab = Table([param] + first_tab.columns)
    for (value, _), (sub, _, _) in zip(points, results):
        for row in sub.rows:
            tab.add(value, *row)
    meta = dict(results[0][1])
    resolved = {"sweep": {"target": target, "parameter": param,
                          "points": [{"value": v, "config": r[2]} for (v, _), r in zip(points, results)]}}
    return tab, meta, resolved


def _write(out_dir: Path, name: str, text: str):
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / name, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _fail(code: int, kind: str, detail: str) -> int:
    detail = " ".join(str(detail).split())
    print(f"qregress: status={kind} exit={code} detail={json.dumps(detail)}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qregress", description="Multi-time correlators and regression checks")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="TOML or JSON scenario file")
    p.add_argument("--out", default="qregress-out", help="output directory (QREGRESS_OUT overrides)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for sweep")
    p.add_argument("--h", type=float, default=None, help="finite-difference step")
    p.add_argument("--seed", type=int, default=None, help="reserved; echoed only")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    out_dir = Path(os.environ.get("QREGRESS_OUT") or args.out)
    if args.jobs < 1:
        return _fail(2, "parse-error", "--jobs must be at least 1")
    if args.h is not None and not args.h > 0:
        return _fail(2, "parse-error", "--h must be positive")
    try:
        raw = load_file(args.config)
        if args.subcommand == "sweep":
            tab, meta, resolved = run_sweep(raw, args.h, args.jobs)
            tolerances = resolved["sweep"]["points"][0]["config"]["tolerances"]
        else:
            sc = resolve(raw, args.h)
            resolved = sc.to_dict()
            tolerances = sc.tolerances
            tab, meta = RUNNERS[args.subcommand](sc)
    except ConfigError as exc:
        return _fail(2, "parse-error", exc)
    except (PreconditionError, ValueError, IndexError, nm.QuadratureError) as exc:
        return _fail(3, "precondition", exc)

    if args.seed is not None:
        resolved["seed"] = args.seed
    key = meta.get("threshold_key")
    column = meta.get("threshold_column")
    report = {"subcommand": args.subcommand, "rows": len(tab.rows), "columns": tab.columns}
    passed = True
    if column is not None:
        worst = max(tab.column(column)) if tab.rows else 0.0
        report["max_" + column] = float(worst)
        if key in tolerances:
            report["threshold"] = tolerances[key]
            passed = bool(worst <= tolerances[key])
    report["pass"] = passed
    name = args.subcommand
    _write(out_dir, f"{name}.csv", tab.to_csv())
    _write(out_dir, f"{name}.json", _dump_json(report))
    _write(out_dir, "resolved-config.json", _dump_json(resolved))
    if not passed:
        return _fail(1, "threshold-failed", f"max {column} {report['max_' + column]:.6e} > {tolerances[key]:.6e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
