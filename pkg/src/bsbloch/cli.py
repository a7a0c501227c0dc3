"""Scenario runner.

Subcommands:

* ``run``    -- execute the solver pipeline selected in the config file and
  write a CSV report plus plain-text and JSON summaries.
* ``sweep``  -- repeat a scenario over a declared parameter range; one CSV
  row group per value, buffered and written in input order.
* ``verify`` -- run the built-in acceptance suite on the bundled toys and
  the seeded random ensemble.

Exit codes: 0 success, 2 configuration/validation error, 3 solver failure.
"""

import argparse
import concurrent.futures
import csv
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import allorder, expansion, verify
from .config import ScenarioConfig
from .errors import BsBlochError, ConfigError

CSV_VERSION = "bsbloch-csv v1"

_RUN_COLUMNS = ("branch", "energy", "iterations", "residual",
                "oracle_energy", "oracle_diff")


@dataclass
class RunReport:
    """Everything one pipeline execution produced."""

    scenario_id: str
    solver: str
    seed: int
    config_hash: str
    columns: tuple
    rows: list
    wall_time_s: float = 0.0
    notes: list = field(default_factory=list)


def _fmt(value):
    if value is None or value == "":
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value) + 0.0)  # + 0.0 folds -0.0 into 0.0
    return str(value)


def _check_finite(row):
    for key, value in row.items():
        if isinstance(value, (float, np.floating)) and not np.isfinite(value):
            raise BsBlochError(f"report field {key} is not finite: {value}")


def _ledger_columns(d):
    heff_cols = tuple(f"heff_{i}_{j}" for i in range(d) for j in range(d))
    return ("order", "omega_norm", "msc_omega_norm", "msc_heff_norm",
            "msc_share", "msc_deviation") + heff_cols


def _run_expand(spectrum, pspace, potential, settings):
    ledger = expansion.expand(spectrum, pspace, potential,
                              settings.expansion_order, settings.msc_mode)
    reference = expansion.expand(spectrum, pspace, potential,
                                 settings.expansion_order, "derivative")
    d = pspace.dim
    rows = []
    for n in sorted(ledger.orders):
        entry = ledger.orders[n]
        ref = reference.orders[n]
        heff_norm = float(np.linalg.norm(entry.heff))
        msc_heff_norm = float(np.linalg.norm(entry.msc_heff))
        deviation = max(
            float(np.max(np.abs(entry.msc_omega - ref.msc_omega))),
            float(np.max(np.abs(entry.msc_heff - ref.msc_heff))),
        )
        row = {
            "order": n,
            "omega_norm": float(np.linalg.norm(entry.omega)),
            "msc_omega_norm": float(np.linalg.norm(entry.msc_omega)),
            "msc_heff_norm": msc_heff_norm,
            "msc_share": msc_heff_norm / heff_norm if heff_norm > 0 else 0.0,
            "msc_deviation": deviation,
        }
        flat = np.real(entry.heff)
        for i in range(d):
            for j in range(d):
                row[f"heff_{i}_{j}"] = float(flat[i, j])
        _check_finite(row)
        rows.append(row)
    return _ledger_columns(d), rows


def _oracle_fields(roots, energy):
    if roots is None:
        return {"oracle_energy": "", "oracle_diff": ""}
    best = min(roots, key=lambda r: abs(r.energy - energy), default=None)
    if best is None:
        return {"oracle_energy": "", "oracle_diff": ""}
    return {"oracle_energy": best.energy, "oracle_diff": abs(best.energy - energy)}


def _scan_window(settings):
    return settings.scan_range if settings.scan_range is not None else settings.bracket


def _run_bw(spectrum, pspace, potential, settings):
    report = allorder.solve_bs_state(
        spectrum, pspace, potential,
        branch=settings.branch, bracket=settings.bracket,
        tol=settings.tolerance, max_iter=settings.max_iterations)
    roots = None
    if settings.oracle:
        roots = allorder.oracle_scan(spectrum, pspace, potential,
                                     _scan_window(settings), settings.scan_points)
    row = {
        "branch": report.branch,
        "energy": report.energy,
        "iterations": report.iterations,
        "residual": report.residual,
    }
    row.update(_oracle_fields(roots, report.energy))
    _check_finite(row)
    return _RUN_COLUMNS, [row]


def _run_bsbloch(spectrum, pspace, potential, settings):
    opts = allorder.SolveOptions(
        tol=min(settings.tolerance, 1e-13),
        max_sweeps=settings.max_iterations,
        mixing=settings.mixing,
        gap_floor=settings.gap_floor,
    )
    state = allorder.bs_bloch_solve(spectrum, pspace, potential, opts)
    roots = None
    if settings.oracle:
        roots = allorder.oracle_scan(spectrum, pspace, potential,
                                     _scan_window(settings), settings.scan_points)
    rows = []
    order = np.argsort(np.real(state.energies))
    for rank, alpha in enumerate(order):
        energy = float(np.real(state.energies[alpha]))
        row = {
            "branch": rank,
            "energy": energy,
            "iterations": state.iterations,
            "residual": float(state.bsa_residuals[alpha]),
        }
        row.update(_oracle_fields(roots, energy))
        _check_finite(row)
        rows.append(row)
    return _RUN_COLUMNS, rows


_PIPELINES = {"expand": _run_expand, "bw": _run_bw, "bsbloch": _run_bsbloch}


def run_scenario(cfg, seed=None):
    """Execute one scenario; returns a :class:`RunReport`."""
    if cfg.solver not in _PIPELINES:
        raise ConfigError(f"scenario.solver: {cfg.solver!r} is not runnable here")
    t0 = time.perf_counter()
    spectrum, pspace, potential = cfg.build()
    columns, rows = _PIPELINES[cfg.solver](spectrum, pspace, potential, cfg.settings)
    return RunReport(
        scenario_id=cfg.scenario_id,
        solver=cfg.solver,
        seed=cfg.seed if seed is None else seed,
        config_hash=cfg.config_hash,
        columns=tuple(columns),
        rows=rows,
        wall_time_s=time.perf_counter() - t0,
    )


def write_report(report, out_dir):
    """CSV + plain-text + JSON artifacts for one run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = f"{report.scenario_id}_{report.solver}"
    csv_path = out / f"{base}.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write(f"# {CSV_VERSION} kind=run\n")
        fh.write(f"# scenario={report.scenario_id} solver={report.solver} "
                 f"seed={report.seed} config_sha256={report.config_hash}\n")
        writer = csv.DictWriter(fh, fieldnames=list(report.columns))
        writer.writeheader()
        for row in report.rows:
            writer.writerow({k: _fmt(row.get(k, "")) for k in report.columns})

    txt_path = out / f"{base}_summary.txt"
    with open(txt_path, "w") as fh:
        fh.write(f"scenario: {report.scenario_id}\n")
        fh.write(f"solver: {report.solver}\n")
        fh.write(f"seed: {report.seed}\n")
        fh.write(f"config_sha256: {report.config_hash}\n")
        fh.write(f"wall_time_s: {report.wall_time_s:.6f}\n")
        for row in report.rows:
            parts = [f"{k}={_fmt(row[k])}" for k in report.columns if k in row]
            fh.write("  " + " ".join(parts) + "\n")
        for note in report.notes:
            fh.write(f"note: {note}\n")

    json_path = out / f"{base}_summary.json"
    payload = {
        "scenario": report.scenario_id,
        "solver": report.solver,
        "seed": report.seed,
        "config_sha256": report.config_hash,
        "wall_time_s": report.wall_time_s,
        "columns": list(report.columns),
        "rows": [{k: (None if row.get(k, "") == "" else row.get(k))
                  for k in report.columns} for row in report.rows],
    }
    with open(json_path, "w") as fh:
        json.dump(payload, fh, indent=2, default=float)
        fh.write("\n")
    return csv_path


def _sweep_row(cfg, parameter, value, index):
    derived = cfg.swept(parameter, value, index)
    try:
        report = run_scenario(derived)
        return [(dict(row), "") for row in report.rows], report.columns
    except BsBlochError as exc:
        return [({}, f"error:{type(exc).__name__}")], None


def run_sweep(cfg, parameter=None, values=None, jobs=1, out_dir=None):
    """Execute the sweep; rows may run in parallel but are written in
    input order.  Failed rows are marked and the sweep continues."""
    parameter = parameter if parameter is not None else cfg.sweep_parameter
    values = values if values is not None else cfg.sweep_values
    if parameter is None or values is None:
        raise ConfigError("sweep: parameter and values must be given "
                          "(flags or [sweep] table)")
    solver = cfg.solver if cfg.solver != "sweep" else "bw"
    columns = (_ledger_columns(len(cfg.model_indices)) if solver == "expand"
               else _RUN_COLUMNS)
    prefix = ("row", "parameter", "value", "status")

    results = [None] * len(values)
    if jobs > 1 and len(values) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {
                pool.submit(_sweep_row, cfg, parameter, v, i): i
                for i, v in enumerate(values)
            }
            for future in concurrent.futures.as_completed(futures):
                results[futures[future]] = future.result()
    else:
        for i, v in enumerate(values):
            results[i] = _sweep_row(cfg, parameter, v, i)

    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{cfg.scenario_id}_sweep_{parameter}.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write(f"# {CSV_VERSION} kind=sweep\n")
        fh.write(f"# scenario={cfg.scenario_id} solver={solver} parameter={parameter} "
                 f"seed={cfg.seed} config_sha256={cfg.config_hash}\n")
        writer = csv.DictWriter(fh, fieldnames=list(prefix + columns))
        writer.writeheader()
        for i, (value, result) in enumerate(zip(values, results)):
            rows, _ = result
            for row, status in rows:
                record = {"row": i, "parameter": parameter,
                          "value": _fmt(value), "status": status or "ok"}
                record.update({k: _fmt(row.get(k, "")) for k in columns})
                writer.writerow(record)
    return csv_path


def _cmd_run(args):
    cfg = ScenarioConfig.from_file(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out_dir = args.out if args.out is not None else cfg.output_dir
    if cfg.solver == "verify":
        return _cmd_verify_impl(out_dir, cfg.seed, args.count, args.jobs)
    if cfg.solver == "sweep":
        path = run_sweep(cfg, jobs=args.jobs, out_dir=out_dir)
        print(f"sweep written to {path}")
        return 0
    report = run_scenario(cfg)
    path = write_report(report, out_dir)
    for row in report.rows:
        parts = [f"{k}={_fmt(row[k])}" for k in report.columns if k in row]
        print(" ".join(parts))
    print(f"report written to {path}")
    return 0


def _cmd_sweep(args):
    cfg = ScenarioConfig.from_file(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    values = None
    if args.values is not None:
        values = [float(v) for v in args.values.split(",") if v != ""]
    path = run_sweep(cfg, parameter=args.parameter, values=values,
                     jobs=args.jobs, out_dir=args.out)
    print(f"sweep written to {path}")
    return 0


def _cmd_verify_impl(out_dir, seed, count, jobs):
    del jobs  # the acceptance checks are sequential by design
    results = verify.run_all(base_seed=seed, count=count)
    for result in results:
        print(result.line())
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "verify_summary.txt", "w") as fh:
            for result in results:
                fh.write(result.line() + "\n")
    return 0 if all(r.passed for r in results) else 3


def _cmd_verify(args):
    seed = args.seed if args.seed is not None else 20240
    return _cmd_verify_impl(args.out, seed, args.count, args.jobs)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bsbloch",
        description="Solvers for energy-dependent effective interactions on "
                    "quasi-degenerate model spaces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="scenario TOML file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override base seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel sweep rows")

    p_run = sub.add_parser("run", help="execute one scenario")
    common(p_run)
    p_run.add_argument("--count", type=int, default=50,
                       help="ensemble size when solver=verify")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="repeat a scenario over parameter values")
    common(p_sweep)
    p_sweep.add_argument("--parameter", default=None,
                         help="sweepable name (overrides [sweep] table)")
    p_sweep.add_argument("--values", default=None,
                         help="comma-separated values (overrides [sweep] table)")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_verify = sub.add_parser("verify", help="run the built-in acceptance suite")
    common(p_verify, needs_config=False)
    p_verify.add_argument("--count", type=int, default=50,
                          help="random-ensemble size")
    p_verify.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except BsBlochError as exc:
        print(f"solver error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
