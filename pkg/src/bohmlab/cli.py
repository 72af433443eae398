"""Command-line front end.

    bohmlab eigen        --config run.toml --out DIR
    bohmlab evolve       ...
    bohmlab trajectories ... [--method ode|quantile|both] [--seed N]
    bohmlab protect      ... [--emit-plot]
    bohmlab lemma-check  ...
    bohmlab sweep        ... [--jobs N]

Data goes to files under the output directory, diagnostics to stderr. Exit
status is 0 on success, 2 for configuration errors and 1 for anything else.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as config_mod
from .bohm import dual_method_tolerance, is_non_crossing
from .config import RunConfig
from .errors import BohmLabError, ConfigError
from .output import emit_plot_script, write_csv, write_json, write_lines
from .protect import (
    Indicator,
    base_potential,
    build_schedule,
    constants,
    ensemble_average,
    ensemble_spec,
    methods_for,
    run_protective,
    run_tracked,
)
from .spectral import eigenstates

log = logging.getLogger("bohmlab")

OUT_ENV = "BOHMLAB_OUT"
DENSITY_POINTS = 400


def _strided(n, stride):
    idx = list(range(0, n, stride))
    if idx[-1] != n - 1:
        idx.append(n - 1)
    return idx


def _write_density(path, trace):
    grid = trace.grid
    xs = range(0, grid.n, max(1, math.ceil(grid.n / DENSITY_POINTS)))
    x = grid.x

    def rows():
        for k in range(len(trace)):
            rho = trace.fields(k).rho
            t = trace.times[k]
            for i in xs:
                yield t, x[i], rho[i]

    write_csv(path, ["t", "x", "rho"], rows())


def _write_frames(path, trace, interval):
    ind = Indicator(*interval)
    rows = (
        (trace.times[k], trace.norms[k], trace.fidelities[k], ensemble_average(trace.fields(k), ind))
        for k in range(len(trace))
    )
    write_csv(path, ["t", "norm", "fidelity", "interval_prob"], rows)


def _write_trajectories(path, times, p0, positions: dict, stride):
    idx = _strided(len(times), stride)

    def rows():
        for i, p in enumerate(p0):
            for m, pos in positions.items():
                for k in idx:
                    yield i, p, m, times[k], pos[k, i]

    write_csv(path, ["run_id", "p0", "method", "t", "x"], rows())


def cmd_eigen(cfg: RunConfig, out: Path):
    sched = build_schedule(cfg)
    res = eigenstates(base_potential(sched.grid, cfg), cfg.eigen.k, constants(cfg))
    write_lines(out / "eigenvalues.txt", res.energies)
    cols = [s.amp.real for s in res.states]
    write_csv(out / "eigenstates.csv", ["x"] + [f"state_{i}" for i in range(len(cols))],
              zip(sched.grid.x, *cols))
    write_json(out / "summary.json", {
        "energies": res.energies,
        "gap": res.gap if len(res.energies) > 1 else None,
        "config": config_mod.to_dict(cfg),
    })


def cmd_evolve(cfg: RunConfig, out: Path):
    trace, recorder = run_tracked(cfg, methods=("quantile",), quantiles=[0.5])
    _write_frames(out / "frames.csv", trace, build_schedule(cfg).interval)
    _write_density(out / "density.csv", trace)
    fin = np.isfinite(trace.fidelities)
    write_json(out / "summary.json", {
        "n_steps": len(recorder.times) - 1,
        "final_fidelity": trace.fidelities[-1],
        "final_infidelity": trace.infidelities[-1],
        "min_fidelity": trace.fidelities[fin].min() if fin.any() else None,
        "max_norm_drift": trace.max_norm_drift(),
        "config": config_mod.to_dict(cfg),
    })


def cmd_trajectories(cfg: RunConfig, out: Path):
    methods = methods_for(cfg.numerics.method)
    trace, recorder = run_tracked(cfg, methods=methods)
    tracker = recorder.tracker
    times = np.array(tracker.times)
    positions = {m: tracker.positions(m) for m in methods}
    _write_trajectories(out / "trajectories.csv", times, tracker.p0, positions, cfg.output.traj_stride)
    _write_frames(out / "frames.csv", trace, build_schedule(cfg).interval)
    _write_density(out / "density.csv", trace)
    summary = {
        "methods": list(methods),
        "n_trajectories": len(tracker.p0),
        "non_crossing": {m: is_non_crossing(positions[m]) for m in methods},
        "max_position_drift": {m: float(np.max(np.abs(positions[m] - positions[m][0]))) for m in methods},
        "config": config_mod.to_dict(cfg),
    }
    if "ode" in methods:
        summary["max_quantile_drift"] = tracker.max_quantile_drift
    if len(methods) == 2:
        summary["max_sup_difference"] = float(np.max(np.abs(positions["ode"] - positions["quantile"])))
    write_json(out / "summary.json", summary)


def write_protect_outputs(cfg: RunConfig, out: Path, report) -> dict:
    summary = report.summary()
    write_json(out / "summary.json", summary)
    ref = report.reference_method
    first = report.trajectories[ref][0]
    positions = {m: np.column_stack([tr.positions for tr in report.trajectories[m]]) for m in report.methods}
    p0 = [tr.p0 for tr in report.trajectories[ref]]
    _write_trajectories(out / "trajectories.csv", first.times, p0, positions, cfg.output.traj_stride)
    _write_frames(out / "frames.csv", report.trace, report.interval)
    _write_density(out / "density.csv", report.trace)

    sup = report.sup_differences()
    qd = report.quantile_drift

    def per_row(i):
        tr = {m: report.trajectories[m][i] for m in report.methods}
        ode, qua = tr.get("ode"), tr.get("quantile")
        cr = report.crossings[ref][i]
        return (
            i, p0[i], tr[ref].x0,
            ode.positions[-1] if ode else None, qua.positions[-1] if qua else None,
            ode.max_drift() if ode else None, qua.max_drift() if qua else None,
            cr.entered, cr.first_entry, report.occupancy[ref][i],
            sup[i] if sup is not None else None,
            qd[i] if qd is not None else None,
        )

    write_csv(out / "per_trajectory.csv",
              ["run_id", "p0", "x0", "x_final_ode", "x_final_quantile", "max_drift_ode", "max_drift_quantile",
               "entered", "first_entry", "occupancy", "sup_difference", "max_quantile_drift"],
              (per_row(i) for i in range(len(p0))))
    return summary


def cmd_protect(cfg: RunConfig, out: Path):
    write_protect_outputs(cfg, out, run_protective(cfg.protective()))


def lemma_config(cfg: RunConfig):
    lm = cfg.lemma
    return cfg.protective().replace(
        ramp={"shape": lm.shape, "total_time": lm.total_time},
        bump={"strength": lm.strength},
        ensemble={"n": lm.n_quantiles, "sampling": "equispaced"},
        numerics={"method": "both", "fidelity": False},
    )


def refined_config(pcfg, factor=2):
    """Spacing, time step and RK4 substep size all divided by ``factor``."""
    g, nm = pcfg.grid, pcfg.numerics
    return pcfg.replace(
        grid={"n": (g.n - 1) * factor + 1},
        numerics={"dt": nm.dt / factor, "store_stride": nm.store_stride * factor,
                  "max_dt_ratio": nm.max_dt_ratio * factor},
    )


def dual_method_errors(pcfg):
    """Per-trajectory sup |x_ode - x_quantile| and max quantile drift."""
    _, rec = run_tracked(pcfg, quantiles=ensemble_spec(pcfg).quantiles, methods=("ode", "quantile"), fidelity=False)
    tr = rec.tracker
    sup = np.max(np.abs(tr.positions("ode") - tr.positions("quantile")), axis=0)
    return tr.p0, sup, tr.quantile_drift.copy(), tr


def cmd_lemma_check(cfg: RunConfig, out: Path):
    pcfg = lemma_config(cfg)
    p0, sup, drift, tracker = dual_method_errors(pcfg)
    tol = dual_method_tolerance(build_schedule(pcfg).grid)
    cols = [p0, sup, drift]
    header = ["run_id", "p0", "sup_difference", "max_quantile_drift"]
    summary = {
        "tolerance": tol,
        "max_sup_difference": float(sup.max()),
        "all_below_tolerance": bool(np.all(sup < tol)),
        "max_quantile_drift": float(drift.max()),
        "non_crossing": is_non_crossing(tracker.positions("ode")),
    }
    if cfg.lemma.refine:
        _, sup_r, drift_r, _ = dual_method_errors(refined_config(pcfg))
        cols += [sup_r, drift_r]
        header += ["sup_difference_refined", "max_quantile_drift_refined"]
        summary.update({
            "refined_max_sup_difference": float(sup_r.max()),
            "refinement_ratio": float(sup.max() / sup_r.max()) if sup_r.max() > 0 else None,
            "refined_strictly_smaller": bool(np.all(sup_r < sup)),
        })
    summary["config"] = config_mod.to_dict(pcfg)
    write_csv(out / "lemma.csv", header, ([i, *row] for i, row in enumerate(zip(*cols))))
    write_json(out / "summary.json", summary)


def _sweep_one(job):
    run_id, doc, out_dir = job
    cfg = config_mod.from_dict(doc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = write_protect_outputs(cfg, out, run_protective(cfg.protective()))
    if cfg.output.emit_plot:
        emit_plot_script(out)
    return run_id, summary


def cmd_sweep(cfg: RunConfig, out: Path, jobs: int = 1):
    jobs_list = []
    for s in cfg.sweep.strengths:
        for T in cfg.sweep.total_times:
            run = cfg.replace(bump={"strength": s}, ramp={"total_time": T})
            doc = config_mod.to_dict(run)
            jobs_list.append((len(jobs_list), doc, str(out / f"run_{len(jobs_list):03d}")))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = dict(pool.map(_sweep_one, jobs_list))
    else:
        results = dict(map(_sweep_one, jobs_list))
    keys = ["fraction_never_entered", "final_infidelity", "min_fidelity", "max_position_drift",
            "max_final_drift", "ensemble_interval_prob_time_avg", "initial_interval_mass", "weakness_ratio"]
    rows = []
    for run_id, doc, _ in jobs_list:
        s = results[run_id]
        rows.append([run_id, doc["bump"]["strength"], doc["ramp"]["total_time"], *(s[k] for k in keys)])
    write_csv(out / "sweep.csv", ["run_id", "strength", "total_time", *keys], rows)


HELP = {
    "eigen": "lowest eigenpairs of the base potential",
    "evolve": "propagate the ground state under the ramped bump",
    "trajectories": "ensemble trajectories for the configured run",
    "protect": "full protective-measurement experiment",
    "lemma-check": "ODE vs quantile trajectories on a fast schedule, plus a refined rerun",
    "sweep": "protect over a grid of strengths and ramp durations",
}

COMMANDS = {
    "eigen": cmd_eigen,
    "evolve": cmd_evolve,
    "trajectories": cmd_trajectories,
    "protect": cmd_protect,
    "lemma-check": cmd_lemma_check,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration (defaults: canonical run)")
    common.add_argument("--out", metavar="DIR", help=f"output directory (default: ${OUT_ENV}/<command>)")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="concurrent experiments for sweep")
    common.add_argument("--method", choices=("ode", "quantile", "both"), help="trajectory method(s)")
    common.add_argument("--seed", type=int, help="seed for randomly sampled ensembles")
    common.add_argument("--emit-plot", action="store_true", help="also write a matplotlib plot.py")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="bohmlab", description="1D Bohmian trajectory laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name])
    return parser


def resolve_out(command: str, out: str | None) -> Path:
    if out:
        return Path(out)
    return Path(os.environ.get(OUT_ENV, "bohmlab_out")) / command


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_mod.load(args.config) if args.config else RunConfig()
        if args.method:
            cfg.numerics.method = args.method
        if args.seed is not None:
            cfg.ensemble.seed = args.seed
        if args.jobs < 1:
            raise ConfigError(f"bad value for --jobs: {args.jobs}")
        config_mod.validate(cfg)
        out = resolve_out(args.command, args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "sweep":
            cmd_sweep(cfg, out, args.jobs)
        else:
            COMMANDS[args.command](cfg, out)
            if args.emit_plot and args.command in ("evolve", "trajectories", "protect"):
                emit_plot_script(out)
    except ConfigError as exc:
        print(f"bohmlab: config error: {_one_line(exc)}", file=sys.stderr)
        return 2
    except (BohmLabError, OSError, ValueError) as exc:
        print(f"bohmlab: error: {_one_line(exc)}", file=sys.stderr)
        return 1
    return 0


def _one_line(exc) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
