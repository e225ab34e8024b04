"""Command-line driver: run, analyze, relenergy, mms, ensemble.

Artifacts land in the run directory: a resolved config.ini, binary
checkpoints, and CSV time series.  Set VEPSIM_OUTPUT_ROOT to prefix
every relative output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    ensemble_average,
    growth_exponent,
    scaling_collapse,
    structure_series,
)
from .dynamics import BlowupError, PhiRangeError, run
from .io import (
    ConfigError,
    RunConfig,
    SnapshotError,
    emit_config,
    list_snapshots,
    load_config,
    params_digest,
    read_snapshot,
    snapshot_path,
    spawn_seeds,
    write_collapse_csv,
    write_energy_csv,
    write_growth_csv,
    write_peaks_csv,
    write_relenergy_csv,
    write_snapshot,
    write_structure_csv,
)
from .physics import ModelParams
from .relenergy import stability_report
from .state import init_state

OUTPUT_ROOT_ENV = "VEPSIM_OUTPUT_ROOT"


def _resolve_dir(directory: str | Path) -> Path:
    path = Path(directory)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _load(args) -> RunConfig:
    return load_config(args.config, overrides=args.set or [], preset=args.preset)


def _with_output(config: RunConfig, directory: str) -> RunConfig:
    return dataclasses.replace(
        config, outputs=dataclasses.replace(config.outputs, directory=directory)
    )


def _execute_run(config: RunConfig, resume: bool = False) -> Path:
    """March one configured trajectory, writing checkpoints and energy rows."""
    outdir = _resolve_dir(config.outputs.directory)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.ini").write_text(emit_config(config))
    grid = config.grid.make()
    params = config.params

    checkpoints = list_snapshots(outdir) if resume else []
    if resume and not checkpoints:
        raise SnapshotError(f"{outdir}: nothing to resume from (no checkpoints)")
    if checkpoints:
        record = read_snapshot(checkpoints[-1], grid=grid, params=params)
        state, start_index = record.state, record.step_index
        truncate = False
    else:
        state, start_index = init_state(grid, config.ic), 0
        truncate = True

    reports: list = []
    final = run(
        state,
        params,
        config.stepper,
        energy_sink=reports.append,
        snapshot_sink=lambda s, i: write_snapshot(
            snapshot_path(outdir, i), s, params, config.ic.seed, i
        ),
        snapshot_every=config.outputs.snapshot_every,
        start_index=start_index,
        truncate_start=truncate,
    )
    energy_path = outdir / "energy.csv"
    if checkpoints and energy_path.exists():
        # drop the re-emitted checkpoint row, keep one line per time
        write_energy_csv(energy_path, reports[1:], params, append=True)
    else:
        write_energy_csv(energy_path, reports, params)
    print(f"run: t = {final.t:g}, E = {reports[-1].e_total:.6g}, wrote {outdir}")
    return outdir


def _read_states(rundir: Path):
    paths = list_snapshots(rundir)
    if not paths:
        raise SnapshotError(f"{rundir}: no checkpoints found")
    first = read_snapshot(paths[0])
    grid = first.state.grid
    states = [first.state]
    digest = first.params_hash
    for p in paths[1:]:
        rec = read_snapshot(p, grid=grid)
        if rec.params_hash != digest:
            raise SnapshotError(f"{p}: parameters changed within one run directory")
        states.append(rec.state)
    return states, digest


def cmd_run(args) -> int:
    config = _load(args)
    if args.out:
        config = _with_output(config, args.out)
    if args.seed is not None:
        config = dataclasses.replace(config, ic=dataclasses.replace(config.ic, seed=args.seed))
    _execute_run(config, resume=args.resume)
    return 0


def cmd_analyze(args) -> int:
    rundir = _resolve_dir(args.rundir)
    states, _ = _read_states(rundir)
    outdir = _resolve_dir(args.out) if args.out else rundir
    outdir.mkdir(parents=True, exist_ok=True)
    series = structure_series(states, dq=args.dq)
    write_structure_csv(outdir / "structure.csv", series)
    write_peaks_csv(outdir / "peaks.csv", series)
    print(f"analyze: {len(series.times)} snapshots, {len(series.q)} shells, wrote {outdir}")

    window = tuple(args.fit_window) if args.fit_window else _post_onset_decade(series)
    if window is not None:
        try:
            fit = growth_exponent(series.times, series.q_max, window=window)
        except ValueError as exc:
            print(f"analyze: growth fit skipped ({exc})")
        else:
            write_growth_csv(outdir / "growth.csv", fit)
            print(
                f"analyze: q_max ~ t^{fit.exponent:+.4f} +- {fit.stderr:.4f} "
                f"over t in [{fit.t_lo:g}, {fit.t_hi:g}]"
            )
    else:
        print("analyze: growth fit skipped (no positive-time decade)")

    indices = _collapse_indices(series, args.collapse_times)
    if indices is not None:
        try:
            report = scaling_collapse(series, indices)
        except ValueError as exc:
            print(f"analyze: collapse skipped ({exc})")
        else:
            write_collapse_csv(outdir / "collapse.csv", report)
            print(f"analyze: collapse distance {report.distance:.6g} over t = "
                  + ", ".join(f"{t:g}" for t in report.times))
    else:
        print("analyze: collapse skipped (need two usable times)")
    return 0


def _post_onset_decade(series) -> tuple[float, float] | None:
    """Default fit window: the trailing decade after the peak forms."""
    t_hi = float(series.times[-1])
    if t_hi <= 0.0:
        return None
    qm = series.q_max
    med = np.array([np.median(qm[max(0, i - 1) : i + 2]) for i in range(len(qm))])
    onset = float(series.times[int(np.argmax(med))])
    t_lo = max(t_hi / 10.0, onset)
    if t_lo >= t_hi:
        return None
    return (t_lo, t_hi)


def _collapse_indices(series, requested: list[float] | None) -> list[int] | None:
    times = series.times
    if requested:
        targets = requested
    else:
        window = _post_onset_decade(series)
        if window is None:
            return None
        targets = list(np.geomspace(max(window[0], times[times > 0.0].min(initial=np.inf)), window[1], 4))
    indices: list[int] = []
    for t in targets:
        i = int(np.argmin(np.abs(times - t)))
        if i not in indices:
            indices.append(i)
    return indices if len(indices) >= 2 else None


def cmd_relenergy(args) -> int:
    config = _load(args)
    params = config.params
    dir_a = _resolve_dir(args.perturbed)
    dir_b = _resolve_dir(args.reference)
    states_a, digest_a = _read_states(dir_a)
    states_b, digest_b = _read_states(dir_b)
    if digest_a != digest_b:
        raise SnapshotError("the two runs used different model parameters")
    if digest_a != params_digest(params):
        raise SnapshotError(
            "snapshot parameters do not match the supplied config; pass the "
            "config/preset the runs were made with"
        )
    report = stability_report(states_a, states_b, params, alpha=args.alpha)
    out = Path(args.out) if args.out else dir_a / "relenergy.csv"
    write_relenergy_csv(out, report)
    first, last = report.reports[0], report.reports[-1]
    print(f"relenergy: verdict {report.verdict}, c_hat_max = {report.c_hat_max:.6g}")
    print(f"relenergy: E_rel(0) = {first.e_rel:.6g}, E_rel({last.t:g}) = {last.e_rel:.6g}, wrote {out}")
    return 0


def cmd_mms(args) -> int:
    from .mms import build_solution, spatial_study, temporal_study

    sol = build_solution(length=args.length)
    rows = spatial_study(sol, sizes=tuple(args.sizes))
    print("spatial study (numeric vs symbolic residuals, L2):")
    print(f"  {'n':>5s} {'error':>12s} {'order':>7s}")
    for r in rows:
        order = f"{r.order:7.2f}" if not np.isnan(r.order) else "      -"
        print(f"  {r.n:5d} {r.total:12.4e} {order}")

    gentle = ModelParams(a_steepness=2.0, eps1=5e-3)
    tsol = build_solution(length=args.length, params=gentle)
    trows = temporal_study(tsol, size=args.temporal_size, dts=tuple(args.dts), t_end=args.t_end)
    print("temporal study (forced run vs exact fields at t_end, L2):")
    print(f"  {'dt':>9s} {'error':>12s} {'order':>7s}")
    for r in trows:
        order = f"{r.order:7.3f}" if not np.isnan(r.order) else "      -"
        print(f"  {r.dt:9.4g} {r.error:12.4e} {order}")
    orders = [r.order for r in trows if not np.isnan(r.order)]
    if orders:
        print(f"mms: observed temporal order {np.mean(orders):.3f} (first-order update)")

    if args.out:
        import csv

        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["study", "n_or_dt", "error", "order"])
            for r in rows:
                writer.writerow(["spatial", r.n, r.total, r.order])
            for r in trows:
                writer.writerow(["temporal", r.dt, r.error, r.order])
        print(f"mms: wrote {args.out}")
    return 0


def cmd_ensemble(args) -> int:
    config = _load(args)
    root = _resolve_dir(args.out if args.out else config.outputs.directory)
    root.mkdir(parents=True, exist_ok=True)
    seeds = spawn_seeds(args.master_seed, args.runs)
    members = [f"run_{i:02d}" for i in range(args.runs)]
    manifest = {
        "master_seed": args.master_seed,
        "runs": args.runs,
        "seed_scheme": "SeedSequence(master_seed, spawn_key=(member_index,))",
        "seeds": seeds,
        "members": members,
        "config": emit_config(config),
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))

    all_series = []
    for name, seed in zip(members, seeds):
        member = dataclasses.replace(
            config,
            ic=dataclasses.replace(config.ic, seed=seed),
            outputs=dataclasses.replace(config.outputs, directory=str(root / name)),
        )
        outdir = _execute_run(member)
        states, _ = _read_states(outdir)
        all_series.append(structure_series(states))
    mean_series = ensemble_average(all_series)
    write_structure_csv(root / "structure.csv", mean_series)
    write_peaks_csv(root / "peaks.csv", mean_series)

    window = _post_onset_decade(mean_series)
    if window is not None:
        try:
            fit = growth_exponent(mean_series.times, mean_series.q_max, window=window)
        except ValueError as exc:
            print(f"ensemble: growth fit skipped ({exc})")
        else:
            write_growth_csv(root / "growth.csv", fit)
            print(f"ensemble: q_max ~ t^{fit.exponent:+.4f} +- {fit.stderr:.4f}")
    else:
        print("ensemble: growth fit skipped (no post-onset decade yet)")
    indices = _collapse_indices(mean_series, None)
    if indices is not None:
        try:
            report = scaling_collapse(mean_series, indices)
        except ValueError as exc:
            print(f"ensemble: collapse skipped ({exc})")
        else:
            write_collapse_csv(root / "collapse.csv", report)
            print(f"ensemble: collapse distance {report.distance:.6g}")
    else:
        print("ensemble: collapse skipped (need two usable times)")
    print(f"ensemble: averaged {args.runs} members, wrote {root}")
    return 0


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", help="INI config file")
    p.add_argument("-p", "--preset", help="preset name (paper-sec4, simple-fluid)")
    p.add_argument(
        "-s",
        "--set",
        action="append",
        metavar="SECTION.KEY=VALUE",
        help="override a config key (repeatable; highest precedence)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vepsim",
        description="Viscoelastic demixing simulator and diagnostics suite.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate one trajectory")
    _add_config_flags(p)
    p.add_argument("-o", "--out", help="output directory (overrides outputs.directory)")
    p.add_argument("--seed", type=int, help="override ic.seed")
    p.add_argument("--resume", action="store_true", help="continue from the latest checkpoint")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="structure-factor pipeline over checkpoints")
    p.add_argument("rundir", help="directory holding checkpoints")
    p.add_argument("-o", "--out", help="directory for CSVs (default: rundir)")
    p.add_argument("--dq", type=float, help="shell width (default 2*pi/max(L))")
    p.add_argument(
        "--fit-window", nargs=2, type=float, metavar=("T0", "T1"),
        help="growth-fit time window (default: trailing post-onset decade)",
    )
    p.add_argument(
        "--collapse-times", type=float, nargs="+", metavar="T",
        help="snapshot times for the scaling collapse (default: 4 log-spaced)",
    )
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("relenergy", help="relative-energy stability of two runs")
    p.add_argument("perturbed", help="run directory of the probe trajectory")
    p.add_argument("reference", help="run directory of the reference trajectory")
    _add_config_flags(p)
    p.add_argument("--alpha", type=float, help="quadratic stabilization weight")
    p.add_argument("-o", "--out", help="CSV path (default: <perturbed>/relenergy.csv)")
    p.set_defaults(func=cmd_relenergy)

    p = sub.add_parser("mms", help="manufactured-solution refinement studies")
    p.add_argument("--length", type=float, default=16.0, help="box edge length")
    p.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128], help="spatial resolutions")
    p.add_argument("--temporal-size", type=int, default=32, help="grid for the dt study")
    p.add_argument("--dts", type=float, nargs="+", default=[0.02, 0.01, 0.005], help="step sizes")
    p.add_argument("--t-end", type=float, default=0.4, help="horizon of the dt study")
    p.add_argument("-o", "--out", help="optional CSV for both tables")
    p.set_defaults(func=cmd_mms)

    p = sub.add_parser("ensemble", help="seeded independent runs plus averaged analysis")
    _add_config_flags(p)
    p.add_argument("--runs", type=int, required=True, help="number of members")
    p.add_argument("--master-seed", type=int, default=1234, help="seed the members spawn from")
    p.add_argument("-o", "--out", help="ensemble root directory")
    p.set_defaults(func=cmd_ensemble)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SnapshotError, BlowupError, PhiRangeError, ValueError, OSError) as exc:
        print(f"vepsim: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
