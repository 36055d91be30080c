"""Command-line interface.

Subcommands:

* run: execute an experiment file, writing trajectory.csv, summary.json and
  heatmap.csv into the output directory (plus optional snapshots and figures).
* sweep: rerun an experiment across values of one learner parameter and
  collect savings and convergence speed into sweep.csv.
* oracle: print each region's true grid optimum and the savings bound.
* report: render figures from a previous run's output directory.

Exit codes: 0 on success, 1 for configuration problems (bad files, bad
values), 2 for failures during execution.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from collections import Counter
from pathlib import Path

from .energymodel import noiseless_energy_j, optimum_state
from .persistence import (
    RestartMode,
    SnapshotError,
    grid_to_dict,
    learner_to_dict,
)
from .simulator import (
    ExperimentResult,
    SpecError,
    final_surface,
    load_snapshots,
    load_spec,
    override_spec,
    run_experiment,
    save_snapshots,
    steps_to_convergence,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

TRAJECTORY_COLUMNS = [
    "step",
    "process",
    "rts",
    "core_ghz",
    "uncore_ghz",
    "energy_j",
    "reward",
    "q_after",
    "explored",
]

SEED_ENV_VAR = "FREQTUNE_SEED"


class _ConfigFailure(Exception):
    pass


# ---- output writers ----


def write_trajectory_csv(result: ExperimentResult, path: Path) -> None:
    """Every measured invocation, chronological per process.

    Step rows carry the full learner fields. The first tuned measurement is
    step 0 with empty reward/q_after/explored; invocations that fed no tuner
    (candidate warmup, never-candidate regions) leave step empty as well. The
    energy column therefore accounts for every joule of the run.
    """
    grid = result.spec.grid
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS)
        for proc in result.processes:
            for row in proc.rows:
                core_ghz, uncore_ghz = grid.freqs(row.state)
                rec = row.record
                writer.writerow(
                    [
                        "" if row.kind == "untuned" else (0 if rec is None else rec.step),
                        proc.index,
                        row.rts,
                        core_ghz,
                        uncore_ghz,
                        row.energy_j,
                        "" if rec is None else rec.reward,
                        "" if rec is None else rec.q_after,
                        "" if rec is None else ("true" if rec.explored else "false"),
                    ]
                )


def write_summary_json(result: ExperimentResult, path: Path) -> None:
    spec = result.spec
    grid = spec.grid
    final_states = []
    for proc in result.processes:
        regions = {}
        for rts in sorted(proc.tuners):
            state = proc.tuners[rts].state.current
            core_ghz, uncore_ghz = grid.freqs(state)
            regions[rts] = {
                "core_idx": state.core_idx,
                "uncore_idx": state.uncore_idx,
                "core_ghz": core_ghz,
                "uncore_ghz": uncore_ghz,
            }
        final_states.append({"process": proc.index, "regions": regions})
    payload = {
        "schema": 1,
        "seed": spec.master_seed,
        "processes": spec.process_count,
        "iterations": spec.iterations,
        "restart": spec.restart.value,
        "learner": learner_to_dict(spec.learner),
        "meter": {
            "static_offset_w": spec.meter.static_offset_w,
            "noise_sigma_rel": spec.meter.noise_sigma_rel,
        },
        "grid": grid_to_dict(grid),
        "baseline_energy_j": result.baseline_energy_j,
        "tuned_energy_j": result.tuned_energy_j,
        "savings_fraction": result.savings_fraction,
        "baseline_runtime_ms": result.baseline_runtime_ms,
        "tuned_runtime_ms": result.tuned_runtime_ms,
        "runtime_overhead_fraction": result.runtime_overhead_fraction,
        "step_count": sum(len(p.records) for p in result.processes),
        "final_states": final_states,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_heatmap_csv(result: ExperimentResult, path: Path) -> None:
    """Visit counts and last measured energy per visited grid cell."""
    grid = result.spec.grid
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["process", "rts", "core_idx", "uncore_idx", "core_ghz", "uncore_ghz", "visits", "last_energy_j"]
        )
        for proc in result.processes:
            for rts in sorted(proc.tuners):
                tuner = proc.tuners[rts]
                visits = Counter(
                    row.state for row in proc.rows if row.rts == rts and row.kind != "untuned"
                )
                cells = set(visits) | set(tuner.table.last_energy)
                for state in sorted(cells, key=lambda s: (s.core_idx, s.uncore_idx)):
                    core_ghz, uncore_ghz = grid.freqs(state)
                    sample = tuner.table.last_energy.get(state)
                    writer.writerow(
                        [
                            proc.index,
                            rts,
                            state.core_idx,
                            state.uncore_idx,
                            core_ghz,
                            uncore_ghz,
                            visits.get(state, 0),
                            "" if sample is None else sample.joules,
                        ]
                    )


# ---- subcommands ----


def _resolve_seed(args: argparse.Namespace) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise _ConfigFailure(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    return None


def _load_run_spec(args: argparse.Namespace):
    restart = RestartMode(args.restart) if getattr(args, "restart", None) else None
    spec = load_spec(args.spec)
    return override_spec(
        spec,
        seed=_resolve_seed(args),
        processes=args.processes,
        iterations=args.iterations,
        restart=restart,
        alpha=args.alpha,
        gamma=args.gamma,
        epsilon=args.epsilon,
    )


def cmd_run(args: argparse.Namespace) -> int:
    try:
        spec = _load_run_spec(args)
        if spec.restart is not RestartMode.DISCARD and not args.snapshot:
            raise _ConfigFailure(f"--restart {spec.restart.value} needs --snapshot")
        snapshots = load_snapshots(spec, args.snapshot) if args.snapshot else None
    except (SpecError, SnapshotError, OSError) as exc:
        raise _ConfigFailure(exc) from exc

    result = run_experiment(spec, snapshots)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(result, out / "trajectory.csv")
    write_summary_json(result, out / "summary.json")
    write_heatmap_csv(result, out / "heatmap.csv")
    if args.snapshot:
        save_snapshots(result, args.snapshot)
    rendered: list[Path] = []
    if args.plot:
        from . import report

        rendered = report.render_run(out)
    if not args.quiet:
        print(
            f"savings {result.savings_fraction:.2%} "
            f"(tuned {result.tuned_energy_j:.1f} J / baseline {result.baseline_energy_j:.1f} J), "
            f"{sum(len(p.records) for p in result.processes)} tuner steps"
        )
        for fig in rendered:
            print(f"wrote {fig}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        spec = _load_run_spec(args)
        values = [v for v in (args.values or "").split(",") if v.strip() != ""]
        if not values:
            raise _ConfigFailure("--values needs at least one number")
        parsed = []
        for v in values:
            try:
                parsed.append(float(v))
            except ValueError:
                raise _ConfigFailure(f"bad sweep value {v!r}") from None
    except (SpecError, OSError) as exc:
        raise _ConfigFailure(exc) from exc

    rows = []
    for value in parsed:
        try:
            swept = override_spec(spec, **{args.param: value})
        except SpecError as exc:
            raise _ConfigFailure(exc) from exc
        result = run_experiment(swept)
        steps = steps_to_convergence(result)
        rows.append((value, result.savings_fraction, "" if steps is None else steps))
        if not args.quiet:
            print(f"{args.param}={value}: savings {result.savings_fraction:.2%}, convergence {steps}")

    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["param", "value", "savings_fraction", "steps_to_convergence"])
        for value, savings, steps in rows:
            writer.writerow([args.param, value, savings, steps])
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    try:
        spec = load_spec(args.spec)
    except (SpecError, OSError) as exc:
        raise _ConfigFailure(exc) from exc
    offset = spec.meter.static_offset_w
    for i, region in enumerate(spec.regions):
        for label, surface in (("", region.surface), ("final ", final_surface(spec, i))):
            if label and surface is region.surface:
                continue
            opt_state, opt_e = optimum_state(surface, spec.grid, offset)
            default_e = noiseless_energy_j(surface, spec.default, spec.grid, offset)
            core_ghz, uncore_ghz = spec.grid.freqs(opt_state)
            bound = 1.0 - opt_e / default_e if default_e > 0 else 0.0
            print(
                f"{region.rts}: {label}optimum core {core_ghz:g} GHz, uncore {uncore_ghz:g} GHz, "
                f"{opt_e:.6g} J/call (default {default_e:.6g} J/call), max savings {bound:.1%}"
            )
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    out: Path = args.out
    if not (out / "summary.json").is_file():
        raise _ConfigFailure(f"{out} does not contain a run (missing summary.json)")
    from . import report

    for fig in report.render_run(out):
        print(f"wrote {fig}")
    return EXIT_OK


# ---- parser / entry point ----


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spec", required=True, type=Path, help="experiment file (JSON)")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--seed", type=int, default=None, help=f"master seed (or ${SEED_ENV_VAR})")
    p.add_argument("--alpha", type=float, default=None, help="override learning rate")
    p.add_argument("--gamma", type=float, default=None, help="override discount factor")
    p.add_argument("--epsilon", type=float, default=None, help="override exploration rate")
    p.add_argument("--processes", type=int, default=None, help="override process count")
    p.add_argument("--iterations", type=int, default=None, help="override iteration count")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freqtune",
        description="Self-tuning core/uncore frequency selection on simulated energy surfaces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment")
    _add_run_options(run_p)
    run_p.add_argument(
        "--restart",
        choices=[m.value for m in RestartMode],
        default=None,
        help="what to take over from --snapshot (default: discard)",
    )
    run_p.add_argument("--snapshot", type=Path, default=None, help="snapshot base path to load/save")
    run_p.add_argument("--plot", action="store_true", help="also render figures into --out")
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="rerun across values of one learner parameter")
    _add_run_options(sweep_p)
    sweep_p.add_argument("--param", required=True, choices=["alpha", "gamma", "epsilon"])
    sweep_p.add_argument("--values", required=True, help="comma-separated list, e.g. 0,0.25,0.5")
    sweep_p.set_defaults(func=cmd_sweep)

    oracle_p = sub.add_parser("oracle", help="print per-region optima and savings bounds")
    oracle_p.add_argument("--spec", required=True, type=Path, help="experiment file (JSON)")
    oracle_p.set_defaults(func=cmd_oracle)

    report_p = sub.add_parser("report", help="render figures from a run's output directory")
    report_p.add_argument("--out", required=True, type=Path, help="directory written by run")
    report_p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _ConfigFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def console_main() -> None:
    sys.exit(main())
