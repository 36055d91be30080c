"""Closed-loop experiment driver.

Simulates an iterative application: one process enters main, then repeatedly
walks a fixed sequence of instrumented regions. Each region invocation is
measured against its energy surface at whatever state the hardware is in.
Once a region's profile makes it a tuning candidate, it gets its own table
and tuner; from then on the region runs at the tuner's current state and every
measurement advances the learner. Regions below the candidate threshold keep
consuming energy but are never tuned.

Processes are fully independent: process p's result is a pure function of
(spec, p), with its RNG stream split off the master seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .calltree import CallTree, RtsId, is_tuning_candidate, rts_path
from .energymodel import (
    EnergySurface,
    Meter,
    MeterConfig,
    RuntimeModel,
    noiseless_energy_j,
    surface_from_dict,
    surface_power,
)
from .freqspace import ConfigState, FrequencyGrid, chebyshev, default_grid, make_grid
from .learner import LearnerConfig, StepRecord, Tuner, TunerState, init_qtable, tuner_step
from .persistence import (
    ProcessSnapshot,
    RestartMode,
    load_snapshot,
    rng_from_token,
    rng_token,
    save_snapshot,
    snapshot_path,
)


class SpecError(ValueError):
    """The experiment description is malformed or inconsistent."""


@dataclass(frozen=True)
class PathStep:
    kind: str  # "function" | "parameter"
    name: str
    value: Any = None


@dataclass(frozen=True)
class RegionSpec:
    """One instrumented region: its call path under main and its surface."""

    path: tuple[PathStep, ...]
    surface: EnergySurface

    @property
    def rts_id(self) -> RtsId:
        segments: list[tuple[str, str, Any]] = [("function", "main", None)]
        segments.extend((s.kind, s.name, s.value) for s in self.path)
        return RtsId(tuple(segments))

    @property
    def rts(self) -> str:
        return str(self.rts_id)


@dataclass(frozen=True)
class PhaseChange:
    """Swap a region's surface right before the given iteration starts."""

    iteration: int
    region: int
    surface: EnergySurface


@dataclass
class ExperimentSpec:
    grid: FrequencyGrid
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    meter: MeterConfig = field(default_factory=MeterConfig)
    restart: RestartMode = RestartMode.DISCARD
    process_count: int = 1
    iterations: int = 1
    regions: tuple[RegionSpec, ...] = ()
    start: ConfigState = ConfigState(0, 0)
    default: ConfigState = ConfigState(0, 0)
    phase_changes: tuple[PhaseChange, ...] = ()
    master_seed: int = 0

    def validate(self) -> None:
        if self.process_count < 1:
            raise SpecError("process_count must be >= 1")
        if self.iterations < 1:
            raise SpecError("iterations must be >= 1")
        if not self.regions:
            raise SpecError("at least one region is required")
        for name, state in (("start", self.start), ("default", self.default)):
            if not self.grid.contains(state):
                raise SpecError(f"{name} state {state} is not on the grid")
        for i, region in enumerate(self.regions):
            if not region.path or region.path[-1].kind != "function":
                raise SpecError(f"region {i} path must end with a function")
            try:
                surface_power(region.surface, ConfigState(0, 0), self.grid)
            except ValueError as exc:
                raise SpecError(f"region {i}: {exc}") from exc
        for pc in self.phase_changes:
            if not 0 <= pc.iteration < self.iterations:
                raise SpecError(f"phase change iteration {pc.iteration} is out of range")
            if not 0 <= pc.region < len(self.regions):
                raise SpecError(f"phase change region {pc.region} does not exist")
            try:
                surface_power(pc.surface, ConfigState(0, 0), self.grid)
            except ValueError as exc:
                raise SpecError(f"phase change at {pc.iteration}: {exc}") from exc


@dataclass(frozen=True)
class MeasurementRow:
    """One measured region invocation, in chronological order per process.

    kind is "untuned" (no tuner existed yet, or never will), "first" (the
    tuner's initial measurement), or "step" (a completed learner cycle with
    its StepRecord attached).
    """

    iteration: int
    rts: str
    kind: str
    state: ConfigState
    energy_j: float
    duration_ms: float
    record: StepRecord | None = None


@dataclass
class ProcessResult:
    index: int
    rows: list[MeasurementRow]
    tuners: dict[str, Tuner]
    snapshot: ProcessSnapshot

    @property
    def records(self) -> list[StepRecord]:
        return [row.record for row in self.rows if row.record is not None]

    @property
    def tuned_energy_j(self) -> float:
        return sum(row.energy_j for row in self.rows)

    @property
    def tuned_runtime_ms(self) -> float:
        return sum(row.duration_ms for row in self.rows)

    @property
    def untuned_energy_j(self) -> float:
        return sum(row.energy_j for row in self.rows if row.kind == "untuned")

    @property
    def first_energy_j(self) -> float:
        return sum(row.energy_j for row in self.rows if row.kind == "first")

    @property
    def final_states(self) -> dict[str, ConfigState]:
        return {rts: tuner.state.current for rts, tuner in self.tuners.items()}


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    processes: list[ProcessResult]
    baseline_energy_j: float
    baseline_runtime_ms: float

    @property
    def tuned_energy_j(self) -> float:
        return sum(p.tuned_energy_j for p in self.processes)

    @property
    def tuned_runtime_ms(self) -> float:
        return sum(p.tuned_runtime_ms for p in self.processes)

    @property
    def savings_fraction(self) -> float:
        if self.baseline_energy_j <= 0:
            return 0.0
        return 1.0 - self.tuned_energy_j / self.baseline_energy_j

    @property
    def runtime_overhead_fraction(self) -> float:
        if self.baseline_runtime_ms <= 0:
            return 0.0
        return self.tuned_runtime_ms / self.baseline_runtime_ms - 1.0

    @property
    def trajectories(self) -> list[list[StepRecord]]:
        return [p.records for p in self.processes]

    @property
    def final_states(self) -> list[dict[str, ConfigState]]:
        return [p.final_states for p in self.processes]


def _process_rng(master_seed: int, process_index: int) -> np.random.Generator:
    # splittable derivation: adding processes never perturbs existing streams
    seq = np.random.SeedSequence(master_seed, spawn_key=(process_index,))
    return np.random.Generator(np.random.PCG64(seq))


def run_single_process(
    spec: ExperimentSpec, process_index: int, snapshot: ProcessSnapshot | None = None
) -> ProcessResult:
    """Run one process of the experiment; pure in (spec, process_index, snapshot)."""
    grid = spec.grid
    if snapshot is not None and snapshot.rng_state is not None:
        rng = rng_from_token(snapshot.rng_state)
    else:
        rng = _process_rng(spec.master_seed, process_index)
    meter = Meter(spec.meter, rng=rng)
    tree = snapshot.tree() if snapshot is not None and snapshot.tree_root is not None else CallTree()
    tuners: dict[str, Tuner] = dict(snapshot.tuners) if snapshot is not None else {}
    hw = snapshot.hw_state if snapshot is not None and snapshot.hw_state is not None else spec.default
    start_iteration = snapshot.iterations_done if snapshot is not None else 0

    surfaces = [r.surface for r in spec.regions]
    pending = sorted(spec.phase_changes, key=lambda pc: pc.iteration)
    for pc in pending:
        if pc.iteration < start_iteration:
            surfaces[pc.region] = pc.surface

    rows: list[MeasurementRow] = []
    t = 0.0
    tree.enter_region("main", t)
    for iteration in range(start_iteration, spec.iterations):
        for pc in pending:
            if pc.iteration == iteration:
                surfaces[pc.region] = pc.surface
        for r_idx, region in enumerate(spec.regions):
            surface = surfaces[r_idx]
            opened = []
            for step in region.path:
                if step.kind == "parameter":
                    tree.set_parameter(step.name, step.value)
                else:
                    opened.append(tree.enter_region(step.name, t))
            inner = opened[-1]
            rts = region.rts
            tuner = tuners.get(rts)
            if tuner is not None:
                hw = tuner.state.current
            sample = meter.measure(surface, hw, grid)
            t += sample.duration_ms
            for node in reversed(opened):
                tree.exit_region(node.name, t)
            if tuner is not None:
                first = tuner.state.prev is None
                _, record = tuner_step(tuner.state, tuner.table, sample, spec.learner, rng)
                rows.append(
                    MeasurementRow(
                        iteration, rts, "first" if first else "step",
                        sample.state, sample.joules, sample.duration_ms, record,
                    )
                )
            else:
                rows.append(
                    MeasurementRow(
                        iteration, rts, "untuned", sample.state, sample.joules, sample.duration_ms
                    )
                )
                # candidacy is judged on exit once a full timing exists; the
                # root is exempt (the app shell exits only once, at the end)
                if inner is not tree.root and inner.call_count >= 2 and is_tuning_candidate(inner):
                    tuners[rts] = Tuner(
                        table=init_qtable(grid, spec.start, spec.learner),
                        state=TunerState(rts=rts_path(inner), current=spec.start),
                    )
    tree.exit_region("main", t)

    end_snapshot = ProcessSnapshot(
        process_index=process_index,
        grid=grid,
        learner=spec.learner,
        tuners=tuners,
        rng_state=rng_token(rng),
        hw_state=hw,
        iterations_done=spec.iterations,
        tree_root=tree.root,
    )
    return ProcessResult(index=process_index, rows=rows, tuners=tuners, snapshot=end_snapshot)


def run_experiment(
    spec: ExperimentSpec, snapshots: list[ProcessSnapshot | None] | None = None
) -> ExperimentResult:
    """Run all processes sequentially and aggregate against the baseline."""
    spec.validate()
    if spec.restart is not RestartMode.DISCARD and snapshots is None:
        raise SpecError(f"restart mode {spec.restart.value!r} needs loaded snapshots")
    if snapshots is not None and len(snapshots) < spec.process_count:
        raise SpecError("need one snapshot per process")
    processes = [
        run_single_process(spec, p, snapshots[p] if snapshots is not None else None)
        for p in range(spec.process_count)
    ]
    base_e, base_rt = _baseline_totals(spec)
    return ExperimentResult(
        spec=spec, processes=processes, baseline_energy_j=base_e, baseline_runtime_ms=base_rt
    )


def _baseline_totals(spec: ExperimentSpec) -> tuple[float, float]:
    """Noiseless energy and runtime of the untuned run, pinned at the default
    state, phase changes applied (they model the workload, not the tuner)."""
    surfaces = [r.surface for r in spec.regions]
    pending = sorted(spec.phase_changes, key=lambda pc: pc.iteration)
    energy = 0.0
    runtime = 0.0
    for iteration in range(spec.iterations):
        for pc in pending:
            if pc.iteration == iteration:
                surfaces[pc.region] = pc.surface
        for surface in surfaces:
            energy += noiseless_energy_j(surface, spec.default, spec.grid, spec.meter.static_offset_w)
            runtime += surface.runtime.duration_ms(spec.default, spec.grid)
    return energy * spec.process_count, runtime * spec.process_count


def baseline_energy(spec: ExperimentSpec) -> float:
    """Total noiseless energy of the untuned run at the default state."""
    return _baseline_totals(spec)[0]


def final_surface(spec: ExperimentSpec, region_index: int) -> EnergySurface:
    """The surface a region ends the run with, after all phase changes."""
    surface = spec.regions[region_index].surface
    for pc in sorted(spec.phase_changes, key=lambda pc: pc.iteration):
        if pc.region == region_index:
            surface = pc.surface
    return surface


def modal_states(
    result: ExperimentResult, window_frac: float = 0.2
) -> dict[tuple[int, str], ConfigState]:
    """Most frequent measured state per (process, rts) over the final window.

    The window covers the last window_frac of iterations (at least one). Ties
    break toward the lowest core index, then uncore index.
    """
    spec = result.spec
    window = max(1, int(round(spec.iterations * window_frac)))
    cutoff = spec.iterations - window
    modes: dict[tuple[int, str], ConfigState] = {}
    for proc in result.processes:
        counts: dict[tuple[str, ConfigState], int] = {}
        for row in proc.rows:
            if row.kind == "untuned" or row.iteration < cutoff:
                continue
            key = (row.rts, row.state)
            counts[key] = counts.get(key, 0) + 1
        by_rts: dict[str, list[tuple[ConfigState, int]]] = {}
        for (rts, state), n in counts.items():
            by_rts.setdefault(rts, []).append((state, n))
        for rts, items in by_rts.items():
            items.sort(key=lambda it: (-it[1], it[0].core_idx, it[0].uncore_idx))
            modes[(proc.index, rts)] = items[0][0]
    return modes


def steps_to_convergence(result: ExperimentResult) -> int | None:
    """Worst-case step at which every tuner first got near its optimum.

    For each (process, tuned region) pair, find the first tuner measurement
    whose state is within one grid step of the region's final-surface optimum;
    the result is the maximum of those step indices (the E_0 measurement
    counts as step 0). None when any tuner never got there, or nothing was
    tuned at all.
    """
    from .energymodel import optimum_state

    spec = result.spec
    targets = {
        region.rts: optimum_state(final_surface(spec, i), spec.grid, spec.meter.static_offset_w)[0]
        for i, region in enumerate(spec.regions)
    }
    worst: int | None = None
    for proc in result.processes:
        for rts in proc.tuners:
            hit: int | None = None
            for row in proc.rows:
                if row.rts != rts or row.kind == "untuned":
                    continue
                if chebyshev(row.state, targets[rts]) <= 1:
                    hit = 0 if row.record is None else row.record.step
                    break
            if hit is None:
                return None
            worst = hit if worst is None else max(worst, hit)
    return worst


@dataclass
class PhaseShiftOutcome:
    """Did every tuner settle near its region's post-change optimum?"""

    result: ExperimentResult
    targets: dict[str, ConfigState]
    modal: dict[tuple[int, str], ConfigState]
    adapted: bool


def phase_change_response(
    spec: ExperimentSpec, snapshots: list[ProcessSnapshot | None] | None = None
) -> PhaseShiftOutcome:
    """Run a phase-change experiment and judge re-convergence.

    Adapted means: for every tuned region and process, the modal state over
    the last 20% of iterations is within one grid step of the optimum of the
    region's final surface.
    """
    result = run_experiment(spec, snapshots)
    from .energymodel import optimum_state

    targets = {
        region.rts: optimum_state(final_surface(spec, i), spec.grid, spec.meter.static_offset_w)[0]
        for i, region in enumerate(spec.regions)
    }
    modal = modal_states(result)
    adapted = True
    for proc in result.processes:
        for rts in proc.tuners:
            mode = modal.get((proc.index, rts))
            if mode is None or chebyshev(mode, targets[rts]) > 1:
                adapted = False
    return PhaseShiftOutcome(result=result, targets=targets, modal=modal, adapted=adapted)


# ---- snapshot plumbing over whole experiments ----


def load_snapshots(spec: ExperimentSpec, base: str | Path) -> list[ProcessSnapshot | None] | None:
    """Load the per-process snapshot files for a restart; None for discard."""
    if spec.restart is RestartMode.DISCARD:
        return None
    return [
        load_snapshot(
            snapshot_path(base, p),
            spec.restart,
            grid=spec.grid,
            learner=spec.learner,
            start=spec.start,
        )
        for p in range(spec.process_count)
    ]


def save_snapshots(result: ExperimentResult, base: str | Path) -> list[Path]:
    """Write every process's end-of-run snapshot next to the base path."""
    return [
        save_snapshot(proc.snapshot, snapshot_path(base, proc.index))
        for proc in result.processes
    ]


# ---- experiment files ----


def _parse_runtime(data: dict[str, Any], fallback: RuntimeModel | None = None) -> RuntimeModel:
    if "duration_ms" not in data and fallback is not None:
        base = fallback.base_ms
    else:
        try:
            base = float(data["duration_ms"])
        except KeyError:
            raise SpecError("region needs a duration_ms") from None
    default_sens = fallback.core_sensitivity if fallback is not None else 0.0
    sens = float(data.get("runtime_sensitivity", default_sens))
    try:
        return RuntimeModel(base_ms=base, core_sensitivity=sens)
    except ValueError as exc:
        raise SpecError(str(exc)) from exc


def _parse_path(raw: Any) -> tuple[PathStep, ...]:
    if isinstance(raw, str):
        raw = [raw]
    if not isinstance(raw, list) or not raw:
        raise SpecError("region path must be a non-empty list")
    steps: list[PathStep] = []
    for element in raw:
        if isinstance(element, str):
            steps.append(PathStep("function", element))
        elif isinstance(element, dict) and "name" in element and "value" in element:
            steps.append(PathStep("parameter", str(element["name"]), element["value"]))
        else:
            raise SpecError(f"bad path element {element!r}")
    if steps[-1].kind != "function":
        raise SpecError("region path must end with a function")
    return tuple(steps)


def _parse_state(grid: FrequencyGrid, data: Any, what: str) -> ConfigState:
    try:
        return grid.state_at(float(data["core_ghz"]), float(data["uncore_ghz"]))
    except (TypeError, KeyError) as exc:
        raise SpecError(f"{what} needs core_ghz and uncore_ghz") from exc
    except ValueError as exc:
        raise SpecError(f"{what}: {exc}") from exc


def spec_from_dict(data: dict[str, Any]) -> ExperimentSpec:
    """Build an ExperimentSpec from a parsed experiment file."""
    if not isinstance(data, dict):
        raise SpecError("experiment file must hold a JSON object")
    try:
        if "grid" in data:
            grid = make_grid(data["grid"]["core_ghz"], data["grid"]["uncore_ghz"])
        else:
            grid = default_grid()

        learner_raw = data.get("learner", {})
        learner = LearnerConfig(
            alpha=float(learner_raw.get("alpha", 0.1)),
            gamma=float(learner_raw.get("gamma", 0.5)),
            epsilon=float(learner_raw.get("epsilon", 0.25)),
            stay_bias=float(learner_raw.get("stay_bias", -0.1)),
        )
        meter_raw = data.get("meter", {})
        meter = MeterConfig(
            static_offset_w=float(meter_raw.get("static_offset_w", 70.0)),
            noise_sigma_rel=float(meter_raw.get("noise_sigma_rel", 0.005)),
        )
        restart = RestartMode(data.get("restart", "discard"))

        regions = []
        for raw_region in data.get("regions", []):
            runtime = _parse_runtime(raw_region)
            surface = surface_from_dict(raw_region.get("surface", {}), runtime)
            regions.append(RegionSpec(path=_parse_path(raw_region.get("path")), surface=surface))

        changes = []
        for raw_pc in data.get("phase_changes", []):
            region_index = int(raw_pc.get("region", 0))
            if not 0 <= region_index < len(regions):
                raise SpecError(f"phase change region {region_index} does not exist")
            runtime = _parse_runtime(raw_pc, fallback=regions[region_index].surface.runtime)
            changes.append(
                PhaseChange(
                    iteration=int(raw_pc["iteration"]),
                    region=region_index,
                    surface=surface_from_dict(raw_pc.get("surface", {}), runtime),
                )
            )

        if "iterations" not in data:
            raise SpecError("experiment file needs an iteration count")
        spec = ExperimentSpec(
            grid=grid,
            learner=learner,
            meter=meter,
            restart=restart,
            process_count=int(data.get("processes", 1)),
            iterations=int(data["iterations"]),
            regions=tuple(regions),
            start=_parse_state(grid, data.get("start"), "start"),
            default=_parse_state(grid, data.get("default"), "default"),
            phase_changes=tuple(changes),
            master_seed=int(data.get("seed", 0)),
        )
    except SpecError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"malformed experiment file: {exc}") from exc
    spec.validate()
    return spec


def load_spec(path: str | Path) -> ExperimentSpec:
    """Read and validate an experiment file."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path} is not valid JSON: {exc}") from exc
    return spec_from_dict(data)


def override_spec(
    spec: ExperimentSpec,
    *,
    seed: int | None = None,
    processes: int | None = None,
    iterations: int | None = None,
    restart: RestartMode | None = None,
    alpha: float | None = None,
    gamma: float | None = None,
    epsilon: float | None = None,
) -> ExperimentSpec:
    """Apply command-line overrides on top of a loaded spec."""
    learner = spec.learner
    overrides = {
        k: v for k, v in (("alpha", alpha), ("gamma", gamma), ("epsilon", epsilon)) if v is not None
    }
    if overrides:
        try:
            learner = replace(learner, **overrides)
        except ValueError as exc:
            raise SpecError(str(exc)) from exc
    out = replace(
        spec,
        learner=learner,
        master_seed=spec.master_seed if seed is None else seed,
        process_count=spec.process_count if processes is None else processes,
        iterations=spec.iterations if iterations is None else iterations,
        restart=spec.restart if restart is None else restart,
    )
    out.validate()
    return out
