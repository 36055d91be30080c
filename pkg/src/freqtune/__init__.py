"""Self-tuning core/uncore frequency selection on simulated energy surfaces.

A small Q-learning tuner picks processor core and uncore frequencies per
instrumented code region, rewarding moves by the normalized energy difference
between consecutive measurements. The package bundles the learner, a call-tree
profiler that identifies tunable regions, a simulated energy meter, an
experiment driver, snapshot/restart support, and a CLI.
"""

from .calltree import (
    CallTree,
    CallTreeError,
    CallTreeNode,
    MismatchedExit,
    RegionEvent,
    RtsId,
    apply_event,
    candidate_nodes,
    function_children,
    is_tuning_candidate,
    node_from_dict,
    node_to_dict,
    read_events_jsonl,
    replay,
    rts_path,
)
from .energymodel import (
    BowlSurface,
    EnergySample,
    EnergySurface,
    Meter,
    MeterConfig,
    RuntimeModel,
    TableSurface,
    noiseless_energy_j,
    optimum_state,
    surface_from_dict,
    surface_power,
    surface_to_dict,
)
from .freqspace import (
    ALL_ACTIONS,
    STAY,
    ActionDelta,
    ConfigState,
    EmptyDimension,
    FrequencyGrid,
    InvalidAction,
    apply_action,
    chebyshev,
    default_grid,
    make_grid,
    negate,
    valid_actions,
)
from .learner import (
    DegenerateEnergy,
    InvalidEntry,
    LearnerConfig,
    QTable,
    StepRecord,
    Tuner,
    TunerState,
    compute_reward,
    init_qtable,
    seed_from_neighbors,
    select_action,
    tuner_step,
    update_q,
)
from .persistence import (
    CorruptSnapshot,
    IncompatibleSnapshot,
    IoFailure,
    ProcessSnapshot,
    RestartMode,
    SnapshotError,
    load_snapshot,
    qtable_from_dict,
    qtable_to_dict,
    rng_from_token,
    rng_token,
    save_snapshot,
    snapshot_path,
    tunerstate_from_dict,
    tunerstate_to_dict,
)
from .simulator import (
    ExperimentResult,
    ExperimentSpec,
    MeasurementRow,
    PhaseChange,
    ProcessResult,
    RegionSpec,
    SpecError,
    baseline_energy,
    final_surface,
    load_snapshots,
    load_spec,
    modal_states,
    override_spec,
    phase_change_response,
    run_experiment,
    run_single_process,
    save_snapshots,
    spec_from_dict,
    steps_to_convergence,
)

__version__ = "0.1.0"
