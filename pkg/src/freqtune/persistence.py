"""Snapshot save/load and the three restart policies.

A snapshot is one JSON file per process, written atomically (temp file then
rename), with a format version up front. It captures everything a process
needs to resume exactly: tables, tuner cursors, the profile tree, the applied
hardware state, the RNG stream token, and how many overall iterations
completed.

Restart policies differ in what survives a reload:

* discard: nothing; the snapshot is ignored.
* continue: everything, verbatim, including the RNG stream.
* reset: tables (Q-values, energies, visit sets) survive bit-for-bit, but the
  cursor returns to the start state with step 0, the RNG restarts from the
  configured seed, and the first energy is measured fresh.
"""

from __future__ import annotations

import datetime as _dt
import enum
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .calltree import CallTree, CallTreeNode, RtsId, node_from_dict, node_to_dict
from .energymodel import EnergySample
from .freqspace import ActionDelta, ConfigState, FrequencyGrid
from .learner import LearnerConfig, QTable, Tuner, TunerState

SNAPSHOT_VERSION = 1
RNG_TOKEN_KIND = "numpy-pcg64-v1"


class SnapshotError(Exception):
    pass


class IoFailure(SnapshotError):
    """Reading or writing the snapshot file failed."""


class IncompatibleSnapshot(SnapshotError):
    """The snapshot's grid or learner config does not match the experiment."""


class CorruptSnapshot(SnapshotError):
    """The file does not follow the snapshot schema."""


class RestartMode(enum.Enum):
    DISCARD = "discard"
    CONTINUE = "continue"
    RESET_ITERATION = "reset"


@dataclass
class ProcessSnapshot:
    """Resumable state of one process."""

    process_index: int
    grid: FrequencyGrid
    learner: LearnerConfig
    tuners: dict[str, Tuner]
    rng_state: dict[str, Any] | None = None
    hw_state: ConfigState | None = None
    iterations_done: int = 0
    tree_root: CallTreeNode | None = None
    created_at: str = ""

    def tree(self) -> CallTree | None:
        return CallTree(self.tree_root) if self.tree_root is not None else None


def snapshot_path(base: str | Path, process_index: int) -> Path:
    """Per-process file name: base 'snap.json' becomes 'snap-p0.json'."""
    base = Path(base)
    return base.with_name(f"{base.stem}-p{process_index}{base.suffix or '.json'}")


def rng_token(rng: np.random.Generator) -> dict[str, Any]:
    """Opaque versioned token capturing the full generator state."""
    return {"kind": RNG_TOKEN_KIND, "state": rng.bit_generator.state}


def rng_from_token(token: dict[str, Any]) -> np.random.Generator:
    if token.get("kind") != RNG_TOKEN_KIND:
        raise CorruptSnapshot(f"unknown rng token kind {token.get('kind')!r}")
    bg = np.random.PCG64()
    try:
        bg.state = token["state"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptSnapshot(f"bad rng token: {exc}") from exc
    return np.random.Generator(bg)


# ---- piecewise (de)serialization ----


def grid_to_dict(grid: FrequencyGrid) -> dict[str, Any]:
    return {"core_ghz": list(grid.core_levels), "uncore_ghz": list(grid.uncore_levels)}


def grid_from_dict(data: dict[str, Any]) -> FrequencyGrid:
    return FrequencyGrid(
        core_levels=tuple(float(x) for x in data["core_ghz"]),
        uncore_levels=tuple(float(x) for x in data["uncore_ghz"]),
    )


def learner_to_dict(cfg: LearnerConfig) -> dict[str, Any]:
    return {
        "alpha": cfg.alpha,
        "gamma": cfg.gamma,
        "epsilon": cfg.epsilon,
        "stay_bias": cfg.stay_bias,
    }


def learner_from_dict(data: dict[str, Any]) -> LearnerConfig:
    return LearnerConfig(
        alpha=float(data["alpha"]),
        gamma=float(data["gamma"]),
        epsilon=float(data["epsilon"]),
        stay_bias=float(data["stay_bias"]),
    )


def _state_pair(state: ConfigState) -> list[int]:
    return [state.core_idx, state.uncore_idx]


def _rts_to_list(rts: RtsId) -> list[list[Any]]:
    return [[kind, name, value] for kind, name, value in rts.path]


def _rts_from_list(raw: list[list[Any]]) -> RtsId:
    return RtsId(tuple((seg[0], seg[1], seg[2]) for seg in raw))


def qtable_to_dict(table: QTable) -> dict[str, Any]:
    entries = [
        {
            "core_idx": s.core_idx,
            "uncore_idx": s.uncore_idx,
            "action": [a.core_delta, a.uncore_delta],
            "q": value,
        }
        for (s, a), value in table.q.items()
    ]
    last_energy = [
        {
            "core_idx": s.core_idx,
            "uncore_idx": s.uncore_idx,
            "joules": sample.joules,
            "duration_ms": sample.duration_ms,
        }
        for s, sample in sorted(
            table.last_energy.items(), key=lambda kv: (kv[0].core_idx, kv[0].uncore_idx)
        )
    ]
    visited = sorted(_state_pair(s) for s in table.visited)
    return {
        "grid": grid_to_dict(table.grid),
        "entries": entries,
        "last_energy": last_energy,
        "visited": visited,
    }


def qtable_from_dict(data: dict[str, Any]) -> QTable:
    grid = grid_from_dict(data["grid"])
    q: dict[tuple[ConfigState, ActionDelta], float] = {}
    for entry in data["entries"]:
        s = ConfigState(int(entry["core_idx"]), int(entry["uncore_idx"]))
        a = ActionDelta(int(entry["action"][0]), int(entry["action"][1]))
        q[(s, a)] = float(entry["q"])
    last_energy: dict[ConfigState, EnergySample] = {}
    for item in data["last_energy"]:
        s = ConfigState(int(item["core_idx"]), int(item["uncore_idx"]))
        last_energy[s] = EnergySample(float(item["joules"]), float(item["duration_ms"]), s)
    visited = {ConfigState(int(c), int(u)) for c, u in data["visited"]}
    return QTable(grid=grid, q=q, last_energy=last_energy, visited=visited)


def _sample_to_dict(sample: EnergySample) -> dict[str, Any]:
    return {
        "joules": sample.joules,
        "duration_ms": sample.duration_ms,
        "state": _state_pair(sample.state),
    }


def _sample_from_dict(data: dict[str, Any]) -> EnergySample:
    return EnergySample(
        float(data["joules"]),
        float(data["duration_ms"]),
        ConfigState(int(data["state"][0]), int(data["state"][1])),
    )


def tunerstate_to_dict(ts: TunerState) -> dict[str, Any]:
    return {
        "rts": _rts_to_list(ts.rts),
        "current": _state_pair(ts.current),
        "prev": _state_pair(ts.prev) if ts.prev is not None else None,
        "prev_action": [ts.prev_action.core_delta, ts.prev_action.uncore_delta]
        if ts.prev_action is not None
        else None,
        "prev_energy": _sample_to_dict(ts.prev_energy) if ts.prev_energy is not None else None,
        "prev_explored": ts.prev_explored,
        "step": ts.step,
    }


def tunerstate_from_dict(data: dict[str, Any]) -> TunerState:
    prev = data.get("prev")
    prev_action = data.get("prev_action")
    prev_energy = data.get("prev_energy")
    return TunerState(
        rts=_rts_from_list(data["rts"]),
        current=ConfigState(int(data["current"][0]), int(data["current"][1])),
        prev=ConfigState(int(prev[0]), int(prev[1])) if prev is not None else None,
        prev_action=ActionDelta(int(prev_action[0]), int(prev_action[1]))
        if prev_action is not None
        else None,
        prev_energy=_sample_from_dict(prev_energy) if prev_energy is not None else None,
        prev_explored=data.get("prev_explored"),
        step=int(data["step"]),
    )


def snapshot_to_dict(snap: ProcessSnapshot) -> dict[str, Any]:
    return {
        "version": SNAPSHOT_VERSION,
        "process_index": snap.process_index,
        "grid": grid_to_dict(snap.grid),
        "learner": learner_to_dict(snap.learner),
        "tuners": [
            {
                "rts": rts,
                "qtable": qtable_to_dict(tuner.table),
                "tuner_state": tunerstate_to_dict(tuner.state),
            }
            for rts, tuner in sorted(snap.tuners.items())
        ],
        "rng": snap.rng_state,
        "hw_state": _state_pair(snap.hw_state) if snap.hw_state is not None else None,
        "iterations_done": snap.iterations_done,
        "tree": node_to_dict(snap.tree_root) if snap.tree_root is not None else None,
        "created_at": snap.created_at,
    }


def snapshot_from_dict(data: dict[str, Any]) -> ProcessSnapshot:
    try:
        version = data["version"]
        if not isinstance(version, int) or version > SNAPSHOT_VERSION or version < 1:
            raise CorruptSnapshot(f"unsupported snapshot version {version!r}")
        tuners: dict[str, Tuner] = {}
        for item in data["tuners"]:
            tuners[item["rts"]] = Tuner(
                table=qtable_from_dict(item["qtable"]),
                state=tunerstate_from_dict(item["tuner_state"]),
            )
        hw = data.get("hw_state")
        tree = data.get("tree")
        return ProcessSnapshot(
            process_index=int(data["process_index"]),
            grid=grid_from_dict(data["grid"]),
            learner=learner_from_dict(data["learner"]),
            tuners=tuners,
            rng_state=data.get("rng"),
            hw_state=ConfigState(int(hw[0]), int(hw[1])) if hw is not None else None,
            iterations_done=int(data["iterations_done"]),
            tree_root=node_from_dict(tree) if tree is not None else None,
            created_at=str(data.get("created_at", "")),
        )
    except CorruptSnapshot:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CorruptSnapshot(f"snapshot schema violation: {exc}") from exc


# ---- file operations ----


def save_snapshot(snap: ProcessSnapshot, path: str | Path) -> Path:
    """Write one process snapshot atomically; returns the final path."""
    path = Path(path)
    payload = snapshot_to_dict(snap)
    if not payload["created_at"]:
        payload["created_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=1)
            os.replace(tmp_name, path)
        except BaseException:
            try:
                os.unlink(tmp_name)
            except OSError:
                pass
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write snapshot {path}: {exc}") from exc
    return path


def load_snapshot(
    path: str | Path,
    mode: RestartMode,
    *,
    grid: FrequencyGrid,
    learner: LearnerConfig,
    start: ConfigState,
) -> ProcessSnapshot | None:
    """Load one process snapshot under a restart policy.

    Returns None for discard (the file is not even opened). For the other
    modes the snapshot's grid and learner config must match the experiment's.
    """
    if mode is RestartMode.DISCARD:
        return None
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read snapshot {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorruptSnapshot(f"snapshot {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise CorruptSnapshot(f"snapshot {path} is not a JSON object")
    snap = snapshot_from_dict(raw)
    if snap.grid != grid:
        raise IncompatibleSnapshot("snapshot grid differs from the experiment grid")
    if snap.learner != learner:
        raise IncompatibleSnapshot("snapshot learner config differs from the experiment config")
    if mode is RestartMode.CONTINUE:
        return snap
    # reset: keep the learned tables, restart the walk and both clocks
    for tuner in snap.tuners.values():
        st = tuner.state
        st.current = start
        st.prev = None
        st.prev_action = None
        st.prev_energy = None
        st.prev_explored = None
        st.step = 0
    snap.rng_state = None
    snap.hw_state = None
    snap.iterations_done = 0
    snap.tree_root = None
    return snap
