"""Tabular Q-learning over the frequency lattice.

One independent table and tuner state exist per runtime situation. The reward
is the normalized energy difference between consecutive measurements, updates
are the standard one-step bootstrap

    Q(s, a) <- Q(s, a) + alpha * (r + gamma * max_a' Q(s', a') - Q(s, a)),

and action selection is epsilon-greedy over the valid (masked) actions with a
deterministic first-maximum tie-break in canonical action order. The table is
initialized to zero everywhere except the stay action at the start state,
which gets a small negative bias so the very first greedy decision is a move.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calltree import RtsId
from .energymodel import EnergySample
from .freqspace import (
    STAY,
    ActionDelta,
    ConfigState,
    FrequencyGrid,
    apply_action,
    valid_actions,
)


class DegenerateEnergy(ValueError):
    """Both energies are zero; the normalized reward is undefined."""


class InvalidEntry(KeyError):
    """The (state, action) pair is not a valid table entry."""


@dataclass(frozen=True)
class LearnerConfig:
    alpha: float = 0.1
    gamma: float = 0.5
    epsilon: float = 0.25
    stay_bias: float = -0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")


@dataclass
class QTable:
    """Action values plus the measurement bookkeeping that feeds seeding.

    q holds an entry for every (state, valid action) pair on the grid.
    last_energy remembers the most recent sample per state; visited is the set
    of states the tuner has ever measured at.
    """

    grid: FrequencyGrid
    q: dict[tuple[ConfigState, ActionDelta], float]
    last_energy: dict[ConfigState, EnergySample] = field(default_factory=dict)
    visited: set[ConfigState] = field(default_factory=set)


@dataclass
class TunerState:
    """Where one tuner is in its measure-update-select cycle.

    The prev_* fields describe the transition in flight (absent before the
    first measurement, all present after it). step counts completed cycles.
    """

    rts: RtsId
    current: ConfigState
    prev: ConfigState | None = None
    prev_action: ActionDelta | None = None
    prev_energy: EnergySample | None = None
    prev_explored: bool | None = None
    step: int = 0


@dataclass(frozen=True)
class StepRecord:
    """One completed cycle: the evaluated transition and its update."""

    step: int
    state_before: ConfigState
    action: ActionDelta
    state_after: ConfigState
    energy_j: float
    reward: float
    q_after: float
    explored: bool


@dataclass
class Tuner:
    """Convenience pairing of a table with its cursor state."""

    table: QTable
    state: TunerState


def init_qtable(grid: FrequencyGrid, start: ConfigState, cfg: LearnerConfig) -> QTable:
    """Fresh table: all zeros, stay at the start state biased to stay_bias."""
    if not grid.contains(start):
        raise ValueError(f"start state {start} is outside the grid")
    q: dict[tuple[ConfigState, ActionDelta], float] = {}
    for s in grid.states():
        for a in valid_actions(grid, s):
            q[(s, a)] = 0.0
    q[(start, STAY)] = cfg.stay_bias
    return QTable(grid=grid, q=q, visited={start})


def compute_reward(e_prev: EnergySample, e_curr: EnergySample) -> float:
    """Normalized energy difference reward.

    r = (E_prev - E_curr) / (0.5 * (E_prev + E_curr))

    Positive when energy dropped. Antisymmetric in its arguments, bounded in
    (-2, 2) for positive energies, zero only for equal energies.
    """
    total = e_prev.joules + e_curr.joules
    if total == 0.0:
        raise DegenerateEnergy("both energies are zero")
    return (e_prev.joules - e_curr.joules) / (0.5 * total)


def update_q(
    table: QTable,
    s_t: ConfigState,
    a_t: ActionDelta,
    reward: float,
    s_next: ConfigState,
    cfg: LearnerConfig,
) -> float:
    """One bootstrap update of Q(s_t, a_t); returns the new value."""
    key = (s_t, a_t)
    if key not in table.q:
        raise InvalidEntry(f"no table entry for {key}")
    best_next = max(table.q[(s_next, a)] for a in valid_actions(table.grid, s_next))
    new_value = table.q[key] + cfg.alpha * (reward + cfg.gamma * best_next - table.q[key])
    table.q[key] = new_value
    return new_value


def select_action(
    table: QTable,
    state: ConfigState,
    cfg: LearnerConfig,
    rng: np.random.Generator,
) -> tuple[ActionDelta, bool]:
    """Epsilon-greedy selection over the valid actions at a state.

    Returns (action, explored). The uniform branch draws over all valid
    actions, greedy included. The epsilon coin is drawn unconditionally so
    runs with different epsilon but the same seed stay aligned.
    """
    actions = valid_actions(table.grid, state)
    if float(rng.random()) < cfg.epsilon:
        return actions[int(rng.integers(len(actions)))], True
    best = actions[0]
    best_q = table.q[(state, best)]
    for a in actions[1:]:
        qv = table.q[(state, a)]
        if qv > best_q:
            best, best_q = a, qv
    return best, False


def seed_from_neighbors(table: QTable, s_new: ConfigState) -> int:
    """Prime a newly visited state's actions from surrounding measurements.

    For each non-stay action leading to a visited neighbor with a recorded
    energy, the action's value becomes the reward of hypothetically moving
    there from s_new, but only while the entry still holds its zero
    initialization; anything already learned is never overwritten. Returns the
    number of entries written.
    """
    e_new = table.last_energy.get(s_new)
    if e_new is None:
        return 0
    seeded = 0
    for a in valid_actions(table.grid, s_new):
        if a == STAY:
            continue
        neighbor = apply_action(table.grid, s_new, a)
        e_nb = table.last_energy.get(neighbor)
        if e_nb is None or neighbor not in table.visited:
            continue
        if table.q[(s_new, a)] == 0.0:
            table.q[(s_new, a)] = compute_reward(e_new, e_nb)
            seeded += 1
    return seeded


def tuner_step(
    ts: TunerState,
    table: QTable,
    e_curr: EnergySample,
    cfg: LearnerConfig,
    rng: np.random.Generator,
) -> tuple[ConfigState, StepRecord | None]:
    """Advance one tuner by one measurement.

    e_curr must have been measured while running at ts.current. The first call
    only stores the initial energy and selects a move (no record). Every later
    call scores the transition in flight, updates its table entry, records the
    new state's energy, seeds a newly visited state from its neighbors, then
    selects the next action.
    """
    record: StepRecord | None = None
    here = ts.current

    if ts.prev is not None:
        assert ts.prev_action is not None and ts.prev_energy is not None
        reward = compute_reward(ts.prev_energy, e_curr)
        q_after = update_q(table, ts.prev, ts.prev_action, reward, here, cfg)
        newly_visited = here not in table.visited
        table.visited.add(here)
        table.last_energy[here] = e_curr
        if newly_visited:
            seed_from_neighbors(table, here)
        ts.step += 1
        record = StepRecord(
            step=ts.step,
            state_before=ts.prev,
            action=ts.prev_action,
            state_after=here,
            energy_j=e_curr.joules,
            reward=reward,
            q_after=q_after,
            explored=bool(ts.prev_explored),
        )
    else:
        # first encounter: remember the baseline measurement at the start
        table.visited.add(here)
        table.last_energy[here] = e_curr

    action, explored = select_action(table, here, cfg, rng)
    ts.prev = here
    ts.prev_action = action
    ts.prev_energy = e_curr
    ts.prev_explored = explored
    ts.current = apply_action(table.grid, here, action)
    return ts.current, record
