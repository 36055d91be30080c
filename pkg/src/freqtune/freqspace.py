"""Discrete core/uncore frequency lattice and the king-move action geometry.

States are pure grid indices; frequencies in GHz appear only at the edges
(config parsing, energy surfaces, output files). Keeping the learner on
integer indices avoids floating-point identity problems in table keys.
"""

from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass


class EmptyDimension(ValueError):
    """A frequency dimension has no levels."""


class InvalidAction(ValueError):
    """The action is malformed or would leave the grid."""


@dataclass(frozen=True)
class ConfigState:
    """A point on the lattice: indices into the core and uncore level lists."""

    core_idx: int
    uncore_idx: int


@dataclass(frozen=True)
class ActionDelta:
    """One king move on the lattice. (0, 0) is the stay action."""

    core_delta: int
    uncore_delta: int

    def __post_init__(self) -> None:
        if self.core_delta not in (-1, 0, 1) or self.uncore_delta not in (-1, 0, 1):
            raise InvalidAction(f"action deltas must be -1, 0 or +1, got {self!r}")


#: The nine actions in canonical row-major order over (core_delta, uncore_delta).
#: Every deterministic tie-break in the package iterates in this order and keeps
#: the first maximum.
ALL_ACTIONS: tuple[ActionDelta, ...] = tuple(
    ActionDelta(dc, du) for dc in (-1, 0, 1) for du in (-1, 0, 1)
)

STAY = ActionDelta(0, 0)


def negate(action: ActionDelta) -> ActionDelta:
    """The opposite move; applying an action then its negation is a no-op."""
    return ActionDelta(-action.core_delta, -action.uncore_delta)


def chebyshev(a: ConfigState, b: ConfigState) -> int:
    """King-move distance between two states: the number of steps apart."""
    return max(abs(a.core_idx - b.core_idx), abs(a.uncore_idx - b.uncore_idx))


@dataclass(frozen=True)
class FrequencyGrid:
    """Core x uncore frequency lattice with levels in GHz, strictly ascending."""

    core_levels: tuple[float, ...]
    uncore_levels: tuple[float, ...]

    def __post_init__(self) -> None:
        for name, levels in (("core", self.core_levels), ("uncore", self.uncore_levels)):
            if not levels:
                raise EmptyDimension(f"{name} dimension has no frequency levels")
            if any(b <= a for a, b in zip(levels, levels[1:])):
                raise ValueError(f"{name} levels must be strictly increasing: {levels}")

    @property
    def n_core(self) -> int:
        return len(self.core_levels)

    @property
    def n_uncore(self) -> int:
        return len(self.uncore_levels)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_core, self.n_uncore)

    @property
    def size(self) -> int:
        return self.n_core * self.n_uncore

    def contains(self, state: ConfigState) -> bool:
        return 0 <= state.core_idx < self.n_core and 0 <= state.uncore_idx < self.n_uncore

    def freqs(self, state: ConfigState) -> tuple[float, float]:
        """GHz pair for a state."""
        if not self.contains(state):
            raise ValueError(f"{state} is outside the {self.shape} grid")
        return (self.core_levels[state.core_idx], self.uncore_levels[state.uncore_idx])

    def states(self) -> Iterator[ConfigState]:
        """All states in row-major order (core index outer, uncore inner)."""
        for c in range(self.n_core):
            for u in range(self.n_uncore):
                yield ConfigState(c, u)

    def state_at(self, core_ghz: float, uncore_ghz: float, tol: float = 1e-9) -> ConfigState:
        """Look up the state whose frequencies match within tol."""
        c = _find_level(self.core_levels, core_ghz, tol)
        u = _find_level(self.uncore_levels, uncore_ghz, tol)
        if c is None or u is None:
            raise ValueError(f"({core_ghz}, {uncore_ghz}) GHz is not on the grid")
        return ConfigState(c, u)


def _find_level(levels: tuple[float, ...], value: float, tol: float) -> int | None:
    for i, lv in enumerate(levels):
        if abs(lv - value) <= tol:
            return i
    return None


def make_grid(core_ghz: Sequence[float], uncore_ghz: Sequence[float]) -> FrequencyGrid:
    """Build a grid from raw level lists, sorting and deduplicating each dimension."""
    if not core_ghz or not uncore_ghz:
        raise EmptyDimension("both frequency dimensions need at least one level")
    return FrequencyGrid(
        core_levels=tuple(sorted({float(x) for x in core_ghz})),
        uncore_levels=tuple(sorted({float(x) for x in uncore_ghz})),
    )


def default_grid() -> FrequencyGrid:
    """Core 1.2-2.5 GHz and uncore 1.2-3.0 GHz in 0.1 GHz steps (14 x 19 states)."""
    return FrequencyGrid(
        core_levels=tuple(round(1.2 + 0.1 * i, 1) for i in range(14)),
        uncore_levels=tuple(round(1.2 + 0.1 * i, 1) for i in range(19)),
    )


def valid_actions(grid: FrequencyGrid, state: ConfigState) -> tuple[ActionDelta, ...]:
    """Actions that keep the state on the grid, in canonical order.

    Boundary handling is masking, not clamping: an off-grid move is simply
    absent from the result. The stay action is always present.
    """
    return tuple(
        a
        for a in ALL_ACTIONS
        if 0 <= state.core_idx + a.core_delta < grid.n_core
        and 0 <= state.uncore_idx + a.uncore_delta < grid.n_uncore
    )


def apply_action(grid: FrequencyGrid, state: ConfigState, action: ActionDelta) -> ConfigState:
    """Move one king step; raises InvalidAction if the move leaves the grid."""
    nxt = ConfigState(state.core_idx + action.core_delta, state.uncore_idx + action.uncore_delta)
    if not grid.contains(nxt):
        raise InvalidAction(f"{action} from {state} leaves the {grid.shape} grid")
    return nxt
