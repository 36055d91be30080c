import pytest

from freqtune import (
    ALL_ACTIONS,
    STAY,
    ActionDelta,
    ConfigState,
    EmptyDimension,
    InvalidAction,
    apply_action,
    chebyshev,
    default_grid,
    make_grid,
    negate,
    valid_actions,
)


def test_make_grid_sorts_and_dedups():
    g = make_grid([1.2, 1.0, 1.2, 1.1], [2.0, 2.0])
    assert g.core_levels == (1.0, 1.1, 1.2)
    assert g.uncore_levels == (2.0,)


def test_empty_dimension_rejected():
    with pytest.raises(EmptyDimension):
        make_grid([], [2.0])
    with pytest.raises(EmptyDimension):
        make_grid([1.0], [])


def test_default_grid_shape_and_endpoints():
    g = default_grid()
    assert g.shape == (14, 19)
    assert g.core_levels[0] == 1.2 and g.core_levels[-1] == 2.5
    assert g.uncore_levels[0] == 1.2 and g.uncore_levels[-1] == 3.0
    assert g.size == 14 * 19


def test_canonical_action_order():
    assert ALL_ACTIONS == tuple(
        ActionDelta(dc, du) for dc in (-1, 0, 1) for du in (-1, 0, 1)
    )
    assert STAY == ActionDelta(0, 0)
    assert negate(ActionDelta(1, -1)) == ActionDelta(-1, 1)


def test_action_delta_validation():
    with pytest.raises(InvalidAction):
        ActionDelta(2, 0)
    with pytest.raises(InvalidAction):
        ActionDelta(0, -2)


def test_valid_actions_by_position(grid3):
    corner = valid_actions(grid3, ConfigState(0, 0))
    assert len(corner) == 4
    edge = valid_actions(grid3, ConfigState(0, 1))
    assert len(edge) == 6
    interior = valid_actions(grid3, ConfigState(1, 1))
    assert interior == ALL_ACTIONS
    # always a subsequence of the canonical order
    idx = [ALL_ACTIONS.index(a) for a in edge]
    assert idx == sorted(idx)


def test_apply_action(grid3):
    s = apply_action(grid3, ConfigState(1, 1), ActionDelta(-1, 1))
    assert s == ConfigState(0, 2)
    with pytest.raises(InvalidAction):
        apply_action(grid3, ConfigState(0, 0), ActionDelta(-1, 0))


def test_states_row_major(grid3):
    seq = list(grid3.states())
    assert seq[0] == ConfigState(0, 0)
    assert seq[1] == ConfigState(0, 1)
    assert seq[3] == ConfigState(1, 0)
    assert len(seq) == 9


def test_state_at_lookup(grid3):
    assert grid3.state_at(1.1, 2.2) == ConfigState(1, 2)
    # tolerant to float representation wobble
    assert grid3.state_at(1.1 + 1e-12, 2.2) == ConfigState(1, 2)
    with pytest.raises(ValueError):
        grid3.state_at(1.15, 2.2)


def test_freqs_and_contains(grid3):
    assert grid3.freqs(ConfigState(2, 0)) == (1.2, 2.0)
    assert grid3.contains(ConfigState(2, 2))
    assert not grid3.contains(ConfigState(3, 0))


def test_chebyshev():
    assert chebyshev(ConfigState(0, 0), ConfigState(0, 0)) == 0
    assert chebyshev(ConfigState(1, 4), ConfigState(3, 5)) == 2
    assert chebyshev(ConfigState(3, 5), ConfigState(1, 4)) == 2
