import numpy as np
import pytest

from freqtune import (
    BowlSurface,
    ConfigState,
    EnergySample,
    Meter,
    MeterConfig,
    RuntimeModel,
    TableSurface,
    make_grid,
    noiseless_energy_j,
    optimum_state,
    surface_from_dict,
    surface_power,
    surface_to_dict,
)

RT = RuntimeModel(base_ms=1000.0)


def test_worked_example_150_joules(grid3):
    """An 80 W cell plus the 70 W static offset over one second is 150 J."""
    rows = tuple(tuple(80.0 for _ in range(3)) for _ in range(3))
    surf = TableSurface(powers_w=rows, runtime=RT)
    state = ConfigState(1, 1)
    assert noiseless_energy_j(surf, state, grid3, offset_w=70.0) == pytest.approx(150.0)

    meter = Meter(MeterConfig(static_offset_w=70.0, noise_sigma_rel=0.0))
    got = meter.measure(surf, state, grid3)
    assert got.joules == pytest.approx(150.0)
    assert got.duration_ms == 1000.0
    assert got.state == state


def test_sigma_zero_consumes_no_draws(grid3):
    surf = TableSurface(powers_w=tuple(tuple(80.0 for _ in range(3)) for _ in range(3)), runtime=RT)
    rng = np.random.Generator(np.random.PCG64(11))
    meter = Meter(MeterConfig(noise_sigma_rel=0.0), rng=rng)
    meter.measure(surf, ConfigState(0, 0), grid3)
    after = rng.random()
    assert after == np.random.Generator(np.random.PCG64(11)).random()


def test_bowl_power_formula(grid3):
    surf = BowlSurface(
        min_core_ghz=1.1, min_uncore_ghz=2.1, curv_core=10.0, curv_uncore=20.0,
        base_w=40.0, runtime=RT,
    )
    # at the minimum only the base remains
    assert surface_power(surf, ConfigState(1, 1), grid3) == pytest.approx(40.0)
    # one step off in each dimension: 40 + 10*0.01 + 20*0.01
    assert surface_power(surf, ConfigState(0, 0), grid3) == pytest.approx(40.3)


def test_table_dims_must_match_grid(grid3):
    surf = TableSurface(powers_w=((50.0, 50.0), (50.0, 50.0)), runtime=RT)
    with pytest.raises(ValueError):
        surface_power(surf, ConfigState(0, 0), grid3)


def test_validation_rejects_bad_values():
    with pytest.raises(ValueError):
        BowlSurface(1.0, 2.0, curv_core=0.0, curv_uncore=1.0, base_w=40.0, runtime=RT)
    with pytest.raises(ValueError):
        TableSurface(powers_w=((0.0,),), runtime=RT)
    with pytest.raises(ValueError):
        TableSurface(powers_w=((50.0, 60.0), (50.0,)), runtime=RT)  # ragged
    with pytest.raises(ValueError):
        EnergySample(joules=-1.0, duration_ms=10.0, state=ConfigState(0, 0))
    with pytest.raises(ValueError):
        RuntimeModel(base_ms=0.0)


def test_runtime_scaling(grid3):
    flat = RuntimeModel(base_ms=500.0, core_sensitivity=0.0)
    assert flat.duration_ms(ConfigState(0, 0), grid3) == 500.0
    scaled = RuntimeModel(base_ms=500.0, core_sensitivity=1.0)
    # slowest core runs (f_max / f) times longer
    assert scaled.duration_ms(ConfigState(0, 0), grid3) == pytest.approx(500.0 * 1.2 / 1.0)
    assert scaled.duration_ms(ConfigState(2, 0), grid3) == pytest.approx(500.0)


def test_noise_statistics(grid3):
    surf = TableSurface(powers_w=tuple(tuple(80.0 for _ in range(3)) for _ in range(3)), runtime=RT)
    rng = np.random.Generator(np.random.PCG64(5))
    meter = Meter(MeterConfig(static_offset_w=70.0, noise_sigma_rel=0.02), rng=rng)
    xs = np.array([meter.measure(surf, ConfigState(1, 1), grid3).joules for _ in range(3000)])
    assert xs.mean() == pytest.approx(150.0, rel=0.005)
    assert xs.std() / 150.0 == pytest.approx(0.02, rel=0.15)


def test_noise_clamps_at_zero(grid3):
    surf = TableSurface(powers_w=tuple(tuple(80.0 for _ in range(3)) for _ in range(3)), runtime=RT)
    rng = np.random.Generator(np.random.PCG64(7))
    meter = Meter(MeterConfig(static_offset_w=0.0, noise_sigma_rel=5.0), rng=rng)
    xs = [meter.measure(surf, ConfigState(0, 0), grid3).joules for _ in range(200)]
    assert min(xs) == 0.0
    assert all(x >= 0.0 for x in xs)


def test_optimum_matches_exhaustive_oracle():
    grid = make_grid([1.0, 1.1, 1.2, 1.3, 1.4], [2.0, 2.1, 2.2, 2.3])
    rng = np.random.Generator(np.random.PCG64(19))
    powers = tuple(tuple(float(rng.uniform(20, 200)) for _ in range(4)) for _ in range(5))
    surf = TableSurface(powers_w=powers, runtime=RT)
    got_state, got_e = optimum_state(surf, grid, offset_w=70.0)
    oracle = min(
        ((noiseless_energy_j(surf, s, grid, 70.0), s.core_idx, s.uncore_idx) for s in grid.states()),
    )
    assert (got_state.core_idx, got_state.uncore_idx) == oracle[1:]
    assert got_e == pytest.approx(oracle[0])


def test_optimum_tie_breaks_low_core_then_uncore(grid3):
    # two cells share the minimum; the earlier row-major one wins
    rows = [[90.0, 90.0, 90.0] for _ in range(3)]
    rows[0][2] = 10.0
    rows[2][0] = 10.0
    surf = TableSurface(powers_w=tuple(tuple(r) for r in rows), runtime=RT)
    state, _ = optimum_state(surf, grid3)
    assert state == ConfigState(0, 2)


def test_surface_dict_round_trip(grid3):
    bowl = BowlSurface(1.1, 2.0, 12.0, 30.0, 42.0, runtime=RuntimeModel(800.0, 1.0))
    back = surface_from_dict(surface_to_dict(bowl), bowl.runtime)
    assert back == bowl

    table = TableSurface(powers_w=((50.0, 60.0), (70.0, 80.0)), runtime=RT)
    back = surface_from_dict(surface_to_dict(table), RT)
    assert back == table

    with pytest.raises(ValueError):
        surface_from_dict({"kind": "volcano"}, RT)
