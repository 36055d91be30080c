"""Simulated energy measurement.

A surface maps grid states to package power in watts. The meter adds a static
platform offset, integrates power over the region's duration, and applies
multiplicative Gaussian noise calibrated as a fraction of the true value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .freqspace import ConfigState, FrequencyGrid


@dataclass(frozen=True)
class RuntimeModel:
    """Per-invocation duration of a region as a function of the running state.

    With core_sensitivity 0 the duration is constant. Otherwise it scales with
    inverse core frequency relative to the fastest core level, so running
    slower takes proportionally longer:

        duration = base_ms * (f_max_core / f_core) ** core_sensitivity
    """

    base_ms: float
    core_sensitivity: float = 0.0

    def __post_init__(self) -> None:
        if self.base_ms <= 0:
            raise ValueError("base_ms must be positive")
        if self.core_sensitivity < 0:
            raise ValueError("core_sensitivity must be >= 0")

    def duration_ms(self, state: ConfigState, grid: FrequencyGrid) -> float:
        if self.core_sensitivity == 0:
            return self.base_ms
        f_core = grid.core_levels[state.core_idx]
        return self.base_ms * (grid.core_levels[-1] / f_core) ** self.core_sensitivity


@dataclass(frozen=True)
class EnergySample:
    """One energy measurement taken at a state."""

    joules: float
    duration_ms: float
    state: ConfigState

    def __post_init__(self) -> None:
        if self.joules < 0:
            raise ValueError("joules must be >= 0")
        if self.duration_ms <= 0:
            raise ValueError("duration_ms must be positive")


@dataclass(frozen=True)
class BowlSurface:
    """Positive-definite quadratic power bowl over continuous GHz coordinates.

    Strictly positive curvature in both dimensions gives a unique continuous
    minimizer; the grid optimum is whatever lattice point lands lowest.
    """

    min_core_ghz: float
    min_uncore_ghz: float
    curv_core: float
    curv_uncore: float
    base_w: float
    runtime: RuntimeModel = field(default=RuntimeModel(1000.0))

    def __post_init__(self) -> None:
        if self.curv_core <= 0 or self.curv_uncore <= 0:
            raise ValueError("bowl curvatures must be strictly positive")
        if self.base_w <= 0:
            raise ValueError("base_w must be strictly positive")


@dataclass(frozen=True)
class TableSurface:
    """Explicit power table indexed [core_idx][uncore_idx]."""

    powers_w: tuple[tuple[float, ...], ...]
    runtime: RuntimeModel = field(default=RuntimeModel(1000.0))

    def __post_init__(self) -> None:
        if not self.powers_w or not self.powers_w[0]:
            raise ValueError("power table must be non-empty")
        width = len(self.powers_w[0])
        for row in self.powers_w:
            if len(row) != width:
                raise ValueError("power table rows must have equal length")
            if any(p <= 0 for p in row):
                raise ValueError("power table entries must be strictly positive")


EnergySurface = BowlSurface | TableSurface


def surface_power(surface: EnergySurface, state: ConfigState, grid: FrequencyGrid) -> float:
    """True package power in watts at a grid state, before offset and noise."""
    if isinstance(surface, TableSurface):
        if len(surface.powers_w) != grid.n_core or len(surface.powers_w[0]) != grid.n_uncore:
            raise ValueError(
                f"power table shape ({len(surface.powers_w)}, {len(surface.powers_w[0])}) "
                f"does not match grid {grid.shape}"
            )
        return surface.powers_w[state.core_idx][state.uncore_idx]
    f_core, f_uncore = grid.freqs(state)
    return (
        surface.base_w
        + surface.curv_core * (f_core - surface.min_core_ghz) ** 2
        + surface.curv_uncore * (f_uncore - surface.min_uncore_ghz) ** 2
    )


def noiseless_energy_j(
    surface: EnergySurface, state: ConfigState, grid: FrequencyGrid, offset_w: float = 0.0
) -> float:
    """Energy of one invocation at a state with noise disabled."""
    duration = surface.runtime.duration_ms(state, grid)
    return (surface_power(surface, state, grid) + offset_w) * duration / 1000.0


def optimum_state(
    surface: EnergySurface, grid: FrequencyGrid, offset_w: float = 0.0
) -> tuple[ConfigState, float]:
    """Exhaustive scan for the minimum noiseless energy on the grid.

    Ties break toward the lowest core index, then the lowest uncore index,
    which the row-major scan with strict comparison gives for free.
    """
    best: ConfigState | None = None
    best_e = float("inf")
    for s in grid.states():
        e = noiseless_energy_j(surface, s, grid, offset_w)
        if e < best_e:
            best, best_e = s, e
    assert best is not None
    return best, best_e


@dataclass(frozen=True)
class MeterConfig:
    """Measurement model: static platform offset plus relative Gaussian noise."""

    static_offset_w: float = 70.0
    noise_sigma_rel: float = 0.005
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.static_offset_w < 0:
            raise ValueError("static_offset_w must be >= 0")
        if self.noise_sigma_rel < 0:
            raise ValueError("noise_sigma_rel must be >= 0")


class Meter:
    """Stateful meter; owns or borrows the RNG used for noise draws."""

    def __init__(self, config: MeterConfig, rng: np.random.Generator | None = None) -> None:
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)

    def measure(self, surface: EnergySurface, state: ConfigState, grid: FrequencyGrid) -> EnergySample:
        """Measure one invocation at a state.

        joules = (surface power + offset) * duration_s * (1 + n) with
        n ~ Normal(0, noise_sigma_rel), clamped at zero. With noise disabled
        no random draw happens, so repeated calls are identical.
        """
        duration = surface.runtime.duration_ms(state, grid)
        joules = (surface_power(surface, state, grid) + self.config.static_offset_w) * duration / 1000.0
        if self.config.noise_sigma_rel > 0:
            joules *= 1.0 + self.config.noise_sigma_rel * float(self.rng.standard_normal())
        return EnergySample(max(joules, 0.0), duration, state)


def surface_to_dict(surface: EnergySurface) -> dict[str, Any]:
    if isinstance(surface, BowlSurface):
        return {
            "kind": "bowl",
            "min_core_ghz": surface.min_core_ghz,
            "min_uncore_ghz": surface.min_uncore_ghz,
            "curv_core": surface.curv_core,
            "curv_uncore": surface.curv_uncore,
            "base_w": surface.base_w,
        }
    return {"kind": "table", "powers_w": [list(row) for row in surface.powers_w]}


def surface_from_dict(data: dict[str, Any], runtime: RuntimeModel) -> EnergySurface:
    """Parse a surface description; the runtime model is supplied by the caller."""
    try:
        kind = data["kind"]
    except (TypeError, KeyError):
        raise ValueError("surface needs a 'kind' field") from None
    if kind == "bowl":
        try:
            return BowlSurface(
                min_core_ghz=float(data["min_core_ghz"]),
                min_uncore_ghz=float(data["min_uncore_ghz"]),
                curv_core=float(data["curv_core"]),
                curv_uncore=float(data["curv_uncore"]),
                base_w=float(data["base_w"]),
                runtime=runtime,
            )
        except KeyError as exc:
            raise ValueError(f"bowl surface is missing {exc}") from None
    if kind == "table":
        rows = data.get("powers_w")
        if not isinstance(rows, list):
            raise ValueError("table surface needs a 'powers_w' array")
        return TableSurface(
            powers_w=tuple(tuple(float(p) for p in row) for row in rows),
            runtime=runtime,
        )
    raise ValueError(f"unknown surface kind {kind!r}")
