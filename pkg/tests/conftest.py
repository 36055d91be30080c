"""Shared fixtures and builders for the test suite."""

from pathlib import Path

import pytest

from freqtune import ConfigState, EnergySample, make_grid

SPECS = Path(__file__).resolve().parent.parent / "specs"


def sample(joules: float, state: ConfigState = ConfigState(0, 0), duration_ms: float = 100.0) -> EnergySample:
    return EnergySample(joules=joules, duration_ms=duration_ms, state=state)


def quick_spec_data(**over) -> dict:
    """A small 4x3 experiment that converges in a handful of steps.

    The table minimum sits in the corner (1.0, 2.0); start is two steps away.
    Tests tweak the returned dict before parsing it.
    """
    data = {
        "grid": {"core_ghz": [1.0, 1.1, 1.2, 1.3], "uncore_ghz": [2.0, 2.1, 2.2]},
        "learner": {"alpha": 0.1, "gamma": 0.5, "epsilon": 0.25, "stay_bias": -0.1},
        "meter": {"static_offset_w": 70.0, "noise_sigma_rel": 0.005},
        "processes": 1,
        "iterations": 40,
        "start": {"core_ghz": 1.2, "uncore_ghz": 2.1},
        "default": {"core_ghz": 1.3, "uncore_ghz": 2.2},
        "regions": [
            {
                "path": ["work"],
                "duration_ms": 1000.0,
                "surface": {
                    "kind": "table",
                    "powers_w": [
                        [30.0, 45.0, 60.0],
                        [50.0, 65.0, 80.0],
                        [70.0, 85.0, 100.0],
                        [90.0, 105.0, 120.0],
                    ],
                },
            }
        ],
        "seed": 3,
    }
    data.update(over)
    return data


@pytest.fixture
def grid3():
    return make_grid([1.0, 1.1, 1.2], [2.0, 2.1, 2.2])
