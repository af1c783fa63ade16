import shutil
from pathlib import Path

import pytest

from gridplan.grid_model import load_grid
from gridplan.profile_synthesis import build_representative, load_loads, load_weather
from tests.factories import make_grid, make_horizon, uniform_profiles

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture
def tutorial_grid():
    return load_grid(DATA_DIR / "tutorial" / "grid.json")


@pytest.fixture
def growth_grid():
    return load_grid(DATA_DIR / "growth" / "grid.json")


@pytest.fixture
def growth_profiles(growth_grid):
    """Representative days of the load-growth study (constant weather, growth 1.0, 1.2, 1.5)."""
    weather = load_weather(DATA_DIR / "growth" / "weather.csv", growth_grid.horizon.interval_hours)
    loads = load_loads(DATA_DIR / "growth" / "load.csv")
    return build_representative(weather, loads, growth_grid, load_growth=[1.0, 1.2, 1.5])


@pytest.fixture
def study_copy(tmp_path):
    """Copy a bundled study into tmp_path and return the path of its study.json."""

    def copy(name: str) -> Path:
        target = tmp_path / name
        shutil.copytree(DATA_DIR / name, target, ignore=shutil.ignore_patterns("output"))
        return target / "study.json"

    return copy


@pytest.fixture
def two_bus_grid():
    """Cheap unit at bus 1, expensive unit and 80 MW load at bus 2, one candidate."""

    def build(existing_rating: float = 50.0, **horizon):
        return make_grid(
            ["1", "2"],
            lines=[
                {"id": "e1", "from_bus": "1", "to_bus": "2", "reactance": 0.1, "static_rating": existing_rating},
                {
                    "id": "c1",
                    "from_bus": "1",
                    "to_bus": "2",
                    "reactance": 0.1,
                    "static_rating": 50.0,
                    "candidate": True,
                    "construction_cost_musd": 1.0,
                },
            ],
            generators=[
                {"id": "cheap", "bus": "1", "p_max": 100.0, "marginal_cost": 10.0},
                {"id": "dear", "bus": "2", "p_max": 100.0, "marginal_cost": 80.0},
            ],
            horizon=make_horizon(**horizon),
        )

    return build


@pytest.fixture
def climate_varying():
    """
    Solar at A behind a 40 MVA line to an 80 MW load at B.

    Availability peaks at 80 MW for half the day, so only the time-varying model
    sees the value of the candidate line; its mean of 40 MW fits the existing line.
    """
    grid = make_grid(
        ["A", "B"],
        lines=[
            {"id": "e1", "from_bus": "A", "to_bus": "B", "reactance": 0.1, "static_rating": 40.0},
            {
                "id": "c1",
                "from_bus": "A",
                "to_bus": "B",
                "reactance": 0.1,
                "static_rating": 40.0,
                "candidate": True,
                "construction_cost_musd": 1.0,
            },
        ],
        generators=[{"id": "gB", "bus": "B", "p_max": 200.0, "marginal_cost": 50.0}],
        renewables=[{"id": "sA", "bus": "A", "kind": "solar", "capacity": 100.0}],
    )
    profiles = uniform_profiles(grid, renewables={"sA": [0.0, 80.0, 80.0, 0.0]}, loads={"B": 80.0})
    return grid, profiles
