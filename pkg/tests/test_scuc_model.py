import numpy as np
import polars as pl
import pytest

from gridplan.core.exceptions import ConfigError, ModelInfeasibleError
from gridplan.grid_model import apply_investments
from gridplan.milp import SolveStatus, solve_milp
from gridplan.profile_synthesis import DayProfile, RepresentativeProfileSet
from gridplan.scuc_model import (
    SHEDDING_COLUMNS,
    ScucInstance,
    build_scuc,
    classify_buses,
    extract_scuc_solution,
    run_batch,
    solve_scuc,
    write_batch,
)
from tests.factories import enumerate_binaries, make_grid, uniform_profiles

UNIT = {"id": "g", "bus": "n", "p_min": 10.0, "p_max": 100.0, "marginal_cost": 20.0, "online_cost": 50.0, "startup_cost": 100.0}


def view_of(grid, epoch=1):
    return apply_investments(grid)[epoch]


def one_bus(**unit):
    return view_of(make_grid(["n"], generators=[{**UNIT, **unit}]))


def day(loads, ratings=None, renewables=None):
    return DayProfile(1, 1, "WD", dict(ratings or {}), dict(renewables or {}), dict(loads))


def solar_pair(rating=30.0, load_b=50.0):
    """Solar at bus a exporting over one line to a thermal unit and load at bus b."""
    grid = make_grid(
        ["a", "b"],
        lines=[{"id": "ab", "from_bus": "a", "to_bus": "b", "reactance": 0.1, "static_rating": rating}],
        generators=[{"id": "gb", "bus": "b", "p_max": 100.0, "marginal_cost": 30.0}],
        renewables=[{"id": "sa", "bus": "a", "kind": "solar", "capacity": 100.0}],
    )
    profile = day(
        {"a": (20.0,) * 4, "b": (load_b,) * 4},
        ratings={"ab": (rating,) * 4},
        renewables={"sa": (0.0, 80.0, 80.0, 0.0)},
    )
    return ScucInstance(view_of(grid), profile, 6.0, reserve_required=False)


# ==================== PARTITION ====================

def test_classify_buses():
    instance = solar_pair()

    partition = classify_buses(instance.day, instance.view)

    assert ("a", 1) in partition.st1
    assert ("a", 2) in partition.st2
    assert {("b", t) for t in range(1, 5)} <= partition.st1
    assert partition.st1.isdisjoint(partition.st2)
    assert len(partition.st1 | partition.st2) == 8


def test_equal_demand_and_availability_is_a_deficit_bus():
    grid = make_grid(["n"], renewables=[{"id": "w", "bus": "n", "kind": "wind", "capacity": 50.0}])

    partition = classify_buses(day({"n": (30.0, 20.0)}, renewables={"w": (30.0, 50.0)}), view_of(grid))

    assert partition.st1 == {("n", 1)}
    assert partition.st2 == {("n", 2)}


# ==================== SINGLE DAYS ====================

def test_single_unit_commits_and_serves():
    instance = ScucInstance(one_bus(), day({"n": (60.0, 60.0)}), 3.0, reserve_required=False)

    sol = solve_scuc(instance)

    assert sol.objective == pytest.approx(7400.0)
    assert sol.commitment == {("g", 1): 1, ("g", 2): 1}
    assert sol.dispatch[("g", 1)] == pytest.approx(60.0)
    assert sol.penalty == 0.0
    assert all(mw == pytest.approx(0.0, abs=1e-9) for mw in sol.shedding.values())
    assert sol.operating_cost == pytest.approx(7400.0)


def test_short_unit_sheds_the_remainder():
    instance = ScucInstance(one_bus(p_max=40.0), day({"n": (60.0, 60.0)}), 3.0, reserve_required=False)

    sol = solve_scuc(instance)

    assert sol.shedding[("n", 1)] == pytest.approx(20.0)
    assert sol.shedding[("n", 2)] == pytest.approx(20.0)
    assert sol.shed_energy == pytest.approx(120.0)
    assert sol.penalty == pytest.approx(20 * 3 * 2 * 10000.0)
    assert sol.operating_cost + sol.penalty == pytest.approx(sol.objective)


def test_zero_load_keeps_units_off():
    instance = ScucInstance(one_bus(), day({"n": (0.0, 0.0, 0.0)}), 8.0, reserve_required=False)

    sol = solve_scuc(instance)

    assert sol.objective == pytest.approx(0.0)
    assert set(sol.commitment.values()) == {0}


def test_forced_commitment_above_load_is_infeasible():
    instance = ScucInstance(one_bus(), day({"n": (5.0, 5.0)}), 3.0, reserve_required=False)
    problem, vmap = build_scuc(instance)

    result = solve_milp(problem.with_bounds({j: (1.0, 1.0) for j in vmap.commitment.values()}))

    assert result.status is SolveStatus.INFEASIBLE
    with pytest.raises(ModelInfeasibleError):
        extract_scuc_solution(result, vmap, instance)


def test_initial_commitment_waives_the_first_startup():
    cold = ScucInstance(one_bus(), day({"n": (60.0, 60.0)}), 3.0, reserve_required=False)
    warm = ScucInstance(one_bus(), day({"n": (60.0, 60.0)}), 3.0, reserve_required=False, initial_commitment={"g": 1})

    assert solve_scuc(cold).objective - solve_scuc(warm).objective == pytest.approx(100.0)


def test_ramp_limit_forces_shedding():
    instance = ScucInstance(
        one_bus(p_min=0.0, ramp_limit=30.0), day({"n": (30.0, 90.0)}), 12.0, reserve_required=False
    )

    sol = solve_scuc(instance)

    assert sol.dispatch[("g", 2)] - sol.dispatch[("g", 1)] <= 30.0 + 1e-6
    assert sol.shed_energy == pytest.approx(30.0 * 12.0)


def test_matches_commitment_enumeration():
    grid = make_grid(
        ["n"],
        generators=[
            {"id": "a", "bus": "n", "p_min": 20.0, "p_max": 100.0, "marginal_cost": 20.0, "online_cost": 200.0, "startup_cost": 500.0},
            {"id": "b", "bus": "n", "p_min": 10.0, "p_max": 60.0, "marginal_cost": 35.0, "online_cost": 50.0, "startup_cost": 100.0},
        ],
    )
    instance = ScucInstance(view_of(grid), day({"n": (30.0, 120.0, 60.0)}), 8.0, reserve_required=False)
    problem, vmap = build_scuc(instance)

    sol = solve_scuc(instance)

    assert sol.objective == pytest.approx(enumerate_binaries(problem, list(vmap.commitment.values())), rel=1e-6)


def test_shedding_and_curtailment_never_share_a_bus_interval():
    sol = solve_scuc(solar_pair(load_b=150.0))

    assert sol.curtailed_energy > 0
    assert sol.shed_energy > 0
    for key, shed in sol.shedding.items():
        assert shed * sol.curtailment[key] == pytest.approx(0.0, abs=1e-9)


def test_shedding_and_curtailment_stay_within_their_bounds():
    instance = solar_pair(load_b=150.0)
    sol = solve_scuc(instance)
    availability = instance.bus_availability()

    for (bus, t), shed in sol.shedding.items():
        demand = instance.day.loads[bus][t - 1]
        surplus = availability[bus][t - 1] - demand
        assert -1e-9 <= shed <= max(0.0, -surplus) + 1e-6
        assert -1e-9 <= sol.curtailment[(bus, t)] <= max(0.0, surplus) + 1e-6


def test_higher_rating_never_raises_cost():
    tight = solve_scuc(solar_pair(rating=30.0))
    loose = solve_scuc(solar_pair(rating=60.0))

    assert loose.objective <= tight.objective + 1e-6


def test_shed_energy_ignores_a_larger_penalty():
    base = solar_pair(load_b=150.0)
    scaled = ScucInstance(base.view, base.day, base.interval_hours, shed_penalty=10 * base.shed_penalty, reserve_required=False)

    assert solve_scuc(scaled).shed_energy == pytest.approx(solve_scuc(base).shed_energy, abs=1e-6)


def test_reserve_is_carried_by_the_other_unit():
    grid = make_grid(
        ["n"],
        generators=[
            {"id": "a", "bus": "n", "p_max": 100.0, "marginal_cost": 20.0},
            {"id": "b", "bus": "n", "p_max": 100.0, "marginal_cost": 25.0},
        ],
    )
    instance = ScucInstance(view_of(grid), day({"n": (60.0, 60.0)}), 12.0, reserve_required=True)

    sol = solve_scuc(instance)

    assert sol.shed_energy == pytest.approx(0.0, abs=1e-6)
    for t in (1, 2):
        assert sol.reserve[("b", t)] >= sol.dispatch[("a", t)] - 1e-6
        assert sol.reserve[("a", t)] >= sol.dispatch[("b", t)] - 1e-6
        for unit in ("a", "b"):
            assert sol.dispatch[(unit, t)] + sol.reserve[(unit, t)] <= 100.0 + 1e-6


def test_penalty_below_the_floor_is_rejected():
    with pytest.raises(ConfigError, match="shed penalty"):
        ScucInstance(one_bus(), day({"n": (60.0,)}), 24.0, shed_penalty=150.0)


def test_missing_slice_is_rejected():
    with pytest.raises(ValueError, match="no rating slice"):
        ScucInstance(solar_pair().view, day({"a": (1.0,), "b": (1.0,)}, renewables={"sa": (0.0,)}), 24.0)


def random_day(rng):
    buses = ["a", "b"][: int(rng.integers(1, 3))]
    num_units = int(rng.integers(1, 4))
    intervals = int(rng.integers(2, 8 // num_units + 1)) if num_units > 1 else 4
    units = []
    for i in range(num_units):
        p_max = float(rng.uniform(40, 120))
        units.append(
            {
                "id": f"u{i}",
                "bus": str(rng.choice(buses)),
                "p_min": float(rng.uniform(0, 0.4) * p_max),
                "p_max": p_max,
                "marginal_cost": float(rng.uniform(10, 80)),
                "online_cost": float(rng.uniform(0, 300)),
                "startup_cost": float(rng.uniform(0, 800)),
            }
        )
    lines = [{"id": "ab", "from_bus": "a", "to_bus": "b", "reactance": 0.1, "static_rating": 60.0}] if len(buses) == 2 else []
    grid = make_grid(buses, lines=lines, generators=units)
    loads = {bus: tuple(float(v) for v in rng.uniform(0, 90, size=intervals)) for bus in buses}
    ratings = {"ab": (float(rng.uniform(20, 80)),) * intervals} if lines else {}
    return ScucInstance(view_of(grid), day(loads, ratings=ratings), 24.0 / intervals, reserve_required=False)


@pytest.mark.slow
def test_random_days_match_commitment_enumeration():
    rng = np.random.default_rng(47)
    for _ in range(20):
        instance = random_day(rng)
        problem, vmap = build_scuc(instance)

        sol = solve_scuc(instance)

        assert sol.objective == pytest.approx(enumerate_binaries(problem, list(vmap.commitment.values())), rel=1e-6)


# ==================== BATCHES ====================

def tutorial_profiles(grid):
    return uniform_profiles(
        grid,
        renewables={"w1": [30.0, 60.0, 90.0, 40.0], "s1": [0.0, 40.0, 70.0, 10.0]},
        loads={"b2": 80.0, "b3": 100.0, "b4": 50.0, "b5": [130.0, 145.0, 160.0, 140.0]},
        weekend_factor=0.9,
    )


def test_batch_solves_every_typical_day(tutorial_grid):
    views = apply_investments(tutorial_grid)

    batch = run_batch({1: views[1]}, tutorial_profiles(tutorial_grid), tutorial_grid.horizon, reserve_required=False)

    assert len(batch.solutions) == 8
    assert batch.failures == {}
    assert batch.keys == [(1, q, d) for q in (1, 2, 3, 4) for d in ("WD", "WE")]


def test_parallel_batch_matches_serial(tutorial_grid):
    views = {1: apply_investments(tutorial_grid)[1]}
    profiles = tutorial_profiles(tutorial_grid)

    serial = run_batch(views, profiles, tutorial_grid.horizon, reserve_required=False)
    parallel = run_batch(views, profiles, tutorial_grid.horizon, reserve_required=False, workers=4)

    assert serial.keys == parallel.keys
    for key, sol in serial.solutions.items():
        assert parallel.solutions[key].objective == pytest.approx(sol.objective, rel=1e-9)


def test_growth_without_investments_sheds_late(growth_grid, growth_profiles):
    batch = run_batch(apply_investments(growth_grid), growth_profiles, growth_grid.horizon, reserve_required=False)

    shed = {p: sum(sol.shed_energy for key, sol in batch.solutions.items() if key[0] == p) for p in (1, 2, 3)}
    assert batch.failures == {}
    assert shed[1] == pytest.approx(0.0, abs=1e-6)
    assert shed[3] > 0


def test_empty_horizon_gives_an_empty_batch(tutorial_grid):
    batch = run_batch({}, tutorial_profiles(tutorial_grid), tutorial_grid.horizon)

    assert batch.solutions == {} and batch.failures == {}


def test_uncovered_day_is_recorded_not_raised(tutorial_grid):
    full = tutorial_profiles(tutorial_grid)
    first_epoch = RepresentativeProfileSet(
        *(frame.filter(pl.col("epoch") == 1) for frame in (full.line_rating, full.renewable_max, full.load))
    )

    batch = run_batch(apply_investments(tutorial_grid), first_epoch, tutorial_grid.horizon, reserve_required=False)

    assert len(batch.solutions) == 8
    assert len(batch.failures) == 8
    assert all(key[0] == 2 for key in batch.failures)


def test_batch_files(tmp_path, tutorial_grid):
    views = {1: apply_investments(tutorial_grid)[1]}
    batch = run_batch(views, tutorial_profiles(tutorial_grid), tutorial_grid.horizon, reserve_required=False)

    write_batch(batch, tmp_path)

    shedding = pl.read_csv(tmp_path / "shedding.csv")
    assert shedding.columns == SHEDDING_COLUMNS
    assert shedding.height == 8 * 4 * 5
    assert pl.read_csv(tmp_path / "daily_summary.csv").height == 8
    assert pl.read_csv(tmp_path / "quarter_summary.csv")["case"].unique().to_list() == ["FR"]
    assert (tmp_path / "failures.csv").read_text().strip() == "epoch,quarter,day_type,message"
    assert len(list((tmp_path / "days").glob("*.csv"))) == 8


def test_failure_messages_survive_the_file(tmp_path, tutorial_grid):
    full = tutorial_profiles(tutorial_grid)
    first_epoch = RepresentativeProfileSet(
        *(frame.filter(pl.col("epoch") == 1) for frame in (full.line_rating, full.renewable_max, full.load))
    )
    batch = run_batch(apply_investments(tutorial_grid), first_epoch, tutorial_grid.horizon, reserve_required=False)
    batch.failures[(2, 1, "WD")] = 'status "limit", no incumbent, gap 1.5'

    write_batch(batch, tmp_path)

    failures = pl.read_csv(tmp_path / "failures.csv")
    assert failures.columns == ["epoch", "quarter", "day_type", "message"]
    assert failures.height == 8
    assert {
        (epoch, quarter, day_type): message for epoch, quarter, day_type, message in failures.iter_rows()
    } == batch.failures
