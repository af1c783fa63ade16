import logging
import statistics
from datetime import datetime

import numpy as np
import polars as pl
import pytest
from polars.testing import assert_frame_equal

from gridplan.core.exceptions import ConfigError, CoverageError, ProfileFormatError
from gridplan.profile_synthesis import (
    LoadSeries,
    WeatherSeries,
    build_representative,
    dynamic_rating,
    export_profiles,
    extrapolate_wind_speed,
    import_profiles,
    line_weather,
    monthly_line_ratings,
    representative_load_series,
    solar_power,
    wind_power,
)
from gridplan.schemas.grid import RenewableKind
from gridplan.schemas.profiles import DlrModel, DlrParams, PowerCurve, SolarPanel, TerminalPolicy, WeatherSample
from tests.factories import make_grid, make_horizon, uniform_profiles

CURVE = PowerCurve(v_cutin=3, v_rated=12, v_cutout=25, capacity=100)
PANEL = SolarPanel(capacity=50, f_sw=0.85, f_lw=0.05, g_ref=1000)
DEFAULT_DLR = DlrParams(base_rating=100.0)

# one weekday per quarter, plus a second weekday in quarter 1
DAYS = ["2030-01-16", "2030-01-17", "2030-04-16", "2030-07-16", "2030-10-16"]


def sample(location="A", temperature=25.0, wind=0.6, shortwave=0.0, longwave=0.0, when="2030-01-16T00:00:00"):
    return WeatherSample(
        timestamp=when,
        location_id=location,
        temperature=temperature,
        wind_speed_10m=wind,
        shortwave=shortwave,
        longwave=longwave,
    )


@pytest.fixture
def small_grid():
    return make_grid(
        ["A", "B"],
        lines=[{"id": "e1", "from_bus": "A", "to_bus": "B", "reactance": 0.1, "static_rating": 100.0}],
        generators=[{"id": "g", "bus": "A", "p_max": 200.0, "marginal_cost": 10.0}],
        renewables=[
            {"id": "wA", "bus": "A", "kind": "wind", "capacity": 100.0},
            {"id": "sB", "bus": "B", "kind": "solar", "capacity": 50.0},
        ],
        horizon=make_horizon(weekdays_per_quarter=91, weekend_days_per_quarter=0),
    )


def varied_weather(skip=None):
    """Deterministic but uneven weather at A and B on every day of DAYS."""
    samples = []
    for d, day in enumerate(DAYS):
        for t in range(4):
            for k, location in enumerate(("A", "B")):
                if skip == (location, day, t):
                    continue
                samples.append(
                    sample(
                        location=location,
                        temperature=10.0 + 3 * d + 2 * t + 4 * k,
                        wind=1.0 + d + 1.5 * t - k,
                        shortwave=[0.0, 600.0, 900.0, 100.0][t] * (1 + 0.1 * d),
                        longwave=300.0 + 10 * t,
                        when=f"{day}T{6 * t:02d}:00:00",
                    )
                )
    return WeatherSeries.from_samples(samples, step_hours=6.0)


def weekday_loads(values_by_day=None):
    values_by_day = values_by_day or {}
    records = []
    for day in DAYS:
        values = values_by_day.get(day, [50.0, 60.0, 70.0, 55.0])
        records.extend((f"{day}T{6 * t:02d}:00:00", "B", values[t]) for t in range(4))
    return LoadSeries.from_records(records)


# ==================== PHYSICAL MODELS ====================

def test_wind_speed_extrapolation():
    assert extrapolate_wind_speed(5.0, 10, 80, 0.03) == pytest.approx(6.790, abs=1e-3)
    assert extrapolate_wind_speed(0.0, 10, 80, 0.03) == 0.0
    assert extrapolate_wind_speed(7.2, 10, 10, 0.5) == pytest.approx(7.2)


def test_wind_speed_extrapolation_rejects_bad_input():
    with pytest.raises(ValueError):
        extrapolate_wind_speed(-1.0, 10, 80, 0.03)
    with pytest.raises(ValueError):
        extrapolate_wind_speed(5.0, 10, 80, 0.0)


def test_wind_speed_grows_with_hub_height():
    speeds = [extrapolate_wind_speed(5.0, 10, h, 0.03) for h in (20, 40, 80, 120)]
    assert speeds == sorted(speeds)


def test_wind_speed_is_linear_in_the_reference_speed():
    rng = np.random.default_rng(1)
    for v, k, h_ref, h_hub, z_0 in zip(
        rng.uniform(0, 30, 1000),
        rng.uniform(0, 3, 1000),
        rng.uniform(2, 50, 1000),
        rng.uniform(2, 150, 1000),
        rng.uniform(0.001, 1, 1000),
    ):
        scaled = extrapolate_wind_speed(k * v, h_ref, h_hub, z_0)
        assert scaled == pytest.approx(k * extrapolate_wind_speed(v, h_ref, h_hub, z_0), rel=1e-9, abs=1e-12)
        assert extrapolate_wind_speed(v, h_ref, h_ref, z_0) == pytest.approx(v, rel=1e-12, abs=1e-12)


def test_wind_power_curve():
    assert wind_power(2.0, CURVE) == 0.0
    assert wind_power(12.0, CURVE) == 100.0
    assert wind_power(7.0, CURVE) == pytest.approx(18.577, abs=1e-3)
    assert wind_power(26.0, CURVE) == 0.0


def test_wind_power_is_monotone_below_cut_out():
    outputs = [wind_power(v / 2, CURVE) for v in range(0, 50)]
    assert outputs == sorted(outputs)
    assert all(0.0 <= p <= CURVE.capacity for p in outputs)


def test_wind_power_is_continuous_at_cut_in_and_rated_speed():
    rng = np.random.default_rng(7)
    for _ in range(200):
        v_cutin = float(rng.uniform(1, 5))
        v_rated = v_cutin + float(rng.uniform(3, 12))
        curve = PowerCurve(
            v_cutin=v_cutin,
            v_rated=v_rated,
            v_cutout=v_rated + float(rng.uniform(5, 15)),
            capacity=float(rng.uniform(1, 500)),
        )
        for v in (curve.v_cutin, curve.v_rated):
            assert wind_power(v - 1e-12, curve) == pytest.approx(wind_power(v + 1e-12, curve), abs=1e-9)


def test_power_curve_ordering_is_validated():
    with pytest.raises(ValueError, match="ordering"):
        PowerCurve(v_cutin=12, v_rated=3, v_cutout=25, capacity=100)


def test_solar_power():
    assert solar_power(0.0, 0.0, PANEL) == 0.0
    assert solar_power(800.0, 400.0, PANEL) == pytest.approx(35.0)
    assert solar_power(1500.0, 0.0, PANEL) == 50.0


def test_line_weather_policies():
    a = sample("A", temperature=30.0, wind=4.0, shortwave=800.0, longwave=300.0)
    b = sample("B", temperature=34.0, wind=2.0, shortwave=900.0, longwave=350.0)

    worst = line_weather(a, b, TerminalPolicy.CONSERVATIVE)
    mean = line_weather(a, b, TerminalPolicy.AVERAGE)

    assert (worst.temperature, worst.wind_speed_10m, worst.shortwave) == (34.0, 2.0, 900.0)
    assert (mean.temperature, mean.wind_speed_10m, mean.shortwave) == (32.0, 3.0, 850.0)
    for policy in TerminalPolicy:
        same = line_weather(a, a, policy)
        assert (same.temperature, same.wind_speed_10m, same.shortwave) == (30.0, 4.0, 800.0)


def test_line_weather_needs_matching_timestamps():
    with pytest.raises(ValueError, match="timestamps"):
        line_weather(sample("A"), sample("B", when="2030-01-16T06:00:00"))


def test_dynamic_rating_examples():
    assert dynamic_rating(sample(temperature=25.0, wind=0.6, shortwave=0.0), DEFAULT_DLR) == pytest.approx(100.0)
    assert dynamic_rating(sample(temperature=35.0, wind=0.6, shortwave=1000.0), DEFAULT_DLR) == pytest.approx(90.25)
    assert dynamic_rating(sample(temperature=5.0, wind=5.0, shortwave=0.0), DEFAULT_DLR) == pytest.approx(114.84, abs=0.01)


def test_dynamic_rating_monotone_and_clipped():
    by_temperature = [dynamic_rating(sample(temperature=t), DEFAULT_DLR) for t in range(-20, 60, 5)]
    by_wind = [dynamic_rating(sample(wind=v), DEFAULT_DLR) for v in range(0, 30)]
    by_sun = [dynamic_rating(sample(shortwave=s), DEFAULT_DLR) for s in range(0, 1400, 100)]

    assert by_temperature == sorted(by_temperature, reverse=True)
    assert by_wind == sorted(by_wind)
    assert by_sun == sorted(by_sun, reverse=True)
    for value in by_temperature + by_wind + by_sun:
        assert 50.0 <= value <= 150.0


def test_dynamic_rating_stays_positive_with_zero_floor():
    params = DlrParams(base_rating=100.0, f_lo=0.0, temp_coeff=0.05)
    assert dynamic_rating(sample(temperature=60.0, shortwave=1000.0), params) > 0


def test_dynamic_rating_properties_hold_for_random_coefficients():
    rng = np.random.default_rng(11)
    for _ in range(200):
        params = DlrParams(
            base_rating=float(rng.uniform(10, 1000)),
            temp_coeff=float(rng.uniform(0, 0.01)),
            temp_ref=float(rng.uniform(15, 35)),
            wind_coeff=float(rng.uniform(0, 0.1)),
            wind_ref=float(rng.uniform(0, 2)),
            wind_cap=float(rng.uniform(2, 20)),
            solar_coeff=float(rng.uniform(0, 0.2)),
            solar_ref=float(rng.uniform(500, 1500)),
            f_lo=float(rng.uniform(0, 1)),
            f_hi=float(rng.uniform(1, 2)),
        )
        temperature, wind, sun = float(rng.uniform(-60, 60)), float(rng.uniform(0, 30)), float(rng.uniform(0, 1400))
        by_temperature = [
            dynamic_rating(sample(temperature=float(t), wind=wind, shortwave=sun), params)
            for t in np.sort(rng.uniform(-60, 60, 20))
        ]
        by_wind = [
            dynamic_rating(sample(temperature=temperature, wind=float(v), shortwave=sun), params)
            for v in np.sort(rng.uniform(0, 30, 20))
        ]
        by_sun = [
            dynamic_rating(sample(temperature=temperature, wind=wind, shortwave=float(s)), params)
            for s in np.sort(rng.uniform(0, 1400, 20))
        ]
        above_cap = [
            dynamic_rating(sample(temperature=temperature, wind=float(v), shortwave=sun), params)
            for v in rng.uniform(params.wind_cap, params.wind_cap + 30, 10)
        ]

        assert all(a >= b - 1e-9 for a, b in zip(by_temperature, by_temperature[1:]))
        assert all(a <= b + 1e-9 for a, b in zip(by_wind, by_wind[1:]))
        assert all(a >= b - 1e-9 for a, b in zip(by_sun, by_sun[1:]))
        assert above_cap == pytest.approx([above_cap[0]] * len(above_cap), rel=1e-12)
        for value in by_temperature + by_wind + by_sun:
            assert 0 < value
            assert params.f_lo * params.base_rating - 1e-9 <= value <= params.f_hi * params.base_rating + 1e-9


# ==================== REPRESENTATIVE DAYS ====================

def test_representative_values_are_plain_means(small_grid):
    weather = varied_weather()
    profiles = build_representative(weather, weekday_loads(), small_grid)

    by_quarter = {1: DAYS[:2], 2: [DAYS[2]], 3: [DAYS[3]], 4: [DAYS[4]]}
    raw = {
        (s["location_id"], s["timestamp"]): s
        for s in weather.frame.select(
            "location_id", "timestamp", "temperature_c", "wind_speed_10m_mps", "shortwave_wm2", "longwave_wm2"
        ).iter_rows(named=True)
    }

    def at(location, day, t):
        row = raw[(location, f"{day}T{6 * t:02d}:00:00")]
        return sample(
            location,
            row["temperature_c"],
            row["wind_speed_10m_mps"],
            row["shortwave_wm2"],
            row["longwave_wm2"],
            when=row["timestamp"],
        )

    plant_a, plant_b = small_grid.renewables
    for quarter, days in by_quarter.items():
        for t in range(4):
            ratings = [dynamic_rating(line_weather(at("A", d, t), at("B", d, t)), DEFAULT_DLR) for d in days]
            hub_speeds = [
                extrapolate_wind_speed(
                    at("A", d, t).wind_speed_10m, plant_a.reference_height_m, plant_a.hub_height_m, plant_a.roughness_m
                )
                for d in days
            ]
            winds = [wind_power(v, plant_a.power_curve()) for v in hub_speeds]
            suns = [solar_power(at("B", d, t).shortwave, at("B", d, t).longwave, plant_b.solar_panel()) for d in days]
            assert profiles.rating("e1", 1, quarter, t + 1) == pytest.approx(statistics.mean(ratings))
            assert profiles.renewable("wA", 1, quarter, t + 1) == pytest.approx(statistics.mean(winds))
            assert profiles.renewable("sB", 1, quarter, t + 1) == pytest.approx(statistics.mean(suns))


def test_representative_values_lie_within_the_source_days(small_grid):
    rng = np.random.default_rng(5)
    days = [f"2030-{month:02d}-{day:02d}" for month in range(1, 13) for day in (3, 11, 19)]
    samples = [
        sample(
            location,
            temperature=float(rng.uniform(-20, 45)),
            wind=float(rng.uniform(0, 20)),
            shortwave=float(rng.uniform(0, 1100)),
            longwave=float(rng.uniform(200, 450)),
            when=f"{day}T{6 * t:02d}:00:00",
        )
        for day in days
        for t in range(4)
        for location in ("A", "B")
    ]
    profiles = build_representative(WeatherSeries.from_samples(samples, 6.0), weekday_loads(), small_grid)

    at = {(s.location_id, s.timestamp.strftime("%Y-%m-%dT%H:%M:%S")): s for s in samples}
    plant_a, plant_b = small_grid.renewables
    for quarter in range(1, 5):
        quarter_days = [day for day in days if (int(day[5:7]) - 1) // 3 + 1 == quarter]
        for t in range(4):
            stamps = [f"{day}T{6 * t:02d}:00:00" for day in quarter_days]
            per_day = {
                "e1": [dynamic_rating(line_weather(at[("A", s)], at[("B", s)]), DEFAULT_DLR) for s in stamps],
                "wA": [
                    wind_power(
                        extrapolate_wind_speed(
                            at[("A", s)].wind_speed_10m,
                            plant_a.reference_height_m,
                            plant_a.hub_height_m,
                            plant_a.roughness_m,
                        ),
                        plant_a.power_curve(),
                    )
                    for s in stamps
                ],
                "sB": [solar_power(at[("B", s)].shortwave, at[("B", s)].longwave, plant_b.solar_panel()) for s in stamps],
            }
            values = {
                "e1": profiles.rating("e1", 1, quarter, t + 1),
                "wA": profiles.renewable("wA", 1, quarter, t + 1),
                "sB": profiles.renewable("sB", 1, quarter, t + 1),
            }
            for entity, value in values.items():
                assert min(per_day[entity]) - 1e-9 <= value <= max(per_day[entity]) + 1e-9


def test_unobserved_calendar_days_are_reported(small_grid, caplog):
    with caplog.at_level(logging.WARNING, logger="gridplan.profile_synthesis"):
        build_representative(varied_weather(), weekday_loads(), small_grid)

    assert "Weather leaves 8 calendar spans unobserved" in caplog.text
    assert "epoch 1 Q1 2030-01-01..2030-01-15" in caplog.text
    assert "epoch 1 Q1 2030-01-18..2030-03-31" in caplog.text
    assert "and 3 more" in caplog.text


def test_samples_outside_the_horizon_years_are_reported(small_grid, caplog):
    base = _samples(varied_weather())
    later = [s.model_copy(update={"timestamp": s.timestamp.replace(year=2031)}) for s in base if s.timestamp.month == 1]
    weather = WeatherSeries.from_samples(base + later, step_hours=6.0)

    with caplog.at_level(logging.WARNING, logger="gridplan.profile_synthesis"):
        profiles = build_representative(weather, weekday_loads(), small_grid)

    assert "Ignoring 16 weather samples outside the horizon years 2030-2030" in caplog.text
    assert "2031-01-16 to 2031-01-17" in caplog.text
    assert profiles.epochs == [1]


def test_load_mean_of_two_days(small_grid):
    loads = weekday_loads({"2030-01-16": [10.0, 60.0, 70.0, 55.0], "2030-01-17": [30.0, 60.0, 70.0, 55.0]})

    profiles = build_representative(varied_weather(), loads, small_grid)

    assert profiles.load_mw("B", 1, 1, "WD", 1) == pytest.approx(20.0)
    assert profiles.load_mw("B", 1, 2, "WD", 1) == 50.0
    assert profiles.load_mw("A", 1, 1, "WD", 1) == 0.0


def test_single_day_quarter_equals_that_day(small_grid):
    profiles = build_representative(varied_weather(), weekday_loads(), small_grid)

    day = profiles.day(1, 3, "WD")
    assert day.loads["B"] == (50.0, 60.0, 70.0, 55.0)


def test_load_growth_scales_each_epoch(small_grid):
    grid = small_grid.model_copy(update={"horizon": small_grid.horizon.model_copy(update={"num_epochs": 2})})
    base = _samples(varied_weather())
    later = [s.model_copy(update={"timestamp": s.timestamp.replace(year=2031)}) for s in base]
    weather = WeatherSeries.from_samples(base + later, step_hours=6.0)

    profiles = build_representative(weather, weekday_loads(), grid, load_growth=[1.0, 1.5])

    assert profiles.load_mw("B", 2, 1, "WD", 2) == pytest.approx(1.5 * profiles.load_mw("B", 1, 1, "WD", 2))
    assert profiles.epochs == [1, 2]


def _samples(series: WeatherSeries):
    return [
        sample(loc, temp, wind, sw, lw, when=datetime.fromisoformat(ts))
        for ts, loc, temp, wind, sw, lw in series.frame.select(
            "timestamp", "location_id", "temperature_c", "wind_speed_10m_mps", "shortwave_wm2", "longwave_wm2"
        ).iter_rows()
    ]


def test_growth_vector_length_is_checked(small_grid):
    with pytest.raises(ConfigError, match="load growth"):
        build_representative(varied_weather(), weekday_loads(), small_grid, load_growth=[1.0, 1.1])


def test_weather_gap_names_location(small_grid):
    with pytest.raises(CoverageError) as info:
        build_representative(varied_weather(skip=("B", "2030-04-16", 2)), weekday_loads(), small_grid)

    assert ("B", "2030-04-16", "2030-04-16") in info.value.gaps


def test_weather_step_must_match_interval(small_grid):
    weather = WeatherSeries(frame=varied_weather().frame, step_hours=3.0)

    with pytest.raises(ConfigError, match="step"):
        build_representative(weather, weekday_loads(), small_grid)


def test_quarter_without_weather_is_a_coverage_error(small_grid):
    samples = [s for s in _samples(varied_weather()) if s.timestamp.month != 7]

    with pytest.raises(CoverageError):
        build_representative(WeatherSeries.from_samples(samples, 6.0), weekday_loads(), small_grid)


def test_traditional_profiles(climate_varying):
    grid, profiles = climate_varying
    varied = uniform_profiles(
        grid, ratings={"e1": [40.0, 30.0, 35.0, 50.0]}, renewables={"sA": [0.0, 80.0, 80.0, 0.0]}, loads={"B": 80.0}
    )

    static = varied.traditional()

    day = static.day(1, 1, "WD")
    assert day.ratings["e1"] == (30.0,) * 4
    assert day.renewables["sA"] == (40.0,) * 4
    assert_frame_equal(static.load, varied.load)


# ==================== PROFILE FILES ====================

def test_export_then_import_is_identity(tmp_path, climate_varying):
    grid, profiles = climate_varying

    export_profiles(profiles, tmp_path)
    loaded = import_profiles(tmp_path, grid)

    assert_frame_equal(loaded.line_rating, profiles.line_rating)
    assert_frame_equal(loaded.renewable_max, profiles.renewable_max)
    assert_frame_equal(loaded.load, profiles.load)


def test_negative_rating_names_the_row(tmp_path, climate_varying):
    grid, profiles = climate_varying
    export_profiles(profiles, tmp_path)
    path = tmp_path / "line_rating.csv"
    lines = path.read_text().splitlines()
    fields = lines[3].split(",")
    fields[-1] = "-5.0"
    lines[3] = ",".join(fields)
    path.write_text("\n".join(lines) + "\n")

    with pytest.raises(ProfileFormatError, match="row 4"):
        import_profiles(tmp_path, grid)


def test_missing_slab_is_a_coverage_error(tmp_path, climate_varying):
    grid, profiles = climate_varying
    export_profiles(profiles, tmp_path)
    path = tmp_path / "load.csv"
    pl.read_csv(path).filter(pl.col("quarter") != 3).write_csv(path)

    with pytest.raises(CoverageError, match="load.csv"):
        import_profiles(tmp_path, grid)


def test_wrong_header_is_rejected(tmp_path, climate_varying):
    grid, profiles = climate_varying
    export_profiles(profiles, tmp_path)
    (tmp_path / "renewable_max.csv").write_text("epoch,quarter,interval,entity_id,value\n")

    with pytest.raises(ProfileFormatError, match="header"):
        import_profiles(tmp_path, grid)


# ==================== PLOT SERIES ====================

def test_monthly_ratings_under_reference_weather():
    grid = make_grid(
        ["A", "B"],
        lines=[{"id": "e1", "from_bus": "A", "to_bus": "B", "reactance": 0.1, "static_rating": 80.0}],
    )
    samples = [
        sample(location, when=f"{day}T{6 * t:02d}:00:00") for day in DAYS for t in range(4) for location in ("A", "B")
    ]

    frame = monthly_line_ratings(WeatherSeries.from_samples(samples, 6.0), grid, DlrModel())

    assert frame["x"].to_list() == ["1", "4", "7", "10"]
    assert frame["value"].to_list() == pytest.approx([80.0] * 4)


def test_representative_load_series_sums_buses(climate_varying):
    grid, profiles = climate_varying

    frame = representative_load_series(profiles)

    assert frame.height == 1 * 4 * 2 * 4
    assert set(frame["value"].to_list()) == {80.0}
