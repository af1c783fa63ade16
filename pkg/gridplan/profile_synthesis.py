"""
Climate-impacted profiles: weather models, representative days and profile files.

Weather arrives per bus location at a fixed step equal to the study interval.
Each representative value is the exact arithmetic mean of the instantaneous model
output over every observed day of a quarter within an epoch's years; line ratings
and renewable availability use all days, loads are split into weekdays and
weekends and scaled by per-epoch growth factors.
"""
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, timedelta
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import polars as pl

from gridplan.core.exceptions import ConfigError, CoverageError, ProfileFormatError
from gridplan.schemas.grid import GridModel, PlanningHorizon, RenewableKind
from gridplan.schemas.profiles import (
    DayType,
    DlrModel,
    DlrParams,
    PowerCurve,
    SolarPanel,
    TerminalPolicy,
    WeatherSample,
)
from gridplan.utils import read_csv, write_frame

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

WEATHER_COLUMNS = [
    "timestamp",
    "location_id",
    "temperature_c",
    "wind_speed_10m_mps",
    "shortwave_wm2",
    "longwave_wm2",
]
LOAD_COLUMNS = ["timestamp", "bus_id", "load_mw"]
PROFILE_COLUMNS = ["epoch", "quarter", "day_type", "interval", "entity_id", "value"]
PROFILE_FILES = {
    "line_rating": "line_rating.csv",
    "renewable_max": "renewable_max.csv",
    "load": "load.csv",
}
RATING_FLOOR = 1e-6

# (temperature, wind speed at 10 m, shortwave, longwave) of one interval
Reading = Tuple[float, float, float, float]


# ==================== PHYSICAL MODELS ====================

def extrapolate_wind_speed(v_ref: float, h_ref: float, h_hub: float, z_0: float) -> float:
    """
    Logarithmic wind profile from a reference height to hub height.

    Raises:
        ValueError: negative speed, or a height not above the roughness length
    """
    if v_ref < 0:
        raise ValueError(f"wind speed must be non-negative, got {v_ref}")
    if not z_0 > 0:
        raise ValueError(f"roughness length must be positive, got {z_0}")
    if h_ref <= z_0 or h_hub <= z_0:
        raise ValueError(f"heights ({h_ref}, {h_hub}) must exceed the roughness length {z_0}")
    return v_ref * math.log(h_hub / z_0) / math.log(h_ref / z_0)


def wind_power(v_hub: float, curve: PowerCurve) -> float:
    """Farm output in MW for a hub-height wind speed."""
    if v_hub < curve.v_cutin or v_hub > curve.v_cutout:
        return 0.0
    if v_hub >= curve.v_rated:
        return curve.capacity
    return curve.capacity * (v_hub**3 - curve.v_cutin**3) / (curve.v_rated**3 - curve.v_cutin**3)


def solar_power(shortwave: float, longwave: float, panel: SolarPanel) -> float:
    """Plant output in MW from shortwave and longwave irradiance."""
    if shortwave < 0 or longwave < 0:
        raise ValueError("irradiance must be non-negative")
    effective = panel.f_sw * shortwave + panel.f_lw * longwave
    return panel.capacity * min(1.0, effective / panel.g_ref)


def _combine(a: Reading, b: Reading, policy: TerminalPolicy) -> Reading:
    if policy is TerminalPolicy.CONSERVATIVE:
        return (max(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3]))
    return ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2, (a[2] + b[2]) / 2, (a[3] + b[3]) / 2)


def line_weather(
    sample_from: WeatherSample,
    sample_to: WeatherSample,
    policy: TerminalPolicy = TerminalPolicy.CONSERVATIVE,
) -> WeatherSample:
    """Effective weather along a line from the samples at its two terminals."""
    if sample_from.timestamp != sample_to.timestamp:
        raise ValueError(
            f"terminal samples have different timestamps: {sample_from.timestamp} vs {sample_to.timestamp}"
        )
    combined = _combine(_reading(sample_from), _reading(sample_to), TerminalPolicy(policy))
    return WeatherSample(
        timestamp=sample_from.timestamp,
        location_id=f"{sample_from.location_id}|{sample_to.location_id}",
        temperature=combined[0],
        wind_speed_10m=combined[1],
        shortwave=combined[2],
        longwave=combined[3],
    )


def _reading(sample: WeatherSample) -> Reading:
    return (sample.temperature, sample.wind_speed_10m, sample.shortwave, sample.longwave)


def _rating(temperature: float, wind: float, solar: float, params: DlrParams) -> float:
    temp_factor = 1 + params.temp_coeff * (params.temp_ref - temperature)
    wind_factor = 1 + params.wind_coeff * (min(wind, params.wind_cap) - params.wind_ref)
    solar_factor = 1 - params.solar_coeff * solar / params.solar_ref
    rating = params.base_rating * temp_factor * wind_factor * solar_factor
    floor = max(params.f_lo, RATING_FLOOR) * params.base_rating
    return min(max(rating, floor), params.f_hi * params.base_rating)


def dynamic_rating(effective: WeatherSample, params: DlrParams) -> float:
    """Weather-dependent line rating in MVA; always positive."""
    return _rating(effective.temperature, effective.wind_speed_10m, effective.shortwave, params)


# ==================== INPUT SERIES ====================

def _parse_timestamps(df: pl.DataFrame, what: str) -> pl.DataFrame:
    parsed = df.with_columns(
        pl.col("timestamp")
        .cast(pl.Utf8)
        .str.strip_chars_end("Z")
        .str.strptime(pl.Datetime, "%Y-%m-%dT%H:%M:%S", strict=False)
        .alias("ts")
    ).with_row_index("row", offset=2)
    bad = parsed.filter(pl.col("ts").is_null())
    if bad.height:
        row = bad.row(0, named=True)
        raise ConfigError(f"{what} row {row['row']}: invalid timestamp {row['timestamp']!r}")
    return parsed.with_columns(
        pl.col("ts").dt.date().alias("date"),
        (pl.col("ts").dt.hour().cast(pl.Int64) * 60 + pl.col("ts").dt.minute().cast(pl.Int64)).alias("minutes"),
    )


def _check_step(df: pl.DataFrame, key: str, step_hours: float, what: str, exact: bool) -> None:
    step_minutes = step_hours * 60
    if not float(step_minutes).is_integer():
        raise ConfigError(f"interval length {step_hours} h is not a whole number of minutes")
    step_minutes = int(step_minutes)
    misaligned = df.filter(pl.col("minutes") % step_minutes != 0)
    if exact and misaligned.height:
        row = misaligned.row(0, named=True)
        raise ConfigError(
            f"{what} step mismatch: row {row['row']} at {row['timestamp']} is not on the {step_hours} h grid"
        )
    if not exact:
        return
    gaps = (
        df.sort([key, "ts"])
        .with_columns((pl.col("ts").diff().over(key).dt.total_minutes()).alias("gap"))
        .filter(pl.col("gap").is_not_null())
    )
    if gaps.height:
        smallest = gaps["gap"].min()
        if smallest != step_minutes:
            raise ConfigError(f"{what} step mismatch: series step is {smallest} min, study interval is {step_minutes} min")


def _spans(entity: str, missing: Iterable[date]) -> List[Tuple[str, str, str]]:
    """Merge missing dates into (entity, first, last) runs of consecutive days."""
    out: List[Tuple[str, str, str]] = []
    start = prev = None
    for day in sorted(missing):
        if prev is not None and day - prev == timedelta(days=1):
            prev = day
            continue
        if start is not None:
            out.append((entity, start.isoformat(), prev.isoformat()))
        start = prev = day
    if start is not None:
        out.append((entity, start.isoformat(), prev.isoformat()))
    return out


def _quarter(day: date) -> int:
    return (day.month - 1) // 3 + 1



@dataclass(frozen=True)
class WeatherSeries:
    """Per-location weather samples at a fixed step."""
    frame: pl.DataFrame
    step_hours: float

    @classmethod
    def from_samples(cls, samples: Sequence[WeatherSample], step_hours: float) -> "WeatherSeries":
        frame = pl.DataFrame(
            {
                "timestamp": [s.timestamp.strftime("%Y-%m-%dT%H:%M:%S") for s in samples],
                "location_id": [s.location_id for s in samples],
                "temperature_c": [float(s.temperature) for s in samples],
                "wind_speed_10m_mps": [float(s.wind_speed_10m) for s in samples],
                "shortwave_wm2": [float(s.shortwave) for s in samples],
                "longwave_wm2": [float(s.longwave) for s in samples],
            },
            schema={
                "timestamp": pl.Utf8,
                "location_id": pl.Utf8,
                "temperature_c": pl.Float64,
                "wind_speed_10m_mps": pl.Float64,
                "shortwave_wm2": pl.Float64,
                "longwave_wm2": pl.Float64,
            },
        )
        return cls.from_frame(frame, step_hours)

    @classmethod
    def from_frame(cls, raw: pl.DataFrame, step_hours: float) -> "WeatherSeries":
        """Validate a weather frame (timestamps as ISO strings)."""
        df = _parse_timestamps(raw, "weather")
        checks = [
            (~pl.col("temperature_c").is_between(-60, 60), "temperature outside [-60, 60] C"),
            (pl.col("wind_speed_10m_mps") < 0, "negative wind speed"),
            (pl.col("shortwave_wm2") < 0, "negative shortwave irradiance"),
            (pl.col("longwave_wm2") < 0, "negative longwave irradiance"),
        ]
        for condition, label in checks:
            bad = df.filter(condition.fill_null(True))
            if bad.height:
                raise ConfigError(f"weather row {bad['row'][0]}: {label}")
        dup = df.filter(pl.struct("location_id", "ts").is_duplicated())
        if dup.height:
            row = dup.row(0, named=True)
            raise ConfigError(f"weather row {row['row']}: duplicate sample for {row['location_id']} at {row['timestamp']}")
        _check_step(df, "location_id", step_hours, "weather", exact=True)
        return cls(frame=df, step_hours=step_hours)

    @property
    def locations(self) -> List[str]:
        return sorted(self.frame["location_id"].unique().to_list())

    def daily_readings(
        self, horizon: PlanningHorizon, locations: Iterable[str]
    ) -> Dict[str, Dict[date, List[Reading]]]:
        """
        Complete days of readings per location within the horizon years.

        Raises:
            ConfigError: the series step differs from the study interval
            CoverageError: a location lacks intervals on a date another location has
        """
        if not math.isclose(self.step_hours, horizon.interval_hours):
            raise ConfigError(
                f"weather step mismatch: series step {self.step_hours} h, study interval {horizon.interval_hours} h"
            )
        first = horizon.start_year
        last = horizon.start_year + horizon.num_epochs * horizon.years_per_epoch
        step_minutes = int(round(horizon.interval_hours * 60))
        df = self.frame.filter(pl.col("ts").dt.year().is_between(first, last - 1))
        dropped = self.frame.height - df.height
        if dropped:
            outside = self.frame.filter(~pl.col("ts").dt.year().is_between(first, last - 1))
            logger.warning(
                f"Ignoring {dropped} weather samples outside the horizon years {first}-{last - 1} "
                f"({outside['date'].min()} to {outside['date'].max()})"
            )

        readings: Dict[str, Dict[date, List[Optional[Reading]]]] = defaultdict(dict)
        for loc, day, minutes, temp, wind, sw, lw in df.select(
            "location_id", "date", "minutes", *WEATHER_COLUMNS[2:]
        ).iter_rows():
            slots = readings[loc].setdefault(day, [None] * horizon.intervals_per_day)
            slots[minutes // step_minutes] = (temp, wind, sw, lw)

        present = sorted({day for per_loc in readings.values() for day in per_loc})
        gaps: List[Tuple[str, str, str]] = []
        complete: Dict[str, Dict[date, List[Reading]]] = {}
        for loc in sorted(set(locations)):
            per_loc = readings.get(loc, {})
            missing = [day for day in present if day not in per_loc or None in per_loc[day]]
            gaps.extend(_spans(loc, missing))
            complete[loc] = {day: per_loc[day] for day in present if day not in missing}
        if gaps:
            raise CoverageError("Weather series has gaps", gaps)
        return complete


def load_weather(path: PathLike, step_hours: float = 3.0) -> WeatherSeries:
    """Read a weather CSV (`timestamp,location_id,temperature_c,...`)."""
    df = read_csv(
        path,
        WEATHER_COLUMNS,
        schema={
            "timestamp": pl.Utf8,
            "location_id": pl.Utf8,
            "temperature_c": pl.Float64,
            "wind_speed_10m_mps": pl.Float64,
            "shortwave_wm2": pl.Float64,
            "longwave_wm2": pl.Float64,
        },
        what="weather",
    )
    series = WeatherSeries.from_frame(df, step_hours)
    logger.info(f"Loaded {df.height} weather samples for {len(series.locations)} locations from {path}")
    return series


@dataclass(frozen=True)
class LoadSeries:
    """Per-bus base demand samples (hourly or at the study interval)."""
    frame: pl.DataFrame

    @classmethod
    def from_frame(cls, raw: pl.DataFrame) -> "LoadSeries":
        df = _parse_timestamps(raw, "load")
        bad = df.filter((pl.col("load_mw") < 0) | pl.col("load_mw").is_null() | pl.col("load_mw").is_nan())
        if bad.height:
            raise ConfigError(f"load row {bad['row'][0]}: load must be a non-negative number")
        dup = df.filter(pl.struct("bus_id", "ts").is_duplicated())
        if dup.height:
            raise ConfigError(f"load row {dup['row'][0]}: duplicate sample")
        return cls(frame=df)

    @classmethod
    def from_records(cls, records: Sequence[Tuple[str, str, float]]) -> "LoadSeries":
        """Build from (ISO timestamp, bus id, MW) tuples."""
        frame = pl.DataFrame(
            {
                "timestamp": [r[0] for r in records],
                "bus_id": [r[1] for r in records],
                "load_mw": [float(r[2]) for r in records],
            },
            schema={"timestamp": pl.Utf8, "bus_id": pl.Utf8, "load_mw": pl.Float64},
        )
        return cls.from_frame(frame)

    @property
    def refs(self) -> List[str]:
        return sorted(self.frame["bus_id"].unique().to_list())

    def daily_means(self, horizon: PlanningHorizon, refs: Iterable[str]) -> pl.DataFrame:
        """
        Interval means of the samples per profile reference and date.

        Returns:
            pl.DataFrame: bus_id, date, interval (1-based) and value, complete days only

        Raises:
            CoverageError: a reference lacks an interval on a date present in the file
        """
        step_minutes = horizon.interval_hours * 60
        _check_step(self.frame, "bus_id", horizon.interval_hours, "load", exact=False)
        means = (
            self.frame.with_columns(((pl.col("minutes") // step_minutes).cast(pl.Int64) + 1).alias("interval"))
            .group_by(["bus_id", "date", "interval"])
            .agg(pl.col("load_mw").mean().alias("value"))
        )
        complete = (
            means.group_by(["bus_id", "date"])
            .agg(pl.len().alias("filled"))
            .filter(pl.col("filled") == horizon.intervals_per_day)
        )
        refs = sorted(set(refs))
        missing = (
            pl.DataFrame({"bus_id": refs}, schema={"bus_id": pl.Utf8})
            .join(means.select("date").unique(), how="cross")
            .join(complete, on=["bus_id", "date"], how="anti")
            .sort(["bus_id", "date"])
        )
        gaps = [
            span
            for (ref,), group in missing.group_by(["bus_id"], maintain_order=True)
            for span in _spans(ref, group["date"].to_list())
        ]
        if gaps:
            raise CoverageError("Load series has gaps", gaps)
        return (
            means.filter(pl.col("bus_id").is_in(refs))
            .join(complete.select("bus_id", "date"), on=["bus_id", "date"], how="semi")
            .sort(["bus_id", "date", "interval"])
        )


def load_loads(path: PathLike) -> LoadSeries:
    """Read a load CSV (`timestamp,bus_id,load_mw`)."""
    df = read_csv(
        path, LOAD_COLUMNS, schema={"timestamp": pl.Utf8, "bus_id": pl.Utf8, "load_mw": pl.Float64}, what="load"
    )
    series = LoadSeries.from_frame(df)
    logger.info(f"Loaded {df.height} load samples for {len(series.refs)} buses from {path}")
    return series


# ==================== REPRESENTATIVE PROFILES ====================

@dataclass(frozen=True)
class DayProfile:
    """Profile slices of one typical day, one tuple entry per interval."""
    epoch: int
    quarter: int
    day_type: str
    ratings: Dict[str, Tuple[float, ...]]
    renewables: Dict[str, Tuple[float, ...]]
    loads: Dict[str, Tuple[float, ...]]


@dataclass(frozen=True)
class RepresentativeProfileSet:
    """
    Representative ratings (MVA), renewable availability (MW) and loads (MW).

    Each frame has the columns epoch, quarter, day_type, interval, entity_id and
    value; ratings and renewables use day type ALL, loads WD and WE.
    """
    line_rating: pl.DataFrame
    renewable_max: pl.DataFrame
    load: pl.DataFrame

    @classmethod
    def from_rows(
        cls,
        line_rating: Iterable[Tuple[int, int, str, int, str, float]],
        renewable_max: Iterable[Tuple[int, int, str, int, str, float]],
        load: Iterable[Tuple[int, int, str, int, str, float]],
    ) -> "RepresentativeProfileSet":
        return cls(_frame(line_rating), _frame(renewable_max), _frame(load))

    @cached_property
    def _ratings(self) -> Dict[Tuple[str, int, int, int], float]:
        return {
            (entity, epoch, quarter, interval): value
            for epoch, quarter, _, interval, entity, value in self.line_rating.iter_rows()
        }

    @cached_property
    def _renewables(self) -> Dict[Tuple[str, int, int, int], float]:
        return {
            (entity, epoch, quarter, interval): value
            for epoch, quarter, _, interval, entity, value in self.renewable_max.iter_rows()
        }

    @cached_property
    def _loads(self) -> Dict[Tuple[str, int, int, str, int], float]:
        return {
            (entity, epoch, quarter, day_type, interval): value
            for epoch, quarter, day_type, interval, entity, value in self.load.iter_rows()
        }

    def rating(self, line_id: str, epoch: int, quarter: int, interval: int) -> float:
        return self._ratings[(line_id, epoch, quarter, interval)]

    def renewable(self, plant_id: str, epoch: int, quarter: int, interval: int) -> float:
        return self._renewables[(plant_id, epoch, quarter, interval)]

    def load_mw(self, bus_id: str, epoch: int, quarter: int, day_type: str, interval: int) -> float:
        return self._loads[(bus_id, epoch, quarter, day_type, interval)]

    @property
    def epochs(self) -> List[int]:
        return sorted(self.load["epoch"].unique().to_list())

    @property
    def quarters(self) -> List[int]:
        return sorted(self.load["quarter"].unique().to_list())

    @property
    def intervals(self) -> List[int]:
        return sorted(self.load["interval"].unique().to_list())

    @property
    def day_types(self) -> List[str]:
        return sorted(self.load["day_type"].unique().to_list())

    def day(self, epoch: int, quarter: int, day_type: str) -> DayProfile:
        """Slices of one typical day."""
        intervals = self.intervals
        lines = sorted({key[0] for key in self._ratings})
        plants = sorted({key[0] for key in self._renewables})
        buses = sorted({key[0] for key in self._loads})
        return DayProfile(
            epoch=epoch,
            quarter=quarter,
            day_type=day_type,
            ratings={k: tuple(self.rating(k, epoch, quarter, t) for t in intervals) for k in lines},
            renewables={r: tuple(self.renewable(r, epoch, quarter, t) for t in intervals) for r in plants},
            loads={n: tuple(self.load_mw(n, epoch, quarter, day_type, t) for t in intervals) for n in buses},
        )

    def traditional(self) -> "RepresentativeProfileSet":
        """
        Static counterpart used by traditional planning: each line rating becomes
        its minimum over the intervals of the quarter, each renewable availability
        its mean; loads are unchanged.
        """
        per_quarter = ["epoch", "quarter", "entity_id"]
        return RepresentativeProfileSet(
            self.line_rating.with_columns(pl.col("value").min().over(per_quarter)),
            self.renewable_max.with_columns(pl.col("value").mean().over(per_quarter)),
            self.load,
        )

    def summary(self) -> str:
        return (
            f"{self.line_rating['entity_id'].n_unique()} lines, "
            f"{self.renewable_max['entity_id'].n_unique()} renewables, "
            f"{self.load['entity_id'].n_unique()} buses x {len(self.epochs)} epochs x "
            f"{len(self.quarters)} quarters x {len(self.intervals)} intervals"
        )


_PROFILE_SCHEMA = {
    "epoch": pl.Int64,
    "quarter": pl.Int64,
    "day_type": pl.Utf8,
    "interval": pl.Int64,
    "entity_id": pl.Utf8,
    "value": pl.Float64,
}


PROFILE_KEYS = ["epoch", "quarter", "day_type", "interval", "entity_id"]


def _profile_frame(df: pl.DataFrame) -> pl.DataFrame:
    return df.select(PROFILE_COLUMNS).cast(_PROFILE_SCHEMA).sort(PROFILE_KEYS)


def _frame(rows: Iterable[Tuple[int, int, str, int, str, float]]) -> pl.DataFrame:
    return _profile_frame(pl.DataFrame(list(rows), schema=_PROFILE_SCHEMA, orient="row"))


def _mean_profile(rows: Iterable[Tuple[int, int, str, int, str, float]]) -> pl.DataFrame:
    """Average per-day values into one typical day per profile key."""
    return _profile_frame(_frame(rows).group_by(PROFILE_KEYS).agg(pl.col("value").mean()))


def _slabs(horizon: PlanningHorizon, days: Iterable[date]) -> Dict[Tuple[int, int], List[date]]:
    slabs: Dict[Tuple[int, int], List[date]] = defaultdict(list)
    for day in sorted(days):
        epoch = horizon.epoch_of_year(day.year)
        if epoch is not None:
            slabs[(epoch, _quarter(day))].append(day)
    return slabs


def _quarter_span(horizon: PlanningHorizon, epoch: int, quarter: int) -> Tuple[str, str]:
    years = horizon.epoch_years(epoch)
    first = date(years[0], 3 * quarter - 2, 1)
    last = date(years[-1] + (quarter == 4), (3 * quarter) % 12 + 1, 1) - timedelta(days=1)
    return first.isoformat(), last.isoformat()


def _unobserved_spans(
    horizon: PlanningHorizon, slabs: Dict[Tuple[int, int], List[date]]
) -> List[Tuple[str, str, str]]:
    """Calendar days of each observed (epoch, quarter) slab without weather, as spans."""
    spans: List[Tuple[str, str, str]] = []
    for (epoch, quarter), slab in sorted(slabs.items()):
        observed = set(slab)
        calendar = []
        for year in horizon.epoch_years(epoch):
            first = date(year, 3 * quarter - 2, 1)
            end = date(year + (quarter == 4), (3 * quarter) % 12 + 1, 1)
            calendar.extend(first + timedelta(days=k) for k in range((end - first).days))
        spans.extend(_spans(f"epoch {epoch} Q{quarter}", [day for day in calendar if day not in observed]))
    return spans


def _weather_locations(grid: GridModel) -> List[str]:
    locations = set()
    for line in grid.lines:
        locations.update((line.from_bus, line.to_bus))
    locations.update(plant.bus for plant in grid.renewables)
    return sorted(locations)


def _renewable_output(plant, reading: Reading, curve: Optional[PowerCurve], panel: Optional[SolarPanel]) -> float:
    if plant.kind is RenewableKind.WIND:
        v_hub = extrapolate_wind_speed(reading[1], plant.reference_height_m, plant.hub_height_m, plant.roughness_m)
        return wind_power(v_hub, curve)
    return solar_power(reading[2], reading[3], panel)


def build_representative(
    weather: WeatherSeries,
    load_series: LoadSeries,
    grid: GridModel,
    dlr_default: DlrModel = DlrModel(),
    policy: TerminalPolicy = TerminalPolicy.CONSERVATIVE,
    load_growth: Optional[Sequence[float]] = None,
) -> RepresentativeProfileSet:
    """
    Reduce weather and load series to representative days.

    Args:
        weather: Per-location weather at the study interval
        load_series: Per-bus base demand, epoch independent
        grid: System whose lines and renewables get profiles
        dlr_default: DLR coefficients for lines without their own
        policy: Terminal weather combination for lines
        load_growth: Per-epoch multiplier of the base demand (default all 1)

    Returns:
        RepresentativeProfileSet: ratings and renewables per (epoch, quarter,
        interval); loads per (epoch, quarter, day type, interval)

    Raises:
        ConfigError: step mismatch or a growth vector of the wrong length
        CoverageError: gaps in the series or an (epoch, quarter) without data
    """
    horizon = grid.horizon
    growth = list(load_growth) if load_growth is not None else [1.0] * horizon.num_epochs
    if len(growth) != horizon.num_epochs:
        raise ConfigError(f"load growth has {len(growth)} factors for {horizon.num_epochs} epochs")
    intervals = list(horizon.intervals)

    readings = weather.daily_readings(horizon, _weather_locations(grid))
    days = sorted({day for per_loc in readings.values() for day in per_loc})
    slabs = _slabs(horizon, days)
    gaps = [
        ("weather", *_quarter_span(horizon, epoch, quarter))
        for epoch in horizon.epochs
        for quarter in horizon.quarters
        if not slabs.get((epoch, quarter))
    ]
    if gaps and (grid.lines or grid.renewables):
        raise CoverageError("Weather series leaves (epoch, quarter) slabs without data", gaps)
    uncovered = _unobserved_spans(horizon, slabs)
    if uncovered:
        shown = ", ".join(f"{label} {first}..{last}" for label, first, last in uncovered[:5])
        more = f" and {len(uncovered) - 5} more" if len(uncovered) > 5 else ""
        logger.warning(
            f"Weather leaves {len(uncovered)} calendar spans unobserved; representative days average "
            f"the observed days only: {shown}{more}"
        )

    rating_rows = []
    for line in grid.lines:
        params = line.dlr_params(dlr_default)
        for (epoch, quarter), slab in sorted(slabs.items()):
            for d in slab:
                for t in intervals:
                    reading = _combine(readings[line.from_bus][d][t - 1], readings[line.to_bus][d][t - 1], policy)
                    rating_rows.append((epoch, quarter, DayType.ALL.value, t, line.id, _rating(*reading[:3], params)))

    renewable_rows = []
    for plant in grid.renewables:
        curve = plant.power_curve() if plant.kind is RenewableKind.WIND else None
        panel = plant.solar_panel() if plant.kind is RenewableKind.SOLAR else None
        for (epoch, quarter), slab in sorted(slabs.items()):
            for d in slab:
                for t in intervals:
                    value = _renewable_output(plant, readings[plant.bus][d][t - 1], curve, panel)
                    renewable_rows.append((epoch, quarter, DayType.ALL.value, t, plant.id, value))

    profiles = RepresentativeProfileSet(
        _mean_profile(rating_rows),
        _mean_profile(renewable_rows),
        _representative_loads(load_series, grid, growth),
    )
    logger.info(f"Built representative profiles: {profiles.summary()}")
    return profiles


def _representative_loads(load_series: LoadSeries, grid: GridModel, growth: Sequence[float]) -> pl.DataFrame:
    horizon = grid.horizon
    explicit = {bus.load_ref for bus in grid.buses if bus.base_load_profile_ref}
    available = set(load_series.refs)
    missing = sorted(explicit - available)
    if missing:
        raise CoverageError("Load series lacks referenced profiles", [(ref, "*", "*") for ref in missing])
    refs = sorted({bus.load_ref for bus in grid.buses} & available)
    daily = load_series.daily_means(horizon, refs).with_columns(
        pl.col("date").dt.quarter().cast(pl.Int64).alias("quarter"),
        pl.when(pl.col("date").dt.weekday() >= 6)
        .then(pl.lit(DayType.WEEKEND.value))
        .otherwise(pl.lit(DayType.WEEKDAY.value))
        .alias("day_type"),
    )
    if refs:
        seen = set(daily.select("quarter", "day_type").unique().iter_rows())
        gaps = [
            (f"load {day_type}", f"quarter {quarter}", f"quarter {quarter}")
            for quarter in horizon.quarters
            for day_type in horizon.day_types
            if (quarter, day_type) not in seen
        ]
        if gaps:
            raise CoverageError("Load series has no days for some (quarter, day type) pairs", gaps)

    base = (
        daily.group_by(["bus_id", "quarter", "day_type", "interval"])
        .agg(pl.col("value").mean())
        .rename({"bus_id": "ref"})
    )
    buses = pl.DataFrame(
        {"entity_id": [bus.id for bus in grid.buses], "ref": [bus.load_ref for bus in grid.buses]},
        schema={"entity_id": pl.Utf8, "ref": pl.Utf8},
    )
    slots = pl.DataFrame(
        [(q, d, t) for q in horizon.quarters for d in horizon.day_types for t in horizon.intervals],
        schema={"quarter": pl.Int64, "day_type": pl.Utf8, "interval": pl.Int64},
        orient="row",
    )
    epochs = pl.DataFrame(
        {"epoch": list(horizon.epochs), "growth": [float(g) for g in growth]},
        schema={"epoch": pl.Int64, "growth": pl.Float64},
    )
    # buses whose profile is absent from the file carry zero demand
    return _profile_frame(
        buses.join(slots, how="cross")
        .join(base, on=["ref", "quarter", "day_type", "interval"], how="left")
        .join(epochs, how="cross")
        .with_columns((pl.col("value").fill_null(0.0) * pl.col("growth")).alias("value"))
    )


# ==================== PROFILE FILES ====================

def export_profiles(profiles: RepresentativeProfileSet, directory: PathLike) -> List[Path]:
    """Write the three profile CSVs with full-precision values."""
    directory = Path(directory)
    written = []
    for quantity, filename in PROFILE_FILES.items():
        written.append(write_frame(getattr(profiles, quantity), directory / filename))
    logger.info(f"Wrote profiles to {directory}")
    return written


def _read_profile(path: Path, quantity: str) -> pl.DataFrame:
    if not path.exists():
        raise ConfigError(f"Profile file not found: {path}")
    try:
        df = pl.read_csv(path, infer_schema_length=0)
    except Exception as e:
        logger.error(f"Error reading profile {path}: {str(e)}")
        raise ProfileFormatError(f"{path}: unreadable CSV ({e})") from e
    if df.columns != PROFILE_COLUMNS:
        raise ProfileFormatError(f"{path}: header must be {','.join(PROFILE_COLUMNS)}, got {','.join(df.columns)}")
    df = df.with_row_index("row", offset=2)
    typed = df.with_columns(
        *(pl.col(col).cast(pl.Int64, strict=False) for col in ("epoch", "quarter", "interval")),
        pl.col("value").cast(pl.Float64, strict=False),
    )
    allowed_types = ["WD", "WE"] if quantity == "load" else ["ALL"]
    checks = [
        (pl.any_horizontal(pl.col("epoch", "quarter", "interval", "value").is_null()), "non-numeric field"),
        (~pl.col("day_type").is_in(allowed_types), f"day_type must be one of {', '.join(allowed_types)}"),
        (pl.col("entity_id").is_null(), "missing entity_id"),
        (pl.col("value").is_nan() | pl.col("value").is_infinite(), "non-finite value"),
        ((pl.col("epoch") < 1) | ~pl.col("quarter").is_between(1, 4) | (pl.col("interval") < 1), "index out of range"),
    ]
    if quantity == "line_rating":
        checks.append((pl.col("value") <= 0, "rating must be positive"))
    else:
        checks.append((pl.col("value") < 0, "value must be non-negative"))
    for condition, label in checks:
        bad = typed.filter(condition.fill_null(True))
        if bad.height:
            row = bad.row(0, named=True)
            raise ProfileFormatError(f"{path} row {row['row']}: {label}")
    dup = typed.filter(pl.struct("epoch", "quarter", "day_type", "interval", "entity_id").is_duplicated())
    if dup.height:
        raise ProfileFormatError(f"{path} row {dup['row'][0]}: duplicate key")
    return typed.select(PROFILE_COLUMNS)


def _check_coverage(
    df: pl.DataFrame,
    filename: str,
    entities: Sequence[str],
    epochs: Sequence[int],
    quarters: Sequence[int],
    day_types: Sequence[str],
    intervals: Sequence[int],
) -> None:
    present = set(df.select("epoch", "quarter", "day_type", "interval", "entity_id").iter_rows())
    gaps = []
    for entity in entities:
        for epoch in epochs:
            for quarter in quarters:
                for day_type in day_types:
                    if any((epoch, quarter, day_type, t, entity) not in present for t in intervals):
                        label = f"epoch {epoch} quarter {quarter}" + (f" {day_type}" if day_type != "ALL" else "")
                        gaps.append((f"{filename}:{entity}", label, label))
    if gaps:
        raise CoverageError(f"{filename} does not cover the horizon", gaps)


def import_profiles(directory: PathLike, grid: Optional[GridModel] = None) -> RepresentativeProfileSet:
    """
    Read profile CSVs written by export_profiles.

    With a grid, every line, renewable and bus must have a value for every
    (epoch, quarter[, day type], interval) of its horizon; without one, the slabs
    present must form a complete grid of epochs and quarters.

    Raises:
        ProfileFormatError: schema violation, naming the row
        CoverageError: a missing (epoch, quarter) slab
    """
    directory = Path(directory)
    frames = {
        quantity: _read_profile(directory / filename, quantity) for quantity, filename in PROFILE_FILES.items()
    }
    if grid is not None:
        horizon = grid.horizon
        epochs, quarters, intervals = list(horizon.epochs), list(horizon.quarters), list(horizon.intervals)
        entity_sets = {
            "line_rating": [line.id for line in grid.lines],
            "renewable_max": [plant.id for plant in grid.renewables],
            "load": grid.bus_ids,
        }
        load_types = list(horizon.day_types)
    else:
        load = frames["load"]
        epochs = list(range(1, int(load["epoch"].max() or 0) + 1))
        quarters = sorted(load["quarter"].unique().to_list())
        intervals = sorted(load["interval"].unique().to_list())
        entity_sets = {quantity: sorted(df["entity_id"].unique().to_list()) for quantity, df in frames.items()}
        load_types = sorted(load["day_type"].unique().to_list())
    for quantity, df in frames.items():
        day_types = load_types if quantity == "load" else ["ALL"]
        _check_coverage(df, PROFILE_FILES[quantity], entity_sets[quantity], epochs, quarters, day_types, intervals)
    profiles = RepresentativeProfileSet(
        _frame(frames["line_rating"].iter_rows()),
        _frame(frames["renewable_max"].iter_rows()),
        _frame(frames["load"].iter_rows()),
    )
    logger.info(f"Loaded profiles from {directory}: {profiles.summary()}")
    return profiles


# ==================== PLOT SERIES ====================

def monthly_line_ratings(
    weather: WeatherSeries,
    grid: GridModel,
    dlr_default: DlrModel = DlrModel(),
    policy: TerminalPolicy = TerminalPolicy.CONSERVATIVE,
    line_id: Optional[str] = None,
) -> pl.DataFrame:
    """Monthly mean dynamic rating per line and epoch (x = month, series = "line epoch p")."""
    lines = [line for line in grid.lines if line_id is None or line.id == line_id]
    if line_id is not None and not lines:
        raise ConfigError(f"Unknown line {line_id!r}")
    readings = weather.daily_readings(grid.horizon, _weather_locations(grid))
    days = sorted({day for per_loc in readings.values() for day in per_loc})
    rows = []
    for order, line in enumerate(lines):
        params = line.dlr_params(dlr_default)
        for (epoch, month), group in _by_month(grid.horizon, days).items():
            rows.extend(
                (order, epoch, month, f"{line.id} epoch {epoch}",
                 _rating(*_combine(readings[line.from_bus][d][i], readings[line.to_bus][d][i], policy)[:3], params))
                for d in group
                for i in range(grid.horizon.intervals_per_day)
            )
    return _monthly_means(rows)


def monthly_renewables(weather: WeatherSeries, grid: GridModel, kind: RenewableKind) -> pl.DataFrame:
    """Monthly mean fleet availability of one technology per epoch, in MW."""
    plants = [plant for plant in grid.renewables if plant.kind is RenewableKind(kind)]
    readings = weather.daily_readings(grid.horizon, sorted({plant.bus for plant in plants}))
    days = sorted({day for per_loc in readings.values() for day in per_loc})
    rows = []
    for (epoch, month), group in _by_month(grid.horizon, days).items():
        active = [plant for plant in plants if plant.active_in(epoch)]
        curves = {p.id: p.power_curve() if p.kind is RenewableKind.WIND else None for p in active}
        panels = {p.id: p.solar_panel() if p.kind is RenewableKind.SOLAR else None for p in active}
        rows.extend(
            (0, epoch, month, f"{RenewableKind(kind).value} epoch {epoch}",
             math.fsum(_renewable_output(p, readings[p.bus][d][i], curves[p.id], panels[p.id]) for p in active))
            for d in group
            for i in range(grid.horizon.intervals_per_day)
        )
    return _monthly_means(rows)


def representative_load_series(profiles: RepresentativeProfileSet) -> pl.DataFrame:
    """System load of every typical day (x = interval)."""
    totals = (
        profiles.load.group_by(["epoch", "quarter", "day_type", "interval"])
        .agg(pl.col("value").sort_by("entity_id").sum())
        .sort(["epoch", "quarter", "day_type", "interval"])
    )
    rows = [
        (str(interval), f"epoch {epoch} Q{quarter} {day_type}", value)
        for epoch, quarter, day_type, interval, value in totals.iter_rows()
    ]
    return _plot_frame(rows)


def _by_month(horizon: PlanningHorizon, days: Iterable[date]) -> Dict[Tuple[int, int], List[date]]:
    groups: Dict[Tuple[int, int], List[date]] = defaultdict(list)
    for day in days:
        epoch = horizon.epoch_of_year(day.year)
        if epoch is not None:
            groups[(epoch, day.month)].append(day)
    return groups


def _plot_frame(rows: List[Tuple[str, str, float]]) -> pl.DataFrame:
    return pl.DataFrame(rows, schema={"x": pl.Utf8, "series": pl.Utf8, "value": pl.Float64}, orient="row")


def _monthly_means(rows: List[Tuple[int, int, int, str, float]]) -> pl.DataFrame:
    """Mean per (series order, epoch, month) of per-interval readings."""
    df = pl.DataFrame(
        rows,
        schema={"order": pl.Int64, "epoch": pl.Int64, "month": pl.Int64, "series": pl.Utf8, "value": pl.Float64},
        orient="row",
    )
    return (
        df.group_by(["order", "epoch", "month", "series"])
        .agg(pl.col("value").mean())
        .sort(["order", "epoch", "month"])
        .select(pl.col("month").cast(pl.Utf8).alias("x"), "series", "value")
    )
