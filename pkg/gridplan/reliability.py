"""
Long-horizon reliability indices from typical-day shedding.

Indices per epoch:
    EUE  - expected unserved energy, day-weighted shed energy
    LOLP - EUE as a share of the day-weighted demand energy (an energy ratio)
    LOLE - outage hours per bus and year; an outage interval sheds more than 1e-6 MW
"""
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

import polars as pl
from pydantic import BaseModel, ConfigDict, Field

from gridplan.core.exceptions import ConfigError, HorizonMismatchError
from gridplan.schemas.grid import PlanningHorizon
from gridplan.schemas.results import EpochReliability, ReliabilityReport
from gridplan.schemas.study import CaseName
from gridplan.utils import read_csv

logger = logging.getLogger(__name__)

OUTAGE_THRESHOLD_MW = 1e-6
HOURS_PER_YEAR = 8760.0
METRICS = ["eue_mwh", "lolp", "lole_hours_per_bus"]
REPORT_COLUMNS = [
    "case",
    "epoch",
    "eue_mwh",
    "lolp",
    "lole_hours_per_bus",
    "lole_pct_8760",
    "eue_epoch_mwh",
    "lole_epoch_hours_per_bus",
]


class SheddingRecord(BaseModel):
    """Shedding at one bus in one interval of a typical day."""
    model_config = ConfigDict(frozen=True)

    epoch: int = Field(..., ge=1)
    quarter: int = Field(..., ge=1, le=4)
    day_type: str
    bus: str
    interval: int = Field(..., ge=1)
    shed: float = Field(..., ge=0)


def _in_epoch(records: Iterable[SheddingRecord], epoch: int) -> List[SheddingRecord]:
    return sorted(
        (r for r in records if r.epoch == epoch),
        key=lambda r: (r.quarter, r.day_type, r.interval, r.bus),
    )


# ==================== INDICES ====================

def eue(records: Iterable[SheddingRecord], horizon: PlanningHorizon, epoch: int) -> float:
    """Unserved energy of an epoch's typical year (MWh); divide by N^Y for an annual figure."""
    dt = horizon.interval_hours
    return math.fsum(r.shed * dt * horizon.day_weight(r.day_type) for r in _in_epoch(records, epoch))


def demand_energy(demand: pl.DataFrame, horizon: PlanningHorizon, epoch: int) -> float:
    """Day-weighted demand energy (MWh) of an epoch from a load profile frame."""
    rows = demand.filter(pl.col("epoch") == epoch).sort(["quarter", "day_type", "interval", "entity_id"])
    dt = horizon.interval_hours
    return math.fsum(
        value * dt * horizon.day_weight(day_type)
        for day_type, value in rows.select(["day_type", "value"]).iter_rows()
    )


def lolp(records: Iterable[SheddingRecord], demand: pl.DataFrame, horizon: PlanningHorizon, epoch: int) -> float:
    """
    Unserved share of the demand energy of an epoch.

    Args:
        records: Shedding records
        demand: Load profile frame (epoch, quarter, day_type, interval, entity_id, value)
        horizon: Planning horizon
        epoch: Epoch to score

    Raises:
        ValueError: the epoch has no demand energy
    """
    total = demand_energy(demand, horizon, epoch)
    if not total > 0:
        raise ValueError(f"epoch {epoch} has zero total demand; LOLP is undefined")
    unserved = eue(records, horizon, epoch)
    if unserved == 0:
        return 0.0
    return unserved / total


def lole(records: Iterable[SheddingRecord], horizon: PlanningHorizon, epoch: int, num_buses: int) -> float:
    """Outage hours per bus and year of an epoch."""
    if num_buses < 1:
        raise ValueError(f"bus count must be positive, got {num_buses}")
    dt = horizon.interval_hours
    hours = math.fsum(
        dt * horizon.day_weight(r.day_type)
        for r in _in_epoch(records, epoch)
        if r.shed > OUTAGE_THRESHOLD_MW
    )
    return hours / (num_buses * horizon.years_per_epoch)


# ==================== REPORTS ====================

def evaluate_case(
    case: CaseName,
    records: Sequence[SheddingRecord],
    demand: pl.DataFrame,
    horizon: PlanningHorizon,
    num_buses: int,
) -> ReliabilityReport:
    """Annualized indices of every epoch, with the raw per-epoch totals alongside."""
    rows = []
    for epoch in horizon.epochs:
        try:
            probability = lolp(records, demand, horizon, epoch)
        except ValueError as e:
            raise ConfigError(f"{case.value}: {e}") from e
        per_epoch = eue(records, horizon, epoch)
        outage = lole(records, horizon, epoch, num_buses)
        rows.append(
            EpochReliability(
                case=case,
                epoch=epoch,
                eue_mwh=per_epoch / horizon.years_per_epoch,
                lolp=probability,
                lole_hours_per_bus=outage,
                lole_pct_8760=outage / HOURS_PER_YEAR * 100.0,
                eue_epoch_mwh=per_epoch,
                lole_epoch_hours_per_bus=outage * horizon.years_per_epoch,
            )
        )
    report = ReliabilityReport(case=case, epochs=rows)
    logger.info(
        f"{case.value} reliability: "
        + ", ".join(f"epoch {r.epoch} EUE {r.eue_mwh:.3f} MWh/yr LOLE {r.lole_hours_per_bus:.3f} h/bus" for r in rows)
    )
    return report


def report_rows(reports: Iterable[ReliabilityReport]) -> List[tuple]:
    return [
        (row.case.value, row.epoch, *(getattr(row, col) for col in REPORT_COLUMNS[2:]))
        for report in reports
        for row in report.epochs
    ]


def compare_cases(reports: Mapping[CaseName, ReliabilityReport], base: Optional[CaseName] = None) -> pl.DataFrame:
    """
    Side-by-side indices per epoch and metric, with deltas against the base case.

    The frame has the columns epoch, metric, one column per case (FR, FGI, FGTI
    order) and ``{case}_minus_{base}`` for every other case.

    Raises:
        HorizonMismatchError: the reports cover different epochs
    """
    if not reports:
        raise ConfigError("no reliability reports to compare")
    cases = [case for case in CaseName if case in reports]
    epoch_sets = {case: tuple(sorted(r.epoch for r in reports[case].epochs)) for case in cases}
    if len(set(epoch_sets.values())) > 1:
        detail = "; ".join(f"{case.value}: {list(epochs)}" for case, epochs in epoch_sets.items())
        raise HorizonMismatchError(f"reliability reports cover different epochs ({detail})")
    base = base if base in reports else cases[0]
    others = [case for case in cases if case is not base]

    records: Dict[str, list] = {"epoch": [], "metric": []}
    for case in cases:
        records[case.value] = []
    for case in others:
        records[f"{case.value}_minus_{base.value}"] = []
    for epoch in epoch_sets[cases[0]]:
        for metric in METRICS:
            records["epoch"].append(epoch)
            records["metric"].append(metric)
            values = {case: getattr(reports[case].for_epoch(epoch), metric) for case in cases}
            for case in cases:
                records[case.value].append(values[case])
            for case in others:
                records[f"{case.value}_minus_{base.value}"].append(values[case] - values[base])
    schema = {"epoch": pl.Int64, "metric": pl.Utf8, **{k: pl.Float64 for k in records if k not in ("epoch", "metric")}}
    return pl.DataFrame(records, schema=schema)


# ==================== FILES ====================

_SHEDDING_SCHEMA = {
    "epoch": pl.Int64,
    "quarter": pl.Int64,
    "day_type": pl.Utf8,
    "interval": pl.Int64,
    "bus_id": pl.Utf8,
    "shed_mw": pl.Float64,
    "curtail_mw": pl.Float64,
}


def load_shedding_frame(path: Union[str, Path]) -> pl.DataFrame:
    return read_csv(path, list(_SHEDDING_SCHEMA), _SHEDDING_SCHEMA, what="shedding")


def load_shedding_records(path: Union[str, Path]) -> List[SheddingRecord]:
    """Records of a batch ``shedding.csv`` (ConfigError when missing)."""
    df = load_shedding_frame(path)
    return [
        SheddingRecord(epoch=epoch, quarter=quarter, day_type=day_type, bus=bus, interval=interval, shed=shed)
        for epoch, quarter, day_type, interval, bus, shed in df.select(
            ["epoch", "quarter", "day_type", "interval", "bus_id", "shed_mw"]
        ).iter_rows()
    ]
