"""
Pydantic models of the power system, the planning horizon and generation investments.

Entity models only check their field types; the invariants that need the entity
id in the message (or the whole system) are collected by ``GridModel`` so a single
validation error can list every problem in the file.
"""
import math
import re
from enum import Enum
from typing import List, Literal, Optional, Tuple, Union

import networkx as nx
from pydantic import BaseModel, ConfigDict, Field, model_validator

from gridplan.schemas.profiles import DlrModel, DlrParams, PowerCurve, SolarPanel

EXISTING = "existing"
CommissionEpoch = Union[int, Literal["existing"]]


def natural_key(text: str) -> Tuple[Union[str, int], ...]:
    """Sort key that orders digit runs by value, so "b2" comes before "b10"."""
    return tuple(int(part) if part.isdigit() else part for part in re.split(r"(\d+)", text))


class GridInvariantError(ValueError):
    """Raised by the grid validators with every problem found."""

    def __init__(self, problems: List[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


class RenewableKind(str, Enum):
    """Renewable technology."""
    WIND = "wind"
    SOLAR = "solar"


class InvestmentKind(str, Enum):
    """Technology of a generation investment."""
    THERMAL = "thermal"
    WIND = "wind"
    SOLAR = "solar"


def _commissioned(commission_epoch: CommissionEpoch, epoch: int) -> bool:
    return commission_epoch == EXISTING or commission_epoch <= epoch


# ==================== HORIZON ====================

class PlanningHorizon(BaseModel):
    """Epochs, typical days and intervals of a study."""
    model_config = ConfigDict(frozen=True)

    num_epochs: int = Field(..., ge=1)
    years_per_epoch: int = Field(..., ge=1)
    quarters_per_year: Literal[4] = 4
    weekdays_per_quarter: int = Field(..., ge=0)
    weekend_days_per_quarter: int = Field(..., ge=0)
    intervals_per_day: int = Field(..., ge=1)
    interval_hours: float = Field(..., gt=0)
    maintenance_ratio: float = Field(0.0, ge=0, lt=1)
    start_year: int = 2030

    @model_validator(mode="after")
    def consistent_calendar(self) -> "PlanningHorizon":
        problems = []
        if not math.isclose(self.interval_hours * self.intervals_per_day, 24.0):
            problems.append(
                f"horizon: interval_hours x intervals_per_day must be 24, got "
                f"{self.interval_hours} x {self.intervals_per_day}"
            )
        if self.weekdays_per_quarter + self.weekend_days_per_quarter > 92:
            problems.append("horizon: weekdays_per_quarter + weekend_days_per_quarter exceeds 92")
        if self.weekdays_per_quarter + self.weekend_days_per_quarter == 0:
            problems.append("horizon: at least one weekday or weekend day per quarter is required")
        if problems:
            raise GridInvariantError(problems)
        return self

    @property
    def epochs(self) -> range:
        return range(1, self.num_epochs + 1)

    @property
    def quarters(self) -> range:
        return range(1, self.quarters_per_year + 1)

    @property
    def intervals(self) -> range:
        return range(1, self.intervals_per_day + 1)

    @property
    def typical_days_per_year(self) -> int:
        return self.quarters_per_year * len(self.day_types)

    @property
    def day_types(self) -> Tuple[str, ...]:
        """Modelled day types; a type with zero days per quarter is dropped."""
        types = []
        if self.weekdays_per_quarter > 0:
            types.append("WD")
        if self.weekend_days_per_quarter > 0:
            types.append("WE")
        return tuple(types)

    def day_weight(self, day_type: str) -> int:
        """Days per quarter represented by one typical day of the given type."""
        if day_type == "WD":
            return self.weekdays_per_quarter
        if day_type == "WE":
            return self.weekend_days_per_quarter
        raise ValueError(f"Unknown day type {day_type!r}")

    def epoch_years(self, epoch: int) -> range:
        """Calendar years covered by an epoch."""
        first = self.start_year + (epoch - 1) * self.years_per_epoch
        return range(first, first + self.years_per_epoch)

    def epoch_of_year(self, year: int) -> Optional[int]:
        offset = year - self.start_year
        if offset < 0:
            return None
        epoch = offset // self.years_per_epoch + 1
        return epoch if epoch <= self.num_epochs else None


# ==================== ENTITIES ====================

class Bus(BaseModel):
    """Substation location."""
    model_config = ConfigDict(frozen=True)

    id: str
    latitude: float = 0.0
    longitude: float = 0.0
    base_load_profile_ref: Optional[str] = None

    @property
    def load_ref(self) -> str:
        return self.base_load_profile_ref or self.id

    def problems(self) -> List[str]:
        if not (math.isfinite(self.latitude) and math.isfinite(self.longitude)):
            return [f"bus {self.id}: non-finite coordinates"]
        return []


class TransmissionLine(BaseModel):
    """Existing or candidate line of the DC network."""
    model_config = ConfigDict(frozen=True)

    id: str
    from_bus: str
    to_bus: str
    reactance: float
    static_rating: float
    candidate: bool = False
    construction_cost_musd: Optional[float] = None
    big_m: Optional[float] = None
    dlr: Optional[DlrModel] = None

    @property
    def construction_cost(self) -> float:
        """Construction cost in $."""
        return (self.construction_cost_musd or 0.0) * 1e6

    def dlr_params(self, default: DlrModel) -> DlrParams:
        model = self.dlr or default
        return DlrParams(base_rating=self.static_rating, **model.model_dump())

    def problems(self) -> List[str]:
        out = []
        if not self.reactance > 0:
            out.append(f"line {self.id}: nonpositive reactance {self.reactance}")
        if not self.static_rating > 0:
            out.append(f"line {self.id}: nonpositive static rating {self.static_rating}")
        if self.from_bus == self.to_bus:
            out.append(f"line {self.id}: connects bus {self.from_bus} to itself")
        if self.candidate and not (self.construction_cost_musd or 0) > 0:
            out.append(f"line {self.id}: candidate without a positive construction cost")
        if self.big_m is not None and not self.big_m > 0:
            out.append(f"line {self.id}: nonpositive big-M {self.big_m}")
        return out


class ThermalGenerator(BaseModel):
    """Dispatchable unit; new units are gated by their commission epoch."""
    model_config = ConfigDict(frozen=True)

    id: str
    bus: str
    p_min: float = 0.0
    p_max: float
    marginal_cost: float
    online_cost: float = 0.0
    startup_cost: float = 0.0
    ramp_limit: Optional[float] = None
    reserve_ramp: Optional[float] = None
    commission_epoch: CommissionEpoch = EXISTING

    @property
    def is_new(self) -> bool:
        return self.commission_epoch != EXISTING

    def active_in(self, epoch: int) -> bool:
        return _commissioned(self.commission_epoch, epoch)

    def limits(self, epoch: int) -> Tuple[float, float]:
        """(p_min, p_max) in MW for an epoch; zero before commissioning."""
        if not self.active_in(epoch):
            return 0.0, 0.0
        return self.p_min, self.p_max

    @property
    def reserve_capability(self) -> float:
        return self.p_max if self.reserve_ramp is None else self.reserve_ramp

    def problems(self) -> List[str]:
        out = []
        if not 0 <= self.p_min <= self.p_max:
            out.append(f"generator {self.id}: need 0 <= p_min <= p_max, got {self.p_min}, {self.p_max}")
        for label in ("marginal_cost", "online_cost", "startup_cost"):
            if getattr(self, label) < 0:
                out.append(f"generator {self.id}: negative {label}")
        for label in ("ramp_limit", "reserve_ramp"):
            value = getattr(self, label)
            if value is not None and value < 0:
                out.append(f"generator {self.id}: negative {label}")
        if self.is_new and self.commission_epoch < 1:
            out.append(f"generator {self.id}: commission epoch must be >= 1")
        return out


class RenewablePlant(BaseModel):
    """Wind farm or solar plant; availability is synthesized from weather."""
    model_config = ConfigDict(frozen=True)

    id: str
    bus: str
    kind: RenewableKind
    capacity: float
    p_min: float = 0.0
    # wind farm
    hub_height_m: float = 80.0
    reference_height_m: float = 10.0
    roughness_m: float = 0.03
    cut_in_mps: float = 3.0
    rated_mps: float = 12.0
    cut_out_mps: float = 25.0
    # solar plant
    f_sw: float = 0.85
    f_lw: float = 0.05
    g_ref_wm2: float = 1000.0
    commission_epoch: CommissionEpoch = EXISTING

    @property
    def is_new(self) -> bool:
        return self.commission_epoch != EXISTING

    def active_in(self, epoch: int) -> bool:
        return _commissioned(self.commission_epoch, epoch)

    def power_curve(self) -> PowerCurve:
        return PowerCurve(
            v_cutin=self.cut_in_mps, v_rated=self.rated_mps, v_cutout=self.cut_out_mps, capacity=self.capacity
        )

    def solar_panel(self) -> SolarPanel:
        return SolarPanel(capacity=self.capacity, f_sw=self.f_sw, f_lw=self.f_lw, g_ref=self.g_ref_wm2)

    def problems(self) -> List[str]:
        out = []
        if not self.capacity > 0:
            out.append(f"renewable {self.id}: nonpositive capacity {self.capacity}")
        if not 0 <= self.p_min <= self.capacity:
            out.append(f"renewable {self.id}: p_min outside [0, capacity]")
        if not 0 < self.roughness_m <= 2:
            out.append(f"renewable {self.id}: roughness length must lie in (0, 2] m")
        if self.kind is RenewableKind.WIND:
            if not self.hub_height_m > self.roughness_m or not self.reference_height_m > self.roughness_m:
                out.append(f"renewable {self.id}: heights must exceed the roughness length")
            if not 0 < self.cut_in_mps < self.rated_mps < self.cut_out_mps:
                out.append(f"renewable {self.id}: malformed power curve ordering")
        elif self.g_ref_wm2 <= 0 or self.f_sw < 0 or self.f_lw < 0:
            out.append(f"renewable {self.id}: invalid panel parameters")
        if self.is_new and self.commission_epoch < 1:
            out.append(f"renewable {self.id}: commission epoch must be >= 1")
        return out


class GenerationInvestment(BaseModel):
    """One entry of a generation-investment file."""
    model_config = ConfigDict(frozen=True)

    asset_id: str
    kind: InvestmentKind
    bus: str
    capacity_mw: float = Field(..., gt=0)
    commission_epoch: int = Field(..., ge=1)
    p_min_mw: float = Field(0.0, ge=0)
    marginal_cost: float = Field(0.0, ge=0)
    online_cost: float = Field(0.0, ge=0)
    startup_cost: float = Field(0.0, ge=0)
    ramp_limit: Optional[float] = Field(None, ge=0)
    reserve_ramp: Optional[float] = Field(None, ge=0)
    investment_cost_usd: float = Field(0.0, ge=0)

    def to_thermal(self) -> ThermalGenerator:
        return ThermalGenerator(
            id=self.asset_id,
            bus=self.bus,
            p_min=self.p_min_mw,
            p_max=self.capacity_mw,
            marginal_cost=self.marginal_cost,
            online_cost=self.online_cost,
            startup_cost=self.startup_cost,
            ramp_limit=self.ramp_limit,
            reserve_ramp=self.reserve_ramp,
            commission_epoch=self.commission_epoch,
        )

    def to_renewable(self) -> RenewablePlant:
        return RenewablePlant(
            id=self.asset_id,
            bus=self.bus,
            kind=RenewableKind(self.kind.value),
            capacity=self.capacity_mw,
            p_min=self.p_min_mw,
            commission_epoch=self.commission_epoch,
        )


# ==================== SYSTEM ====================

class GridModel(BaseModel):
    """A complete study system."""
    model_config = ConfigDict(frozen=True)

    name: str = "grid"
    base_mva: float = Field(100.0, gt=0)
    horizon: PlanningHorizon
    buses: List[Bus]
    lines: List[TransmissionLine] = []
    generators: List[ThermalGenerator] = []
    renewables: List[RenewablePlant] = []

    @model_validator(mode="after")
    def system_invariants(self) -> "GridModel":
        """Collect every entity and cross-reference problem into one error."""
        problems: List[str] = []
        bus_ids = set()
        for bus in self.buses:
            if bus.id in bus_ids:
                problems.append(f"duplicate bus id {bus.id}")
            bus_ids.add(bus.id)
            problems.extend(bus.problems())
        if not self.buses:
            problems.append("grid has no buses")

        seen = set()
        for line in self.lines:
            if line.id in seen:
                problems.append(f"duplicate line id {line.id}")
            seen.add(line.id)
            problems.extend(line.problems())
            for end in (line.from_bus, line.to_bus):
                if end not in bus_ids:
                    problems.append(f"line {line.id}: unknown bus {end}")

        seen = set()
        for unit in [*self.generators, *self.renewables]:
            if unit.id in seen:
                problems.append(f"duplicate generator id {unit.id}")
            seen.add(unit.id)
            problems.extend(unit.problems())
            if unit.bus not in bus_ids:
                problems.append(f"generator {unit.id}: unknown bus {unit.bus}")
            if unit.is_new and isinstance(unit.commission_epoch, int) and unit.commission_epoch > self.horizon.num_epochs:
                problems.append(f"generator {unit.id}: commission epoch {unit.commission_epoch} beyond the horizon")

        if not problems:
            problems.extend(self._connectivity_problems())
        if problems:
            raise GridInvariantError(problems)
        return self

    def _connectivity_problems(self) -> List[str]:
        graph = nx.Graph()
        graph.add_nodes_from(bus.id for bus in self.buses)
        graph.add_edges_from((line.from_bus, line.to_bus) for line in self.existing_lines)
        if nx.is_connected(graph):
            return []
        islands = sorted(sorted(component) for component in nx.connected_components(graph))
        listed = " | ".join(", ".join(island) for island in islands)
        return [f"existing network is not connected; islands: {listed}"]

    # ==================== ACCESS ====================

    @property
    def maintenance_ratio(self) -> float:
        return self.horizon.maintenance_ratio

    @property
    def bus_ids(self) -> List[str]:
        return [bus.id for bus in self.buses]

    @property
    def reference_bus(self) -> str:
        """First bus id in natural order; its angle is fixed at zero."""
        return min(self.bus_ids, key=natural_key)

    @property
    def existing_lines(self) -> List[TransmissionLine]:
        return [line for line in self.lines if not line.candidate]

    @property
    def candidate_lines(self) -> List[TransmissionLine]:
        return [line for line in self.lines if line.candidate]

    def line(self, line_id: str) -> TransmissionLine:
        for line in self.lines:
            if line.id == line_id:
                return line
        raise KeyError(line_id)

    def thermal_in(self, epoch: int) -> List[ThermalGenerator]:
        """G(p): existing units plus new units commissioned by the epoch."""
        return [unit for unit in self.generators if unit.active_in(epoch)]

    def renewables_in(self, epoch: int) -> List[RenewablePlant]:
        return [plant for plant in self.renewables if plant.active_in(epoch)]
