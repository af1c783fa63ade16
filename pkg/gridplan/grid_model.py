"""
Grid files, investment cases and per-unit conversion.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from pydantic import TypeAdapter, ValidationError

from gridplan.core.exceptions import ConfigError, GridParseError, GridValidationError, UnknownAssetError
from gridplan.schemas.grid import (
    Bus,
    GenerationInvestment,
    GridInvariantError,
    GridModel,
    InvestmentKind,
    RenewablePlant,
    ThermalGenerator,
    TransmissionLine,
    natural_key,
)
from gridplan.schemas.results import TransmissionPlan
from gridplan.schemas.study import CaseName
from gridplan.utils import atomic_write_text

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_ENTITY_LABELS = {"buses": "bus", "lines": "line", "generators": "generator", "renewables": "renewable"}


# ==================== PER-UNIT ====================

def to_per_unit(value: float, base: float) -> float:
    """MW or MVA to per-unit on the given MVA base."""
    if not base > 0:
        raise ValueError(f"MVA base must be positive, got {base}")
    return value / base


def from_per_unit(value: float, base: float) -> float:
    """Per-unit back to MW or MVA."""
    if not base > 0:
        raise ValueError(f"MVA base must be positive, got {base}")
    return value * base


# ==================== GRID FILES ====================

def _describe_errors(error: ValidationError, raw: Any) -> List[str]:
    """Turn pydantic errors into messages that name the entity id."""
    problems: List[str] = []
    for err in error.errors():
        cause = err.get("ctx", {}).get("error")
        if isinstance(cause, GridInvariantError):
            problems.extend(cause.problems)
            continue
        loc = list(err["loc"])
        where = ".".join(str(part) for part in loc) or "grid"
        if len(loc) >= 2 and loc[0] in _ENTITY_LABELS and isinstance(loc[1], int):
            try:
                entity_id = raw[loc[0]][loc[1]].get("id", f"#{loc[1]}")
            except (KeyError, IndexError, TypeError, AttributeError):
                entity_id = f"#{loc[1]}"
            field_name = ".".join(str(part) for part in loc[2:])
            where = f"{_ENTITY_LABELS[loc[0]]} {entity_id} {field_name}".rstrip()
        problems.append(f"{where}: {err['msg']}")
    return problems


def parse_grid(raw: Mapping[str, Any]) -> GridModel:
    """Validate a decoded grid document."""
    try:
        return GridModel.model_validate(raw)
    except ValidationError as e:
        raise GridValidationError(_describe_errors(e, raw)) from e


def load_grid(path: PathLike) -> GridModel:
    """
    Load and validate a grid file.

    Args:
        path: JSON grid file

    Returns:
        GridModel: the validated system

    Raises:
        ConfigError: the file does not exist
        GridParseError: the file is not valid JSON
        GridValidationError: every violated invariant, with entity ids
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Grid file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        logger.error(f"Error parsing grid file {path}: {str(e)}")
        raise GridParseError(f"Grid file {path} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise GridParseError(f"Grid file {path} must contain a JSON object")
    grid = parse_grid(raw)
    logger.info(
        f"Loaded grid {grid.name}: {len(grid.buses)} buses, {len(grid.lines)} lines "
        f"({len(grid.candidate_lines)} candidates), {len(grid.generators)} thermal units, "
        f"{len(grid.renewables)} renewables"
    )
    return grid


def dumps_grid(grid: GridModel) -> str:
    return json.dumps(grid.model_dump(mode="json", exclude_none=True), indent=2) + "\n"


def write_grid(grid: GridModel, path: PathLike) -> Path:
    """Write a grid in the format read by load_grid."""
    return atomic_write_text(Path(path), dumps_grid(grid))


# ==================== INVESTMENTS ====================

_INVESTMENTS = TypeAdapter(List[GenerationInvestment])


def load_generation_investments(path: PathLike) -> List[GenerationInvestment]:
    """Read a generation-investment file (JSON list)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Generation investment file not found: {path}")
    try:
        return _INVESTMENTS.validate_json(path.read_text())
    except ValidationError as e:
        details = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"Invalid generation investment file {path}: {details}") from e


def merge_generation_plan(grid: GridModel, investments: Sequence[GenerationInvestment]) -> GridModel:
    """
    Grid with the investment assets added as new units.

    Raises:
        UnknownAssetError: an investment sits at an unknown bus or reuses an asset id
        ConfigError: an investment is commissioned after the last epoch
    """
    if not investments:
        return grid
    bus_ids = set(grid.bus_ids)
    asset_ids = {unit.id for unit in [*grid.generators, *grid.renewables]}
    thermal = list(grid.generators)
    renewables = list(grid.renewables)
    for item in investments:
        if item.bus not in bus_ids:
            raise UnknownAssetError(f"Generation investment {item.asset_id} references unknown bus {item.bus}")
        if item.asset_id in asset_ids:
            raise UnknownAssetError(f"Generation investment {item.asset_id} reuses an existing asset id")
        if item.commission_epoch > grid.horizon.num_epochs:
            raise ConfigError(
                f"Generation investment {item.asset_id} is commissioned in epoch {item.commission_epoch}, "
                f"beyond the {grid.horizon.num_epochs}-epoch horizon"
            )
        asset_ids.add(item.asset_id)
        if item.kind is InvestmentKind.THERMAL:
            thermal.append(item.to_thermal())
        else:
            renewables.append(item.to_renewable())
    logger.info(f"Merged {len(investments)} generation investments into {grid.name}")
    return grid.model_copy(update={"generators": thermal, "renewables": renewables})


def check_transmission_plan(grid: GridModel, plan: Optional[TransmissionPlan]) -> Dict[str, int]:
    """
    Map of built candidate id to construction epoch.

    Raises:
        UnknownAssetError: the plan names a line that is not a candidate of the grid
        ConfigError: a construction epoch lies outside the horizon
    """
    if plan is None:
        return {}
    candidates = {line.id for line in grid.candidate_lines}
    built: Dict[str, int] = {}
    for build in plan.builds:
        if build.line_id not in candidates:
            raise UnknownAssetError(f"Transmission plan references unknown candidate line {build.line_id}")
        if build.construction_epoch > grid.horizon.num_epochs:
            raise ConfigError(
                f"Line {build.line_id} is built in epoch {build.construction_epoch}, "
                f"beyond the {grid.horizon.num_epochs}-epoch horizon"
            )
        built[build.line_id] = build.construction_epoch
    return built


@dataclass(frozen=True)
class EpochView:
    """The system as operated in one epoch of one case."""
    case: CaseName
    epoch: int
    base_mva: float
    buses: Tuple[Bus, ...]
    lines: Tuple[TransmissionLine, ...]
    generators: Tuple[ThermalGenerator, ...]
    renewables: Tuple[RenewablePlant, ...]

    @property
    def bus_ids(self) -> List[str]:
        return [bus.id for bus in self.buses]

    @property
    def reference_bus(self) -> str:
        return min(self.bus_ids, key=natural_key)

    @property
    def line_ids(self) -> List[str]:
        return [line.id for line in self.lines]


def apply_investments(
    grid: GridModel,
    gen_plan: Sequence[GenerationInvestment] = (),
    tep_plan: Optional[TransmissionPlan] = None,
) -> Dict[int, EpochView]:
    """
    Materialize one view per epoch for the FR, FGI or FGTI case.

    Epoch p exposes the existing fleet plus units commissioned by p, and the
    existing lines plus the candidates built by p (as ordinary lines); unbuilt
    candidates are left out.
    """
    merged = merge_generation_plan(grid, gen_plan)
    built = check_transmission_plan(grid, tep_plan)
    if tep_plan is not None:
        case = CaseName.FGTI
    elif gen_plan:
        case = CaseName.FGI
    else:
        case = CaseName.FR

    views: Dict[int, EpochView] = {}
    for epoch in grid.horizon.epochs:
        lines = tuple(
            line if not line.candidate else line.model_copy(update={"candidate": False})
            for line in merged.lines
            if not line.candidate or built.get(line.id, epoch + 1) <= epoch
        )
        views[epoch] = EpochView(
            case=case,
            epoch=epoch,
            base_mva=merged.base_mva,
            buses=tuple(merged.buses),
            lines=lines,
            generators=tuple(merged.thermal_in(epoch)),
            renewables=tuple(merged.renewables_in(epoch)),
        )
    return views
