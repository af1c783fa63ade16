"""
Study configuration file (`--config`).

A JSON document with the option groups ``paths``, ``profiles``, ``tep``, ``scuc``
and ``cases``. Relative paths are resolved against the directory of the file.
"""
import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator

from gridplan.core.config import settings
from gridplan.core.exceptions import ConfigError
from gridplan.milp.problem import SolverConfig
from gridplan.schemas.profiles import DlrModel, TerminalPolicy

logger = logging.getLogger(__name__)


class CaseName(str, Enum):
    """Investment case of a study."""
    FR = "FR"
    FGI = "FGI"
    FGTI = "FGTI"


class TepVariant(str, Enum):
    """Which transmission planning model(s) to solve."""
    CI = "ci"
    TRADITIONAL = "traditional"
    BOTH = "both"


class PathsConfig(BaseModel):
    """Input files and output directory."""
    grid: Path
    weather: Optional[Path] = None
    load: Optional[Path] = None
    generation_investments: Optional[Path] = None
    output_dir: Path = Path("output")

    def resolved(self, base: Path) -> "PathsConfig":
        updates = {}
        for name, value in self:
            if value is not None and not value.is_absolute():
                updates[name] = (base / value).resolve()
        return self.model_copy(update=updates)


class SolverOptions(BaseModel):
    """Limits for the embedded MILP solver; unset limits come from the environment."""
    mip_gap: float = Field(1e-6, gt=0, lt=1)
    node_limit: Optional[int] = Field(None, ge=1)
    time_limit: Optional[float] = Field(None, gt=0)

    def to_solver_config(self, workers: int = 1) -> SolverConfig:
        return SolverConfig(
            mip_gap=self.mip_gap,
            node_limit=self.node_limit or settings.GRIDPLAN_SOLVER_NODE_LIMIT,
            time_limit=self.time_limit or settings.GRIDPLAN_SOLVER_TIME_LIMIT,
            workers=workers,
        )


class ProfileOptions(BaseModel):
    """Profile synthesis options."""
    terminal_policy: TerminalPolicy = TerminalPolicy.CONSERVATIVE
    dlr: DlrModel = DlrModel()
    load_growth: Optional[List[float]] = None

    @field_validator("load_growth")
    @classmethod
    def positive_growth(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        if v is not None and any(not (factor > 0 and math.isfinite(factor)) for factor in v):
            raise ValueError("load growth factors must be positive and finite")
        return v


class TepOptions(BaseModel):
    """Transmission planning options."""
    variant: TepVariant = TepVariant.CI
    theta_bound: float = Field(0.6, gt=0, le=math.pi / 2)
    shed_allowed: bool = False
    shed_penalty: float = Field(10000.0, gt=0)
    base_case: Optional[CaseName] = None
    solver: SolverOptions = SolverOptions()

    @field_validator("base_case")
    @classmethod
    def no_transmission_base(cls, v: Optional[CaseName]) -> Optional[CaseName]:
        if v is CaseName.FGTI:
            raise ValueError("the planning base case must be FR or FGI")
        return v


class ScucOptions(BaseModel):
    """Daily operation options."""
    shed_penalty: float = Field(10000.0, gt=0)
    reserve_required: bool = True
    initial_commitment: Dict[str, int] = {}
    solver: SolverOptions = SolverOptions()

    @field_validator("initial_commitment")
    @classmethod
    def binary_states(cls, v: Dict[str, int]) -> Dict[str, int]:
        for unit, state in v.items():
            if state not in (0, 1):
                raise ValueError(f"initial commitment of {unit} must be 0 or 1")
        return v


class StudyConfig(BaseModel):
    """A reproducible study: inputs, model options and cases to run."""
    name: str = "study"
    paths: PathsConfig
    profiles: ProfileOptions = ProfileOptions()
    tep: TepOptions = TepOptions()
    scuc: ScucOptions = ScucOptions()
    cases: List[CaseName] = [CaseName.FR, CaseName.FGI, CaseName.FGTI]

    @field_validator("cases")
    @classmethod
    def unique_cases(cls, v: List[CaseName]) -> List[CaseName]:
        if not v:
            raise ValueError("at least one case is required")
        return list(dict.fromkeys(v))

    @property
    def planning_base_case(self) -> CaseName:
        """FGI when generation investments are configured, FR otherwise."""
        if self.tep.base_case is not None:
            return self.tep.base_case
        return CaseName.FGI if self.paths.generation_investments else CaseName.FR

    @property
    def output_dir(self) -> Path:
        return self.paths.output_dir

    @classmethod
    def load(cls, path: Path) -> "StudyConfig":
        """
        Load and validate a study file.

        Raises:
            ConfigError: missing file, invalid JSON or invalid options
        """
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Study config not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"Study config {path} is not valid JSON: {e}") from e
        config = cls.parse_dict(raw, source=str(path))
        config = config.model_copy(update={"paths": config.paths.resolved(path.parent.resolve())})
        logger.info(f"Loaded study {config.name} from {path}")
        return config

    @classmethod
    def parse_dict(cls, raw: Mapping[str, Any], source: str = "study config") -> "StudyConfig":
        try:
            return cls.model_validate(raw)
        except ValidationError as e:
            details = "; ".join(
                f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in e.errors()
            )
            raise ConfigError(f"Invalid {source}: {details}") from e

    def with_overrides(self, overrides: Mapping[str, Any]) -> "StudyConfig":
        """Copy with dotted keys (``tep.theta_bound``) replaced, re-validated."""
        if not overrides:
            return self
        data = self.model_dump(mode="json")
        for key, value in overrides.items():
            node = data
            parts = key.split(".")
            for part in parts[:-1]:
                if not isinstance(node.get(part), dict):
                    raise ConfigError(f"Unknown config key {key!r}")
                node = node[part]
            if parts[-1] not in node and ".".join(parts[:-1]) != "scuc.initial_commitment":
                raise ConfigError(f"Unknown config key {key!r}")
            node[parts[-1]] = value
        return self.parse_dict(data, source="config override")
