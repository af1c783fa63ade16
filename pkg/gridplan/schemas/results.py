from typing import List, Optional

from pydantic import BaseModel, Field

from gridplan.schemas.study import CaseName


class LineBuild(BaseModel):
    """A candidate line and the epoch it is built in."""
    line_id: str
    construction_epoch: int = Field(..., ge=1)


class CostBlock(BaseModel):
    """Planning costs in $."""
    generation_cost: float
    transmission_investment_cost: float
    total: float


class TransmissionPlan(BaseModel):
    """Plan file written by `gridplan plan`."""
    study: str
    variant: str
    base_case: CaseName
    num_epochs: int = Field(..., ge=1)
    builds: List[LineBuild] = []
    costs: CostBlock
    shed_energy_mwh: float = 0.0

    def built_line_ids(self) -> List[str]:
        return [build.line_id for build in self.builds]


class EpochReliability(BaseModel):
    """Reliability indices of one case in one epoch."""
    case: CaseName
    epoch: int = Field(..., ge=1)
    eue_mwh: float = Field(..., ge=0)
    lolp: float = Field(..., ge=0)
    lole_hours_per_bus: float = Field(..., ge=0)
    lole_pct_8760: float = Field(..., ge=0)
    eue_epoch_mwh: float = Field(..., ge=0)
    lole_epoch_hours_per_bus: float = Field(..., ge=0)


class ReliabilityReport(BaseModel):
    """Per-epoch indices of one case; eue and lole are annualized."""
    case: CaseName
    epochs: List[EpochReliability]

    def for_epoch(self, epoch: int) -> Optional[EpochReliability]:
        for row in self.epochs:
            if row.epoch == epoch:
                return row
        return None
