from datetime import datetime
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator


class TerminalPolicy(str, Enum):
    """How the weather at the two ends of a line is combined."""
    CONSERVATIVE = "conservative"
    AVERAGE = "average"


class DayType(str, Enum):
    """Representative day type."""
    WEEKDAY = "WD"
    WEEKEND = "WE"
    ALL = "ALL"


class WeatherSample(BaseModel):
    """One weather observation at one location."""
    model_config = ConfigDict(frozen=True)

    timestamp: datetime
    location_id: str
    temperature: float = Field(..., ge=-60, le=60)
    wind_speed_10m: float = Field(..., ge=0)
    shortwave: float = Field(..., ge=0)
    longwave: float = Field(..., ge=0)


class DlrModel(BaseModel):
    """Coefficients of the multiplicative dynamic line rating model."""
    model_config = ConfigDict(frozen=True)

    temp_coeff: float = Field(0.005, ge=0)
    temp_ref: float = 25.0
    wind_coeff: float = Field(0.01, ge=0)
    wind_ref: float = Field(0.6, ge=0)
    wind_cap: float = Field(10.0, ge=0)
    solar_coeff: float = Field(0.05, ge=0)
    solar_ref: float = Field(1000.0, gt=0)
    f_lo: float = Field(0.5, ge=0, le=1)
    f_hi: float = Field(1.5, ge=1)


class DlrParams(DlrModel):
    """DLR coefficients bound to the rating of one line."""
    base_rating: float = Field(..., gt=0)


class PowerCurve(BaseModel):
    """Cubic wind turbine power curve scaled to a farm capacity."""
    model_config = ConfigDict(frozen=True)

    v_cutin: float
    v_rated: float
    v_cutout: float
    capacity: float = Field(..., ge=0)

    @model_validator(mode="after")
    def ordered_speeds(self) -> "PowerCurve":
        """Require 0 < cut-in < rated < cut-out."""
        if not 0 < self.v_cutin < self.v_rated < self.v_cutout:
            raise ValueError(
                f"malformed curve ordering: need 0 < cut-in ({self.v_cutin}) < rated "
                f"({self.v_rated}) < cut-out ({self.v_cutout})"
            )
        return self


class SolarPanel(BaseModel):
    """Effective-irradiance solar model of one plant."""
    model_config = ConfigDict(frozen=True)

    capacity: float = Field(..., ge=0)
    f_sw: float = Field(0.85, ge=0)
    f_lw: float = Field(0.05, ge=0)
    g_ref: float = Field(1000.0, gt=0)
