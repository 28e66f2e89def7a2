"""
Data models for run configuration and shared enumerations.
"""
from enum import Enum
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, Field, field_validator

from app.utils.errors import ConfigError


class MarketMode(str, Enum):
    """Market clearing model."""
    LOSSLESS = "lossless"
    LOSSY = "lossy"


class SearchMethod(str, Enum):
    """How a hyperplane or basis vector was found."""
    DPCP = "DPCP"
    RS = "RS"
    BOTTOM_UP = "bottom-up"
    TOP_DOWN = "top-down"


class LmpCsvSchema(BaseModel):
    """Column names of an LMP export; components other than congestion are optional."""
    node: str = Field(default="node")
    timestamp: str = Field(default="timestamp")
    congestion: str = Field(default="mcc")
    loss: Optional[str] = Field(default="mlc")
    energy: Optional[str] = Field(default="mec")

    @classmethod
    def spp(cls) -> "LmpCsvSchema":
        """Real-time LMP export layout of the Southwest Power Pool."""
        return cls(node="Settlement Location", timestamp="GMT Interval",
                   congestion="MCC", loss="MLC", energy="MEC")


class RunConfig(BaseModel):
    """Configuration shared by all subcommands."""
    mode: MarketMode = Field(default=MarketMode.LOSSLESS, description="Market clearing model")
    case: Optional[str] = Field(default=None, description="Case file path or builtin:<name>")
    lmp: Optional[Path] = Field(default=None, description="LMP panel CSV")
    truth: Optional[Path] = Field(default=None, description="Ground-truth CSV")
    out: Path = Field(default=Path("out"), description="Output directory")

    eps_cutoff: float = Field(default=0.005, gt=0, lt=1, description="Cutoff kernel epsilon")
    eps_encode: float = Field(default=1e-3, gt=0, lt=1, description="Relative status threshold")
    p: float = Field(default=0.05, gt=0, lt=1, description="Minimum hyperplane inlier share")
    n_trials: Optional[int] = Field(default=None, ge=1, description="Random-sampling trials; derived from p when unset")
    rank_tol: float = Field(default=1e-6, gt=0, lt=1)
    zero_tol: float = Field(default=1e-6, gt=0, lt=1)
    energy_tol: float = Field(default=1e-8, gt=0, lt=1)
    inlier_tol: float = Field(default=1e-6, gt=0, lt=1)
    congestion_tol: float = Field(default=1e-4, gt=0, description="$/MWh below which an interval is uncongested")
    dedupe_tol: Optional[float] = Field(default=None, ge=0, description="Merge identical nodes when set")
    forward_fill: bool = Field(default=False, description="Forward-fill gaps in the LMP panel")
    lmp_layout: Literal["default", "spp"] = Field(default="default", description="Column names of the LMP file")

    noise: float = Field(default=0.03, ge=0, lt=1, description="Relative std of load and price noise")
    intervals: int = Field(default=576, ge=1, description="Number of simulated intervals")
    seed: int = Field(default=0, ge=0)
    ref_node: Optional[str] = Field(default=None, description="Node subtracted to remove the uniform loss term")
    workers: int = Field(default=1, ge=1, description="Parallel scenario solves")
    start: str = Field(default="2020-01-01T00:00:00", description="Timestamp of the first interval")
    interval_minutes: int = Field(default=5, ge=1)

    services: dict[str, dict[str, Any]] = Field(
        default_factory=dict,
        description="Overrides for service dataclass configs, keyed by service name",
    )

    class Config:
        json_schema_extra = {
            "example": {
                "mode": "lossless",
                "case": "builtin:case30_style",
                "out": "runs/case30",
                "eps_cutoff": 0.005,
                "noise": 0.03,
                "intervals": 576,
                "seed": 7,
            }
        }

    @field_validator("case")
    @classmethod
    def _strip_case(cls, value: Optional[str]) -> Optional[str]:
        return value.strip() if value else value

    def require(self, *names: str) -> None:
        """Raise ConfigError naming every listed field that is unset."""
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            raise ConfigError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")
