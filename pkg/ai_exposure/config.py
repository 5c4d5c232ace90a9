import os
from datetime import date
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import yaml
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ai_exposure.domain.exposure import IndexChoice
from ai_exposure.domain.posting import PeriodId, PeriodKind
from ai_exposure.exceptions import ConfigurationError

API_KEY_ENV = "AI_EXPOSURE_API_KEY"

DEFAULT_BLOCKS = [
    "occupation",
    "industry",
    "seniority",
    "state",
    "remote",
    "internship",
    "employment_type",
]


class RunConfig(BaseModel):
    """Settings for one CLI run, read from a flat YAML mapping."""

    model_config = ConfigDict(extra="forbid")

    # inputs
    postings_path: Optional[Path] = None
    annotations_path: Optional[Path] = None
    exposure_path: Optional[Path] = None
    panel_path: Optional[Path] = None
    scenario_path: Optional[Path] = None
    out_dir: Path = Path("./output")

    # measurement
    period_kind: PeriodKind = PeriodKind.QUARTER
    index: Literal["alpha", "beta", "gamma", "custom"] = "beta"
    e2_weight: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    baseline: str = "2021"
    from_period: str = "2023Q3"
    use_common_support: bool = True

    # sampling
    sample_rate: float = Field(default=0.05, gt=0.0, le=1.0)
    min_cell_size: int = Field(default=20, ge=0)
    seed: int = 0

    # oaxaca-blinder
    ob_cutoff: date = date(2022, 12, 1)
    ob_blocks: List[str] = Field(default_factory=lambda: list(DEFAULT_BLOCKS))

    # annotation backend
    backend: Literal["mock", "http"] = "mock"
    endpoint: Optional[str] = None
    model: str = "mock-annotator"
    temperature: float = Field(default=0.0, ge=0.0, le=2.0)
    max_attempts: int = Field(default=3, ge=1)
    max_in_flight: int = Field(default=8, ge=1)
    retry_backoff: float = Field(default=1.0, ge=0.0)
    request_timeout: float = Field(default=60.0, gt=0.0)

    @field_validator("baseline", "from_period")
    @classmethod
    def _period_label(cls, value: str) -> str:
        return PeriodId.parse(value).label

    @property
    def baseline_period(self) -> PeriodId:
        return PeriodId.parse(self.baseline)

    @property
    def from_period_id(self) -> PeriodId:
        return PeriodId.parse(self.from_period)

    @property
    def index_choice(self) -> IndexChoice:
        if self.index == "custom":
            if self.e2_weight is None:
                raise ConfigurationError("index 'custom' requires e2_weight")
            return self.e2_weight
        return self.index

    @property
    def api_key(self) -> Optional[str]:
        return os.getenv(API_KEY_ENV)

    @classmethod
    def load(cls, path: Optional[Path] = None, **overrides: Any) -> "RunConfig":
        data: Dict[str, Any] = {}
        if path is not None:
            try:
                with open(path, "r") as file:
                    data = yaml.safe_load(file) or {}
            except FileNotFoundError:
                raise ConfigurationError(f"Config file not found: {path}")
            except yaml.YAMLError as e:
                raise ConfigurationError(f"Config file {path} is not valid YAML: {e}")
            if not isinstance(data, dict):
                raise ConfigurationError(f"Config file {path} must hold a flat key: value mapping")
            logger.debug(f"Loaded config from {path}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**data)
        except ValidationError as e:
            first = e.errors()[0]
            field = ".".join(str(part) for part in first["loc"])
            raise ConfigurationError(f"{path or 'config'}: {field}: {first['msg']}")

    def require(self, *fields: str) -> None:
        """Check that the named input paths are set and exist."""
        for name in fields:
            value = getattr(self, name)
            if value is None:
                raise ConfigurationError(f"{name} is not configured")
            if not Path(value).exists():
                raise ConfigurationError(f"{name} does not exist: {value}")
