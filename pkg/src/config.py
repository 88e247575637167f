"""Environment settings and run configuration.

Run parameters come from RunConfig defaults, then an optional flat
`key=value` file, then command-line flags (flags win).
"""
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .cape import default_lasso_scales
from .errors import ConfigError
from .schemas import CostKind, EstimatorTag, StrategyKind

logger = logging.getLogger(__name__)

load_dotenv()

LOG_LEVEL = os.getenv("CAPE_LOG_LEVEL", "INFO").upper()
LOG_DIR = os.getenv("CAPE_LOG_DIR")
DEFAULT_WORKERS = max(1, int(os.getenv("CAPE_WORKERS", "1")))

DEFAULT_STRATEGIES = [StrategyKind.MV, StrategyKind.PMV, StrategyKind.CMV, StrategyKind.CAPE_S]


def _split(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class RunConfig(BaseModel):
    strategies: List[StrategyKind] = Field(default_factory=lambda: list(DEFAULT_STRATEGIES))
    cost_kind: CostKind = CostKind.QUADRATIC
    beta: float = Field(default=0.15, ge=0)
    alpha: float = Field(default=0.001, ge=0)
    gamma: float = Field(default=1 / 3, ge=0)
    lambda_grid: Optional[List[float]] = None
    lasso_scale_grid: Optional[List[float]] = None
    grid_size: int = Field(default=10, ge=1)
    scad_a: float = Field(default=3.7, gt=2)
    window: int = Field(default=200, ge=2)
    stages: int = Field(default=5, ge=1)
    rebalance_every: Optional[int] = Field(default=None, gt=0)
    replicates: int = Field(default=100, ge=1)
    seed: int = Field(default=20240601, ge=0)
    p: int = Field(default=500, ge=1)
    estimator: EstimatorTag = EstimatorTag.LINEAR_SHRINKAGE
    out_dir: str = "results"
    workers: int = Field(default=DEFAULT_WORKERS, ge=1)
    return_scale: Optional[float] = Field(default=None, gt=0)
    net_of_cost_tuning: bool = True

    @field_validator("strategies", mode="before")
    @classmethod
    def parse_strategies(cls, value: Any) -> Any:
        value = _split(value)
        if isinstance(value, list):
            value = [StrategyKind.parse(v) if isinstance(v, str) else v for v in value]
            if not value:
                raise ValueError("at least one strategy is required")
        return value

    @field_validator("estimator", mode="before")
    @classmethod
    def parse_estimator(cls, value: Any) -> Any:
        if isinstance(value, str):
            return EstimatorTag.parse(value)
        return value

    @field_validator("lambda_grid", "lasso_scale_grid", mode="before")
    @classmethod
    def parse_grid(cls, value: Any) -> Any:
        return _split(value)

    @field_validator("lambda_grid", "lasso_scale_grid")
    @classmethod
    def check_grid(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is None:
            return value
        if not value:
            raise ValueError("grid must contain at least one value")
        if any(v < 0 for v in value):
            raise ValueError("grid values must be nonnegative")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("grid must be strictly increasing")
        return value

    @model_validator(mode="after")
    def fill_lasso_scale_grid(self) -> "RunConfig":
        if self.lasso_scale_grid is None:
            self.lasso_scale_grid = default_lasso_scales(self.grid_size)
        return self


def _line_of(path: Path, key: str) -> Optional[int]:
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            stripped = line.strip()
            if stripped.startswith("export "):
                stripped = stripped[len("export "):].lstrip()
            if stripped.split("=", 1)[0].strip() == key:
                return number
    return None


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Parse a flat key=value run configuration file.

    Raises:
        ConfigError: File missing, key unknown or value empty
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    values = dotenv_values(path)
    known = set(RunConfig.model_fields)
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"unknown key '{key}' in {path}", field=key, line=_line_of(path, key))
        if value is None or value == "":
            raise ConfigError(f"empty value in {path}", field=key, line=_line_of(path, key))
    logger.debug(f"Read {len(values)} settings from {path}")
    return dict(values)


def build_run_config(
    file_values: Optional[Dict[str, Any]] = None,
    overrides: Optional[Dict[str, Any]] = None,
    source: Optional[Path] = None,
) -> RunConfig:
    """Merge file values and flag overrides into a validated RunConfig."""
    merged: Dict[str, Any] = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig(**merged)
    except ValidationError as exc:
        error = exc.errors()[0]
        field = ".".join(str(part) for part in error["loc"]) or None
        key = field.split(".")[0] if field else None
        from_file = key is not None and key in (file_values or {}) and (overrides or {}).get(key) is None
        line = _line_of(source, key) if source is not None and from_file else None
        raise ConfigError(error["msg"], field=field, line=line) from exc
