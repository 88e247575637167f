from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator


class StrategyKind(str, Enum):
    EQUAL_WEIGHT = "EQUAL_WEIGHT"
    MV = "MV"
    PMV = "PMV"
    CMV = "CMV"
    CAPE_L = "CAPE_L"
    CAPE_S = "CAPE_S"

    @property
    def label(self) -> str:
        """Name used in report tables."""
        return STRATEGY_LABELS[self]

    @classmethod
    def parse(cls, value: str) -> "StrategyKind":
        key = value.strip().upper().replace("-", "_")
        if key in STRATEGY_ALIASES:
            return STRATEGY_ALIASES[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"Unknown strategy '{value}'") from None


STRATEGY_LABELS = {
    StrategyKind.EQUAL_WEIGHT: "1/N",
    StrategyKind.MV: "MV",
    StrategyKind.PMV: "PMV",
    StrategyKind.CMV: "CMV",
    StrategyKind.CAPE_L: "CAPE-L",
    StrategyKind.CAPE_S: "CAPE-S",
}

STRATEGY_ALIASES = {
    "1/N": StrategyKind.EQUAL_WEIGHT,
    "EW": StrategyKind.EQUAL_WEIGHT,
}


class CostKind(str, Enum):
    QUADRATIC = "quadratic"
    PROPORTIONAL = "proportional"


class EstimatorTag(str, Enum):
    SAMPLE = "sample"
    LINEAR_SHRINKAGE = "linear-shrinkage"

    @classmethod
    def parse(cls, value: str) -> "EstimatorTag":
        key = value.strip().lower()
        if key == "lse":
            return cls.LINEAR_SHRINKAGE
        return cls(key)


class SolverConfig(BaseModel):
    """Settings for the splitting solver of the weighted-l1 subproblem."""
    model_config = ConfigDict(frozen=True)

    max_iterations: int = Field(default=10_000, gt=0)
    primal_tol: float = Field(default=1e-8, gt=0)
    dual_tol: float = Field(default=1e-8, gt=0)
    penalty_parameter: float = Field(default=1.0, gt=0)
    zero_clip: float = Field(default=1e-8, gt=0)
    # Exact restricted solve is attempted every polish_every iterations.
    polish_every: int = Field(default=25, gt=0)
    residual_balancing: bool = True


class ScadParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    lam: float = Field(ge=0)
    a: float = 3.7

    @field_validator("a")
    @classmethod
    def check_a(cls, value: float) -> float:
        if not value > 2:
            raise ValueError(f"SCAD parameter a must exceed 2, got {value}")
        return value


class StrategySpec(BaseModel):
    """One portfolio strategy and its tuning parameters.

    lambda_l1 is the Lasso weight for PMV and CAPE_L. For CAPE_S it is the
    weight of the Lasso initializer; when zero the initializer falls back to
    lasso_scale * sqrt(log p / n), with a default scale when that is unset too.
    """
    model_config = ConfigDict(frozen=True)

    kind: StrategyKind
    gamma: float = Field(default=1 / 3, ge=0)
    scad: Optional[ScadParams] = None
    lambda_l1: float = Field(default=0.0, ge=0)
    lasso_scale: Optional[float] = Field(default=None, ge=0)

    @property
    def cost_aware(self) -> bool:
        return self.kind in (StrategyKind.CMV, StrategyKind.CAPE_L, StrategyKind.CAPE_S)

    @property
    def label(self) -> str:
        return self.kind.label

    def with_penalty(self, value: float, target: str = "auto") -> "StrategySpec":
        """Copy of this spec with its tunable penalty set to value.

        Args:
            value: New penalty level
            target: "auto" (SCAD lambda for CAPE_S, lambda_l1 otherwise),
                "lasso" (lambda_l1) or "lasso_scale"

        Returns:
            Updated spec
        """
        if target == "lasso_scale":
            return self.model_copy(update={"lasso_scale": value, "lambda_l1": 0.0})
        if target == "lasso" or self.kind != StrategyKind.CAPE_S:
            return self.model_copy(update={"lambda_l1": value})
        if target != "auto":
            raise ValueError(f"Unknown tuning target '{target}'")
        scad = self.scad or ScadParams(lam=value)
        return self.model_copy(update={"scad": scad.model_copy(update={"lam": value})})
