"""Transaction cost models and per-asset cost tables."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import pandas as pd

from .errors import CostTableError, InvalidInputError
from .schemas import CostKind

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostModel:
    """Per-asset quadratic (beta) or proportional (alpha) cost coefficients."""
    kind: CostKind
    coefficients: np.ndarray

    def __post_init__(self):
        coefficients = np.array(self.coefficients, dtype=float).reshape(-1)
        if not np.isfinite(coefficients).all():
            raise InvalidInputError("Cost coefficients must be finite")
        if np.any(coefficients < 0):
            raise InvalidInputError("Cost coefficients must be nonnegative")
        coefficients.setflags(write=False)
        object.__setattr__(self, "kind", CostKind(self.kind))
        object.__setattr__(self, "coefficients", coefficients)

    @classmethod
    def uniform(cls, p: int, value: float, kind: Union[CostKind, str] = CostKind.QUADRATIC) -> "CostModel":
        return cls(kind=CostKind(kind), coefficients=np.full(p, float(value)))

    @classmethod
    def zero(cls, p: int, kind: Union[CostKind, str] = CostKind.QUADRATIC) -> "CostModel":
        return cls.uniform(p, 0.0, kind)

    @property
    def p(self) -> int:
        return self.coefficients.shape[0]

    def quadratic_diag(self) -> np.ndarray:
        """Diagonal added to the quadratic form (beta, or zeros)."""
        if self.kind == CostKind.QUADRATIC:
            return np.array(self.coefficients)
        return np.zeros(self.p)

    def l1_weights(self) -> np.ndarray:
        """Weights folded into the l1 penalty (alpha, or zeros)."""
        if self.kind == CostKind.PROPORTIONAL:
            return np.array(self.coefficients)
        return np.zeros(self.p)

    def charge(self, delta: np.ndarray) -> float:
        """Cost of trading delta as a fraction of wealth."""
        delta = np.asarray(delta, dtype=float)
        if delta.shape != (self.p,):
            raise InvalidInputError(f"Trade vector has shape {delta.shape}, expected {(self.p,)}")
        if self.kind == CostKind.QUADRATIC:
            return float(self.coefficients @ (delta * delta))
        return float(self.coefficients @ np.abs(delta))


@dataclass(frozen=True)
class CostTable:
    """Per-asset proportional cost coefficients loaded from a CSV file."""
    alpha: pd.Series

    @property
    def beta(self) -> pd.Series:
        """Quadratic coefficients derived as twice the squared proportional ones."""
        return 2.0 * self.alpha ** 2

    def cost_model_for(self, assets: Sequence[str], kind: Union[CostKind, str]) -> CostModel:
        """Cost model aligned to the given asset order.

        Raises:
            CostTableError: Some assets have no row in the table
        """
        missing = [a for a in assets if a not in self.alpha.index]
        if missing:
            shown = ", ".join(missing[:20])
            more = f" and {len(missing) - 20} more" if len(missing) > 20 else ""
            raise CostTableError(f"Cost table has no entry for {len(missing)} assets: {shown}{more}", missing_assets=missing)
        kind = CostKind(kind)
        source = self.beta if kind == CostKind.QUADRATIC else self.alpha
        return CostModel(kind=kind, coefficients=source.loc[list(assets)].to_numpy(dtype=float))


def read_cost_table(path: Union[str, Path]) -> CostTable:
    """Load an `asset,proportional_cost` file."""
    path = Path(path)
    if not path.exists():
        raise CostTableError(f"Cost file not found: {path}")
    df = pd.read_csv(path, dtype={"asset": str}, float_precision="round_trip")
    expected = {"asset", "proportional_cost"}
    if not expected.issubset(df.columns):
        raise CostTableError(f"{path}: expected columns asset,proportional_cost, got {','.join(df.columns)}")
    duplicated = df["asset"][df["asset"].duplicated()].unique().tolist()
    if duplicated:
        raise CostTableError(f"{path}: duplicate assets {', '.join(duplicated)}")
    alpha = pd.to_numeric(df["proportional_cost"], errors="coerce")
    bad = df["asset"][~np.isfinite(alpha) | (alpha < 0)].tolist()
    if bad:
        raise CostTableError(f"{path}: invalid proportional cost for {', '.join(bad)}")
    logger.info(f"Read cost table {path}: {len(df)} assets")
    return CostTable(alpha=pd.Series(alpha.to_numpy(dtype=float), index=df["asset"].tolist(), name="alpha"))
