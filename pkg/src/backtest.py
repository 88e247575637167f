"""Multi-stage backtest engine.

Stage t (1-based) decides on day d_t = window_n + (t - 1) * rebalance_every,
using moments of the window_n rows before d_t, then holds for
rebalance_every rows while weights drift with prices. Trade cost is charged
as a fraction of wealth on the first holding day.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .cape import RebalanceProblem, fit_strategy
from .costs import CostModel
from .errors import CapeError, InvalidInputError, PortfolioWipeoutError, UndefinedSharpeError
from .metrics import (
    leverage,
    population_sharpe_ratio,
    sharpe_ratio,
    transaction_cost_charge,
    turnover,
)
from .moments import ReturnPanel, estimate_moments
from .schemas import EstimatorTag, SolverConfig, StrategySpec

logger = logging.getLogger(__name__)

__all__ = [
    "BacktestPlan",
    "BacktestResult",
    "StageReport",
    "StageWeights",
    "drift_weights",
    "hold_through",
    "leverage",
    "population_sharpe_ratio",
    "read_report_csv",
    "run_backtest",
    "sharpe_ratio",
    "transaction_cost_charge",
    "turnover",
    "write_report_csv",
]

WIPEOUT_FLOOR = 1e-12
REPORT_COLUMNS = ["stage", "method", "return_pct", "cost_pct", "turnover", "leverage", "sharpe"]


class BacktestPlan(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    window_n: int = Field(ge=2)
    stages_m: int = Field(ge=1)
    rebalance_every: Optional[int] = Field(default=None, gt=0)
    strategy: StrategySpec
    cost: Any
    estimator: EstimatorTag = EstimatorTag.LINEAR_SHRINKAGE
    # Panel units times return_scale gives decimal returns.
    return_scale: float = Field(default=1.0, gt=0)
    method: Optional[str] = None

    @field_validator("cost")
    @classmethod
    def check_cost(cls, value: Any) -> CostModel:
        if not isinstance(value, CostModel):
            raise ValueError(f"cost must be a CostModel, got {type(value).__name__}")
        return value

    @property
    def holding_days(self) -> int:
        return self.rebalance_every or self.window_n

    @property
    def required_rows(self) -> int:
        return self.window_n + self.stages_m * self.holding_days

    @property
    def label(self) -> str:
        return self.method or self.strategy.label


@dataclass
class StageReport:
    stage: int
    method: str
    gross_return_pct: float
    cost_pct: float
    turnover: float
    leverage: float
    sharpe: float
    error: Optional[str] = None


@dataclass
class StageWeights:
    stage: int
    w_plus_prev: np.ndarray
    weights: np.ndarray
    delta: np.ndarray
    lla_rounds: Optional[int] = None


@dataclass
class BacktestResult:
    method: str
    reports: List[StageReport]
    overall_sharpe: float
    weight_history: List[StageWeights] = field(default_factory=list)
    daily_net_returns: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "stage": f"S{r.stage}",
                "method": r.method,
                "return_pct": r.gross_return_pct,
                "cost_pct": r.cost_pct,
                "turnover": r.turnover,
                "leverage": r.leverage,
                "sharpe": r.sharpe,
            }
            for r in self.reports
        ]
        rows.append({"stage": "overall", "method": self.method, "sharpe": self.overall_sharpe})
        return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def hold_through(w: np.ndarray, holding_returns: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Drift w through a holding period.

    Args:
        w: Weights at the start of the period, summing to 1
        holding_returns: Decimal returns, one row per day

    Returns:
        (daily portfolio returns, pre-rebalance weights at the end)

    Raises:
        PortfolioWipeoutError: Portfolio value reaches zero on some day
    """
    w = np.array(w, dtype=float).reshape(-1)
    returns = np.atleast_2d(np.asarray(holding_returns, dtype=float))
    if abs(w.sum() - 1.0) > 1e-8:
        raise InvalidInputError(f"Weights sum to {w.sum():.12f}, expected 1")
    if returns.shape[1] != w.shape[0]:
        raise InvalidInputError(f"Returns have {returns.shape[1]} assets, weights have {w.shape[0]}")
    daily = np.empty(returns.shape[0])
    for i, r in enumerate(returns):
        growth = 1.0 + w @ r
        if growth <= WIPEOUT_FLOOR:
            raise PortfolioWipeoutError(f"Portfolio value hit zero on holding day {i + 1}", day=i + 1)
        daily[i] = growth - 1.0
        w = w * (1.0 + r) / growth
    return daily, w


def drift_weights(w: np.ndarray, holding_returns: np.ndarray) -> np.ndarray:
    """w_plus = f_n o ... o f_1 (w) with f_i(w) = w * (1 + R_i) / (1 + w^T R_i)."""
    return hold_through(w, holding_returns)[1]


def _safe_sharpe(returns: np.ndarray) -> float:
    try:
        return sharpe_ratio(returns)
    except UndefinedSharpeError:
        return float("nan")


def _failed_report(stage: int, method: str, error: str) -> StageReport:
    nan = float("nan")
    return StageReport(stage, method, nan, nan, nan, nan, nan, error=error)


def run_backtest(panel: ReturnPanel, plan: BacktestPlan, solver_config: Optional[SolverConfig] = None) -> BacktestResult:
    """Run the staged construction / reallocation pipeline on one panel.

    Stage 1 failures abort the run. A failed reallocation at a later stage
    keeps the drifted portfolio (no trade) and records the error; a wipeout
    marks the remaining stages as failed.
    """
    if panel.n_obs < plan.required_rows:
        raise InvalidInputError(
            f"Panel has {panel.n_obs} rows, plan needs {plan.required_rows} "
            f"({plan.window_n} + {plan.stages_m} x {plan.holding_days})"
        )
    if plan.cost.p != panel.n_assets:
        raise InvalidInputError(f"Cost model covers {plan.cost.p} assets, panel has {panel.n_assets}")

    p = panel.n_assets
    method = plan.label
    hold = plan.holding_days
    w_plus = np.zeros(p)
    reports: List[StageReport] = []
    history: List[StageWeights] = []
    net_chunks: List[np.ndarray] = []

    for stage in range(1, plan.stages_m + 1):
        decision = plan.window_n + (stage - 1) * hold
        window = panel.window(decision - plan.window_n, decision)
        error = None
        lla_rounds = None
        try:
            moments = estimate_moments(window, plan.estimator)
            problem = RebalanceProblem(moments=moments, cost=plan.cost, w_plus=w_plus, stage=stage)
            fit = fit_strategy(problem, plan.strategy, solver_config)
            weights = fit.weights
            lla_rounds = fit.lla.rounds if fit.lla is not None else None
        except CapeError as e:
            if stage == 1:
                logger.error(f"{method}: first construction failed: {e}", exc_info=True)
                raise
            logger.warning(f"{method}: stage {stage} reallocation failed, holding previous portfolio: {e}")
            error = f"{type(e).__name__}: {e}"
            weights = w_plus.copy()

        delta = weights - w_plus
        cost_fraction = transaction_cost_charge(delta, plan.cost)
        holding = panel.returns[decision:decision + hold] * plan.return_scale
        try:
            daily, w_next = hold_through(weights, holding)
        except PortfolioWipeoutError as e:
            logger.error(f"{method}: stage {stage} wiped out on day {e.day}")
            for failed in range(stage, plan.stages_m + 1):
                reports.append(_failed_report(failed, method, f"PortfolioWipeoutError: {e}"))
            break

        net = daily.copy()
        net[0] -= cost_fraction
        net_chunks.append(net)
        history.append(StageWeights(stage=stage, w_plus_prev=w_plus, weights=weights, delta=delta, lla_rounds=lla_rounds))
        reports.append(
            StageReport(
                stage=stage,
                method=method,
                gross_return_pct=float((np.prod(1.0 + daily) - 1.0) * 100.0),
                cost_pct=cost_fraction * 100.0,
                turnover=turnover(weights, w_plus),
                leverage=leverage(weights),
                sharpe=_safe_sharpe(net),
                error=error,
            )
        )
        logger.debug(f"{method} S{stage}: turnover {reports[-1].turnover:.3f}, cost {reports[-1].cost_pct:.4f}%")
        w_plus = w_next

    all_net = np.concatenate(net_chunks) if net_chunks else np.zeros(0)
    overall = _safe_sharpe(all_net)
    logger.info(f"{method}: {len(net_chunks)}/{plan.stages_m} stages held, overall Sharpe {overall:.3f}")
    return BacktestResult(method=method, reports=reports, overall_sharpe=overall, weight_history=history, daily_net_returns=all_net)


def write_report_csv(results: Union[BacktestResult, Iterable[BacktestResult]], path: Union[str, Path]) -> Path:
    """Write `stage,method,return_pct,cost_pct,turnover,leverage,sharpe` rows plus an overall row per method."""
    if isinstance(results, BacktestResult):
        results = [results]
    frames = [r.to_frame() for r in results]
    path = Path(path)
    pd.concat(frames, ignore_index=True).to_csv(path, index=False)
    return path


def read_report_csv(path: Union[str, Path]) -> List[BacktestResult]:
    df = pd.read_csv(path, dtype={"stage": str, "method": str}, float_precision="round_trip")
    missing = [c for c in REPORT_COLUMNS if c not in df.columns]
    if missing:
        raise InvalidInputError(f"{path}: missing report columns {', '.join(missing)}")
    results: List[BacktestResult] = []
    for method, rows in df.groupby("method", sort=False):
        reports = []
        overall = float("nan")
        for row in rows.itertuples(index=False):
            if row.stage == "overall":
                overall = float(row.sharpe)
                continue
            reports.append(
                StageReport(
                    stage=int(row.stage.lstrip("S")),
                    method=method,
                    gross_return_pct=float(row.return_pct),
                    cost_pct=float(row.cost_pct),
                    turnover=float(row.turnover),
                    leverage=float(row.leverage),
                    sharpe=float(row.sharpe),
                )
            )
        results.append(BacktestResult(method=method, reports=reports, overall_sharpe=overall))
    return results

