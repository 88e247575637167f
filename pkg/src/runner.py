"""Replicate jobs: tune, backtest and aggregate.

Each replicate is an independent job keyed by its index; jobs fan out over a
thread pool and results are sorted by replicate before anything is written.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .backtest import REPORT_COLUMNS, BacktestPlan, BacktestResult, run_backtest
from .cape import (
    RebalanceProblem,
    default_lambda_grid,
    fit_strategy,
    lasso_lambda,
    lasso_scale_unit,
    tune_lambda,
    tune_lasso_scale,
)
from .config import RunConfig
from .costs import CostModel
from .metrics import population_sharpe_ratio, sharpe_ratio
from .moments import ReturnPanel, estimate_moments
from .schemas import CostKind, EstimatorTag, ScadParams, SolverConfig, StrategyKind, StrategySpec
from .simgen import FactorModelParams, SimulatedUniverse, generate_panel, universe_moments

logger = logging.getLogger(__name__)

SIMULATED_RETURN_SCALE = 0.01
TUNED_KINDS = (StrategyKind.PMV, StrategyKind.CAPE_L, StrategyKind.CAPE_S)
METRICS = ["return_pct", "cost_pct", "turnover", "leverage", "sharpe"]
DIAGNOSTIC_COLUMNS = ["replicate", "method", "stage", "lambda", "lasso_scale", "support", "lla_rounds", "error"]


@dataclass
class TunedSpec:
    spec: StrategySpec
    penalty: float = float("nan")
    lasso_scale: float = float("nan")
    curve: List[Tuple[float, float]] = field(default_factory=list)
    failures: Dict[float, str] = field(default_factory=dict)


@dataclass
class ReplicateOutcome:
    replicate: int
    results: List[BacktestResult] = field(default_factory=list)
    diagnostics: List[Dict[str, Any]] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def base_spec(kind: StrategyKind, config: RunConfig) -> StrategySpec:
    scad = ScadParams(lam=0.0, a=config.scad_a) if kind == StrategyKind.CAPE_S else None
    return StrategySpec(kind=kind, gamma=config.gamma, scad=scad)


def uniform_cost(config: RunConfig, p: int) -> CostModel:
    value = config.beta if config.cost_kind == CostKind.QUADRATIC else config.alpha
    return CostModel.uniform(p, value, config.cost_kind)


def tune_strategy(
    window: ReturnPanel,
    kind: StrategyKind,
    cost: CostModel,
    config: RunConfig,
    solver_config: Optional[SolverConfig] = None,
    return_scale: float = 1.0,
) -> TunedSpec:
    """Tune a strategy's penalties on its first estimation window.

    CAPE_L and CAPE_S tune the Lasso scale M on CAPE_L first; CAPE_S then
    tunes its SCAD lambda over M * sqrt(s log p / n), s being the support of
    that tuned initializer. Curves are keyed by the penalty itself.
    """
    spec = base_spec(kind, config)
    if kind not in TUNED_KINDS:
        return TunedSpec(spec=spec)

    moments = estimate_moments(window, config.estimator)
    problem = RebalanceProblem(moments=moments, cost=cost, stage=1)
    unit = lasso_scale_unit(return_scale)
    scales = [m * unit for m in config.lasso_scale_grid]
    tuned = TunedSpec(spec=spec)
    support = None
    if kind in (StrategyKind.CAPE_L, StrategyKind.CAPE_S):
        lasso_spec = StrategySpec(kind=StrategyKind.CAPE_L, gamma=config.gamma)
        scale, diagnostics = tune_lasso_scale(
            window, problem, lasso_spec, scales, solver_config,
            net_of_cost=config.net_of_cost_tuning, return_scale=return_scale,
        )
        tuned.spec = spec = spec.model_copy(update={"lasso_scale": scale})
        tuned.lasso_scale = scale
        if kind == StrategyKind.CAPE_L:
            level = partial(lasso_lambda, p=problem.p, n=moments.n_obs)
            tuned.penalty = level(scale)
            tuned.curve = [(level(m), sr) for m, sr in diagnostics.curve]
            tuned.failures = {level(m): reason for m, reason in diagnostics.failures.items()}
            return tuned
        init = fit_strategy(problem, lasso_spec.with_penalty(scale, "lasso_scale"), solver_config)
        support = init.support.size
        logger.debug(f"CAPE-S initializer at M={scale:.4g} holds {support} assets")

    grid = config.lambda_grid or default_lambda_grid(moments, spec, scales, support)
    penalty, diagnostics = tune_lambda(
        window, problem, spec, grid, solver_config,
        net_of_cost=config.net_of_cost_tuning, return_scale=return_scale,
    )
    tuned.spec = spec.with_penalty(penalty)
    tuned.penalty = penalty
    tuned.curve = diagnostics.curve
    tuned.failures = diagnostics.failures
    return tuned


def backtest_strategies(
    panel: ReturnPanel,
    cost: CostModel,
    config: RunConfig,
    return_scale: float,
    solver_config: Optional[SolverConfig] = None,
    replicate: Optional[int] = None,
) -> Tuple[List[BacktestResult], List[Dict[str, Any]]]:
    """Tune every configured strategy on the first window and backtest it."""
    window = panel.window(0, config.window)
    results = []
    diagnostics = []
    for kind in config.strategies:
        tuned = tune_strategy(window, kind, cost, config, solver_config, return_scale)
        plan = BacktestPlan(
            window_n=config.window,
            stages_m=config.stages,
            rebalance_every=config.rebalance_every,
            strategy=tuned.spec,
            cost=cost,
            estimator=config.estimator,
            return_scale=return_scale,
        )
        result = run_backtest(panel, plan, solver_config)
        results.append(result)
        errors = {r.stage: r.error for r in result.reports}
        for weights in result.weight_history:
            diagnostics.append({
                "replicate": replicate,
                "method": result.method,
                "stage": f"S{weights.stage}",
                "lambda": tuned.penalty,
                "lasso_scale": tuned.lasso_scale,
                "support": int(np.count_nonzero(weights.delta)),
                "lla_rounds": weights.lla_rounds,
                "error": errors.get(weights.stage),
            })
    return results, diagnostics


def run_replicate(
    replicate: int,
    universe: SimulatedUniverse,
    params: FactorModelParams,
    config: RunConfig,
    solver_config: Optional[SolverConfig] = None,
) -> ReplicateOutcome:
    """One replicate: a fresh panel shared by all strategies."""
    hold = config.rebalance_every or config.window
    n_days = config.window + config.stages * hold
    panel = generate_panel(universe, n_days, params, config.seed, replicate=replicate)
    scale = config.return_scale or SIMULATED_RETURN_SCALE
    cost = uniform_cost(config, universe.p)
    results, diagnostics = backtest_strategies(panel, cost, config, scale, solver_config, replicate=replicate)
    return ReplicateOutcome(replicate=replicate, results=results, diagnostics=diagnostics)


def _replicate_job(replicate: int, universe, params, config, solver_config) -> ReplicateOutcome:
    logger.info(f"Job started: replicate {replicate}")
    try:
        outcome = run_replicate(replicate, universe, params, config, solver_config)
        logger.info(f"Job finished: replicate {replicate}")
        return outcome
    except Exception as e:
        logger.error(f"Replicate {replicate} failed: {e}", exc_info=True)
        return ReplicateOutcome(replicate=replicate, error=f"{type(e).__name__}: {e}")


def run_replicates(
    universe: SimulatedUniverse,
    params: FactorModelParams,
    config: RunConfig,
    solver_config: Optional[SolverConfig] = None,
) -> List[ReplicateOutcome]:
    """Run config.replicates jobs on config.workers threads.

    Returns:
        Outcomes sorted by replicate index, failures included
    """
    outcomes: List[ReplicateOutcome] = []
    with ThreadPoolExecutor(max_workers=config.workers) as executor:
        futures = [
            executor.submit(_replicate_job, r, universe, params, config, solver_config)
            for r in range(config.replicates)
        ]
        for future in as_completed(futures):
            outcomes.append(future.result())
    outcomes.sort(key=lambda o: o.replicate)
    succeeded = sum(1 for o in outcomes if o.ok)
    logger.info(f"Replicates finished: {succeeded} succeeded, {len(outcomes) - succeeded} failed")
    return outcomes


def replicate_frame(outcomes: Sequence[ReplicateOutcome]) -> pd.DataFrame:
    """Per-replicate report rows from the successful replicates."""
    frames = []
    for outcome in outcomes:
        if not outcome.ok:
            continue
        for result in outcome.results:
            frame = result.to_frame()
            frame.insert(0, "replicate", outcome.replicate)
            frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=["replicate"] + REPORT_COLUMNS)
    return pd.concat(frames, ignore_index=True)


def diagnostics_frame(outcomes: Sequence[ReplicateOutcome]) -> pd.DataFrame:
    rows = [row for outcome in outcomes for row in outcome.diagnostics]
    return pd.DataFrame(rows, columns=DIAGNOSTIC_COLUMNS)


def _standard_error(values: pd.Series) -> float:
    count = values.count()
    if count < 2:
        return float("nan")
    return float(values.std(ddof=1) / math.sqrt(count))


def aggregate_reports(per_replicate: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard error per (method, stage) over replicates.

    n_ok counts replicates with a finite Sharpe ratio for the row.
    """
    rows = []
    for (method, stage), group in per_replicate.groupby(["method", "stage"], sort=False):
        row: Dict[str, Any] = {"stage": stage, "method": method}
        for metric in METRICS:
            values = pd.to_numeric(group[metric], errors="coerce")
            row[metric] = float(values.mean()) if values.count() else float("nan")
            row[f"{metric}_se"] = _standard_error(values)
        row["n_ok"] = int(pd.to_numeric(group["sharpe"], errors="coerce").count())
        rows.append(row)
    columns = ["stage", "method"] + [c for m in METRICS for c in (m, f"{m}_se")] + ["n_ok"]
    return pd.DataFrame(rows, columns=columns)


def sharpe_consistency_study(
    universe: SimulatedUniverse,
    params: FactorModelParams,
    sample_sizes: Sequence[int],
    replicates: int,
    spec: StrategySpec,
    seed: int,
    estimator: EstimatorTag = EstimatorTag.LINEAR_SHRINKAGE,
    solver_config: Optional[SolverConfig] = None,
) -> pd.DataFrame:
    """|in-sample Sharpe - population Sharpe| of fitted weights, per window length.

    Returns:
        One row per (n, replicate) with in_sample, population and abs_error
    """
    mu, sigma = universe_moments(universe, params)
    cost = CostModel.zero(universe.p)
    rows = []
    for n in sample_sizes:
        for r in range(replicates):
            panel = generate_panel(universe, n, params, seed, replicate=r)
            moments = estimate_moments(panel, estimator)
            fit = fit_strategy(RebalanceProblem(moments=moments, cost=cost, stage=1), spec, solver_config)
            in_sample = sharpe_ratio(panel.returns @ fit.weights)
            population = population_sharpe_ratio(fit.weights, mu, sigma)
            rows.append({"n": n, "replicate": r, "in_sample": in_sample, "population": population, "abs_error": abs(in_sample - population)})
        logger.info(f"Sharpe consistency: n={n} done ({replicates} replicates)")
    return pd.DataFrame(rows)
