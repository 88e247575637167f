"""Command-line front end: simulate, backtest and tune."""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from .backtest import write_report_csv
from .config import RunConfig, build_run_config, read_config_file
from .costs import CostModel, read_cost_table
from .errors import CapeError, ConfigError, CostTableError, InvalidInputError
from .moments import read_panel_csv
from .runner import (
    DIAGNOSTIC_COLUMNS,
    TUNED_KINDS,
    aggregate_reports,
    backtest_strategies,
    diagnostics_frame,
    replicate_frame,
    run_replicates,
    tune_strategy,
    uniform_cost,
)
from .simgen import build_universe, default_params, write_universe_csv

logger = logging.getLogger(__name__)

# Exit statuses
EXIT_RUNTIME = 1
EXIT_INPUT = 2


def _out_dir(config: RunConfig) -> Path:
    path = Path(config.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cost_model(config: RunConfig, assets: Sequence[str], cost_csv: Optional[str]) -> CostModel:
    if cost_csv is None:
        return uniform_cost(config, len(assets))
    return read_cost_table(cost_csv).cost_model_for(assets, config.cost_kind)


def cmd_simulate(config: RunConfig) -> Dict[str, Path]:
    """Run config.replicates simulated experiments and write report tables.

    Returns:
        Paths of the written files keyed by role
    """
    params = default_params()
    universe = build_universe(config.p, params, config.seed)
    out = _out_dir(config)
    logger.info(f"Simulating {config.replicates} replicates: p={config.p}, n={config.window}, m={config.stages}, {config.cost_kind.value} cost")

    outcomes = run_replicates(universe, params, config)
    per_replicate = replicate_frame(outcomes)
    failed = [o for o in outcomes if not o.ok]
    for outcome in failed:
        logger.warning(f"Replicate {outcome.replicate} excluded: {outcome.error}")
    if len(failed) == len(outcomes):
        raise CapeError(f"All {len(outcomes)} replicates failed")

    paths = {
        "universe": write_universe_csv(universe, out / "universe.csv"),
        "replicates": out / "simulate_replicates.csv",
        "summary": out / "simulate_summary.csv",
        "diagnostics": out / "simulate_diagnostics.csv",
    }
    per_replicate.to_csv(paths["replicates"], index=False)
    aggregate_reports(per_replicate).to_csv(paths["summary"], index=False)
    diagnostics_frame(outcomes).to_csv(paths["diagnostics"], index=False)
    logger.info(f"Wrote {', '.join(str(p) for p in paths.values())} ({len(outcomes) - len(failed)}/{len(outcomes)} replicates ok)")
    return paths


def cmd_backtest(config: RunConfig, returns_csv: str, cost_csv: Optional[str] = None) -> Dict[str, Path]:
    """Staged pipeline on a returns file; quadratic costs use beta = 2 alpha^2 from the cost table."""
    panel = read_panel_csv(returns_csv)
    cost = _cost_model(config, panel.assets, cost_csv)
    scale = config.return_scale or 1.0
    results, diagnostics = backtest_strategies(panel, cost, config, scale)
    out = _out_dir(config)
    paths = {
        "report": write_report_csv(results, out / "backtest_report.csv"),
        "diagnostics": out / "backtest_diagnostics.csv",
    }
    pd.DataFrame(diagnostics, columns=DIAGNOSTIC_COLUMNS).drop(columns=["replicate"]).to_csv(paths["diagnostics"], index=False)
    logger.info(f"Wrote {paths['report']}")
    return paths


def cmd_tune(config: RunConfig, returns_csv: str, cost_csv: Optional[str] = None) -> Tuple[float, Path]:
    """Tune the first tunable configured strategy on the first window of a returns file.

    Returns:
        (lambda_opt, path of the (lambda, sharpe) curve)
    """
    kinds = [k for k in config.strategies if k in TUNED_KINDS]
    if not kinds:
        raise InvalidInputError(f"None of {', '.join(k.value for k in config.strategies)} has a penalty to tune")
    panel = read_panel_csv(returns_csv)
    if panel.n_obs < config.window:
        raise InvalidInputError(f"Panel has {panel.n_obs} rows, window needs {config.window}")
    window = panel.window(0, config.window)
    cost = _cost_model(config, panel.assets, cost_csv)
    tuned = tune_strategy(window, kinds[0], cost, config, return_scale=config.return_scale or 1.0)
    curve = pd.DataFrame(tuned.curve, columns=["lambda", "sharpe"])
    curve.insert(0, "method", tuned.spec.label)
    curve["error"] = [tuned.failures.get(lam) for lam in curve["lambda"]]
    path = _out_dir(config) / "tune_curve.csv"
    curve.to_csv(path, index=False)
    return tuned.penalty, path


def _add_run_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="Flat key=value run configuration file")
    parser.add_argument("--strategy", dest="strategies", help="Comma separated: EW,MV,PMV,CMV,CAPE_L,CAPE_S")
    parser.add_argument("--cost-kind", choices=["quadratic", "proportional"])
    parser.add_argument("--beta", type=float, help="Uniform quadratic cost coefficient")
    parser.add_argument("--alpha", type=float, help="Uniform proportional cost coefficient")
    parser.add_argument("--gamma", type=float, help="Inverse risk aversion")
    parser.add_argument("--lambda-grid", help="Comma separated, strictly increasing")
    parser.add_argument("--lasso-scale-grid", help="Comma separated grid for M in M*sqrt(log p / n), quoted for percent returns")
    parser.add_argument("--grid-size", type=int, help="Points in the default M grid")
    parser.add_argument("--scad-a", type=float)
    parser.add_argument("--window", type=int, help="Estimation window in trading days")
    parser.add_argument("--stages", type=int)
    parser.add_argument("--rebalance-every", type=int)
    parser.add_argument("--estimator", choices=["sample", "lse", "linear-shrinkage"])
    parser.add_argument("--return-scale", type=float, help="Factor converting panel returns to decimals")
    parser.add_argument("--out-dir")
    parser.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Cost-aware sparse portfolio estimation")
    subparsers = parser.add_subparsers(dest="command", required=True)

    simulate = subparsers.add_parser("simulate", help="Run the factor-model simulation study")
    _add_run_flags(simulate)
    simulate.add_argument("--replicates", type=int)
    simulate.add_argument("--p", type=int, help="Number of simulated assets")
    simulate.add_argument("--seed", type=int)

    backtest = subparsers.add_parser("backtest", help="Backtest strategies on a returns CSV")
    _add_run_flags(backtest)
    backtest.add_argument("returns_csv")
    backtest.add_argument("--cost-csv", help="asset,proportional_cost file")

    tune = subparsers.add_parser("tune", help="Tune a penalty by in-sample Sharpe ratio")
    _add_run_flags(tune)
    tune.add_argument("returns_csv")
    tune.add_argument("--cost-csv", help="asset,proportional_cost file")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    file_values: Dict[str, Any] = {}
    source = None
    if args.config:
        source = Path(args.config)
        file_values = read_config_file(source)
    overrides = {k: v for k, v in vars(args).items() if k in RunConfig.model_fields and v is not None}
    return build_run_config(file_values, overrides, source=source)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args)
        if args.command == "simulate":
            cmd_simulate(config)
        elif args.command == "backtest":
            cmd_backtest(config, args.returns_csv, args.cost_csv)
        else:
            lambda_opt, _ = cmd_tune(config, args.returns_csv, args.cost_csv)
            print(repr(lambda_opt))
    except (ConfigError, CostTableError, InvalidInputError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INPUT
    except CapeError as e:
        logger.error(f"{args.command} failed", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"{args.command} crashed", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0
