"""Desk-scale Monte-Carlo checks. Slow; run with CAPE_RUN_SLOW=1."""
import numpy as np
import pandas as pd
import pytest

from src.cli import main
from src.config import RunConfig
from src.runner import aggregate_reports, replicate_frame, run_replicates, sharpe_consistency_study
from src.schemas import CostKind, StrategyKind, StrategySpec
from src.simgen import build_universe, default_params, write_demo_files
from tests.test_cape import planted_recovery

pytestmark = pytest.mark.slow


def test_lla_two_round_recovery_over_100_seeds():
    hits = sum(planted_recovery(seed) for seed in range(100))
    assert hits >= 90


def stage_one_summary(cost_kind, **overrides):
    config = RunConfig(
        strategies=[StrategyKind.MV, StrategyKind.PMV, StrategyKind.CMV, StrategyKind.CAPE_S],
        cost_kind=cost_kind,
        p=500,
        window=200,
        stages=5,
        replicates=100,
        **overrides,
    )
    params = default_params()
    universe = build_universe(config.p, params, config.seed)
    outcomes = run_replicates(universe, params, config)
    assert all(o.ok for o in outcomes)
    summary = aggregate_reports(replicate_frame(outcomes))
    return summary[summary["stage"] == "S1"].set_index("method")


def test_quadratic_cost_stage_one_ordering():
    s1 = stage_one_summary(CostKind.QUADRATIC, beta=0.15)
    sharpe = s1["sharpe"]
    assert sharpe["CAPE-S"] > sharpe["PMV"] > sharpe["CMV"] > sharpe["MV"]
    assert s1.loc["CAPE-S", "turnover"] < 0.3 * s1.loc["MV", "turnover"]


def test_proportional_cost_stage_one_ordering():
    s1 = stage_one_summary(CostKind.PROPORTIONAL, alpha=0.001)
    sharpe = s1["sharpe"]
    assert sharpe["CAPE-S"] > sharpe["PMV"] > sharpe["CMV"] > sharpe["MV"]
    assert s1.loc["CAPE-S", "cost_pct"] < s1.loc["PMV", "cost_pct"]


def test_sharpe_estimation_error_shrinks_with_window():
    params = default_params()
    universe = build_universe(100, params, seed=4)
    study = sharpe_consistency_study(
        universe, params, sample_sizes=[100, 200, 400], replicates=50,
        spec=StrategySpec(kind=StrategyKind.MV), seed=4,
    )
    medians = study.groupby("n")["abs_error"].median().sort_index().to_numpy()
    assert np.all(np.diff(medians) < 0)


def test_full_size_simulate_is_deterministic(tmp_path):
    args = ["simulate", "--p", "500", "--window", "200", "--stages", "5", "--replicates", "20"]
    assert main(args + ["--workers", "1", "--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--workers", "4", "--out-dir", str(tmp_path / "b")]) == 0
    for name in ("simulate_replicates.csv", "simulate_summary.csv", "simulate_diagnostics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_demo_panel_pipeline(tmp_path):
    returns, costs = write_demo_files(tmp_path / "data")
    out = tmp_path / "out"
    status = main([
        "backtest", str(returns), "--cost-csv", str(costs),
        "--window", "251", "--stages", "3", "--strategy", "EW,MV,CMV,CAPE_S",
        "--out-dir", str(out),
    ])
    assert status == 0
    report = pd.read_csv(out / "backtest_report.csv")
    assert set(report["method"]) == {"1/N", "MV", "CMV", "CAPE-S"}
    ew = report[(report["method"] == "1/N") & (report["stage"] == "S1")].iloc[0]
    assert ew["turnover"] == pytest.approx(1.0)
    assert ew["leverage"] == 0.0
