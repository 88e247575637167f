import math

import numpy as np
import pytest
from pydantic import ValidationError

from src import cape
from src.cape import (
    RebalanceProblem,
    construct_portfolio,
    DEFAULT_LASSO_SCALE,
    default_lambda_grid,
    default_lasso_scales,
    fit_strategy,
    lasso_lambda,
    lasso_level,
    lasso_scale_unit,
    lla_iterate,
    oracle_solution,
    program_builder,
    rebalance_portfolio,
    scad_derivative,
    scad_weights,
    tune_lambda,
    tune_lasso_scale,
)
from src.costs import CostModel
from src.errors import ConvergenceError, InvalidInputError, TuningError
from src.metrics import sharpe_ratio
from src.moments import MomentEstimate, ReturnPanel, estimate_moments
from src.schemas import CostKind, EstimatorTag, ScadParams, StrategyKind, StrategySpec
from src.solver import WeightedL1QP, kkt_equality_qp, kkt_residual, objective, solve_weighted_l1_qp
from tests.oracles import PLANTED_LAMBDA, planted_sparse_panel, random_psd, sign_pattern_oracle


def random_moments(rng, p, scale=0.1):
    return MomentEstimate(mu=rng.standard_normal(p) * scale, sigma=random_psd(rng, p))


def random_panel(rng, n, p):
    factor = rng.standard_normal((n, 1)) * 0.01
    returns = 0.0005 + factor @ rng.uniform(0.5, 1.5, size=(1, p)) + rng.standard_normal((n, p)) * 0.01
    return ReturnPanel(dates=[f"d{i}" for i in range(n)], assets=[f"X{j}" for j in range(p)], returns=returns)


def drifted_weights(rng, p):
    w = rng.dirichlet(np.ones(p))
    return w / w.sum()


# SCAD


def test_scad_derivative_examples():
    params = ScadParams(lam=0.1, a=3.7)
    assert scad_derivative(0.0, params) == 0.1
    assert scad_derivative(1.0, params) == 0.0
    assert scad_derivative(0.2, params) == pytest.approx(0.17 / 2.7, rel=1e-12)


def test_scad_derivative_shape():
    params = ScadParams(lam=0.05, a=3.7)
    taus = np.linspace(0, 0.5, 2001)
    values = np.array([scad_derivative(t, params) for t in taus])
    assert np.all(values >= 0)
    assert np.all(np.diff(values) <= 1e-15)
    assert np.all(values[taus >= params.a * params.lam] == 0)
    assert scad_derivative(params.lam, params) == pytest.approx(params.lam)
    np.testing.assert_allclose(scad_weights(taus, params), values, rtol=0, atol=1e-15)


def test_scad_zero_lambda_is_zero():
    assert scad_derivative(0.0, ScadParams(lam=0.0)) == 0.0
    assert np.all(scad_weights(np.array([0.0, 0.3]), ScadParams(lam=0.0)) == 0)


def test_scad_rejects_small_a():
    with pytest.raises(ValidationError):
        ScadParams(lam=0.1, a=2.0)
    with pytest.raises(InvalidInputError):
        scad_derivative(0.1, ScadParams.model_construct(lam=0.1, a=2.0))


# Construction and reallocation


def test_mv_on_identity_splits_evenly():
    moments = MomentEstimate(mu=np.zeros(2), sigma=np.eye(2))
    problem = RebalanceProblem(moments=moments, cost=CostModel.zero(2))
    w = construct_portfolio(problem, StrategySpec(kind=StrategyKind.MV))
    np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-12)


def test_cmv_equals_mv_with_inflated_covariance():
    rng = np.random.default_rng(21)
    for _ in range(50):
        p = int(rng.integers(2, 9))
        moments = random_moments(rng, p)
        beta = rng.uniform(0.0, 0.3, size=p)
        cmv = construct_portfolio(
            RebalanceProblem(moments=moments, cost=CostModel(CostKind.QUADRATIC, beta)),
            StrategySpec(kind=StrategyKind.CMV),
        )
        inflated = MomentEstimate(mu=moments.mu, sigma=moments.sigma + np.diag(beta))
        mv = construct_portfolio(
            RebalanceProblem(moments=inflated, cost=CostModel.zero(p)),
            StrategySpec(kind=StrategyKind.MV),
        )
        np.testing.assert_allclose(cmv, mv, rtol=0, atol=1e-8)
        assert abs(cmv.sum() - 1.0) <= 1e-8


def test_proportional_cost_folds_into_l1_weights():
    rng = np.random.default_rng(22)
    p = 6
    moments = random_moments(rng, p)
    alpha = rng.uniform(0.0, 0.05, size=p)
    cost = CostModel(CostKind.PROPORTIONAL, alpha)
    spec = StrategySpec(kind=StrategyKind.CAPE_L, lambda_l1=0.02)
    w = construct_portfolio(RebalanceProblem(moments=moments, cost=cost), spec)
    direct = solve_weighted_l1_qp(WeightedL1QP(Q=moments.sigma, c=-spec.gamma * moments.mu, budget=1.0, l1_weights=alpha + 0.02))
    np.testing.assert_allclose(w, direct, atol=1e-7)


def test_cost_blind_strategies_ignore_costs():
    rng = np.random.default_rng(23)
    p = 5
    moments = random_moments(rng, p)
    for kind in (StrategyKind.MV, StrategyKind.PMV):
        spec = StrategySpec(kind=kind, lambda_l1=0.01)
        costly = construct_portfolio(RebalanceProblem(moments=moments, cost=CostModel.uniform(p, 0.5)), spec)
        free = construct_portfolio(RebalanceProblem(moments=moments, cost=CostModel.zero(p)), spec)
        np.testing.assert_array_equal(costly, free)


def test_equal_weight_delta():
    rng = np.random.default_rng(24)
    p = 4
    w_plus = drifted_weights(rng, p)
    problem = RebalanceProblem(moments=random_moments(rng, p), cost=CostModel.zero(p), w_plus=w_plus, stage=2)
    delta, weights = rebalance_portfolio(problem, StrategySpec(kind=StrategyKind.EQUAL_WEIGHT))
    np.testing.assert_allclose(weights, np.full(p, 0.25))
    np.testing.assert_allclose(delta, 0.25 - w_plus)


def test_large_proportional_cost_means_no_trade():
    rng = np.random.default_rng(25)
    p = 5
    moments = random_moments(rng, p)
    w_plus = drifted_weights(rng, p)
    problem = RebalanceProblem(moments=moments, cost=CostModel.uniform(p, 10.0, CostKind.PROPORTIONAL), w_plus=w_plus, stage=2)
    for kind in (StrategyKind.CMV, StrategyKind.CAPE_L):
        delta, weights = rebalance_portfolio(problem, StrategySpec(kind=kind, lambda_l1=0.01))
        assert np.all(delta == 0)
        np.testing.assert_array_equal(weights, w_plus)
    oracle = oracle_solution(range(p), problem, StrategySpec(kind=StrategyKind.CMV))
    assert np.all(oracle.vector == 0)
    assert not oracle.used_fallback


def test_rebalance_matches_sign_pattern_enumeration():
    rng = np.random.default_rng(26)
    p = 4
    for _ in range(20):
        moments = random_moments(rng, p)
        w_plus = drifted_weights(rng, p)
        problem = RebalanceProblem(moments=moments, cost=CostModel.zero(p), w_plus=w_plus, stage=2)
        spec = StrategySpec(kind=StrategyKind.PMV, lambda_l1=0.05)
        delta, weights = rebalance_portfolio(problem, spec)
        Q = moments.sigma
        c = 2 * Q @ w_plus - spec.gamma * moments.mu
        theta = np.full(p, 0.05)
        _, best = sign_pattern_oracle(Q, c, theta, 0.0)
        qp = WeightedL1QP(Q=Q, c=c, budget=0.0, l1_weights=theta)
        assert objective(qp, delta) <= best + 1e-6
        assert abs(delta.sum()) <= 1e-8
        assert kkt_residual(qp, delta)[0] <= 1e-6
        np.testing.assert_allclose(weights, w_plus + delta)


def test_stage_checks():
    rng = np.random.default_rng(27)
    moments = random_moments(rng, 3)
    with pytest.raises(InvalidInputError):
        RebalanceProblem(moments=moments, cost=CostModel.zero(3), w_plus=[0.2, 0.3, 0.5], stage=1)
    with pytest.raises(InvalidInputError):
        RebalanceProblem(moments=moments, cost=CostModel.zero(3), w_plus=[0.2, 0.3, 0.4], stage=2)
    with pytest.raises(InvalidInputError):
        RebalanceProblem(moments=moments, cost=CostModel.zero(4))
    stage_two = RebalanceProblem(moments=moments, cost=CostModel.zero(3), w_plus=[0.2, 0.3, 0.5], stage=2)
    with pytest.raises(InvalidInputError):
        construct_portfolio(stage_two, StrategySpec(kind=StrategyKind.MV))
    with pytest.raises(InvalidInputError):
        rebalance_portfolio(RebalanceProblem(moments=moments, cost=CostModel.zero(3)), StrategySpec(kind=StrategyKind.MV))


def test_cape_s_needs_scad_params():
    rng = np.random.default_rng(28)
    problem = RebalanceProblem(moments=random_moments(rng, 3), cost=CostModel.zero(3))
    with pytest.raises(InvalidInputError):
        fit_strategy(problem, StrategySpec(kind=StrategyKind.CAPE_S))


def test_zero_cost_cape_s_is_scad_penalized_mv():
    rng = np.random.default_rng(29)
    p = 6
    moments = random_moments(rng, p)
    scad = ScadParams(lam=0.02)
    spec = StrategySpec(kind=StrategyKind.CAPE_S, scad=scad, lambda_l1=0.02)
    problem = RebalanceProblem(moments=moments, cost=CostModel.zero(p))
    fit = fit_strategy(problem, spec)
    plain = RebalanceProblem(moments=moments, cost=CostModel.zero(p))
    build = program_builder(plain, StrategySpec(kind=StrategyKind.PMV))
    init = solve_weighted_l1_qp(build(np.full(p, 0.02)))
    reference = lla_iterate(build, init, scad)
    np.testing.assert_array_equal(fit.weights, reference.weights)


def test_mv_is_dense_cape_s_is_sparse():
    rng = np.random.default_rng(30)
    panel = random_panel(rng, 200, 60)
    moments = estimate_moments(panel, EstimatorTag.LINEAR_SHRINKAGE)
    problem = RebalanceProblem(moments=moments, cost=CostModel.zero(60))
    mv = fit_strategy(problem, StrategySpec(kind=StrategyKind.MV))
    g = 2.0 * moments.sigma @ np.full(60, 1 / 60) - moments.mu / 3
    lam = 10 * float(np.max(np.abs(g - g.mean())))
    spec = StrategySpec(kind=StrategyKind.CAPE_S, scad=ScadParams(lam=lam), lambda_l1=lam)
    sparse = fit_strategy(problem, spec)
    assert mv.support.size == 60
    assert sparse.support.size < mv.support.size
    assert abs(sparse.weights.sum() - 1.0) <= 1e-8


# LLA


def test_lla_with_zero_lambda_is_one_unpenalized_round():
    rng = np.random.default_rng(31)
    p = 5
    moments = random_moments(rng, p)
    problem = RebalanceProblem(moments=moments, cost=CostModel.zero(p))
    build = program_builder(problem, StrategySpec(kind=StrategyKind.MV))
    result = lla_iterate(build, np.full(p, 1.0 / p), ScadParams(lam=0.0))
    assert result.rounds == 1
    assert result.converged
    expected = kkt_equality_qp(moments.sigma, -(1 / 3) * moments.mu, 1.0)
    np.testing.assert_allclose(result.weights, expected, atol=1e-8)


def test_lla_start_beyond_a_lambda_refits_without_penalty():
    rng = np.random.default_rng(32)
    moments = random_moments(rng, 2)
    problem = RebalanceProblem(moments=moments, cost=CostModel.zero(2))
    build = program_builder(problem, StrategySpec(kind=StrategyKind.MV))
    result = lla_iterate(build, np.array([0.5, 0.5]), ScadParams(lam=0.1, a=3.7), max_rounds=1)
    assert np.all(result.penalties[0] == 0)
    expected = kkt_equality_qp(moments.sigma, -(1 / 3) * moments.mu, 1.0)
    np.testing.assert_allclose(result.weights, expected, atol=1e-8)


def test_lla_rounds_never_increase_the_surrogate():
    rng = np.random.default_rng(33)
    for _ in range(10):
        p = 8
        moments = random_moments(rng, p)
        problem = RebalanceProblem(moments=moments, cost=CostModel.zero(p))
        build = program_builder(problem, StrategySpec(kind=StrategyKind.MV))
        result = lla_iterate(build, np.full(p, 1.0 / p), ScadParams(lam=0.05))
        for before, after in zip(result.surrogate_before, result.surrogate_after):
            assert after <= before + 1e-8
        assert len(result.supports) == result.rounds


def test_lla_rejects_infeasible_start():
    problem = RebalanceProblem(moments=MomentEstimate(mu=np.zeros(2), sigma=np.eye(2)), cost=CostModel.zero(2))
    build = program_builder(problem, StrategySpec(kind=StrategyKind.MV))
    with pytest.raises(InvalidInputError):
        lla_iterate(build, np.array([0.5, 0.6]), ScadParams(lam=0.1))


def test_lla_failure_names_the_round(monkeypatch):
    problem = RebalanceProblem(moments=MomentEstimate(mu=np.zeros(2), sigma=np.eye(2)), cost=CostModel.zero(2))
    build = program_builder(problem, StrategySpec(kind=StrategyKind.MV))

    def broken(*args, **kwargs):
        raise ConvergenceError("stuck", iterations=1)

    monkeypatch.setattr(cape, "solve", broken)
    with pytest.raises(ConvergenceError) as info:
        lla_iterate(build, np.array([0.5, 0.5]), ScadParams(lam=0.1))
    assert info.value.lla_round == 1
    assert "LLA round 1" in str(info.value)


def planted_problem(seed):
    returns = planted_sparse_panel(seed)
    n, p = returns.shape
    panel = ReturnPanel(dates=[f"d{i}" for i in range(n)], assets=[f"X{j}" for j in range(p)], returns=returns)
    moments = estimate_moments(panel, EstimatorTag.SAMPLE)
    problem = RebalanceProblem(moments=moments, cost=CostModel.zero(p))
    spec = StrategySpec(kind=StrategyKind.CAPE_S, scad=ScadParams(lam=PLANTED_LAMBDA), lambda_l1=PLANTED_LAMBDA)
    return problem, spec


def planted_recovery(seed):
    """True when LLA lands on the planted support by round 2 and matches the oracle there."""
    problem, spec = planted_problem(seed)
    fit = fit_strategy(problem, spec)
    support = np.arange(5)
    if fit.lla.rounds > 2 or not np.array_equal(fit.support, support):
        return False
    oracle = oracle_solution(support, problem, spec)
    return bool(np.max(np.abs(fit.weights - oracle.vector)) <= 1e-6)


def test_lla_recovers_planted_support_within_two_rounds():
    hits = sum(planted_recovery(seed) for seed in range(10))
    assert hits >= 9


# Oracle


def test_oracle_on_full_support_is_mv_closed_form():
    rng = np.random.default_rng(34)
    p = 5
    moments = random_moments(rng, p)
    problem = RebalanceProblem(moments=moments, cost=CostModel.zero(p))
    result = oracle_solution(range(p), problem, StrategySpec(kind=StrategyKind.MV))
    np.testing.assert_allclose(result.vector, kkt_equality_qp(moments.sigma, -(1 / 3) * moments.mu, 1.0), atol=1e-12)
    assert not result.jitter_applied


def test_oracle_matches_quadratic_cost_closed_form():
    rng = np.random.default_rng(35)
    moments = random_moments(rng, 3)
    beta = 0.15
    problem = RebalanceProblem(moments=moments, cost=CostModel.uniform(3, beta))
    spec = StrategySpec(kind=StrategyKind.CAPE_L, gamma=1 / 3)
    result = oracle_solution([1, 2], problem, spec)

    idx = [1, 2]
    s_tilde = moments.sigma[np.ix_(idx, idx)] + beta * np.eye(2)
    inv = np.linalg.inv(s_tilde)
    ones = np.ones(2)
    gm = spec.gamma * moments.mu[idx]
    expected = inv @ gm / 2 + (1 - ones @ inv @ gm / 2) / (ones @ inv @ ones) * (inv @ ones)
    assert result.vector[0] == 0.0
    np.testing.assert_allclose(result.vector[idx], expected, atol=1e-12)


def test_oracle_jitters_singular_restricted_covariance():
    moments = MomentEstimate(mu=np.zeros(3), sigma=np.ones((3, 3)))
    problem = RebalanceProblem(moments=moments, cost=CostModel.zero(3))
    result = oracle_solution([0, 1, 2], problem, StrategySpec(kind=StrategyKind.MV))
    assert result.jitter_applied
    np.testing.assert_allclose(result.vector, np.full(3, 1 / 3), atol=1e-4)
    assert abs(result.vector.sum() - 1.0) <= 1e-8


def test_oracle_proportional_cost_matches_enumeration():
    rng = np.random.default_rng(36)
    for _ in range(10):
        moments = random_moments(rng, 3)
        alpha = np.full(3, 0.01)
        problem = RebalanceProblem(moments=moments, cost=CostModel(CostKind.PROPORTIONAL, alpha))
        spec = StrategySpec(kind=StrategyKind.CMV)
        result = oracle_solution([0, 1, 2], problem, spec)
        expected, _ = sign_pattern_oracle(moments.sigma, -spec.gamma * moments.mu, alpha, 1.0)
        np.testing.assert_allclose(result.vector, expected, atol=1e-6)


def test_oracle_rejects_bad_support():
    problem = RebalanceProblem(moments=MomentEstimate(mu=np.zeros(2), sigma=np.eye(2)), cost=CostModel.zero(2))
    with pytest.raises(InvalidInputError):
        oracle_solution([], problem, StrategySpec(kind=StrategyKind.MV))
    with pytest.raises(InvalidInputError):
        oracle_solution([0, 2], problem, StrategySpec(kind=StrategyKind.MV))


# Tuning


def tuning_setup(seed=40, n=80, p=8, cost=None):
    rng = np.random.default_rng(seed)
    panel = random_panel(rng, n, p)
    moments = estimate_moments(panel, EstimatorTag.LINEAR_SHRINKAGE)
    problem = RebalanceProblem(moments=moments, cost=cost or CostModel.zero(p))
    return panel, problem


def decimal_scales(size):
    return [m * lasso_scale_unit(1.0) for m in default_lasso_scales(size)]


def test_singleton_grid_echoes_value():
    panel, problem = tuning_setup()
    lam, diagnostics = tune_lambda(panel, problem, StrategySpec(kind=StrategyKind.PMV), [0.1])
    assert lam == 0.1
    assert diagnostics.lambdas == [0.1]


def test_grid_must_be_strictly_increasing():
    panel, problem = tuning_setup()
    spec = StrategySpec(kind=StrategyKind.PMV)
    for grid in ([], [0.1, 0.1], [0.2, 0.1], [-0.1, 0.1]):
        with pytest.raises(InvalidInputError):
            tune_lambda(panel, problem, spec, grid)


def test_tuning_picks_the_argmax(monkeypatch):
    panel, problem = tuning_setup()
    spec = StrategySpec(kind=StrategyKind.PMV)
    for ratios, expected in (({0.01: 1.2, 0.02: 0.8}, 0.01), ({0.01: 0.8, 0.02: 1.2}, 0.02)):
        monkeypatch.setattr(cape, "in_sample_sharpe", lambda panel, fit, cost, net, scale, r=ratios: r[fit.lasso_level])
        lam, _ = tune_lambda(panel, problem, spec, [0.01, 0.02])
        assert lam == expected


def test_ties_go_to_the_smallest_value():
    panel, problem = tuning_setup()
    lam, diagnostics = tune_lambda(panel, problem, StrategySpec(kind=StrategyKind.EQUAL_WEIGHT), [0.01, 0.1, 1.0])
    assert lam == 0.01
    values = [sr for _, sr in diagnostics.curve]
    assert values[0] == values[1] == values[2]


def test_tuning_matches_an_independent_sweep():
    panel, problem = tuning_setup(seed=41, n=120, p=10)
    spec = StrategySpec(kind=StrategyKind.PMV)
    grid = default_lambda_grid(problem.moments, spec, decimal_scales(10))
    lam, diagnostics = tune_lambda(panel, problem, spec, grid, net_of_cost=False)

    sweep = []
    for value in grid:
        qp = WeightedL1QP(Q=problem.moments.sigma, c=-spec.gamma * problem.moments.mu, budget=1.0, l1_weights=np.full(10, value))
        sweep.append(sharpe_ratio(panel.returns @ solve_weighted_l1_qp(qp)))
    assert lam == grid[int(np.argmax(sweep))]
    np.testing.assert_allclose([sr for _, sr in diagnostics.curve], sweep, rtol=0, atol=1e-10)


def test_tuning_scad_lambda_for_cape_s():
    panel, problem = tuning_setup(cost=CostModel.uniform(8, 0.15))
    spec = StrategySpec(kind=StrategyKind.CAPE_S, scad=ScadParams(lam=0.0))
    grid = default_lambda_grid(problem.moments, spec, decimal_scales(5), support=4)
    lam, diagnostics = tune_lambda(panel, problem, spec, grid)
    assert lam in grid
    assert diagnostics.net_of_cost
    assert diagnostics.target == "auto"
    assert not diagnostics.failures


def test_tuning_the_lasso_scale():
    panel, problem = tuning_setup()
    spec = StrategySpec(kind=StrategyKind.CAPE_L)
    scale, diagnostics = tune_lasso_scale(panel, problem, spec, [0.5, 1.0, 2.0])
    assert scale in (0.5, 1.0, 2.0)
    assert diagnostics.target == "lasso_scale"
    levels = [lasso_level(spec.with_penalty(m, "lasso_scale"), 8, 80) for m in (0.5, 1.0, 2.0)]
    np.testing.assert_allclose(levels, np.array([0.5, 1.0, 2.0]) * math.sqrt(math.log(8) / 80))


def test_all_failures_raise_tuning_error(monkeypatch):
    panel, problem = tuning_setup()

    def broken(*args, **kwargs):
        raise ConvergenceError("stuck")

    monkeypatch.setattr(cape, "fit_strategy", broken)
    with pytest.raises(TuningError) as info:
        tune_lambda(panel, problem, StrategySpec(kind=StrategyKind.PMV), [0.01, 0.1])
    assert set(info.value.failures) == {0.01, 0.1}


def test_partial_failures_are_recorded(monkeypatch):
    panel, problem = tuning_setup()
    real_fit = cape.fit_strategy

    def flaky(problem, spec, config=None):
        if spec.lambda_l1 == 0.1:
            raise ConvergenceError("stuck")
        return real_fit(problem, spec, config)

    monkeypatch.setattr(cape, "fit_strategy", flaky)
    lam, diagnostics = tune_lambda(panel, problem, StrategySpec(kind=StrategyKind.PMV), [0.01, 0.1])
    assert lam == 0.01
    assert list(diagnostics.failures) == [0.1]
    assert math.isnan(diagnostics.curve[1][1])


def test_default_grid_follows_the_lasso_rate():
    _, problem = tuning_setup()
    rate = math.sqrt(math.log(8) / 80)
    grid = default_lambda_grid(problem.moments, StrategySpec(kind=StrategyKind.PMV), [0.5, 1.0, 2.0])
    np.testing.assert_allclose(grid, np.array([0.5, 1.0, 2.0]) * rate)
    scad_grid = default_lambda_grid(problem.moments, StrategySpec(kind=StrategyKind.CAPE_S, scad=ScadParams(lam=0.0)), [0.5, 1.0, 2.0], support=4)
    np.testing.assert_allclose(scad_grid, np.array([1.0, 2.0, 4.0]) * rate)
    bare = MomentEstimate(mu=problem.moments.mu, sigma=problem.moments.sigma)
    with pytest.raises(InvalidInputError):
        default_lambda_grid(bare, StrategySpec(kind=StrategyKind.PMV), [1.0])
    with pytest.raises(InvalidInputError):
        default_lambda_grid(problem.moments, StrategySpec(kind=StrategyKind.PMV), [1.0, 0.5])


def test_default_lasso_scales_and_units():
    scales = default_lasso_scales(10)
    assert len(scales) == 10
    assert scales[0] == pytest.approx(0.5)
    assert scales[-1] == pytest.approx(8.0)
    assert all(b > a for a, b in zip(scales, scales[1:]))
    assert default_lasso_scales(1) == [DEFAULT_LASSO_SCALE]
    assert lasso_scale_unit(0.01) == pytest.approx(1.0)
    assert lasso_scale_unit(1.0) == pytest.approx(1e-4)
    with pytest.raises(InvalidInputError):
        default_lasso_scales(0)
    with pytest.raises(InvalidInputError):
        lasso_scale_unit(0.0)


def test_lasso_lambda_and_level():
    assert lasso_lambda(1.0, 100, 400) == pytest.approx(math.sqrt(math.log(100) / 400))
    assert lasso_level(StrategySpec(kind=StrategyKind.PMV, lambda_l1=0.2), 10, 50) == 0.2
    assert lasso_level(StrategySpec(kind=StrategyKind.CAPE_L, lasso_scale=2.0), 100, 400) == pytest.approx(2 * math.sqrt(math.log(100) / 400))
    assert lasso_level(StrategySpec(kind=StrategyKind.PMV), 10, 50) == 0.0
    with pytest.raises(InvalidInputError):
        lasso_lambda(1.0, 0, 10)


def test_cape_s_initializer_ignores_the_scad_lambda():
    spec = StrategySpec(kind=StrategyKind.CAPE_S, scad=ScadParams(lam=0.07))
    assert lasso_level(spec, 10, 50) == pytest.approx(DEFAULT_LASSO_SCALE * math.sqrt(math.log(10) / 50))
    assert lasso_level(spec.model_copy(update={"lasso_scale": 2.0}), 10, 50) == pytest.approx(2 * math.sqrt(math.log(10) / 50))
    with pytest.raises(InvalidInputError):
        lasso_level(spec, 10, None)


def test_with_penalty_targets():
    spec = StrategySpec(kind=StrategyKind.CAPE_S, scad=ScadParams(lam=0.0))
    assert spec.with_penalty(0.3).scad.lam == 0.3
    assert spec.with_penalty(0.3, "lasso").lambda_l1 == 0.3
    assert spec.with_penalty(2.0, "lasso_scale").lasso_scale == 2.0
    assert StrategySpec(kind=StrategyKind.PMV).with_penalty(0.3).lambda_l1 == 0.3
    with pytest.raises(ValueError):
        spec.with_penalty(0.3, "ridge")
