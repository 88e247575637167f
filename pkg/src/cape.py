"""Cost-aware portfolio strategies.

Every strategy reduces to the canonical WeightedL1QP of the solver module:

    stage 1      Q = Sigma,  c = -gamma mu,                   b = 1
    stage t >= 2 Q = Sigma,  c = 2 Sigma w_plus - gamma mu,   b = 0   (variable is delta)

Cost-aware strategies add diag(beta) to Q (quadratic cost) or fold alpha
into the l1 weights (proportional cost). CAPE_S runs the local linear
approximation of the SCAD penalty, started from the Lasso (CAPE_L) fit.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .costs import CostModel
from .errors import CapeError, InvalidInputError, SingularSystemError, TuningError
from .metrics import sharpe_ratio
from .moments import MomentEstimate, ReturnPanel
from .schemas import ScadParams, SolverConfig, StrategyKind, StrategySpec
from .solver import SolveResult, WeightedL1QP, bordered_kkt_solve, kkt_residual, objective, solve

logger = logging.getLogger(__name__)

LLA_MAX_ROUNDS = 10
LLA_TOL = 1e-8
SIGN_ITERATION_LIMIT = 50
RIDGE_JITTER = 1e-10
DEFAULT_LASSO_SCALE = 1.0
LASSO_SCALE_RANGE = (0.5, 8.0)
# Lasso scales are quoted for percent returns
PERCENT = 0.01

ProgramBuilder = Callable[[np.ndarray], WeightedL1QP]


@dataclass(frozen=True)
class RebalanceProblem:
    """Inputs of one decision day.

    w_plus is the pre-rebalance portfolio: zeros at stage 1, the drifted
    previous portfolio afterwards.
    """
    moments: MomentEstimate
    cost: CostModel
    w_plus: Optional[np.ndarray] = None
    stage: int = 1

    def __post_init__(self):
        p = self.moments.n_assets
        if self.cost.p != p:
            raise InvalidInputError(f"Cost model covers {self.cost.p} assets, moments cover {p}")
        if int(self.stage) != self.stage or self.stage < 1:
            raise InvalidInputError(f"Stage must be a positive integer, got {self.stage}")
        w_plus = np.zeros(p) if self.w_plus is None else np.array(self.w_plus, dtype=float).reshape(-1)
        if w_plus.shape != (p,):
            raise InvalidInputError(f"w_plus has length {w_plus.shape[0]}, expected {p}")
        if self.stage == 1 and np.any(w_plus != 0):
            raise InvalidInputError("Pre-rebalance weights must be zero at stage 1")
        if self.stage >= 2 and abs(w_plus.sum() - 1.0) > 1e-8:
            raise InvalidInputError(f"Pre-rebalance weights sum to {w_plus.sum():.12f}, expected 1")
        object.__setattr__(self, "w_plus", w_plus)
        object.__setattr__(self, "stage", int(self.stage))

    @property
    def p(self) -> int:
        return self.moments.n_assets

    @property
    def budget(self) -> float:
        return 1.0 if self.stage == 1 else 0.0


@dataclass
class LLAResult:
    weights: np.ndarray
    rounds: int
    converged: bool
    penalties: List[np.ndarray] = field(default_factory=list)
    supports: List[np.ndarray] = field(default_factory=list)
    surrogate_before: List[float] = field(default_factory=list)
    surrogate_after: List[float] = field(default_factory=list)


@dataclass
class FitResult:
    delta: np.ndarray
    weights: np.ndarray
    lla: Optional[LLAResult] = None
    solve_result: Optional[SolveResult] = None
    lasso_level: Optional[float] = None

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.delta)


@dataclass
class OracleResult:
    vector: np.ndarray
    multiplier: float
    support: np.ndarray
    used_fallback: bool = False
    jitter_applied: bool = False


@dataclass
class TuningDiagnostics:
    curve: List[Tuple[float, float]]
    failures: Dict[float, str]
    net_of_cost: bool
    target: str

    @property
    def lambdas(self) -> List[float]:
        return [lam for lam, _ in self.curve]


def scad_derivative(tau: float, params: ScadParams) -> float:
    """P'_lambda(tau) = lambda * [I(tau <= lambda) + (a lambda - tau)_+ / ((a - 1) lambda) * I(tau > lambda)]."""
    if not params.a > 2:
        raise InvalidInputError(f"SCAD parameter a must exceed 2, got {params.a}")
    if tau < 0:
        raise InvalidInputError(f"SCAD derivative is defined for tau >= 0, got {tau}")
    lam, a = params.lam, params.a
    if lam == 0:
        return 0.0
    if tau <= lam:
        return float(lam)
    return max(a * lam - tau, 0.0) / (a - 1)


def scad_weights(abs_w: np.ndarray, params: ScadParams) -> np.ndarray:
    """Vectorized scad_derivative, the LLA adaptive weights."""
    if not params.a > 2:
        raise InvalidInputError(f"SCAD parameter a must exceed 2, got {params.a}")
    tau = np.abs(np.asarray(abs_w, dtype=float))
    lam, a = params.lam, params.a
    if lam == 0:
        return np.zeros_like(tau)
    return np.where(tau <= lam, lam, np.maximum(a * lam - tau, 0.0) / (a - 1))


def lasso_lambda(scale: float, p: int, n: int) -> float:
    """M * sqrt(log p / n)."""
    if p < 1 or n < 1:
        raise InvalidInputError(f"Need p >= 1 and n >= 1, got p={p}, n={n}")
    return scale * math.sqrt(math.log(p) / n)


def lasso_level(spec: StrategySpec, p: int, n_obs: Optional[int]) -> float:
    """Lasso weight used by PMV, CAPE_L and the CAPE_S initializer.

    An explicit lambda_l1 wins, then lasso_scale * sqrt(log p / n). CAPE_S
    without either starts from DEFAULT_LASSO_SCALE; PMV and CAPE_L without
    either are unpenalized.
    """
    if spec.lambda_l1 > 0:
        return spec.lambda_l1
    scale = spec.lasso_scale
    if scale is None and spec.kind == StrategyKind.CAPE_S:
        scale = DEFAULT_LASSO_SCALE
    if scale is None:
        return 0.0
    if n_obs is None:
        raise InvalidInputError("A Lasso scale needs the estimation window length")
    return lasso_lambda(scale, p, n_obs)


def program_builder(problem: RebalanceProblem, spec: StrategySpec) -> ProgramBuilder:
    """Map penalty weights to the stage program of this strategy."""
    sigma, mu = problem.moments.sigma, problem.moments.mu
    q = sigma
    c = -spec.gamma * mu
    if problem.stage >= 2:
        c = c + 2.0 * sigma @ problem.w_plus
    cost_theta = np.zeros(problem.p)
    if spec.cost_aware:
        q = sigma + np.diag(problem.cost.quadratic_diag())
        cost_theta = problem.cost.l1_weights()
    budget = problem.budget

    def build(penalty: np.ndarray) -> WeightedL1QP:
        return WeightedL1QP(Q=q, c=c, budget=budget, l1_weights=np.asarray(penalty, dtype=float) + cost_theta)

    return build


def lla_iterate(
    build: ProgramBuilder,
    init: np.ndarray,
    scad: ScadParams,
    config: Optional[SolverConfig] = None,
    max_rounds: int = LLA_MAX_ROUNDS,
    tol: float = LLA_TOL,
) -> LLAResult:
    """Local linear approximation of the SCAD-penalized program.

    Round l solves the weighted-l1 program with theta_j = P'_lambda(|w_j|)
    taken at the previous iterate. Stops once the iterate moves by at most
    tol in max norm, or when the next weights equal the current ones.

    Args:
        build: Maps SCAD weights to the round's WeightedL1QP
        init: Starting point, feasible within 1e-6
        scad: SCAD parameters
        config: Solver settings
        max_rounds: Round limit
        tol: Max-norm stopping tolerance

    Returns:
        LLAResult with per-round penalties, supports and surrogate values
    """
    config = config or SolverConfig()
    w_prev = np.array(init, dtype=float).reshape(-1)
    budget = build(np.zeros(w_prev.shape[0])).budget
    if abs(w_prev.sum() - budget) > 1e-6:
        raise InvalidInputError(f"LLA start sums to {w_prev.sum():.8f}, budget is {budget}")

    result = LLAResult(weights=w_prev, rounds=0, converged=False)
    penalty = scad_weights(np.abs(w_prev), scad)
    for round_index in range(1, max_rounds + 1):
        qp = build(penalty)
        try:
            solved = solve(qp, config, init=w_prev)
        except CapeError as exc:
            exc.lla_round = round_index
            logger.warning(f"LLA round {round_index} failed: {exc}")
            raise
        w = solved.weights
        result.penalties.append(penalty)
        result.supports.append(np.flatnonzero(w))
        result.surrogate_before.append(objective(qp, w_prev))
        result.surrogate_after.append(objective(qp, w))
        result.rounds = round_index
        change = float(np.max(np.abs(w - w_prev), initial=0.0))
        next_penalty = scad_weights(np.abs(w), scad)
        w_prev = w
        if change <= tol or np.array_equal(next_penalty, penalty):
            result.converged = True
            break
        penalty = next_penalty

    result.weights = w_prev
    logger.debug(f"LLA finished after {result.rounds} rounds, support {np.count_nonzero(w_prev)}/{w_prev.shape[0]}, converged={result.converged}")
    return result


def fit_strategy(problem: RebalanceProblem, spec: StrategySpec, config: Optional[SolverConfig] = None) -> FitResult:
    """Fit one strategy at one decision day.

    Returns:
        FitResult; at stage 1 delta equals weights
    """
    config = config or SolverConfig()
    p = problem.p
    if spec.kind == StrategyKind.EQUAL_WEIGHT:
        weights = np.full(p, 1.0 / p)
        return FitResult(delta=weights - problem.w_plus, weights=weights)

    build = program_builder(problem, spec)
    level = None
    lla = None
    solved = None
    if spec.kind in (StrategyKind.MV, StrategyKind.CMV):
        solved = solve(build(np.zeros(p)), config)
        x = solved.weights
    elif spec.kind in (StrategyKind.PMV, StrategyKind.CAPE_L):
        level = lasso_level(spec, p, problem.moments.n_obs)
        solved = solve(build(np.full(p, level)), config)
        x = solved.weights
    else:
        if spec.scad is None:
            raise InvalidInputError("CAPE_S needs SCAD parameters")
        level = lasso_level(spec, p, problem.moments.n_obs)
        init = solve(build(np.full(p, level)), config).weights
        lla = lla_iterate(build, init, spec.scad, config)
        x = lla.weights

    if problem.stage == 1:
        return FitResult(delta=x, weights=x, lla=lla, solve_result=solved, lasso_level=level)
    return FitResult(delta=x, weights=problem.w_plus + x, lla=lla, solve_result=solved, lasso_level=level)


def construct_portfolio(problem: RebalanceProblem, spec: StrategySpec, config: Optional[SolverConfig] = None) -> np.ndarray:
    """First construction (stage 1); weights sum to 1."""
    if problem.stage != 1:
        raise InvalidInputError(f"construct_portfolio needs stage 1, got {problem.stage}")
    return fit_strategy(problem, spec, config).weights


def rebalance_portfolio(problem: RebalanceProblem, spec: StrategySpec, config: Optional[SolverConfig] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Reallocation at stage >= 2.

    Returns:
        (delta, weights) with weights = w_plus + delta
    """
    if problem.stage < 2:
        raise InvalidInputError(f"rebalance_portfolio needs stage >= 2, got {problem.stage}")
    fit = fit_strategy(problem, spec, config)
    return fit.delta, fit.weights


def _positive_definite(q: np.ndarray):
    try:
        linalg.cho_factor(q, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"Restricted matrix of size {q.shape[0]} is not positive definite") from exc


def _restricted_l1_solve(sub: WeightedL1QP, config: SolverConfig) -> Tuple[np.ndarray, float, bool]:
    """Solve the restricted problem with l1 cost terms, by sign iteration first."""
    if sub.budget == 0.0:
        residual, h = kkt_residual(sub, np.zeros(sub.p))
        if residual <= config.primal_tol:
            return np.zeros(sub.p), h, False

    w, h = bordered_kkt_solve(sub.Q, sub.c, sub.budget)
    for _ in range(SIGN_ITERATION_LIMIT):
        signs = np.sign(w)
        if np.any(signs == 0):
            break
        w_next, h = bordered_kkt_solve(sub.Q, sub.c + sub.l1_weights * signs, sub.budget)
        if np.array_equal(np.sign(w_next), signs):
            return w_next, h, False
        w = w_next

    logger.warning(f"Oracle sign iteration did not settle on {sub.p} assets, using the splitting solver")
    solved = solve(sub, config)
    return solved.weights, solved.multiplier, True


def oracle_solution(
    support: Sequence[int],
    problem: RebalanceProblem,
    spec: StrategySpec,
    config: Optional[SolverConfig] = None,
) -> OracleResult:
    """Stage program solved with the support known, zero elsewhere.

    Quadratic cost (or none) is a bordered KKT solve on the support. With
    proportional cost the restricted nonsmooth problem is solved by sign
    iteration, falling back to the splitting solver with theta = alpha.

    Args:
        support: Indices allowed to be nonzero
        problem: Decision-day inputs; the budget follows the stage
        spec: Strategy (gamma, and whether costs enter the program)
        config: Solver settings for the fallback

    Returns:
        OracleResult holding weights (stage 1) or delta (stage >= 2)
    """
    config = config or SolverConfig()
    index = np.unique(np.asarray(support, dtype=int))
    if index.size == 0:
        raise InvalidInputError("Oracle support is empty")
    if index[0] < 0 or index[-1] >= problem.p:
        raise InvalidInputError(f"Oracle support out of range for {problem.p} assets")

    sub = program_builder(problem, spec)(np.zeros(problem.p)).restricted(index)
    jitter_applied = False
    used_fallback = False
    try:
        _positive_definite(sub.Q)
        attempt = sub
    except SingularSystemError:
        m = np.trace(sub.Q) / index.size
        ridge = RIDGE_JITTER * (m if m > 0 else 1.0)
        logger.warning(f"Restricted covariance on {index.size} assets is singular, adding ridge {ridge:.3e}")
        attempt = WeightedL1QP(sub.Q + ridge * np.eye(index.size), sub.c, sub.budget, sub.l1_weights)
        _positive_definite(attempt.Q)
        jitter_applied = True

    if np.any(attempt.l1_weights > 0):
        w_sub, h, used_fallback = _restricted_l1_solve(attempt, config)
    else:
        w_sub, h = bordered_kkt_solve(attempt.Q, attempt.c, attempt.budget)

    vector = np.zeros(problem.p)
    vector[index] = w_sub
    return OracleResult(vector=vector, multiplier=h, support=index, used_fallback=used_fallback, jitter_applied=jitter_applied)


def in_sample_sharpe(panel: ReturnPanel, fit: FitResult, cost: CostModel, net_of_cost: bool = True, return_scale: float = 1.0) -> float:
    """Sharpe ratio of the fitted weights held over the estimation window.

    The trade cost of the fit is charged on the first day when net_of_cost.
    """
    daily = panel.returns @ fit.weights * return_scale
    if net_of_cost:
        daily = daily.copy()
        daily[0] -= cost.charge(fit.delta)
    return sharpe_ratio(daily)


def _check_grid(grid: Sequence[float]) -> List[float]:
    values = [float(v) for v in grid]
    if not values:
        raise InvalidInputError("Tuning grid is empty")
    if any(not math.isfinite(v) or v < 0 for v in values):
        raise InvalidInputError("Tuning grid values must be finite and nonnegative")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise InvalidInputError("Tuning grid must be strictly increasing")
    return values


def tune_lambda(
    panel: ReturnPanel,
    problem: RebalanceProblem,
    spec: StrategySpec,
    grid: Sequence[float],
    config: Optional[SolverConfig] = None,
    target: str = "auto",
    net_of_cost: bool = True,
    return_scale: float = 1.0,
) -> Tuple[float, TuningDiagnostics]:
    """Pick the penalty with the highest in-sample Sharpe ratio.

    Args:
        panel: Estimation window the moments in problem came from
        problem: Decision-day template
        spec: Strategy to tune
        grid: Strictly increasing candidate values
        config: Solver settings
        target: "auto", "lasso" or "lasso_scale", see StrategySpec.with_penalty
        net_of_cost: Charge the fit's trade cost on the first day
        return_scale: Factor converting panel units to decimal returns

    Returns:
        (lambda_opt, diagnostics); ties go to the smallest value
    """
    values = _check_grid(grid)
    curve: List[Tuple[float, float]] = []
    failures: Dict[float, str] = {}
    best: Optional[Tuple[float, float]] = None
    for lam in values:
        candidate = spec.with_penalty(lam, target)
        try:
            fit = fit_strategy(problem, candidate, config)
            sr = in_sample_sharpe(panel, fit, problem.cost, net_of_cost, return_scale)
        except CapeError as e:
            failures[lam] = f"{type(e).__name__}: {e}"
            curve.append((lam, float("nan")))
            logger.warning(f"Tuning {spec.label} at {target} penalty {lam:.4e} failed: {e}")
            continue
        curve.append((lam, sr))
        if best is None or sr > best[1]:
            best = (lam, sr)

    diagnostics = TuningDiagnostics(curve=curve, failures=failures, net_of_cost=net_of_cost, target=target)
    if best is None:
        raise TuningError(f"All {len(values)} candidates failed while tuning {spec.label}", failures=failures)
    logger.info(f"Tuned {spec.label}: {target} penalty {best[0]:.4e}, in-sample Sharpe {best[1]:.3f} ({len(failures)} failures)")
    return best[0], diagnostics


def tune_lasso_scale(
    panel: ReturnPanel,
    problem: RebalanceProblem,
    spec: StrategySpec,
    grid: Sequence[float],
    config: Optional[SolverConfig] = None,
    net_of_cost: bool = True,
    return_scale: float = 1.0,
) -> Tuple[float, TuningDiagnostics]:
    """Tune M in lambda_Lasso = M * sqrt(log p / n)."""
    return tune_lambda(panel, problem, spec, grid, config, target="lasso_scale", net_of_cost=net_of_cost, return_scale=return_scale)


def default_lasso_scales(size: int = 10) -> List[float]:
    """Log grid of M over LASSO_SCALE_RANGE."""
    if size < 1:
        raise InvalidInputError(f"Grid size must be positive, got {size}")
    if size == 1:
        return [DEFAULT_LASSO_SCALE]
    return [float(v) for v in np.geomspace(*LASSO_SCALE_RANGE, size)]


def lasso_scale_unit(return_scale: float) -> float:
    """Factor taking an M quoted for percent returns to a panel in return_scale units.

    The risk term grows with the square of the return unit, so the penalty does too.
    """
    if not return_scale > 0:
        raise InvalidInputError(f"return_scale must be positive, got {return_scale}")
    return (PERCENT / return_scale) ** 2


def default_lambda_grid(
    moments: MomentEstimate,
    spec: StrategySpec,
    scales: Sequence[float],
    support: Optional[int] = None,
) -> List[float]:
    """Candidate penalties M * sqrt(log p / n), one per scale.

    For CAPE_S the SCAD lambda grid carries an extra sqrt(s), s being the
    support size of its Lasso initializer.
    """
    if moments.n_obs is None:
        raise InvalidInputError("The default grid needs the estimation window length")
    values = _check_grid(scales)
    rate = math.sqrt(math.log(max(moments.n_assets, 2)) / moments.n_obs)
    if spec.kind == StrategyKind.CAPE_S:
        rate *= math.sqrt(max(support or 1, 1))
    return [m * rate for m in values]
