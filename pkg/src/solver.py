"""Hyperplane-constrained quadratic programs with weighted l1 penalties.

The canonical problem is

    minimize    w^T Q w + c^T w + sum_j theta_j |w_j|
    subject to  1^T w = b

solved by alternating direction splitting: an exact bordered-KKT solve for
the smooth part plus the budget constraint, then a coordinatewise
soft-threshold for the l1 part. Whenever the sign pattern of the iterate is
settled, an exact restricted KKT solve ("polish") finishes the job.
"""
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy import linalg

from .errors import ConvergenceError, InvalidInputError, SingularSystemError
from .schemas import SolverConfig

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10
KKT_SOLVE_TOL = 1e-10

# Residual balancing constants
BALANCE_RATIO = 10.0
BALANCE_FACTOR = 2.0
RHO_BOUNDS = (1e-8, 1e8)


@dataclass(frozen=True)
class WeightedL1QP:
    Q: np.ndarray
    c: np.ndarray
    budget: float
    l1_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        c = np.array(self.c, dtype=float).reshape(-1)
        p = c.shape[0]
        q = np.array(self.Q, dtype=float)
        if q.shape != (p, p):
            raise InvalidInputError(f"Q has shape {q.shape}, expected {(p, p)}")
        theta = np.zeros(p) if self.l1_weights is None else np.array(self.l1_weights, dtype=float).reshape(-1)
        if theta.shape != (p,):
            raise InvalidInputError(f"l1_weights has length {theta.shape[0]}, expected {p}")
        if not (np.isfinite(q).all() and np.isfinite(c).all() and np.isfinite(theta).all()):
            raise InvalidInputError("Problem data must be finite")
        if not math.isfinite(self.budget):
            raise InvalidInputError(f"Budget must be finite, got {self.budget}")
        if np.any(theta < 0):
            raise InvalidInputError("l1 weights must be nonnegative")
        if np.max(np.abs(q - q.T), initial=0.0) > SYMMETRY_TOL:
            raise InvalidInputError("Q must be symmetric")
        object.__setattr__(self, "Q", (q + q.T) / 2)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "l1_weights", theta)
        object.__setattr__(self, "budget", float(self.budget))

    @property
    def p(self) -> int:
        return self.c.shape[0]

    def restricted(self, index: np.ndarray) -> "WeightedL1QP":
        """Same problem on the coordinates in index."""
        return WeightedL1QP(
            Q=self.Q[np.ix_(index, index)],
            c=self.c[index],
            budget=self.budget,
            l1_weights=self.l1_weights[index],
        )


@dataclass
class SolveResult:
    weights: np.ndarray
    multiplier: float
    iterations: int
    kkt_residual: float
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    polished: bool = False

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights)


def soft_threshold(v: Union[float, np.ndarray], t: Union[float, np.ndarray]):
    """Proximal map of t*|.|: sign(v) * max(|v| - t, 0)."""
    if np.any(np.asarray(t) < 0):
        raise InvalidInputError("Threshold must be nonnegative")
    out = np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    if np.ndim(out) == 0:
        return float(out)
    return out


def objective(problem: WeightedL1QP, w: np.ndarray) -> float:
    w = np.asarray(w, dtype=float)
    return float(w @ problem.Q @ w + problem.c @ w + problem.l1_weights @ np.abs(w))


def kkt_residual(problem: WeightedL1QP, w: np.ndarray) -> Tuple[float, float]:
    """Stationarity residual of w and the budget multiplier h it implies.

    On the support the residual is |g_j + theta_j sign(w_j) + h| with
    g = 2 Q w + c; off the support it is the distance of g_j + h from
    [-theta_j, theta_j].

    Returns:
        (residual in max norm, h)
    """
    w = np.asarray(w, dtype=float)
    g = 2.0 * problem.Q @ w + problem.c
    theta = problem.l1_weights
    on = w != 0
    if on.any():
        shifted = g[on] + theta[on] * np.sign(w[on])
        h = -float(np.mean(shifted))
        stationarity = np.abs(shifted + h)
    else:
        h = -float(np.max(g - theta) + np.min(g + theta)) / 2
        stationarity = np.zeros(0)
    violation = np.maximum(np.abs(g[~on] + h) - theta[~on], 0.0)
    residual = max(np.max(stationarity, initial=0.0), np.max(violation, initial=0.0))
    return float(residual), h


def bordered_kkt_solve(Q: np.ndarray, c: np.ndarray, b: float) -> Tuple[np.ndarray, float]:
    p = c.shape[0]
    kkt = np.zeros((p + 1, p + 1))
    kkt[:p, :p] = 2.0 * Q
    kkt[:p, p] = 1.0
    kkt[p, :p] = 1.0
    rhs = np.append(-c, b)
    with warnings.catch_warnings():
        warnings.simplefilter("error", linalg.LinAlgWarning)
        try:
            sol = linalg.solve(kkt, rhs, assume_a="sym")
        except (np.linalg.LinAlgError, linalg.LinAlgWarning) as exc:
            raise SingularSystemError(f"Bordered KKT system of size {p + 1} is singular: {exc}") from exc
    if not np.isfinite(sol).all():
        raise SingularSystemError("Bordered KKT solve produced non-finite values")
    residual = np.max(np.abs(kkt @ sol - rhs))
    scale = 1.0 + np.max(np.abs(kkt)) * np.max(np.abs(sol))
    if residual > KKT_SOLVE_TOL * scale:
        raise SingularSystemError(f"Bordered KKT residual {residual:.3e} exceeds tolerance")
    return sol[:p], float(sol[p])


def kkt_equality_qp(Q: np.ndarray, c: np.ndarray, b: float) -> np.ndarray:
    """Exact minimizer of w^T Q w + c^T w subject to 1^T w = b.

    Args:
        Q: Symmetric matrix, positive definite on {w: 1^T w = 0}
        c: Linear term
        b: Budget

    Returns:
        Minimizer from the bordered KKT system [[2Q, 1], [1^T, 0]]
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (c.shape[0], c.shape[0]):
        raise InvalidInputError(f"Q has shape {Q.shape}, expected {(c.shape[0], c.shape[0])}")
    w, _ = bordered_kkt_solve((Q + Q.T) / 2, c, float(b))
    return w


def _check_psd(Q: np.ndarray):
    p = Q.shape[0]
    shift = 1e-10 * (1.0 + np.max(np.abs(np.diag(Q)), initial=0.0))
    try:
        linalg.cho_factor(Q + shift * np.eye(p), lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise InvalidInputError("Quadratic form Q is not positive semidefinite") from None


def _finalize(w: np.ndarray, b: float, zero_clip: float) -> np.ndarray:
    w = w.copy()
    w[np.abs(w) < zero_clip] = 0.0
    gap = b - w.sum()
    if gap != 0.0:
        support = np.flatnonzero(w)
        if support.size:
            w[support] += gap / support.size
        else:
            w += gap / w.size
    return w


def _polish(problem: WeightedL1QP, z: np.ndarray, config: SolverConfig) -> Optional[Tuple[np.ndarray, float, float]]:
    active = np.flatnonzero(np.abs(z) > config.zero_clip)
    w = np.zeros(problem.p)
    if active.size == 0:
        if problem.budget != 0.0:
            return None
    else:
        signs = np.sign(z[active])
        sub = problem.restricted(active)
        try:
            w_active, _ = bordered_kkt_solve(sub.Q, sub.c + sub.l1_weights * signs, problem.budget)
        except SingularSystemError:
            return None
        # Unpenalized coordinates may take either sign.
        if np.any((w_active * signs <= 0) & (sub.l1_weights > 0)):
            return None
        w[active] = w_active
    w = _finalize(w, problem.budget, config.zero_clip)
    residual, h = kkt_residual(problem, w)
    if residual > config.primal_tol:
        return None
    return w, h, residual


def solve(problem: WeightedL1QP, config: Optional[SolverConfig] = None, init: Optional[np.ndarray] = None) -> SolveResult:
    """Solve a WeightedL1QP and report how it went.

    Args:
        problem: Problem instance
        config: Solver settings, defaults when omitted
        init: Optional warm start

    Returns:
        SolveResult with weights snapped to exact zeros below zero_clip
    """
    config = config or SolverConfig()
    Q, c, b, theta = problem.Q, problem.c, problem.budget, problem.l1_weights
    p = problem.p
    _check_psd(Q)

    if not np.any(theta > 0):
        try:
            w, _ = bordered_kkt_solve(Q, c, b)
            w = _finalize(w, b, config.zero_clip)
            residual, h = kkt_residual(problem, w)
            if residual <= config.primal_tol:
                return SolveResult(weights=w, multiplier=h, iterations=0, kkt_residual=residual, polished=True)
            logger.debug(f"Direct equality solve left residual {residual:.3e}, switching to splitting")
        except SingularSystemError as e:
            logger.debug(f"Direct equality solve failed ({e}), switching to splitting")

    ones = np.ones(p)
    rho = config.penalty_parameter
    if init is not None:
        z = np.array(init, dtype=float).reshape(-1)
        if z.shape != (p,):
            raise InvalidInputError(f"Initial point has length {z.shape[0]}, expected {p}")
    else:
        z = np.full(p, b / p)
    u = np.zeros(p)
    factor = linalg.cho_factor(2.0 * Q + rho * np.eye(p), lower=True, check_finite=False)
    e = linalg.cho_solve(factor, ones)
    sqrt_p = math.sqrt(p)
    r_norm = s_norm = float("inf")

    for k in range(1, config.max_iterations + 1):
        # x-update: smooth part plus budget, exact
        y = linalg.cho_solve(factor, rho * (z - u) - c)
        nu = (ones @ y - b) / (ones @ e)
        x = y - nu * e
        # z-update: prox of the weighted l1 norm
        z_old = z
        z = soft_threshold(x + u, theta / rho)
        u = u + x - z

        r_norm = float(np.linalg.norm(x - z))
        s_norm = float(rho * np.linalg.norm(z - z_old))
        eps_pri = config.primal_tol * (sqrt_p + max(np.linalg.norm(x), np.linalg.norm(z)))
        eps_dual = config.dual_tol * (sqrt_p + rho * np.linalg.norm(u))
        converged = r_norm <= eps_pri and s_norm <= eps_dual

        if converged or k % config.polish_every == 0 or (k == 1 and init is not None):
            polished = _polish(problem, z, config)
            if polished is not None:
                w, h, residual = polished
                logger.debug(f"Polished after {k} iterations, support {np.count_nonzero(w)}/{p}, kkt {residual:.2e}")
                return SolveResult(w, h, k, residual, r_norm, s_norm, polished=True)

        if converged:
            w = _finalize(z, b, config.zero_clip)
            residual, h = kkt_residual(problem, w)
            if residual > config.primal_tol:
                raise ConvergenceError(
                    f"Splitting converged in {k} iterations but polish failed; kkt residual {residual:.3e}",
                    iterations=k,
                    primal_residual=r_norm,
                    dual_residual=s_norm,
                )
            logger.debug(f"Splitting converged in {k} iterations without polish, kkt {residual:.2e}")
            return SolveResult(w, h, k, residual, r_norm, s_norm, polished=False)

        if config.residual_balancing:
            new_rho = rho
            if r_norm > BALANCE_RATIO * s_norm:
                new_rho = min(rho * BALANCE_FACTOR, RHO_BOUNDS[1])
            elif s_norm > BALANCE_RATIO * r_norm:
                new_rho = max(rho / BALANCE_FACTOR, RHO_BOUNDS[0])
            if new_rho != rho:
                u = u * (rho / new_rho)
                rho = new_rho
                factor = linalg.cho_factor(2.0 * Q + rho * np.eye(p), lower=True, check_finite=False)
                e = linalg.cho_solve(factor, ones)

    raise ConvergenceError(
        f"Splitting solver did not converge in {config.max_iterations} iterations "
        f"(primal residual {r_norm:.3e}, dual residual {s_norm:.3e})",
        iterations=config.max_iterations,
        primal_residual=r_norm,
        dual_residual=s_norm,
    )


def solve_weighted_l1_qp(problem: WeightedL1QP, config: Optional[SolverConfig] = None, init: Optional[np.ndarray] = None) -> np.ndarray:
    return solve(problem, config, init).weights
