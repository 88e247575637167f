import logging
import math

import numpy as np

from .costs import CostModel
from .errors import InvalidInputError, UndefinedSharpeError

logger = logging.getLogger(__name__)

TRADING_DAYS = 251
ANNUALIZATION = math.sqrt(TRADING_DAYS)


def turnover(w_new: np.ndarray, w_plus_prev: np.ndarray) -> float:
    """l1 distance between new weights and pre-rebalance weights."""
    w_new = np.asarray(w_new, dtype=float)
    w_plus_prev = np.asarray(w_plus_prev, dtype=float)
    if w_new.shape != w_plus_prev.shape:
        raise InvalidInputError(f"Weight shapes differ: {w_new.shape} vs {w_plus_prev.shape}")
    return float(np.sum(np.abs(w_new - w_plus_prev)))


def leverage(w: np.ndarray) -> float:
    """Total short exposure."""
    return float(np.sum(np.abs(np.minimum(np.asarray(w, dtype=float), 0.0))))


def transaction_cost_charge(delta_or_w: np.ndarray, cost: CostModel) -> float:
    return cost.charge(delta_or_w)


def sharpe_ratio(daily_net_returns: np.ndarray) -> float:
    """Annualized Sharpe ratio: mean / std (ddof=1) * sqrt(251).

    Raises:
        UndefinedSharpeError: Fewer than 2 values or zero dispersion
    """
    r = np.asarray(daily_net_returns, dtype=float).reshape(-1)
    if r.size < 2:
        raise UndefinedSharpeError(f"Sharpe ratio needs at least 2 returns, got {r.size}")
    if np.all(r == r[0]):
        raise UndefinedSharpeError("Sharpe ratio undefined for constant returns")
    std = float(np.std(r, ddof=1))
    if std == 0.0 or not math.isfinite(std):
        raise UndefinedSharpeError(f"Sharpe ratio undefined for standard deviation {std}")
    return float(np.mean(r) / std * ANNUALIZATION)


def population_sharpe_ratio(w: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> float:
    """Sharpe ratio of w under known moments, annualized like sharpe_ratio."""
    w = np.asarray(w, dtype=float)
    variance = float(w @ sigma @ w)
    if variance <= 0.0:
        raise UndefinedSharpeError("Portfolio has zero variance under the given covariance")
    return float(w @ mu / math.sqrt(variance) * ANNUALIZATION)
