"""Mean and covariance estimation from return windows.

Linear shrinkage follows the well-conditioned estimator with a scaled
identity target:

    S     = X^T X / (n - 1)                   X = centered returns
    m     = trace(S) / p
    d2    = ||S - m I||_F^2
    b2    = (1 / n^2) * sum_k ||x_k x_k^T - S||_F^2
    rho   = min(1, b2 / d2)                   rho = 1 when d2 == 0
    Sigma = rho * m * I + (1 - rho) * S
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import InvalidInputError
from .schemas import EstimatorTag

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10
MIN_ESTIMATION_ROWS = 2


@dataclass(frozen=True)
class ReturnPanel:
    """Dated n x p matrix of simple excess returns."""
    dates: Tuple[str, ...]
    assets: Tuple[str, ...]
    returns: np.ndarray

    def __post_init__(self):
        returns = np.array(self.returns, dtype=float)
        dates = tuple(str(d) for d in self.dates)
        assets = tuple(str(a) for a in self.assets)
        if returns.ndim != 2:
            raise InvalidInputError(f"Returns must be a 2-D matrix, got {returns.ndim} dimensions")
        n, p = returns.shape
        if n == 0:
            raise InvalidInputError("Return panel is empty")
        if p == 0:
            raise InvalidInputError("Return panel has no assets")
        if len(dates) != n:
            raise InvalidInputError(f"Got {len(dates)} dates for {n} return rows")
        if len(assets) != p:
            raise InvalidInputError(f"Got {len(assets)} asset ids for {p} return columns")
        if len(set(assets)) != p:
            duplicates = sorted({a for a in assets if assets.count(a) > 1})
            raise InvalidInputError(f"Duplicate asset ids: {', '.join(duplicates)}")
        bad_rows = ~np.isfinite(returns).all(axis=1)
        if bad_rows.any():
            bad_dates = [dates[i] for i in np.flatnonzero(bad_rows)]
            raise InvalidInputError(f"Non-finite returns on {len(bad_dates)} rows: {', '.join(bad_dates)}")
        returns.setflags(write=False)
        object.__setattr__(self, "returns", returns)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "assets", assets)

    @property
    def n_obs(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]

    def window(self, start: int, stop: int) -> "ReturnPanel":
        """Rows start..stop-1 as a new panel."""
        if not 0 <= start < stop <= self.n_obs:
            raise InvalidInputError(f"Window [{start}, {stop}) outside panel of {self.n_obs} rows")
        return ReturnPanel(self.dates[start:stop], self.assets, self.returns[start:stop])

    def scaled(self, factor: float) -> "ReturnPanel":
        return ReturnPanel(self.dates, self.assets, self.returns * factor)


@dataclass(frozen=True)
class MomentEstimate:
    """Mean vector and covariance matrix with their provenance."""
    mu: np.ndarray
    sigma: np.ndarray
    estimator_tag: EstimatorTag = EstimatorTag.SAMPLE
    n_obs: Optional[int] = None

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).reshape(-1)
        sigma = np.array(self.sigma, dtype=float)
        p = mu.shape[0]
        if sigma.shape != (p, p):
            raise InvalidInputError(f"Covariance shape {sigma.shape} does not match mean length {p}")
        if not (np.isfinite(mu).all() and np.isfinite(sigma).all()):
            raise InvalidInputError("Moment estimate contains non-finite values")
        if np.max(np.abs(sigma - sigma.T), initial=0.0) > SYMMETRY_TOL:
            raise InvalidInputError("Covariance matrix is not symmetric")
        sigma = (sigma + sigma.T) / 2
        min_eig = np.linalg.eigvalsh(sigma)[0]
        if min_eig < -PSD_TOL:
            raise InvalidInputError(f"Covariance matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "estimator_tag", EstimatorTag(self.estimator_tag))

    @property
    def n_assets(self) -> int:
        return self.mu.shape[0]


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return (a + a.T) / 2


def _require_rows(panel: ReturnPanel, what: str):
    if panel.n_obs < MIN_ESTIMATION_ROWS:
        raise InvalidInputError(f"{what} needs at least {MIN_ESTIMATION_ROWS} rows, got {panel.n_obs}")


def sample_mean(panel: ReturnPanel) -> np.ndarray:
    _require_rows(panel, "Sample mean")
    return panel.returns.mean(axis=0)


def sample_covariance(panel: ReturnPanel) -> np.ndarray:
    """Centered covariance with divisor n - 1."""
    _require_rows(panel, "Sample covariance")
    n = panel.n_obs
    centered = panel.returns - panel.returns.mean(axis=0)
    return _symmetrize(centered.T @ centered / (n - 1))


def shrinkage_intensity(panel: ReturnPanel) -> float:
    """Optimal intensity rho in [0, 1] of the linear shrinkage estimator."""
    rho, _, _ = _shrinkage_parts(panel)
    return rho


def _shrinkage_parts(panel: ReturnPanel) -> Tuple[float, float, np.ndarray]:
    _require_rows(panel, "Linear shrinkage")
    n, p = panel.returns.shape
    centered = panel.returns - panel.returns.mean(axis=0)
    s = _symmetrize(centered.T @ centered / (n - 1))
    m = np.trace(s) / p
    d2 = np.sum((s - m * np.eye(p)) ** 2)
    if d2 <= 0.0:
        return 1.0, m, s
    # ||x x^T - S||_F^2 = ||x||^4 - 2 x^T S x + ||S||_F^2
    sq_norms = np.einsum("ij,ij->i", centered, centered)
    quad = np.einsum("ij,jk,ik->i", centered, s, centered)
    b2 = (np.sum(sq_norms ** 2) - 2.0 * np.sum(quad) + n * np.sum(s ** 2)) / n ** 2
    rho = float(min(1.0, max(b2, 0.0) / d2))
    return rho, m, s


def linear_shrinkage_covariance(panel: ReturnPanel) -> np.ndarray:
    rho, m, s = _shrinkage_parts(panel)
    p = s.shape[0]
    logger.debug(f"Linear shrinkage: n={panel.n_obs}, p={p}, rho={rho:.4f}, m={m:.4e}")
    return _symmetrize(rho * m * np.eye(p) + (1.0 - rho) * s)


def estimate_moments(panel: ReturnPanel, estimator: Union[EstimatorTag, str] = EstimatorTag.SAMPLE) -> MomentEstimate:
    """Sample mean plus the chosen covariance estimator.

    Args:
        panel: Estimation window
        estimator: "sample" or "linear-shrinkage"

    Returns:
        MomentEstimate tagged with the estimator and window length
    """
    tag = EstimatorTag(estimator)
    _require_rows(panel, "Moment estimation")
    if tag == EstimatorTag.LINEAR_SHRINKAGE:
        sigma = linear_shrinkage_covariance(panel)
    else:
        sigma = sample_covariance(panel)
    return MomentEstimate(mu=sample_mean(panel), sigma=sigma, estimator_tag=tag, n_obs=panel.n_obs)


def _header_fields(path: Path) -> Sequence[str]:
    with open(path, "r", encoding="utf-8") as f:
        return [field.strip() for field in f.readline().rstrip("\r\n").split(",")]


def read_panel_csv(path: Union[str, Path]) -> ReturnPanel:
    """Load a `date,<asset_1>,...,<asset_p>` returns file.

    Rows with any missing or non-numeric entry are rejected; the error lists
    their dates.
    """
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"Returns file not found: {path}")
    header = _header_fields(path)
    if not header or header[0] != "date":
        raise InvalidInputError(f"{path}: first column must be 'date'")
    assets = header[1:]
    if len(set(assets)) != len(assets):
        duplicates = sorted({a for a in assets if assets.count(a) > 1})
        raise InvalidInputError(f"{path}: duplicate asset columns {', '.join(duplicates)}")

    df = pd.read_csv(path, dtype={"date": str}, float_precision="round_trip")
    values = df.iloc[:, 1:].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    logger.info(f"Read returns panel {path}: {values.shape[0]} days x {values.shape[1]} assets")
    return ReturnPanel(dates=df["date"].tolist(), assets=assets, returns=values)


def write_panel_csv(panel: ReturnPanel, path: Union[str, Path]) -> Path:
    path = Path(path)
    df = pd.DataFrame(panel.returns, columns=list(panel.assets))
    df.insert(0, "date", list(panel.dates))
    df.to_csv(path, index=False)
    return path
