"""Synthetic return panels from a three-factor model.

    R_i = b_i^T f + eps_i,   b_i ~ N(mu_b, cov_b),  f ~ N(mu_f, cov_f),
    eps_i ~ N(0, sigma_i^2), sigma_i ~ Gamma(shape, scale)

Returns come out in the model's native units (percent per day for the
default parameters). Randomness is drawn from Philox streams keyed by
(seed, replicate, purpose), so replicate r never depends on which other
replicates ran or in what order.
"""
import logging
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .errors import InvalidInputError
from .moments import ReturnPanel, write_panel_csv

logger = logging.getLogger(__name__)

PANEL_START = "2000-01-03"


class StreamPurpose(IntEnum):
    LOADINGS = 0
    IDIOSYNCRATIC = 1
    FACTORS = 2
    NOISE = 3
    COSTS = 4


@dataclass(frozen=True)
class FactorModelParams:
    mu_b: np.ndarray
    cov_b: np.ndarray
    mu_f: np.ndarray
    cov_f: np.ndarray
    sigma_gamma_shape: float
    sigma_gamma_scale: float

    def __post_init__(self):
        for name, shape in (("mu_b", (3,)), ("cov_b", (3, 3)), ("mu_f", (3,)), ("cov_f", (3, 3))):
            value = np.array(getattr(self, name), dtype=float)
            if value.shape != shape:
                raise InvalidInputError(f"{name} must have shape {shape}, got {value.shape}")
            if not np.isfinite(value).all():
                raise InvalidInputError(f"{name} must be finite")
            if value.ndim == 2 and not np.allclose(value, value.T, rtol=0.0, atol=1e-12):
                raise InvalidInputError(f"{name} must be symmetric")
            object.__setattr__(self, name, value)
        if not (self.sigma_gamma_shape > 0 and self.sigma_gamma_scale > 0):
            raise InvalidInputError("Gamma shape and scale must be positive")


@dataclass(frozen=True)
class SimulatedUniverse:
    loadings: np.ndarray
    idio_std: np.ndarray
    seed: int

    def __post_init__(self):
        loadings = np.array(self.loadings, dtype=float)
        idio_std = np.array(self.idio_std, dtype=float).reshape(-1)
        if loadings.ndim != 2 or loadings.shape[1] != 3:
            raise InvalidInputError(f"Loadings must be p x 3, got {loadings.shape}")
        if idio_std.shape[0] != loadings.shape[0]:
            raise InvalidInputError("One idiosyncratic std per asset is required")
        if np.any(idio_std <= 0):
            raise InvalidInputError("Idiosyncratic std must be positive")
        object.__setattr__(self, "loadings", loadings)
        object.__setattr__(self, "idio_std", idio_std)

    @property
    def p(self) -> int:
        return self.loadings.shape[0]

    @property
    def assets(self) -> List[str]:
        return asset_ids(self.p)


def default_params() -> FactorModelParams:
    """Calibrated three-factor parameters (returns in percent per day)."""
    return FactorModelParams(
        mu_b=np.array([0.78282, 0.51803, 0.41003]),
        cov_b=np.array([
            [0.029145, 0.023873, 0.010184],
            [0.023873, 0.053951, -0.006967],
            [0.010184, -0.006967, 0.086856],
        ]),
        mu_f=np.array([0.023558, 0.012989, 0.020714]),
        cov_f=np.array([
            [1.2507, -0.034999, -0.20419],
            [-0.034999, 0.31564, -0.0022526],
            [-0.20419, -0.0022526, 0.19303],
        ]),
        sigma_gamma_shape=3.3586,
        sigma_gamma_scale=0.1876,
    )


def asset_ids(p: int) -> List[str]:
    return [f"A{i:04d}" for i in range(1, p + 1)]


def rng_stream(seed: int, replicate: int, purpose: StreamPurpose) -> np.random.Generator:
    """Philox generator for one (seed, replicate, purpose) stream."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(replicate), int(purpose)))
    return np.random.Generator(np.random.Philox(sequence))


def _psd_root(cov: np.ndarray, name: str) -> np.ndarray:
    """L with L L^T = cov, from the eigendecomposition."""
    values, vectors = np.linalg.eigh(cov)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(values))))
    if values[0] < -tol:
        raise InvalidInputError(f"{name} is not positive semidefinite (min eigenvalue {values[0]:.3e})")
    return vectors * np.sqrt(np.clip(values, 0.0, None))


def build_universe(p: int, params: FactorModelParams, seed: int) -> SimulatedUniverse:
    """Draw loadings and idiosyncratic volatilities once per universe.

    Gamma draws use numpy's Marsaglia-Tsang rejection sampler (shape > 1);
    sigma_gamma_scale is the scale, so the mean volatility is shape * scale.
    """
    if p < 1:
        raise InvalidInputError(f"Universe needs at least one asset, got p={p}")
    root = _psd_root(params.cov_b, "cov_b")
    z = rng_stream(seed, 0, StreamPurpose.LOADINGS).standard_normal((p, 3))
    loadings = params.mu_b + z @ root.T
    idio_std = rng_stream(seed, 0, StreamPurpose.IDIOSYNCRATIC).gamma(params.sigma_gamma_shape, params.sigma_gamma_scale, size=p)
    logger.info(f"Built universe of {p} assets (seed {seed}), mean idiosyncratic std {idio_std.mean():.4f}")
    return SimulatedUniverse(loadings=loadings, idio_std=idio_std, seed=seed)


def draw_factors(n_days: int, params: FactorModelParams, seed: int, replicate: int = 0) -> np.ndarray:
    """Factor returns, one row per day."""
    root = _psd_root(params.cov_f, "cov_f")
    z = rng_stream(seed, replicate, StreamPurpose.FACTORS).standard_normal((n_days, 3))
    return params.mu_f + z @ root.T


def business_days(start: str, n_days: int) -> List[str]:
    """ISO labels of n_days consecutive weekdays from start (rolled forward).

    Day resolution, so long panels run past the nanosecond Timestamp range.
    """
    first = np.datetime64(start, "D")
    days = np.busday_offset(first, np.arange(n_days), roll="forward")
    return np.datetime_as_string(days, unit="D").tolist()


def generate_panel(
    universe: SimulatedUniverse,
    n_days: int,
    params: FactorModelParams,
    seed: int,
    replicate: int = 0,
    start: str = PANEL_START,
) -> ReturnPanel:
    """Simulate n_days of returns for the universe.

    Args:
        universe: Fixed loadings and volatilities
        n_days: Number of trading days
        params: Factor distribution
        seed: Experiment seed
        replicate: Replicate index selecting the factor and noise streams
        start: First business day of the date index

    Returns:
        ReturnPanel in model units
    """
    if n_days < 1:
        raise InvalidInputError(f"n_days must be positive, got {n_days}")
    factors = draw_factors(n_days, params, seed, replicate)
    noise = rng_stream(seed, replicate, StreamPurpose.NOISE).standard_normal((n_days, universe.p)) * universe.idio_std
    returns = factors @ universe.loadings.T + noise
    return ReturnPanel(dates=business_days(start, n_days), assets=universe.assets, returns=returns)


def universe_moments(universe: SimulatedUniverse, params: FactorModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """Population mean B mu_f and covariance B cov_f B^T + diag(sigma^2)."""
    b = universe.loadings
    mu = b @ params.mu_f
    sigma = b @ params.cov_f @ b.T + np.diag(universe.idio_std ** 2)
    return mu, (sigma + sigma.T) / 2


def write_universe_csv(universe: SimulatedUniverse, path: Union[str, Path]) -> Path:
    path = Path(path)
    df = pd.DataFrame({
        "asset": universe.assets,
        "b1": universe.loadings[:, 0],
        "b2": universe.loadings[:, 1],
        "b3": universe.loadings[:, 2],
        "sigma": universe.idio_std,
    })
    df.to_csv(path, index=False)
    return path


def write_demo_files(
    directory: Union[str, Path],
    p: int = 457,
    n_days: int = 1004,
    seed: int = 2020,
    params: Optional[FactorModelParams] = None,
    alpha_range: Tuple[float, float] = (0.0005, 0.003),
) -> Tuple[Path, Path]:
    """Write a synthetic real-data-style returns file and matching cost table.

    Returns are converted to decimal fractions. Proportional costs are
    uniform on alpha_range.

    Returns:
        (returns csv path, cost csv path)
    """
    params = params or default_params()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    universe = build_universe(p, params, seed)
    panel = generate_panel(universe, n_days, params, seed, replicate=0, start="2016-01-04").scaled(0.01)
    returns_path = write_panel_csv(panel, directory / "demo_returns.csv")
    alpha = rng_stream(seed, 0, StreamPurpose.COSTS).uniform(alpha_range[0], alpha_range[1], size=p)
    cost_path = directory / "demo_costs.csv"
    pd.DataFrame({"asset": universe.assets, "proportional_cost": alpha}).to_csv(cost_path, index=False)
    logger.info(f"Wrote demo panel {returns_path} ({n_days} days x {p} assets) and costs {cost_path}")
    return returns_path, cost_path
