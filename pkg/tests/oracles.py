"""Brute-force reference computations and synthetic designs used by the tests."""
import itertools

import numpy as np


def qp_objective(Q, c, theta, w):
    return float(w @ Q @ w + c @ w + theta @ np.abs(w))


def sign_pattern_oracle(Q, c, theta, b):
    """Minimize w^T Q w + c^T w + sum theta |w| s.t. 1^T w = b by enumerating sign patterns.

    For each pattern in {-1, 0, 1}^p the restricted smooth problem is solved
    through its KKT system; sign-consistent candidates are kept.

    Returns:
        (weights, objective) of the best candidate
    """
    p = len(c)
    best_w, best_val = None, np.inf
    for pattern in itertools.product((-1, 0, 1), repeat=p):
        s = np.array(pattern, dtype=float)
        active = np.flatnonzero(s)
        w = np.zeros(p)
        if active.size == 0:
            if b != 0:
                continue
        else:
            k = active.size
            kkt = np.zeros((k + 1, k + 1))
            kkt[:k, :k] = 2 * Q[np.ix_(active, active)]
            kkt[:k, k] = 1
            kkt[k, :k] = 1
            rhs = np.append(-(c[active] + theta[active] * s[active]), b)
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            if np.any(sol[:k] * s[active] < -1e-12):
                continue
            w[active] = sol[:k]
        val = qp_objective(Q, c, theta, w)
        if val < best_val:
            best_w, best_val = w, val
    return best_w, best_val


def loop_mean(x):
    n, p = x.shape
    out = np.zeros(p)
    for j in range(p):
        total = 0.0
        for i in range(n):
            total += x[i, j]
        out[j] = total / n
    return out


def two_pass_covariance(x):
    n, p = x.shape
    mean = loop_mean(x)
    out = np.zeros((p, p))
    for j in range(p):
        for k in range(p):
            total = 0.0
            for i in range(n):
                total += (x[i, j] - mean[j]) * (x[i, k] - mean[k])
            out[j, k] = total / (n - 1)
    return out


def shrinkage_reference(x):
    """Direct transcription of the linear shrinkage formulas.

    Returns:
        (shrunk covariance, intensity)
    """
    n, p = x.shape
    s = two_pass_covariance(x)
    m = np.trace(s) / p
    target = m * np.eye(p)
    d2 = np.linalg.norm(s - target, "fro") ** 2
    centered = x - loop_mean(x)
    total = 0.0
    for k in range(n):
        outer = np.outer(centered[k], centered[k])
        total += np.linalg.norm(outer - s, "fro") ** 2
    b2 = total / n ** 2
    rho = 1.0 if d2 == 0 else min(1.0, b2 / d2)
    return rho * target + (1 - rho) * s, rho


def random_psd(rng, p, ridge=0.1):
    a = rng.standard_normal((p, p))
    return a @ a.T / p + ridge * np.eye(p)


# Planted sparse design: five strong positions, tiny off-support volatility.
PLANTED_WEIGHTS = np.array([0.7, 0.7, 0.6, -0.5, -0.5])
PLANTED_LAMBDA = 0.03


def planted_sparse_panel(seed, p=200, n=400, gamma=1 / 3, lam=PLANTED_LAMBDA):
    """Returns panel whose population optimum under the SCAD program is PLANTED_WEIGHTS on assets 0..4.

    The support has variance 0.09; the other assets have variance 0.0025 and
    zero mean. Means on the support are set so the population budget
    multiplier is 0.1 * lam, well inside the off-support dead zone.

    Returns:
        n x p return matrix
    """
    rng = np.random.default_rng(seed)
    k = PLANTED_WEIGHTS.size
    std = np.full(p, 0.05)
    std[:k] = 0.3
    mu = np.zeros(p)
    mu[:k] = (2 * 0.09 * PLANTED_WEIGHTS + 0.1 * lam) / gamma
    return mu + rng.standard_normal((n, p)) * std
