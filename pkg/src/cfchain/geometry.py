"""Network geometry, large-scale fading, and channel generation.

APs sit on a deterministic uniform grid over a square area; users are
dropped uniformly at random with a minimum-distance floor so the path-loss
law stays in its valid domain. Small-scale fading is correlated Rayleigh:
each AP-user channel vector is a zero-mean circularly symmetric complex
Gaussian with a Hermitian PSD spatial covariance whose trace equals
N times the large-scale gain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConfigError, NetworkConfig

PATHLOSS_INTERCEPT_DB = -30.5
PATHLOSS_SLOPE_DB_PER_DECADE = -36.7


@dataclass
class Placement:
    """AP/user coordinates (meters) and the pairwise distance matrix."""

    ap_positions: np.ndarray    # (L, 2)
    user_positions: np.ndarray  # (K, 2)
    distances: np.ndarray       # (L, K), floored at d_min


@dataclass
class ChannelRealization:
    """One coherence block's channels with their generating statistics."""

    H: np.ndarray     # (L, N, K) complex, column k of H[l] is the k-th user
    R_h: np.ndarray   # (L, K, N, N) Hermitian PSD spatial covariances
    beta: np.ndarray  # (L, K) large-scale gains, linear


def pathloss_db(d) -> np.ndarray | float:
    """Urban-microcell path loss: -30.5 - 36.7*log10(d / 1 m).

    Raises ConfigError for non-positive distances.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ConfigError("pathloss_db requires d > 0")
    out = PATHLOSS_INTERCEPT_DB + PATHLOSS_SLOPE_DB_PER_DECADE * np.log10(d)
    return out if out.ndim else float(out)


def ap_grid(L: int, area_side: float) -> np.ndarray:
    """Deterministic uniform grid of L points over the square, row-major.

    The grid is ceil(sqrt(L)) columns wide; points sit at cell centers, so
    L=1 lands exactly on the area centroid.
    """
    ncols = int(np.ceil(np.sqrt(L)))
    nrows = int(np.ceil(L / ncols))
    pts = []
    for i in range(L):
        col, row = i % ncols, i // ncols
        pts.append(((col + 0.5) * area_side / ncols,
                    (row + 0.5) * area_side / nrows))
    return np.asarray(pts, dtype=float)


def generate_placement(cfg: NetworkConfig, rng: np.random.Generator) -> Placement:
    """Grid APs, uniform i.i.d. users, distance floor enforced by resampling."""
    aps = ap_grid(cfg.L, cfg.area_side)
    users = np.empty((cfg.K, 2), dtype=float)
    for k in range(cfg.K):
        for _ in range(10_000):
            pos = rng.uniform(0.0, cfg.area_side, size=2)
            if np.min(np.linalg.norm(aps - pos, axis=1)) >= cfg.d_min:
                users[k] = pos
                break
        else:  # pragma: no cover - area >> d_min in any sane scenario
            raise RuntimeError("could not place a user outside the d_min floor")
    dist = np.linalg.norm(aps[:, None, :] - users[None, :, :], axis=2)
    dist = np.maximum(dist, cfg.d_min)
    return Placement(ap_positions=aps, user_positions=users, distances=dist)


def build_spatial_covariance(cfg: NetworkConfig, beta_kl: float) -> np.ndarray:
    """N x N spatial covariance with trace = N * beta_kl.

    "uncorrelated" gives beta*I; "exponential" gives beta * rho^|i-j|.
    """
    if beta_kl <= 0:
        raise ConfigError("beta_kl > 0 required")
    if cfg.corr_model == "uncorrelated":
        return beta_kl * np.eye(cfg.N, dtype=complex)
    if not (0.0 <= cfg.rho < 1.0):
        raise ConfigError("rho in [0, 1)")
    idx = np.arange(cfg.N)
    T = cfg.rho ** np.abs(np.subtract.outer(idx, idx))
    return beta_kl * T.astype(complex)


def _correlation_sqrt(cfg: NetworkConfig) -> np.ndarray:
    """Real symmetric square root of the unit-trace antenna correlation."""
    if cfg.corr_model == "uncorrelated":
        return np.eye(cfg.N)
    idx = np.arange(cfg.N)
    T = cfg.rho ** np.abs(np.subtract.outer(idx, idx))
    vals, vecs = np.linalg.eigh(T)
    if np.min(vals) < -1e-10 * np.max(vals):
        raise np.linalg.LinAlgError("antenna correlation matrix is not PSD")
    return (vecs * np.sqrt(np.maximum(vals, 0.0))) @ vecs.T


def draw_channel(cfg: NetworkConfig, placement: Placement,
                 rng: np.random.Generator) -> ChannelRealization:
    """One correlated Rayleigh realization per AP-user pair.

    The same realization is meant to be reused for every sample of one
    coherence block; callers draw again for the next block.
    """
    beta = 10.0 ** (pathloss_db(placement.distances) / 10.0)  # (L, K)
    sqrtT = _correlation_sqrt(cfg)
    w = crandn(rng, cfg.L, cfg.N, cfg.K)
    H = np.sqrt(beta)[:, None, :] * np.einsum("nm,lmk->lnk", sqrtT, w)
    R = np.empty((cfg.L, cfg.K, cfg.N, cfg.N), dtype=complex)
    for l in range(cfg.L):
        for k in range(cfg.K):
            R[l, k] = build_spatial_covariance(cfg, beta[l, k])
    return ChannelRealization(H=H, R_h=R, beta=beta)


def receive_signal(H_l: np.ndarray, s: np.ndarray, sigma2: float,
                   rng: np.random.Generator) -> np.ndarray:
    """y = H s + n with n ~ CN(0, sigma2 I); s may be (K,) or (K, S)."""
    H_l = np.asarray(H_l)
    s = np.asarray(s)
    if H_l.shape[1] != s.shape[0]:
        raise ValueError(f"dimension mismatch: H is {H_l.shape}, s is {s.shape}")
    noise_shape = (H_l.shape[0],) + s.shape[1:]
    n = np.sqrt(sigma2) * crandn(rng, *noise_shape)
    return H_l @ s + n


def crandn(rng: np.random.Generator, *shape) -> np.ndarray:
    """Unit-variance circularly symmetric complex Gaussian draws."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
        / np.sqrt(2.0)
