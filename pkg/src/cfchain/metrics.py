"""Performance and fronthaul-cost metrics.

NMSE is normalized per user by the empirical signal energy, so the
all-zero estimator scores exactly 1. Accumulators are pure folds and merge
like monoids, which lets parallel workers keep private copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, NetworkConfig


@dataclass
class MetricAccumulator:
    """Streaming per-user error/energy sums and BPSK bit-error counters."""

    K: int
    sum_sq_err: np.ndarray = field(default=None)
    sum_sq_sig: np.ndarray = field(default=None)
    bit_errors: np.ndarray = field(default=None)
    bits_sent: np.ndarray = field(default=None)
    n_samples: int = 0

    def __post_init__(self):
        if self.sum_sq_err is None:
            self.sum_sq_err = np.zeros(self.K)
            self.sum_sq_sig = np.zeros(self.K)
            self.bit_errors = np.zeros(self.K, dtype=np.int64)
            self.bits_sent = np.zeros(self.K, dtype=np.int64)

    def accumulate_nmse(self, s_true: np.ndarray, s_hat: np.ndarray):
        """Add one or more samples; arrays are (K,) or (K, S)."""
        err = np.abs(s_true - s_hat) ** 2
        sig = np.abs(s_true) ** 2
        if err.ndim == 1:
            err = err[:, None]
            sig = sig[:, None]
        self.sum_sq_err += err.sum(axis=1)
        self.sum_sq_sig += sig.sum(axis=1)
        self.n_samples += err.shape[1]

    def accumulate_ber(self, s_true_bits: np.ndarray, s_hat: np.ndarray):
        """Decide sign(Re(s_hat)) against the transmitted bits {0,1}."""
        bits = np.asarray(s_true_bits)
        dec = (np.real(s_hat) > 0).astype(np.int64)
        if bits.ndim == 1:
            bits = bits[:, None]
            dec = dec[:, None]
        self.bit_errors += (dec != bits).sum(axis=1)
        self.bits_sent += bits.shape[1]
        self.n_samples += bits.shape[1]

    def merge(self, other: "MetricAccumulator") -> "MetricAccumulator":
        if other.K != self.K:
            raise ValueError("accumulator sizes differ")
        self.sum_sq_err += other.sum_sq_err
        self.sum_sq_sig += other.sum_sq_sig
        self.bit_errors += other.bit_errors
        self.bits_sent += other.bits_sent
        self.n_samples += other.n_samples
        return self

    def nmse_per_user(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.sum_sq_sig > 0,
                            self.sum_sq_err / self.sum_sq_sig, np.nan)

    def nmse_avg(self) -> float:
        return float(np.mean(self.nmse_per_user()))

    def ber(self) -> float:
        total = self.bits_sent.sum()
        return float(self.bit_errors.sum() / total) if total else float("nan")


def multiplier_width(b_c: int, b_l: int, r: int) -> tuple[int, int]:
    """Bit growth of the combining inner product.

    Returns (per-element accumulator width, total per-estimate width):
    a b_c x b_l product needs b_c + b_l bits, and summing r complex
    products adds 2r - 1 carry bits; the complex estimate carries two such
    accumulators.
    """
    width = b_c + b_l + 2 * r - 1
    return width, 2 * width


def fronthaul_bitrate(cfg: NetworkConfig, b_l: int | None = None
                      ) -> tuple[float, int]:
    """Per-link fronthaul rate in bits/second, plus the estimate width b_s.

    Every coherence block ships the covariance report (b_e bits) and
    tau_d refined estimates of K users at b_s bits each; N_CB = B/B_c
    blocks fit in one coherence time.
    """
    if cfg.tau_d > cfg.tau_c:
        raise ConfigError("tau_d <= T_c*B_c required")
    if b_l is None:
        b_l = int(cfg.bits[0])
    width, b_s = multiplier_width(cfg.b_c, b_l, cfg.r)
    n_cb = cfg.bandwidth_hz / cfg.coherence_bw_hz
    rate = n_cb * (cfg.b_e + 2.0 * cfg.tau_d * cfg.K * width) \
        / cfg.coherence_time_s
    return rate, b_s
