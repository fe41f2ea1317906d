"""Non-subtractive dithered uniform quantization of complex vectors.

Each complex stream gets a pair of identical real quantizers (real and
imaginary parts). Dynamic ranges are calibrated from the second-order
statistics of the quantizer input including the dither's own contribution,
which gives the closed form

    gamma_i = sqrt( alpha^2 * (1 - alpha^2 / (3*4^b))^-1 * var_i / 2 )

with var_i = E{|input_i|^2}. The dither stays in the forwarded signal
(non-subtractive), so both its covariance and the quantization-noise
covariance enter the downstream estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import kernels
from .config import ConfigError, _check_alpha_bits


class InsufficientSamplesError(ValueError):
    """Too few samples to certify the quantization-noise statistics."""


@dataclass
class QuantizerBank:
    """Calibrated per-stream quantizers for one AP (2r real quantizers)."""

    b: int                # bits per real quantizer
    gamma: np.ndarray     # (r,) dynamic ranges
    delta: np.ndarray     # (r,) step sizes, exactly 2*gamma/2^b
    R_d: np.ndarray       # (r,r) diagonal dither covariance, diag = delta^2/6
    R_eta: np.ndarray     # (r,r) quantization-noise covariance, equals R_d

    @property
    def r(self) -> int:
        return self.gamma.size

    @property
    def noise_diag(self) -> np.ndarray:
        """Diagonal of R_d + R_eta."""
        return 2.0 * self.delta ** 2 / 6.0


@dataclass
class QuantizedFrame:
    f: np.ndarray          # (r,) quantized complex output
    eta: np.ndarray        # (r,) realized quantization noise (diagnostic)
    clipped_count: int


@dataclass
class StatReport:
    """Empirical quantization-noise statistics from unclipped operation."""

    n_samples: int
    n_unclipped: np.ndarray      # (r,) per pair, min over re/im
    ks_re: np.ndarray            # (r,) KS distance of Re(eta_i) vs uniform
    ks_im: np.ndarray            # (r,)
    cov: np.ndarray              # (r,r) sample covariance of eta
    offdiag_ratio: float         # max |off-diagonal| / mean diagonal
    eig_vs_diag_rel: float       # sorted eigenvalues vs sorted diagonal
    corr_input: np.ndarray       # (r,) |corr(eta_i, pre-dither input_i)|

    def rows(self):
        """Per-pair rows for CSV emission."""
        for i in range(self.ks_re.size):
            yield {
                "pair": i,
                "n_unclipped": int(self.n_unclipped[i]),
                "ks_re": float(self.ks_re[i]),
                "ks_im": float(self.ks_im[i]),
                "corr_input": float(self.corr_input[i]),
                "offdiag_ratio": self.offdiag_ratio,
                "eig_vs_diag_rel": self.eig_vs_diag_rel,
            }


def calibrate_dynamic_range(input_var, alpha: float, b: int) -> QuantizerBank:
    """Build a bank from per-stream input variances E{|input_i|^2}.

    A zero-variance stream degenerates to gamma = delta = 0; the quantizer
    then passes 0 and never counts clipping.
    """
    input_var = np.atleast_1d(np.asarray(input_var, dtype=float))
    if np.any(input_var < 0):
        raise ConfigError("input_var >= 0 required")
    b = int(b)
    if b < 1:
        raise ConfigError("b_l >= 1")
    _check_alpha_bits(alpha, b)
    corr = 1.0 - alpha ** 2 / (3.0 * 4.0 ** b)
    gamma = np.sqrt(alpha ** 2 / corr * input_var / 2.0)
    delta = 2.0 * gamma / 2.0 ** b
    R_d = np.diag(delta ** 2 / 6.0)
    return QuantizerBank(b=b, gamma=gamma, delta=delta, R_d=R_d,
                         R_eta=R_d.copy())


def draw_dither(bank: QuantizerBank, rng: np.random.Generator,
                size: int | None = None) -> np.ndarray:
    """I.i.d. uniform dither on [-delta/2, delta/2] per real component.

    Returns (r,) when size is None, else (r, size).
    """
    shape = (bank.r,) if size is None else (bank.r, size)
    u = rng.uniform(-0.5, 0.5, shape) + 1j * rng.uniform(-0.5, 0.5, shape)
    d = bank.delta if size is None else bank.delta[:, None]
    return d * u


def quantize(bank: QuantizerBank, z: np.ndarray) -> QuantizedFrame:
    """Element-wise mid-rise quantization of the dithered vector z."""
    z = np.asarray(z, dtype=complex)
    if z.shape != (bank.r,):
        raise ValueError(f"expected shape ({bank.r},), got {z.shape}")
    vr, cr = kernels.quantize_midrise(z.real, bank.gamma, bank.delta)
    vi, ci = kernels.quantize_midrise(z.imag, bank.gamma, bank.delta)
    f = vr + 1j * vi
    return QuantizedFrame(f=f, eta=f - z,
                          clipped_count=int(np.count_nonzero(cr))
                          + int(np.count_nonzero(ci)))


def validate_noise_statistics(eta: np.ndarray, pre_input: np.ndarray,
                              bank: QuantizerBank,
                              min_samples: int = 10_000) -> StatReport:
    """Check the dither theory against realized quantization noise.

    eta, pre_input: (r, n) arrays of noise realizations and the matching
    pre-dither quantizer inputs. Clipped events are identified by
    |component of eta| > delta/2 and excluded, since the uniform law only
    holds for in-range operation.
    """
    eta = np.asarray(eta)
    pre = np.asarray(pre_input)
    if eta.shape != pre.shape or eta.ndim != 2 or eta.shape[0] != bank.r:
        raise ValueError("eta and pre_input must both be (r, n)")
    n = eta.shape[1]
    half = bank.delta[:, None] / 2.0
    ok_re = np.abs(eta.real) <= half * (1 + 1e-12)
    ok_im = np.abs(eta.imag) <= half * (1 + 1e-12)
    n_unclipped = np.minimum(ok_re.sum(axis=1), ok_im.sum(axis=1))
    if np.any(n_unclipped < min_samples):
        raise InsufficientSamplesError(
            f"need >= {min_samples} unclipped samples per quantizer pair, "
            f"got {n_unclipped.min()}")

    r = bank.r
    ks_re = np.empty(r)
    ks_im = np.empty(r)
    corr_in = np.empty(r)
    for i in range(r):
        u = stats.uniform(loc=-bank.delta[i] / 2.0, scale=bank.delta[i])
        ks_re[i] = stats.kstest(eta[i].real[ok_re[i]], u.cdf).statistic
        ks_im[i] = stats.kstest(eta[i].imag[ok_im[i]], u.cdf).statistic
        m = ok_re[i] & ok_im[i]
        cr = np.corrcoef(eta[i].real[m], pre[i].real[m])[0, 1]
        ci = np.corrcoef(eta[i].imag[m], pre[i].imag[m])[0, 1]
        corr_in[i] = max(abs(cr), abs(ci))

    keep = (ok_re & ok_im).all(axis=0)
    e = eta[:, keep]
    cov = (e @ e.conj().T) / keep.sum()
    diag = np.diag(cov).real
    offdiag = cov - np.diag(np.diag(cov))
    offdiag_ratio = float(np.max(np.abs(offdiag)) / np.mean(diag))
    eig = np.sort(np.linalg.eigvalsh(cov))[::-1]
    dg = np.sort(diag)[::-1]
    eig_vs_diag = float(np.max(np.abs(eig - dg) / dg))
    return StatReport(n_samples=n, n_unclipped=n_unclipped, ks_re=ks_re,
                      ks_im=ks_im, cov=cov, offdiag_ratio=offdiag_ratio,
                      eig_vs_diag_rel=eig_vs_diag, corr_input=corr_in)
