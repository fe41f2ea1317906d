import numpy as np
import pytest

from cfchain import kernels
from cfchain.chain import build_chain_plan
from cfchain.config import ConfigError, NetworkConfig, Option
from cfchain.geometry import crandn, draw_channel, generate_placement
from cfchain.harness import Role, seed_stream
from cfchain.metrics import (MetricAccumulator, fronthaul_bitrate,
                             multiplier_width)


class TestNmseAccumulator:
    def test_perfect_estimate(self, rng):
        acc = MetricAccumulator(K=4)
        s = crandn(rng, 4, 100)
        acc.accumulate_nmse(s, s)
        assert acc.nmse_avg() == 0.0

    def test_zero_estimator_scores_one(self, rng):
        acc = MetricAccumulator(K=4)
        s = crandn(rng, 4, 100)
        acc.accumulate_nmse(s, np.zeros_like(s))
        assert acc.nmse_avg() == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(acc.nmse_per_user(), 1.0)

    def test_order_invariance(self, rng):
        s = crandn(rng, 4, 60)
        sh = crandn(rng, 4, 60)
        a = MetricAccumulator(K=4)
        a.accumulate_nmse(s, sh)
        b = MetricAccumulator(K=4)
        perm = rng.permutation(60)
        for j in perm:
            b.accumulate_nmse(s[:, j], sh[:, j])
        assert np.allclose(a.nmse_per_user(), b.nmse_per_user(), rtol=1e-12)

    def test_merge_equals_concatenation(self, rng):
        s = crandn(rng, 4, 80)
        sh = crandn(rng, 4, 80)
        whole = MetricAccumulator(K=4)
        whole.accumulate_nmse(s, sh)
        left = MetricAccumulator(K=4)
        left.accumulate_nmse(s[:, :30], sh[:, :30])
        right = MetricAccumulator(K=4)
        right.accumulate_nmse(s[:, 30:], sh[:, 30:])
        left.merge(right)
        assert np.allclose(left.nmse_per_user(), whole.nmse_per_user(),
                           rtol=1e-12)
        assert left.n_samples == whole.n_samples

    def test_lossless_chain_matches_error_covariance(self):
        # NMSE * p * K tracks trace(C_L) for a fixed channel
        cfg = NetworkConfig(seed=3)
        placement = generate_placement(
            cfg, seed_stream(3, 0, 0, 0, Role.PLACEMENT))
        ch = draw_channel(cfg, placement,
                          seed_stream(3, 0, 0, 0, Role.CHANNEL))
        plan = build_chain_plan(cfg, ch.H, option=Option.NOQUANT)
        n = 10_000
        rng = seed_stream(3, 0, 0, 0, Role.NOISE)
        s = np.sqrt(cfg.p) * crandn(rng, cfg.K, n)
        Y = np.einsum("lnk,ks->lns", ch.H, s) \
            + np.sqrt(cfg.sigma2) * crandn(rng, cfg.L, cfg.N, n)
        sh, _ = kernels.apply_chain(ch.H, plan.AH, plan.V, plan.gamma,
                                    plan.delta, Y,
                                    np.zeros((cfg.L, plan.r, n), complex),
                                    0, False)
        acc = MetricAccumulator(K=cfg.K)
        acc.accumulate_nmse(s, sh)
        assert acc.nmse_avg() * cfg.p * cfg.K == pytest.approx(
            plan.traces[-1], rel=0.03)


class TestBerAccumulator:
    def test_perfect_and_inverted(self):
        acc = MetricAccumulator(K=3)
        bits = np.array([[1, 0, 1], [0, 0, 1], [1, 1, 0]])
        s = (2.0 * bits - 1.0).astype(complex)
        acc.accumulate_ber(bits, s)
        assert acc.ber() == 0.0
        acc2 = MetricAccumulator(K=3)
        acc2.accumulate_ber(bits, -s)
        assert acc2.ber() == 1.0

    def test_pure_noise_is_half(self, rng):
        n = 100_000
        bits = rng.integers(0, 2, (1, n))
        noise = crandn(rng, 1, n)  # decision independent of bits
        acc = MetricAccumulator(K=1)
        acc.accumulate_ber(bits, noise)
        assert acc.ber() == pytest.approx(0.5, abs=0.01)

    def test_range(self, rng):
        acc = MetricAccumulator(K=2)
        acc.accumulate_ber(rng.integers(0, 2, (2, 500)), crandn(rng, 2, 500))
        assert 0.0 <= acc.ber() <= 1.0


class TestBitAccounting:
    def test_multiplier_width_golden(self):
        width, b_s = multiplier_width(8, 3, 4)
        assert width == 18
        assert b_s == 36

    def test_single_product(self):
        width, b_s = multiplier_width(5, 2, 1)
        assert width == 5 + 2 + 1
        assert b_s == 2 * width

    def test_affine_in_bits(self):
        for b in range(1, 9):
            w0, _ = multiplier_width(8, b, 4)
            w1, _ = multiplier_width(8, b + 1, 4)
            assert w1 - w0 == 1

    def test_bitrate_golden(self):
        cfg = NetworkConfig(b_e=3200)
        rate, b_s = fronthaul_bitrate(cfg, b_l=3)
        assert rate == pytest.approx(3.58e10, rel=1e-12)
        assert b_s == 36

    def test_bitrate_affine_increment_exact(self):
        cfg = NetworkConfig()
        n_cb = cfg.bandwidth_hz / cfg.coherence_bw_hz
        expected = 2.0 * n_cb * cfg.tau_d * cfg.K / cfg.coherence_time_s
        for b in range(1, 8):
            r0, _ = fronthaul_bitrate(cfg, b_l=b)
            r1, _ = fronthaul_bitrate(cfg, b_l=b + 1)
            assert r1 - r0 == pytest.approx(expected, rel=1e-12)

    def test_degenerate_zero(self):
        cfg = NetworkConfig(tau_d=0, b_e=0)
        rate, _ = fronthaul_bitrate(cfg, b_l=3)
        assert rate == 0.0

    def test_monotone_in_every_argument(self):
        base = NetworkConfig()
        r0, _ = fronthaul_bitrate(base, b_l=3)
        assert fronthaul_bitrate(base.with_(b_e=base.b_e + 1), 3)[0] > r0
        assert fronthaul_bitrate(base.with_(tau_d=191), 3)[0] > r0
        assert fronthaul_bitrate(base.with_(K=11), 3)[0] > r0
        assert fronthaul_bitrate(base.with_(b_c=9), 3)[0] > r0
        assert fronthaul_bitrate(base, 4)[0] > r0
        assert fronthaul_bitrate(base.with_(N=5), 3)[0] > r0  # r grows

    def test_tau_d_over_budget(self):
        cfg = NetworkConfig()
        object.__setattr__(cfg, "tau_d", 10_000)  # bypass config validation
        with pytest.raises(ConfigError):
            fronthaul_bitrate(cfg, b_l=3)
