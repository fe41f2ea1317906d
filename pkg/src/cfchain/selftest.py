"""Built-in invariant suite behind the `selftest` CLI subcommand.

Each check returns (name, passed, detail). The fast mode trims sample
counts so the suite finishes in a few seconds; thresholds that depend on
sample size are relaxed accordingly.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .chain import (apply_chain_collect, attach_channels, build_chain_plan,
                    centralized_mmse_oracle)
from .config import NetworkConfig, Option
from .geometry import crandn, draw_channel, generate_placement
from .harness import Role, seed_stream
from .metrics import fronthaul_bitrate, multiplier_width
from .quantizer import calibrate_dynamic_range, validate_noise_statistics


def check_oracle_equivalence(fast: bool = False):
    """Lossless chain must reproduce the batch LMMSE on stacked channels."""
    cfg = NetworkConfig()
    n_inst = 20 if fast else 100
    worst = 0.0
    for i in range(n_inst):
        placement = generate_placement(
            cfg, seed_stream(cfg.seed, i, 0, 0, Role.PLACEMENT))
        ch = draw_channel(cfg, placement,
                          seed_stream(cfg.seed, i, 0, 0, Role.CHANNEL))
        rng = seed_stream(cfg.seed, i, 0, 0, Role.NOISE)
        s = np.sqrt(cfg.p) * crandn(rng, cfg.K)
        y = np.einsum("lnk,k->ln", ch.H, s) \
            + np.sqrt(cfg.sigma2) * crandn(rng, cfg.L, cfg.N)
        plan = build_chain_plan(cfg, ch.H, option=Option.NOQUANT)
        sh, _ = kernels.apply_chain(
            ch.H, plan.AH, plan.V, plan.gamma, plan.delta, y[:, :, None],
            np.zeros((cfg.L, plan.r, 1), complex), 0, False)
        ref = centralized_mmse_oracle(ch.H, y, cfg.p, cfg.sigma2)
        worst = max(worst, float(np.max(np.abs(sh[:, 0] - ref))))
    ok = worst < 1e-9
    return ("oracle equivalence (lossless chain vs batch LMMSE)", ok,
            f"max |diff| = {worst:.3e} over {n_inst} instances")


def check_noise_statistics(fast: bool = False):
    """Quantization noise: uniform CDF, diagonal covariance, input-free."""
    cfg = NetworkConfig()
    n = 20_000 if fast else 100_000
    placement = generate_placement(
        cfg, seed_stream(cfg.seed, 0, 0, 0, Role.PLACEMENT))
    ch = draw_channel(cfg, placement,
                      seed_stream(cfg.seed, 0, 0, 0, Role.CHANNEL))
    plan = attach_channels(build_chain_plan(cfg, ch.H, option=Option.OPTION1),
                           ch.H)
    rng = seed_stream(cfg.seed, 0, 0, 0, Role.NOISE)
    s = np.sqrt(cfg.p) * crandn(rng, cfg.K, n)
    Y = np.einsum("lnk,ks->lns", ch.H, s) \
        + np.sqrt(cfg.sigma2) * crandn(rng, cfg.L, cfg.N, n)
    du = seed_stream(cfg.seed, 0, 0, 0, Role.DITHER, option_tag=1)
    Du = du.uniform(-0.5, 0.5, (cfg.L, plan.r, n)) \
        + 1j * du.uniform(-0.5, 0.5, (cfg.L, plan.r, n))
    ap = 2
    _, eta, pre, _ = apply_chain_collect(
        plan, Y, plan.delta[:, :, None] * Du, collect_ap=ap)
    rep = validate_noise_statistics(eta, pre, plan.banks[ap],
                                    min_samples=10_000 if not fast else 5_000)
    ks_lim = 0.01 if not fast else 0.02
    ok = (rep.ks_re.max() < ks_lim and rep.ks_im.max() < ks_lim
          and rep.offdiag_ratio < 0.05 and rep.corr_input.max() < 0.02)
    return ("quantization-noise statistics (CDF, covariance, decorrelation)",
            ok,
            f"KS<= {max(rep.ks_re.max(), rep.ks_im.max()):.4f}, "
            f"offdiag {rep.offdiag_ratio:.4f}, "
            f"corr {rep.corr_input.max():.4f} at n={n}")


def check_covariance_monotonicity(fast: bool = False):
    """trace(C) never increases along the chain; C stays PSD."""
    cfg = NetworkConfig()
    n_runs = 100 if fast else 500
    opts = [Option.OPTION1, Option.OPTION2, Option.OPTION3, Option.NOQUANT]
    worst_inc = -np.inf
    worst_eig = np.inf
    for i in range(n_runs):
        placement = generate_placement(
            cfg, seed_stream(cfg.seed, i, 0, 0, Role.PLACEMENT))
        ch = draw_channel(cfg, placement,
                          seed_stream(cfg.seed, i, 1, 0, Role.CHANNEL))
        plan = build_chain_plan(cfg, ch.H, option=opts[i % 4],
                                keep_covariances=True)
        inc = np.max(np.diff(plan.traces)) / plan.traces[0]
        worst_inc = max(worst_inc, float(inc))
        for C in plan.covariances:
            ev = float(np.linalg.eigvalsh(C).min() / np.trace(C).real)
            worst_eig = min(worst_eig, ev)
    ok = worst_inc <= 1e-8 and worst_eig >= -1e-8
    return ("error-covariance recursion (monotone trace, PSD)", ok,
            f"max trace increase {worst_inc:.2e}, "
            f"min eig/trace {worst_eig:.2e} over {n_runs} chains")


def check_formula_goldens(fast: bool = False):
    """Closed-form arithmetic pinned to hand-computed values."""
    from .geometry import pathloss_db
    checks = []
    checks.append(abs(pathloss_db(1.0) + 30.5) < 1e-12)
    checks.append(abs(pathloss_db(100.0) + 103.9) < 1e-12)
    bank = calibrate_dynamic_range([2.0], 3.0, 3)
    checks.append(abs(bank.gamma[0] - 3.0 * (1 - 9 / 192) ** -0.5) < 1e-12)
    checks.append(abs(bank.delta[0] - 2 * bank.gamma[0] / 8) < 1e-15)
    width, b_s = multiplier_width(8, 3, 4)
    checks.append(width == 18 and b_s == 36)
    cfg = NetworkConfig(b_e=3200)
    rate, b_s2 = fronthaul_bitrate(cfg, b_l=3)
    checks.append(abs(rate - 3.58e10) < 1e-3)
    checks.append(b_s2 == 36)
    ok = all(checks)
    return ("formula goldens (path loss, dynamic range, bit accounting)", ok,
            f"{sum(checks)}/{len(checks)} identities hold")


ALL_CHECKS = [check_formula_goldens, check_oracle_equivalence,
              check_noise_statistics, check_covariance_monotonicity]


def run_selftest(fast: bool = False, echo=print) -> int:
    kernels.warmup()
    failures = 0
    for check in ALL_CHECKS:
        name, ok, detail = check(fast=fast)
        echo(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        failures += 0 if ok else 1
    return 0 if failures == 0 else 1
