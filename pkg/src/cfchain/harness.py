"""Experiment orchestration: seeding, trial loops, and aggregation.

Randomness is derived, never shared: every (placement, block, sample,
role) tuple maps to its own counter-based Philox stream, so any trial can
be reproduced in isolation and worker count cannot change results. All
processing options inside one sample consume identical channel, signal,
and noise draws (common random numbers); only the dither is per-option.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import __version__ as _version
from . import kernels
from .chain import (ChainNumericsError, apply_chain_collect, attach_channels,
                    build_chain_plan)
from .config import ExperimentPlan, NetworkConfig, Option
from .geometry import crandn, draw_channel, generate_placement
from .metrics import fronthaul_bitrate, multiplier_width
from .quantizer import validate_noise_statistics


class RunFailedError(RuntimeError):
    """Too many trials aborted on numerical errors."""


ABORT_BUDGET = 1e-3  # fraction of (placement, block) trials allowed to fail


class Role(IntEnum):
    PLACEMENT = 1
    CHANNEL = 2
    NOISE = 3
    SIGNAL = 4
    DITHER = 5
    MISC = 6


def seed_stream(master_seed: int, placement_idx: int, block_idx: int,
                sample_idx: int, role: Role,
                option_tag: int = 0) -> np.random.Generator:
    """Independent, reproducible stream for one (indices, role) tuple."""
    ss = np.random.SeedSequence(
        entropy=int(master_seed),
        spawn_key=(int(placement_idx), int(block_idx), int(sample_idx),
                   int(role), int(option_tag)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class Cell:
    """One (option, axis point) aggregate."""

    a: np.ndarray                 # per-user error sums (or bit errors)
    b: np.ndarray                 # per-user energy sums (or bits sent)
    count: int = 0                # accumulated samples
    clipped: int = 0              # clipped real components
    placement_values: np.ndarray = None  # per-placement scalar metric

    def value(self, metric: str) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(self.b > 0, self.a / self.b, np.nan)
        if metric == "nmse":
            return float(np.mean(ratio))
        return float(self.a.sum() / self.b.sum())

    def halfwidth(self) -> float:
        v = self.placement_values
        v = v[~np.isnan(v)]
        if v.size < 2:
            return 0.0
        return float(1.96 * v.std(ddof=1) / np.sqrt(v.size))


@dataclass
class SweepResult:
    """Aggregated output of one experiment."""

    kind: str
    axis_name: str
    axis_values: list
    options: list                     # option value strings, plan order
    metric: str                       # "nmse" | "ber" | ""
    cells: dict = field(default_factory=dict)  # (opt_value, idx) -> Cell
    metadata: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def value(self, option, idx: int) -> float:
        return self.cells[self._key(option, idx)].value(self.metric)

    def halfwidth(self, option, idx: int) -> float:
        return self.cells[self._key(option, idx)].halfwidth()

    def placement_values(self, option, idx: int) -> np.ndarray:
        return self.cells[self._key(option, idx)].placement_values

    def _key(self, option, idx):
        name = option.value if isinstance(option, Option) else str(option)
        return (name, idx)

    def table(self):
        """Header plus one row per axis value for CSV emission."""
        header = [self.axis_name]
        for o in self.options:
            header += [f"{o}_{self.metric}", f"{o}_{self.metric}_hw"]
        rows = []
        for i, x in enumerate(self.axis_values):
            row = [x]
            for o in self.options:
                row += [self.value(o, i), self.halfwidth(o, i)]
            rows.append(row)
        return header, rows


def _axis_and_metric(plan: ExperimentPlan):
    if plan.kind == "nmse_vs_bits":
        return "b_l", list(plan.bits_sweep), "nmse"
    if plan.kind == "ber_vs_power":
        return "p_db", list(plan.power_sweep_db), "ber"
    if plan.kind == "bitrate_table":
        return "b_l", list(plan.bits_sweep), ""
    return "pair", [], ""


def _placement_worker(args):
    """Everything one placement contributes to a sweep; fully seeded."""
    cfg, plan, p_idx = args
    ms = plan.master_seed
    axis_name, axis, metric = _axis_and_metric(plan)
    rng_p = seed_stream(ms, p_idx, 0, 0, Role.PLACEMENT)
    placement = generate_placement(cfg, rng_p)
    L, N, K, S = cfg.L, cfg.N, cfg.K, plan.n_samples

    cells = {}

    def cell(opt, idx):
        key = (opt.value, idx)
        if key not in cells:
            cells[key] = [np.zeros(K), np.zeros(K), 0, 0]
        return cells[key]

    aborted = 0
    for blk in range(plan.n_blocks):
        try:
            ch = draw_channel(cfg, placement,
                              seed_stream(ms, p_idx, blk, 0, Role.CHANNEL))
            noise = np.sqrt(cfg.sigma2) * crandn(
                seed_stream(ms, p_idx, blk, 0, Role.NOISE), L, N, S)
            sig_rng = seed_stream(ms, p_idx, blk, 0, Role.SIGNAL)
            if metric == "nmse":
                s_unit = crandn(sig_rng, K, S)
                bits_tx = None
            else:
                bits_tx = sig_rng.integers(0, 2, size=(K, S))
                s_unit = (2.0 * bits_tx - 1.0).astype(complex)
            dither_u = {}
            for opt in plan.options:
                if not opt.quantized:
                    continue
                r_opt = N if opt is Option.OPTION3 else min(N, K)
                du = seed_stream(ms, p_idx, blk, 0, Role.DITHER,
                                 option_tag=opt.mode)
                dither_u[opt] = (du.uniform(-0.5, 0.5, (L, r_opt, S))
                                 + 1j * du.uniform(-0.5, 0.5, (L, r_opt, S)))

            if plan.kind == "nmse_vs_bits":
                s = np.sqrt(cfg.p) * s_unit
                Y = np.einsum("lnk,ks->lns", ch.H, s) + noise
                for opt in plan.options:
                    if not opt.quantized:
                        cplan = build_chain_plan(cfg, ch.H, option=opt)
                        sh, _ = kernels.apply_chain(
                            ch.H, cplan.AH, cplan.V, cplan.gamma, cplan.delta,
                            Y, np.zeros((L, cplan.r, S), complex),
                            cplan.mode, False)
                        c = cell(opt, 0)
                        c[0] += np.sum(np.abs(s - sh) ** 2, axis=1)
                        c[1] += np.sum(np.abs(s) ** 2, axis=1)
                        c[2] += S
                        continue
                    for bi, b in enumerate(axis):
                        cplan = build_chain_plan(
                            cfg, ch.H, option=opt, bits=np.full(L, b))
                        D = cplan.delta[:, :, None] * dither_u[opt]
                        sh, clips = kernels.apply_chain(
                            ch.H, cplan.AH, cplan.V, cplan.gamma, cplan.delta,
                            Y, D, cplan.mode, True)
                        c = cell(opt, bi)
                        c[0] += np.sum(np.abs(s - sh) ** 2, axis=1)
                        c[1] += np.sum(np.abs(s) ** 2, axis=1)
                        c[2] += S
                        c[3] += int(clips.sum())
            else:  # ber_vs_power
                for pi, p_db in enumerate(axis):
                    p_lin = 10.0 ** (p_db / 10.0)
                    s = np.sqrt(p_lin) * s_unit
                    Y = np.einsum("lnk,ks->lns", ch.H, s) + noise
                    for opt in plan.options:
                        cplan = build_chain_plan(cfg, ch.H, option=opt,
                                                 p=p_lin)
                        if opt.quantized:
                            D = cplan.delta[:, :, None] * dither_u[opt]
                        else:
                            D = np.zeros((L, cplan.r, S), complex)
                        sh, clips = kernels.apply_chain(
                            ch.H, cplan.AH, cplan.V, cplan.gamma, cplan.delta,
                            Y, D, cplan.mode, opt.quantized)
                        dec = (np.real(sh) > 0).astype(np.int64)
                        c = cell(opt, pi)
                        c[0] += (dec != bits_tx).sum(axis=1)
                        c[1] += S
                        c[2] += S
                        c[3] += int(clips.sum()) if opt.quantized else 0
        except (ChainNumericsError, np.linalg.LinAlgError):
            aborted += 1
    return p_idx, cells, aborted


def _aggregate_sweep(cfg, plan, results, metric, axis):
    n_p = plan.n_placements
    agg: dict[tuple, Cell] = {}
    aborted_total = 0
    for p_idx, cells, aborted in results:
        aborted_total += aborted
        for key, (a, b, count, clipped) in sorted(cells.items()):
            if key not in agg:
                agg[key] = Cell(a=np.zeros(cfg.K), b=np.zeros(cfg.K),
                                placement_values=np.full(n_p, np.nan))
            c = agg[key]
            c.a += a
            c.b += b
            c.count += count
            c.clipped += clipped
            if metric == "nmse":
                with np.errstate(divide="ignore", invalid="ignore"):
                    c.placement_values[p_idx] = float(np.mean(a / b))
            else:
                c.placement_values[p_idx] = float(a.sum() / b.sum())
    total_trials = plan.n_placements * plan.n_blocks
    if aborted_total / total_trials > ABORT_BUDGET:
        raise RunFailedError(
            f"{aborted_total}/{total_trials} trials aborted "
            f"(budget {ABORT_BUDGET:.1%})")
    # a lossless chain ignores the bit axis: one cell feeds every axis point
    if plan.kind == "nmse_vs_bits":
        for opt in plan.options:
            if opt.quantized:
                continue
            base = agg.pop((opt.value, 0))
            for bi in range(len(axis)):
                agg[(opt.value, bi)] = base
    return agg, aborted_total, total_trials


def _run_noise_stats(plan: ExperimentPlan, cfg: NetworkConfig) -> SweepResult:
    """Shared flow for the noise-CDF and noise-covariance experiments.

    One placement, one coherence block (one fixed calibration), sample
    chunks streamed through the collect path of the chain.
    """
    ms = plan.master_seed
    option = cfg.option if cfg.option.quantized else Option.OPTION1
    placement = generate_placement(
        cfg, seed_stream(ms, 0, 0, 0, Role.PLACEMENT))
    ch = draw_channel(cfg, placement, seed_stream(ms, 0, 0, 0, Role.CHANNEL))
    cplan = attach_channels(build_chain_plan(cfg, ch.H, option=option), ch.H)
    ap = int(seed_stream(ms, 0, 0, 0, Role.MISC).integers(cfg.L))
    L, N, K = cfg.L, cfg.N, cfg.K
    r = cplan.r
    total = plan.n_samples * plan.n_blocks * plan.n_placements
    chunk = 20_000
    etas, pres = [], []
    done = 0
    while done < total:
        S = min(chunk, total - done)
        noise = np.sqrt(cfg.sigma2) * crandn(
            seed_stream(ms, 0, 0, done, Role.NOISE), L, N, S)
        s = np.sqrt(cfg.p) * crandn(
            seed_stream(ms, 0, 0, done, Role.SIGNAL), K, S)
        du = seed_stream(ms, 0, 0, done, Role.DITHER, option_tag=option.mode)
        Du = du.uniform(-0.5, 0.5, (L, r, S)) + 1j * du.uniform(
            -0.5, 0.5, (L, r, S))
        Y = np.einsum("lnk,ks->lns", ch.H, s) + noise
        _, eta, pre, _ = apply_chain_collect(
            cplan, Y, cplan.delta[:, :, None] * Du, collect_ap=ap)
        etas.append(eta)
        pres.append(pre)
        done += S
    eta = np.concatenate(etas, axis=1)
    pre = np.concatenate(pres, axis=1)
    bank = cplan.banks[ap]
    report = validate_noise_statistics(eta, pre, bank)

    extra = {"stat_report": report, "ap": ap, "option": option.value,
             "delta": bank.delta.copy(), "gamma": bank.gamma.copy()}
    if plan.kind == "noise_cdf":
        curves = {}
        grid = np.linspace(0.0, 1.0, 2001)
        for i in range(r):
            half = bank.delta[i] / 2.0
            ok_re = np.abs(eta[i].real) <= half * (1 + 1e-12)
            ok_im = np.abs(eta[i].imag) <= half * (1 + 1e-12)
            x = np.quantile(eta[i].real[ok_re], grid)
            cdf_re = grid
            cdf_im_interp = np.searchsorted(
                np.sort(eta[i].imag[ok_im]), x, side="right") \
                / ok_im.sum()
            uni = np.clip((x + half) / (2 * half), 0, 1) if half > 0 \
                else np.zeros_like(x)
            curves[i] = np.column_stack([x, cdf_re, cdf_im_interp, uni])
        extra["cdf_curves"] = curves
    else:
        diag = np.sort(np.diag(report.cov).real)[::-1]
        eig = np.sort(np.linalg.eigvalsh(report.cov))[::-1]
        extra["cov_rows"] = np.column_stack(
            [np.arange(1, r + 1), diag, eig])
    return SweepResult(kind=plan.kind, axis_name="pair",
                       axis_values=list(range(r)), options=[option.value],
                       metric="", extra=extra)


def _run_bitrate_table(plan: ExperimentPlan, cfg: NetworkConfig) -> SweepResult:
    rows = []
    for b in plan.bits_sweep:
        rate, b_s = fronthaul_bitrate(cfg, b_l=b)
        width, _ = multiplier_width(cfg.b_c, b, cfg.r)
        rows.append([b, width, b_s, rate])
    res = SweepResult(kind=plan.kind, axis_name="b_l",
                      axis_values=list(plan.bits_sweep),
                      options=[], metric="")
    res.extra["bitrate_rows"] = rows
    return res


def run_experiment(plan: ExperimentPlan, cfg: NetworkConfig,
                   workers: int = 1) -> SweepResult:
    """Execute a plan and aggregate results deterministically.

    The result depends only on (plan, cfg), never on the worker count:
    per-placement partials are merged in placement order.
    """
    t0 = time.time()
    if plan.kind in ("noise_cdf", "noise_cov"):
        result = _run_noise_stats(plan, cfg)
    elif plan.kind == "bitrate_table":
        result = _run_bitrate_table(plan, cfg)
    else:
        axis_name, axis, metric = _axis_and_metric(plan)
        args = [(cfg, plan, i) for i in range(plan.n_placements)]
        if workers > 1 and plan.n_placements > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_placement_worker, args))
        else:
            results = [_placement_worker(a) for a in args]
        results.sort(key=lambda t: t[0])
        cells, aborted, total = _aggregate_sweep(cfg, plan, results, metric,
                                                 axis)
        result = SweepResult(
            kind=plan.kind, axis_name=axis_name, axis_values=axis,
            options=[o.value for o in plan.options], metric=metric,
            cells=cells)
        result.metadata["aborted_trials"] = aborted
        result.metadata["total_trials"] = total
    result.metadata.update({
        "config": cfg.as_dict(),
        "plan": plan.as_dict(),
        "seed": plan.master_seed,
        "version": _version,
        "backend": kernels.active_backend(),
        "wall_time_s": round(time.time() - t0, 3),
    })
    return result
