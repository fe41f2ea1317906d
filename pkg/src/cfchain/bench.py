"""Backend benchmark: numba-jitted kernels vs the pure-numpy fallback.

Times the per-block chain kernel and the element-wise quantizer on a
default-scenario workload, once per backend, and prints a comparison
table. Used by `cfchain bench` and benchmarks/bench_backends.py.
"""

from __future__ import annotations

import time

import numpy as np

from . import kernels
from .chain import build_chain_plan
from .config import NetworkConfig, Option
from .geometry import crandn, draw_channel, generate_placement
from .harness import Role, seed_stream


def _workload(samples: int):
    cfg = NetworkConfig()
    placement = generate_placement(
        cfg, seed_stream(cfg.seed, 0, 0, 0, Role.PLACEMENT))
    ch = draw_channel(cfg, placement,
                      seed_stream(cfg.seed, 0, 0, 0, Role.CHANNEL))
    plan = build_chain_plan(cfg, ch.H, option=Option.OPTION1)
    rng = seed_stream(cfg.seed, 0, 0, 0, Role.NOISE)
    s = np.sqrt(cfg.p) * crandn(rng, cfg.K, samples)
    Y = np.einsum("lnk,ks->lns", ch.H, s) \
        + np.sqrt(cfg.sigma2) * crandn(rng, cfg.L, cfg.N, samples)
    du = seed_stream(cfg.seed, 0, 0, 0, Role.DITHER, option_tag=1)
    Du = du.uniform(-0.5, 0.5, (cfg.L, plan.r, samples)) \
        + 1j * du.uniform(-0.5, 0.5, (cfg.L, plan.r, samples))
    D = plan.delta[:, :, None] * Du
    return ch.H, plan, Y, D


def _time(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_benchmark(samples: int = 2000, repeats: int = 30, echo=print):
    H, plan, Y, D = _workload(samples)
    x = np.ascontiguousarray(Y[0].real.ravel())
    g = np.full_like(x, float(np.mean(plan.gamma)))
    d = np.full_like(x, float(np.mean(plan.delta)))

    timings = {}
    backends = ["numpy"] + (["numba"] if kernels.HAS_NUMBA else [])
    previous = kernels.active_backend()
    try:
        for backend in backends:
            kernels.set_backend(backend)
            kernels.warmup()
            chain_t = _time(lambda: kernels.apply_chain(
                H, plan.AH, plan.V, plan.gamma, plan.delta, Y, D,
                plan.mode, True), repeats)
            quant_t = _time(lambda: kernels.quantize_midrise(x, g, d),
                            repeats)
            timings[backend] = (chain_t, quant_t)
    finally:
        kernels.set_backend(previous)

    echo(f"workload: chain of {H.shape[0]} APs x {samples} samples, "
         f"quantizer on {x.size} reals (best of {repeats})")
    echo(f"{'backend':<8} {'chain':>12} {'quantizer':>12}")
    for backend, (ct, qt) in timings.items():
        echo(f"{backend:<8} {ct * 1e3:>10.3f}ms {qt * 1e6:>10.1f}us")
    if len(timings) == 2:
        s_chain = timings["numpy"][0] / timings["numba"][0]
        s_quant = timings["numpy"][1] / timings["numba"][1]
        echo(f"numba speedup: chain {s_chain:.2f}x, quantizer {s_quant:.2f}x")
    return timings
