#!/usr/bin/env python3
"""Benchmark the jitted hot kernels against the pure-numpy fallback.

The same kernel source runs under both backends (numba strips to a plain
decorator when disabled), so this measures the JIT speedup on the two
sequential inner loops: the collision Metropolis chain and the event-driven
collision walk.

Usage: python benchmarks/bench_kernels.py [--proposals N] [--events N]
"""

import argparse
import math
import time

import numpy as np

import boltzsphere as bs
from boltzsphere import _kernels


def bench_pair_chain(kernels, n_prop, N=64, d=3, seed=0):
    rng = np.random.default_rng(seed)
    v = bs.sample_uniform_batch(bs.SphereSpec.boltzmann(d, N), 1, rng)[0].reshape(N, d)
    code, params = _kernels.density_code(bs.get_density("mixture", d))
    ii, jj = _kernels.draw_pair_indices(rng, n_prop, N)
    sig = _kernels.draw_unit_vectors(rng, n_prop, d)
    log_us = np.log(rng.random(n_prop))
    out = np.empty((64, N, d))
    t0 = time.perf_counter()
    kernels.pair_chain(v, code, params, ii, jj, sig, log_us, 0, 100, N, out, 0)
    return time.perf_counter() - t0


def bench_triple_chain(kernels, n_prop, N=64, seed=1):
    rng = np.random.default_rng(seed)
    v = bs.sample_uniform_batch(bs.SphereSpec.boltzmann(1, N), 1, rng)[0].reshape(N, 1)
    code, params = _kernels.density_code(bs.get_density("mixture", 1))
    ii, jj, kk = _kernels.draw_triple_indices(rng, n_prop, N)
    ang = rng.random(n_prop) * 2.0 * math.pi
    log_us = np.log(rng.random(n_prop))
    out = np.empty((64, N, 1))
    t0 = time.perf_counter()
    kernels.triple_chain(v, code, params, ii, jj, kk, ang, log_us, 0, 100, N, out, 0)
    return time.perf_counter() - t0


def bench_dsmc(kernels, n_events, N=256, d=3, seed=2):
    rng = np.random.default_rng(seed)
    v = bs.sample_uniform_batch(bs.SphereSpec.boltzmann(d, N), 1, rng)[0].reshape(N, d)
    dts = -np.log(rng.random(n_events))
    ii, jj = _kernels.draw_pair_indices(rng, n_events, N)
    sig = _kernels.draw_unit_vectors(rng, n_events, d)
    t0 = time.perf_counter()
    kernels.dsmc_advance(v, 0.0, math.inf, 1.0, dts, ii, jj, sig)
    return time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--proposals", type=int, default=400_000)
    ap.add_argument("--events", type=int, default=400_000)
    args = ap.parse_args()

    if not _kernels.HAVE_NUMBA:
        print("numba not installed; only the numpy path is available")
        return

    jit = _kernels.build(use_jit=True)
    plain = _kernels.build(use_jit=False)

    # trigger compilation outside the timed region
    bench_pair_chain(jit, 1000)
    bench_triple_chain(jit, 1000)
    bench_dsmc(jit, 1000)

    rows = [
        ("pair chain (d=3, N=64)", bench_pair_chain(jit, args.proposals),
         bench_pair_chain(plain, args.proposals // 20) * 20),
        ("triple chain (d=1, N=64)", bench_triple_chain(jit, args.proposals),
         bench_triple_chain(plain, args.proposals // 20) * 20),
        ("collision walk (d=3, N=256)", bench_dsmc(jit, args.events),
         bench_dsmc(plain, args.events // 20) * 20),
    ]
    print(f"{'kernel':32s} {'numba':>10s} {'numpy':>10s} {'speedup':>9s}")
    for name, tj, tp in rows:
        print(f"{name:32s} {tj:9.3f}s {tp:9.3f}s {tp / tj:8.1f}x")
    print("(numpy timings extrapolated from 1/20 of the workload)")


if __name__ == "__main__":
    main()
