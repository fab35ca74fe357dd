#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

The package selects the backend at import time (KTB_NO_NUMBA=1 forces the
fallback); this script calls both implementations directly so one run
compares them side by side.

Usage: python benchmarks/accel_bench.py [--screens 128] [--iters 50]
"""

import argparse
import time

import numpy as np

from ktb import _accel
from ktb.font import FONT_ATLAS
from ktb.ttyrender import DEFAULT_PALETTE


def timeit(fn, iters):
    fn()  # warmup (and JIT compile)
    t0 = time.perf_counter()
    for _ in range(iters):
        fn()
    return (time.perf_counter() - t0) / iters * 1000.0


def bench_gather(rng, iters):
    steps = 200_000
    src = rng.integers(0, 255, size=(steps, 1920)).astype(np.uint8)
    n_eps = 200
    bounds = np.sort(rng.choice(steps - 1, n_eps - 1, replace=False) + 1)
    ep_off = np.concatenate(([0], bounds)).astype(np.int64)
    ep_len = np.diff(np.concatenate((ep_off, [steps]))).astype(np.int64)
    b, length = 64, 17
    eps = rng.integers(0, n_eps, b)
    base = ep_off[eps]
    lens = ep_len[eps]
    starts = (rng.random(b) * np.maximum(lens - length, 1)).astype(np.int64)
    out = np.empty((b, length, 1920), dtype=np.uint8)

    rows = []
    if _accel.HAS_NUMBA:
        rows.append(("gather 64x17x1920 u1", "numba", timeit(
            lambda: _accel._gather_window_2d_jit(src, base, starts, lens, out), iters)))
    rows.append(("gather 64x17x1920 u1", "numpy", timeit(
        lambda: _accel._gather_window_2d_np(src, base, starts, lens, out), iters)))
    return rows


def bench_render(rng, n_screens, iters):
    chars = rng.integers(32, 127, size=(n_screens, 24, 80)).astype(np.uint8)
    colors = rng.integers(0, 16, size=(n_screens, 24, 80)).astype(np.int8)
    cursor = np.stack([rng.integers(0, 24, n_screens),
                       rng.integers(0, 80, n_screens)], axis=1).astype(np.int64)
    palette = np.asarray(DEFAULT_PALETTE, dtype=np.float32) / np.float32(255.0)
    fg = palette.copy()
    fg[0] = palette[7]
    bg = palette[0].copy()
    out = np.empty((n_screens, 3, 144, 320), dtype=np.float32)

    rows = []
    label = f"render {n_screens}x24x80 -> 144x320"
    if _accel.HAS_NUMBA:
        rows.append((label, "numba", timeit(
            lambda: _accel._paint_screens_jit(chars, colors, cursor, FONT_ATLAS,
                                              fg, bg, True, out), iters)))
    rows.append((label, "numpy", timeit(
        lambda: _accel._paint_screens_np(chars, colors, cursor, FONT_ATLAS,
                                         fg, bg, True, out), iters)))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--screens", type=int, default=128)
    ap.add_argument("--iters", type=int, default=30)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    print(f"active backend: {_accel.backend()}")
    rows = bench_gather(rng, args.iters) + bench_render(rng, args.screens, args.iters)
    print(f"{'kernel':<32} {'impl':<6} {'ms/call':>10}")
    for kernel, impl, ms in rows:
        print(f"{kernel:<32} {impl:<6} {ms:>10.3f}")
    by_kernel = {}
    for kernel, impl, ms in rows:
        by_kernel.setdefault(kernel, {})[impl] = ms
    for kernel, impls in by_kernel.items():
        if len(impls) == 2:
            print(f"{kernel}: numba is {impls['numpy'] / impls['numba']:.1f}x "
                  f"vs numpy")


if __name__ == "__main__":
    main()
