#!/usr/bin/env python3
"""Benchmark of the hot kernels: numba @njit path vs pure-numpy fallback.

Run directly (after `pip install -e .`):

    python3 benchmarks/kernel_bench.py [--size {small,production}]

The same comparison can be forced package-wide with GYROLAB_DISABLE_NUMBA=1.
"""

import argparse
import time

import numpy as np

from gyrolab import _accel
from gyrolab._kernels import (assemble_band, band_apply, cic_deposit,
                              density_modes_from_u, radial_support,
                              u_modes_planes)


def timeit(fn, repeat):
    fn()  # warm-up / JIT compile
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def build_case(n1, m1, nr, K, bw):
    rng = np.random.default_rng(0)
    G = rng.normal(size=(n1, m1, nr)) * np.exp(-np.linspace(0, 8, nr))[None, None, :]
    supp = radial_support(G)
    sp = np.exp(1j * rng.integers(0, 4, size=(n1, m1)) * np.pi / 2)
    Pw = rng.normal(size=(bw + 1, nr)) + 1j * rng.normal(size=(bw + 1, nr))
    orb = rng.normal(size=(n1 * m1, K)) + 1j * rng.normal(size=(n1 * m1, K))
    orb /= np.linalg.norm(orb, axis=0, keepdims=True)
    occ = rng.random(K)
    return G, supp, sp, Pw, orb, occ


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", choices=["small", "production"], default="small")
    args = ap.parse_args()

    if args.size == "small":
        n1, m1, nr, K, bw, nmark, ncell, rep = 5, 40, 160, 5, 12, 20000, 128, 20
    else:
        n1, m1, nr, K, bw, nmark, ncell, rep = 9, 200, 360, 41, 21, 40000, 256, 5

    G, supp, sp, Pw, orb, occ = build_case(n1, m1, nr, K, bw)
    dmax = bw + n1 - 1
    banded = assemble_band(G, supp, sp, Pw, bw, dmax)
    diag = np.linspace(1.0, 2 * n1 - 1.0, n1).repeat(m1)
    Tr = np.ascontiguousarray(orb.real)
    Ti = np.ascontiguousarray(orb.imag)
    Sr = np.empty_like(Tr)
    Si = np.empty_like(Ti)
    rng = np.random.default_rng(1)
    pos = rng.uniform(-0.9, 0.9, size=(nmark, 2))
    wgt = np.full(nmark, 1.0 / nmark)

    cases = {
        "assemble_band": lambda: assemble_band(G, supp, sp, Pw, bw, dmax),
        "band_apply": lambda: band_apply(banded, bw, diag, Tr, Ti, Sr, Si),
        "u_modes+density": lambda: density_modes_from_u(
            *u_modes_planes(orb, G, supp, sp, n1 - 1)[:2], occ, bw + 1),
        "cic_deposit": lambda: cic_deposit(pos, wgt, 1.0, ncell),
    }

    print(f"{'kernel':<18} {'numba (ms)':>12} {'numpy (ms)':>12} {'speedup':>9}")
    for name, fn in cases.items():
        _accel.set_use_numba(True)
        t_nb = timeit(fn, rep) if _accel.use_numba() else float("nan")
        _accel.set_use_numba(False)
        t_np = timeit(fn, max(1, rep // 4))
        _accel.set_use_numba(True)
        ratio = t_np / t_nb if t_nb == t_nb else float("nan")
        print(f"{name:<18} {t_nb * 1e3:>12.3f} {t_np * 1e3:>12.3f} {ratio:>8.1f}x")


if __name__ == "__main__":
    main()
