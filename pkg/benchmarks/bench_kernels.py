"""Compiled versus numpy kernels, plus one end-to-end ensemble run per backend.

    python3 benchmarks/bench_kernels.py [--packets 4096] [--repeat 20]

Prints the median wall time per call and the speed-up, and checks that the
two backends agree to 1e-12.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from spinmem import kernels
from spinmem.ensemble import EnsembleSpec, ensemble_signal
from spinmem.protocols import MemoryOptions, memory_write_read
from spinmem.pulses import PulseDurations
from spinmem.spin import SystemParams, thermal_pseudopure_state


def _median_time(fn, repeat: int) -> float:
    fn()  # warm up
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times)


def _stack(n: int, rng) -> np.ndarray:
    rho = np.repeat(thermal_pseudopure_state()[None], n, axis=0).astype(complex)
    noise = rng.normal(size=(n, 4, 4)) + 1j * rng.normal(size=(n, 4, 4))
    return np.ascontiguousarray(rho + 1e-3 * (noise + np.conj(np.swapaxes(noise, 1, 2))))


def bench(n: int, repeat: int) -> list[tuple[str, str, float]]:
    rng = np.random.default_rng(7)
    params = SystemParams.si_p()
    ph_e = rng.normal(0, 1, n)
    ph_n = rng.normal(0, 0.1, n)
    u = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))[0]
    us = np.ascontiguousarray(np.linalg.qr(rng.normal(size=(n, 4, 4)) + 1j * rng.normal(size=(n, 4, 4)))[0])
    eq = np.real(np.diag(thermal_pseudopure_state())).copy()
    rows = []
    results = {}
    for name, mod in kernels.BACKENDS.items():
        base = _stack(n, np.random.default_rng(1))
        work = base.copy()

        def fe():
            work[...] = base
            mod.free_evolve(work, ph_e, ph_n, 1e-6, 3e-6, params.omega_a, 50.0, 50.0, 2.0, eq)

        rows.append((name, "free_evolve", _median_time(fe, repeat)))
        fe()
        out_fe = work.copy()

        def cj():
            work[...] = base
            mod.conjugate(work, u)

        rows.append((name, "conjugate shared", _median_time(cj, repeat)))

        def cjs():
            work[...] = base
            mod.conjugate(work, us)

        rows.append((name, "conjugate per-packet", _median_time(cjs, repeat)))
        cjs()
        results[name] = (out_fe, work.copy())
    if len(results) == 2:
        a, b = results["python"], results["cython"]
        err = max(np.abs(a[0] - b[0]).max(), np.abs(a[1] - b[1]).max())
        print(f"max backend difference: {err:.2e}")
        assert err < 1e-12
    return rows


def end_to_end(n: int) -> list[tuple[str, float]]:
    seq = memory_write_read(0.0, opts=MemoryOptions(durations=PulseDurations()))
    spec = EnsembleSpec(n_packets=n, seed=3)
    params = SystemParams.si_p(relaxation_rate=10.0)
    out = []
    saved = (kernels.free_evolve, kernels.conjugate)
    try:
        for name, mod in kernels.BACKENDS.items():
            kernels.free_evolve, kernels.conjugate = mod.free_evolve, mod.conjugate
            t = time.perf_counter()
            ensemble_signal(seq, spec, params)
            out.append((name, time.perf_counter() - t))
    finally:
        kernels.free_evolve, kernels.conjugate = saved
    return out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--packets", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    print(f"backends available: {', '.join(kernels.BACKENDS)} (default {kernels.BACKEND})")
    rows = bench(args.packets, args.repeat)
    by = {(b, k): t for b, k, t in rows}
    print(f"{'kernel':24s}{'python (ms)':>14s}{'cython (ms)':>14s}{'speed-up':>10s}")
    for k in dict.fromkeys(k for _, k, _ in rows):
        py = by[("python", k)] * 1e3
        cy = by.get(("cython", k))
        if cy is None:
            print(f"{k:24s}{py:14.3f}{'-':>14s}{'-':>10s}")
        else:
            print(f"{k:24s}{py:14.3f}{cy * 1e3:14.3f}{py / (cy * 1e3):9.1f}x")
    print("end-to-end memory sequence, 1000 packets:")
    for name, t in end_to_end(1000):
        print(f"  {name:8s}{t:8.3f} s")


if __name__ == "__main__":
    main()
