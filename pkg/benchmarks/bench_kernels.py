"""Benchmark the numba+FFTW hot path against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py [--steps N]
The backend of the propagation kernels is process-wide, so the two paths are
timed here through their module-level entry points directly.
"""

import argparse
import time

import numpy as np

from ringcool import kernels
from ringcool.grid import RingGrid, build_initial_packet
from ringcool.params import parse_config
from ringcool.potentials import assemble_potential


def time_path(label, fn, steps):
    fn(min(steps, 8))  # warm up (jit compile, fft plans)
    t0 = time.perf_counter()
    fn(steps)
    dt = (time.perf_counter() - t0) / steps
    print(f"{label:34s} {dt * 1e6:9.1f} us/step")
    return dt


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args()

    p = parse_config("mode = two_level\nx0 = -60e-6\nv0 = 0.05\ndelta_v = 0.01\nt0 = 0")
    g = RingGrid.from_params(p)
    pot = assemble_potential(p, g)
    packet = build_initial_packet(p, g).data
    h11, h12, h22 = (np.ascontiguousarray(a) for a in pot.half)
    f11, f12, f22 = (np.ascontiguousarray(a) for a in pot.full)
    kin = np.ascontiguousarray(pot.kinetic / g.n)
    nscale = g.n * g.dx

    print(f"grid {g.n} points, dt = {pot.dt:g} s, selected backend: {kernels.backend()}")

    results = {}

    def numpy_path(steps):
        psi = packet.copy()
        done = 0
        while done < steps:
            take = min(kernels.CHUNK, steps - done)
            s, _ = kernels._advance2_numpy(psi, h11, h12, h22, f11, f12, f22,
                                           kin, 0.0, take, True, nscale)
            done += s

    results["numpy"] = time_path("pure numpy + scipy FFT", numpy_path, args.steps)

    if kernels.BACKEND == "numba":
        from ringcool._fftw import PlanSet

        psi = np.zeros((2, g.n), dtype=np.complex128)
        plans = PlanSet(psi)

        def numba_path(steps):
            psi[:] = packet
            done = 0
            while done < steps:
                take = min(kernels.CHUNK, steps - done)
                s, _ = kernels._advance2_numba(psi, h11, h12, h22, f11, f12, f22,
                                               kin, 0.0, take, True, nscale,
                                               plans.fwd, plans.bwd,
                                               plans.fwd1, plans.bwd1)
                done += s

        results["numba"] = time_path("numba kernels + planned FFTW", numba_path, args.steps)
        print(f"speedup: {results['numpy'] / results['numba']:.2f}x")
    else:
        print("numba backend unavailable (set RINGCOOL_BACKEND or install numba/fftw)")


if __name__ == "__main__":
    main()
