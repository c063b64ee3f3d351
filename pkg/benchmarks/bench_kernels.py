"""Time the numba loop kernels against their pure-numpy fallbacks.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N] [--mesh N]``.
Each kernel is called once before timing so compilation is excluded; the
two paths are also checked to agree before anything is timed.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from rtmodes import kernels
from rtmodes.discretize import assemble_all, build_mesh
from rtmodes.params import FluidConfig

REFERENCE = FluidConfig(2.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0)


def cases(n):
    mesh = build_mesh(1.0, n, n)
    nodes = np.ascontiguousarray(mesh.nodes)
    rho = mesh.layer_values(1.0, 2.0)
    mu = mesh.layer_values(1.0, 1.0)
    rng = np.random.default_rng(0)
    coeffs = rng.standard_normal(2 * nodes.size)
    x = np.sort(rng.uniform(-1.0, 1.0, 20_000))

    nf = 25
    xi1 = rng.integers(-4, 5, nf).astype(float)
    xi2 = rng.integers(-4, 5, nf).astype(float)
    amp = rng.standard_normal(nf) + 1j * rng.standard_normal(nf)
    w = np.array([15.0, -40.0, 45.0, -24.0, 5.0])
    c = np.arange(1.0, 6.0)
    p1, p2, p3 = (rng.uniform(0.0, 6.28, 4000), rng.uniform(0.0, 6.28, 4000), rng.uniform(-1.0, 0.0, 4000))

    small = assemble_all(build_mesh(1.0, 8, 8), REFERENCE, 1.0)
    A = np.ascontiguousarray(small.energy(0.05))
    Jm = np.ascontiguousarray(small.J.entries)
    Jinv = np.ascontiguousarray(np.linalg.inv(Jm))
    starts = np.ascontiguousarray(rng.standard_normal((Jm.shape[0], 8)))

    forms = assemble_all(mesh, REFERENCE, 1.0)
    Ab = np.ascontiguousarray(forms.energy_band(0.05))
    Jb = np.ascontiguousarray(forms.bands[2])
    x0 = np.ascontiguousarray(rng.standard_normal(Jb.shape[0]))

    return {
        "assemble": (nodes, rho, mu, 1.0, kernels.GAUSS_T, kernels.GAUSS_W),
        "hermite_eval": (nodes, coeffs, x, 2, 1),
        "poisson_sum": (xi1, xi2, amp.real.copy(), amp.imag.copy(), w, c, 0.0, p1, p2, p3, 1, 0, 2),
        "rayleigh_descent": (A, Jm, Jinv, starts, 2000, 5),
        "inverse_iteration": (Ab, Jb, -1.0, x0, 400, 1e-10),
    }


def first(out):
    return out[0] if isinstance(out, tuple) else out


def timed(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--mesh", type=int, default=128, help="elements per layer")
    args = ap.parse_args(argv)
    if not kernels.LOOP_KERNELS:
        print("JIT disabled (RTMODES_DISABLE_JIT set); only the numpy path is available")
        return 0
    print(f"{'kernel':<18} {'numba [ms]':>12} {'numpy [ms]':>12} {'speedup':>9} {'rel diff':>11}")
    for name, fargs in cases(args.mesh).items():
        jit, ref = kernels.LOOP_KERNELS[name], kernels.NUMPY_KERNELS[name]
        a, b = np.asarray(first(jit(*fargs))), np.asarray(first(ref(*fargs)))
        diff = float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))
        tj, tn = timed(jit, fargs, args.repeat), timed(ref, fargs, args.repeat)
        print(f"{name:<18} {1e3 * tj:12.3f} {1e3 * tn:12.3f} {tn / tj:9.2f} {diff:11.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
