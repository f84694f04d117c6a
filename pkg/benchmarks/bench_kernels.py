#!/usr/bin/env python3
"""Backend benchmark: numba @njit kernels vs the pure-numpy fallback.

Times the hot paths (full hyperbolic RHS, raw edge-flux kernel, limiter,
wet/dry repair) on a mid-size strip mesh with a dam-break state, once per
backend, and prints a comparison table. Run:

    python3 benchmarks/bench_kernels.py [--nx 400] [--ny 20] [--repeat 30]
"""

import argparse
import time

import numpy as np

from dgmorph import backend
from dgmorph.discretization import IH, Discretization
from dgmorph.mesh import build_strip_mesh
from dgmorph.physics import SedimentParams
from dgmorph.stepper import SHSMStepper, StepControls


def build_state(nx, ny):
    disc = Discretization(build_strip_mesh(nx, ny, (-5000, 5000), (0, 10.0 * ny)), p=1)
    params = SedimentParams(n_manning=0.03, suspended=True, grass_a=2e-4)
    stp = SHSMStepper(disc, params, StepControls(dt=0.05, scheme="euler", limiter_M=0.0))
    f = np.zeros((disc.mesh.n_elements, 5, disc.nmodes))
    x = disc.qpts_phys[:, :, 0]
    f[:, IH] = disc.project_values(np.where(x <= 0.0, 40.0, 2.0))
    f = stp.initialize(f)
    for _ in range(5):  # develop a moving front so every branch is live
        f = stp.s1_step(f)
    return disc, stp, f


def time_it(fn, repeat):
    fn()  # warm (jit compile on the numba path)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench(backend_name, nx, ny, repeat):
    backend._ACTIVE = None
    backend._ACTIVE_NAME = None
    ker = backend.get_kernels(backend_name)
    disc, stp, f = build_state(nx, ny)
    stp.kernels = ker

    rows = {}
    rows["full rhs"] = time_it(lambda: stp.rhs(f), repeat)
    rows["limiter"] = time_it(lambda: stp.apply_limiter(f), repeat)
    rows["wet/dry repair"] = time_it(lambda: stp.wet_dry_correction(f.copy()), repeat)

    UL, UR = disc.eval_traces(f)
    UL = np.ascontiguousarray(UL)
    UR = np.ascontiguousarray(UR)
    kind = stp._edge_kind_and_states(UL, UR)
    par = stp.params
    rows["hll edge kernel"] = time_it(
        lambda: ker.hll_edge_flux(UL, UR, disc.mesh.edge_normal, kind, par.g,
                                  par.grass_a, par.m_exp, 1e-6, par.u_max),
        repeat,
    )
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--nx", type=int, default=400)
    ap.add_argument("--ny", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=30)
    args = ap.parse_args(argv)

    results = {}
    for name in ("numpy", "numba"):
        try:
            results[name] = bench(name, args.nx, args.ny, args.repeat)
        except ImportError:
            print(f"backend {name} unavailable, skipping")
    if not results:
        return 1

    nel = 2 * args.nx * args.ny
    print(f"\nmesh: {args.nx} x {args.ny} cells ({nel} elements), {args.repeat} reps")
    print(f"{'kernel':<18}" + "".join(f"{n:>12}" for n in results) + "   speedup")
    for key in next(iter(results.values())):
        line = f"{key:<18}"
        vals = []
        for n in results:
            v = results[n][key]
            vals.append(v)
            line += f"{v * 1e3:>10.2f}ms"
        if len(vals) == 2 and vals[1] > 0:
            line += f"   {vals[0] / vals[1]:>6.2f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
