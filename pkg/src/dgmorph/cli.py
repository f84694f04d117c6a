"""Command-line driver.

    dgmorph run CONFIG [--out DIR]
    dgmorph preset NAME [--out DIR] [--scale desk|published] [--write-config P]
    dgmorph preset --list
    dgmorph oracle stoker --hl H --hr H --t T [--samples N] [--xmin X --xmax X] [--out FILE]
    dgmorph check CONFIG

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
Environment: DGMORPH_BACKEND selects the kernel backend, DGMORPH_THREADS
caps the numba thread count.
"""

import argparse
import sys

import numpy as np

from .backend import backend_name
from .config import ConfigError, parse_config, write_config
from .fluxes import TraceSolveError
from .dispersive import DispersiveSolveError
from .mesh import MeshError
from .scenarios import run, scenario_library
from .stepper import NumericalAbort
from .stoker import stoker_exact

CONFIG_ERRORS = (ConfigError, MeshError, FileNotFoundError)
NUMERIC_ERRORS = (NumericalAbort, TraceSolveError, DispersiveSolveError)


def _progress(k, n, t):
    print(f"  step {k}/{n}  t = {t:g} s", flush=True)


def _finish(result):
    print(f"backend: {backend_name()}")
    print(f"steps: {result.steps}, clamp events: {result.clamp_events}")
    print(f"sediment invariant drift: {result.audit['sediment_drift']:.3e}")
    print(f"water+bed invariant drift: {result.audit['water_bed_drift']:.3e}")
    print(f"outputs in {result.out_dir}")


def cmd_run(args):
    cfg = parse_config(args.config)
    result = run(cfg, out_dir=args.out, progress=_progress if args.verbose else None)
    _finish(result)
    return 0


def cmd_preset(args):
    lib = scenario_library(args.scale)
    if args.list or args.name is None:
        for name in sorted(lib):
            print(name)
        return 0
    if args.name not in lib:
        raise ConfigError(
            f"unknown preset {args.name!r}; available: {', '.join(sorted(lib))}"
        )
    cfg = lib[args.name]
    if args.write_config:
        write_config(cfg, args.write_config)
        print(f"wrote {args.write_config}")
        return 0
    result = run(cfg, out_dir=args.out or f"out_{args.name}",
                 progress=_progress if args.verbose else None)
    _finish(result)
    return 0


def cmd_oracle(args):
    if args.kind != "stoker":
        raise ConfigError(f"unknown oracle {args.kind!r}")
    if args.t <= 0:
        raise ConfigError("oracle time must be positive")
    xmin = args.xmin if args.xmin is not None else -2.0 * args.t * np.sqrt(9.81 * args.hl) * 1.2
    xmax = args.xmax if args.xmax is not None else 2.0 * args.t * np.sqrt(9.81 * args.hl) * 1.2
    x = np.linspace(xmin, xmax, args.samples)
    h, u = stoker_exact(args.hl, args.hr, args.g, x / args.t)
    dest = open(args.out, "w") if args.out else sys.stdout
    try:
        dest.write("x,h,u\n")
        for row in zip(x, h, u):
            dest.write(",".join("%.17g" % v for v in row) + "\n")
    finally:
        if args.out:
            dest.close()
            print(f"wrote {args.out}")
    return 0


def cmd_check(args):
    cfg = parse_config(args.config)
    cfg.validate()
    # a dry build catches mesh and gauge placement problems early
    from .discretization import Discretization
    from .scenarios import build_mesh_from_spec

    mesh = build_mesh_from_spec(cfg.mesh)
    if cfg.gauges:
        disc = Discretization(mesh, p=1)
        pts = np.array([(g[1], g[2]) for g in cfg.gauges])
        elems, _ = disc.locate(pts)
        if np.any(elems < 0):
            bad = [cfg.gauges[i][0] for i in np.nonzero(elems < 0)[0]]
            raise ConfigError(f"gauge(s) outside the domain: {', '.join(bad)}")
    print(f"ok: {cfg.name} ({mesh.n_elements} elements, {mesh.n_edges} edges)")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="dgmorph", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    pr = sub.add_parser("run", help="execute a config file")
    pr.add_argument("config")
    pr.add_argument("--out", default=None)
    pr.add_argument("--verbose", action="store_true")
    pr.set_defaults(func=cmd_run)

    pp = sub.add_parser("preset", help="run or export a built-in benchmark")
    pp.add_argument("name", nargs="?")
    pp.add_argument("--out", default=None)
    pp.add_argument("--scale", choices=("desk", "published"), default="desk")
    pp.add_argument("--write-config", default=None)
    pp.add_argument("--list", action="store_true")
    pp.add_argument("--verbose", action="store_true")
    pp.set_defaults(func=cmd_preset)

    po = sub.add_parser("oracle", help="exact verification solutions")
    po.add_argument("kind", choices=("stoker",))
    po.add_argument("--hl", type=float, required=True)
    po.add_argument("--hr", type=float, required=True)
    po.add_argument("--t", type=float, required=True)
    po.add_argument("--g", type=float, default=9.81)
    po.add_argument("--samples", type=int, default=201)
    po.add_argument("--xmin", type=float, default=None)
    po.add_argument("--xmax", type=float, default=None)
    po.add_argument("--out", default=None)
    po.set_defaults(func=cmd_oracle)

    pc = sub.add_parser("check", help="validate a config without running")
    pc.add_argument("config")
    pc.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NUMERIC_ERRORS as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
