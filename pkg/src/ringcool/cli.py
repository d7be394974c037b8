"""Command-line driver: classical/quantum runs, diode sweeps, potential dumps.

Every run writes its CSV products plus one manifest.json echoing the fully
resolved parameter set, constants, code version, seed, and the output file
inventory. Identical (config, seed) runs produce byte-identical CSVs
regardless of worker count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .classical import run_classical_ensemble
from .characterize import DIRECTIONS, best_interval, run_scatters
from .constants import CONST
from .grid import RingGrid
from .kernels import backend
from .observables import ObsConfig, run_ensemble, velocity_axis_sorted
from .params import ConfigError, ParameterSet, parse_config, parse_pairs, render_config
from .potentials import laser_profiles

WORKERS_ENV = "RINGCOOL_WORKERS"


def _fmt(x) -> str:
    return repr(float(x))


def write_csv(path: str, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(c if isinstance(c, str) else _fmt(c) for c in row) + "\n")


def _load_params(args) -> ParameterSet:
    pairs = {}
    if args.config:
        with open(args.config) as fh:
            text = fh.read()
        p = parse_config(text)
        pairs = {k: v for k, v in (
            line.split("=", 1) for line in render_config(p).splitlines())}
        pairs = {k.strip(): v.strip() for k, v in pairs.items()}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError("--set", item, "expected key=value")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip()
    if args.seed is not None:
        pairs["rng_seed"] = str(args.seed)
    return parse_pairs(pairs)


def _workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _write_manifest(outdir, p, extra, outputs, t_start):
    manifest = {
        "code_version": __version__,
        "backend": backend(),
        "mode": p.mode,
        "seed": p.rng_seed,
        "n_trajectories": p.n_trajectories,
        "parameters": {k: getattr(p, k) for k in p.__dataclass_fields__},
        "constants": {"hbar": CONST.hbar, "atomic_mass_unit": CONST.atomic_mass_unit},
        "wall_clock_s": time.time() - t_start,
        "outputs": sorted(outputs),
    }
    if p.mode == "three_level":
        manifest["notes"] = ("gamma3 and omega_Q_hat are a chosen decomposition of "
                             "W_Q_hat (only their ratio is physically pinned)")
    manifest.update(extra)
    for name in manifest["outputs"]:
        full = os.path.join(outdir, name)
        if not (os.path.exists(full) and os.path.getsize(full) > 0):
            raise RuntimeError(f"manifest lists missing or empty output {name}")
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _echo_config(outdir, p):
    path = os.path.join(outdir, "resolved_config.cfg")
    with open(path, "w") as fh:
        fh.write(render_config(p))
    return "resolved_config.cfg"


def cmd_run(args) -> int:
    p = _load_params(args)
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    t_start = time.time()
    outputs = [_echo_config(outdir, p)]
    if p.mode == "classical":
        res = run_classical_ensemble(p)
        write_csv(os.path.join(outdir, "trapping.csv"), ["t", "P_trap"],
                  zip(res.times, res.trapping_probability))
        write_csv(os.path.join(outdir, "particles.csv"),
                  ["x0", "v0", "crossings", "trap_time"],
                  ((pt.x, pt.v, float(pt.crossings),
                    pt.trap_time if pt.trapped else float("nan"))
                   for pt in res.particles))
        outputs += ["trapping.csv", "particles.csv"]
        extra = {"workers": 1}
    else:
        workers = _workers(args)
        ckpt = os.path.join(outdir, "checkpoints") if args.checkpoint else None
        cfg = ObsConfig(sample_every=max(1, int(round(args.sample_interval / p.dt))))
        res = run_ensemble(p, cfg, workers=workers, checkpoint_dir=ckpt,
                           progress=(lambda i: print(f"trajectory {i} done", flush=True))
                           if args.verbose else None)
        g = RingGrid.from_params(p)
        x = g.x
        v_sorted = velocity_axis_sorted(g, p.mass)
        write_csv(os.path.join(outdir, "trapping.csv"),
                  ["t", "P_Tx_mean", "P_Tx_err", "P_Tv_mean", "P_Tv_err"],
                  zip(res.times, res.P_Tx_mean, res.P_Tx_err, res.P_Tv_mean, res.P_Tv_err))
        nb = res.map_x.shape[1]
        xb = _bin_centers(x, nb)
        vb = _bin_centers(v_sorted, nb)
        write_csv(os.path.join(outdir, "density_map_x.csv"), ["t", "x", "p"],
                  ((t, xi, pi) for t, row in zip(res.map_times, res.map_x)
                   for xi, pi in zip(xb, row)))
        write_csv(os.path.join(outdir, "density_map_v.csv"), ["t", "v", "q"],
                  ((t, vi, qi) for t, row in zip(res.map_times, res.map_v)
                   for vi, qi in zip(vb, row)))
        lv = res.initial_x.shape[0]
        pcols = [f"p{i+1}" for i in range(lv)]
        qcols = [f"q{i+1}" for i in range(lv)]
        write_csv(os.path.join(outdir, "density_initial_x.csv"), ["x"] + pcols,
                  zip(x, *res.initial_x))
        write_csv(os.path.join(outdir, "density_final_x.csv"), ["x"] + pcols,
                  zip(x, *res.final_x))
        write_csv(os.path.join(outdir, "density_initial_v.csv"), ["v"] + qcols,
                  zip(v_sorted, *res.initial_v))
        write_csv(os.path.join(outdir, "density_final_v.csv"), ["v"] + qcols,
                  zip(v_sorted, *res.final_v))
        write_csv(os.path.join(outdir, "jumps.csv"), ["traj", "t_jump", "u"],
                  ((str(i), t, u) for i, t, u in res.jumps))
        outputs += ["trapping.csv", "density_map_x.csv", "density_map_v.csv",
                    "density_initial_x.csv", "density_final_x.csv",
                    "density_initial_v.csv", "density_final_v.csv", "jumps.csv"]
        extra = {"workers": workers,
                 "final_P_Tx": res.P_Tx_mean[-1], "final_P_Tx_err": res.P_Tx_err[-1],
                 "final_P_Tv": res.P_Tv_mean[-1], "final_P_Tv_err": res.P_Tv_err[-1]}
    _write_manifest(outdir, p, extra, outputs, t_start)
    return 0


def _bin_centers(axis, bins):
    return axis.reshape(bins, -1).mean(axis=1)


def cmd_characterize(args) -> int:
    if args.v_step <= 0:
        raise ConfigError("--v-step", args.v_step, "must be positive")
    if args.v_min <= 0 or args.v_max < args.v_min:
        raise ConfigError("--v-min/--v-max", (args.v_min, args.v_max),
                          "need 0 < v_min <= v_max (speeds; both directions are run)")
    p = _load_params(args)
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    t_start = time.time()
    speeds = list(np.arange(args.v_min, args.v_max + args.v_step / 2, args.v_step))
    tasks = [(s, d) for s in speeds for d in DIRECTIONS]
    results = run_scatters(p, tasks, workers=_workers(args))
    write_csv(os.path.join(outdir, "scattering.csv"),
              ["v", "direction", "transmission", "reflection", "loss"],
              ((r.v, r.direction, r.transmission, r.reflection, r.loss)
               for r in results))
    signed, by_signed = [], []
    for (s, d), r in zip(tasks, results):
        signed.append(s if d == "left_to_right" else -s)
        by_signed.append(r)
    try:
        lo, hi = best_interval(signed, by_signed)
        rng_info = {"working_range_m_per_s": [lo, hi]}
    except ValueError as e:
        rng_info = {"working_range_m_per_s": None, "working_range_note": str(e)}
    outputs = [_echo_config(outdir, p), "scattering.csv"]
    _write_manifest(outdir, p, {"workers": _workers(args), **rng_info}, outputs, t_start)
    return 0


def cmd_dump_potentials(args) -> int:
    p = _load_params(args)
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    t_start = time.time()
    g = RingGrid.from_params(p)
    prof = laser_profiles(p, g)
    write_csv(os.path.join(outdir, "potentials.csv"),
              ["x", "W1", "W2", "W_T", "W_Q", "Omega_P"],
              zip(g.x, prof["W1"], prof["W2"], prof["W_T"], prof["W_Q"], prof["omega_P"]))
    outputs = [_echo_config(outdir, p), "potentials.csv"]
    _write_manifest(outdir, p, {"workers": 1}, outputs, t_start)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ringcool",
                                 description="one-way-diode cooling on a ring")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(s):
        s.add_argument("--config", help="flat key=value config file (SI units)")
        s.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--seed", type=int, help="override rng_seed")
        s.add_argument("--workers", type=int,
                       help=f"worker processes (default: ${WORKERS_ENV} or CPU count)")

    run = sub.add_parser("run", help="classical or quantum ensemble run")
    common(run)
    run.add_argument("--checkpoint", action="store_true",
                     help="store per-trajectory results for resume/reuse")
    run.add_argument("--sample-interval", type=float, default=1e-3,
                     help="observable sampling period in seconds (default 1 ms)")
    run.add_argument("--verbose", action="store_true")
    run.set_defaults(func=cmd_run)

    ch = sub.add_parser("characterize", help="diode transmission/reflection sweep")
    common(ch)
    ch.add_argument("--v-min", type=float, required=True, help="lowest speed (m/s)")
    ch.add_argument("--v-max", type=float, required=True, help="highest speed (m/s)")
    ch.add_argument("--v-step", type=float, required=True, help="speed step (m/s)")
    ch.set_defaults(func=cmd_characterize)

    dp = sub.add_parser("dump-potentials", help="write the laser profiles over the grid")
    common(dp)
    dp.set_defaults(func=cmd_dump_potentials)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
