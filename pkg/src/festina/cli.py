"""Command-line entry point: ``festina <subcommand> --config PATH``.

Outputs are written atomically into --out, each file starting with a comment
header (tool version, config hash, seed). CSV floats use repr, so values
round-trip exactly.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import asdict
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .config import SHIPPED, ConfigError, config_hash, dumps_config, parse_config, shipped_config

log = logging.getLogger("festina")

THREADS_ENV = "FESTINA_THREADS"


def tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:  # pragma: no cover
        return "0+unknown"


# --------------------------------------------------------------------------
# config -> objects
# --------------------------------------------------------------------------

def make_basis(cfg):
    from .trap import TrapSpec, build_shells
    t = cfg["trap"]
    return build_shells(TrapSpec(t["dimension"], t["eta"], t["n_shells"], t["omega"]))


def make_pattern(cfg):
    from .trap import EmissionPattern
    e = cfg["emission"]
    return EmissionPattern(e["kind"], tuple(e["axis"]), e["n_theta"], e["n_phi"])


def make_pulse(p, eta):
    from .rates import PulseSpec
    from .trap import BeamSet
    ax, ay, az = p["amplitudes"]
    return PulseSpec(p["s"], BeamSet.axes(eta, ax, ay, az), p["rabi"], p["gamma"],
                     p["duration"] or None)


def make_cycle(cfg, required=False):
    from .rates import CoolingCycle
    if not cfg["pulse"]:
        if required:
            raise ConfigError("needs at least one [[pulse]]", "pulse")
        return None
    eta = cfg["trap"]["eta"]
    return CoolingCycle(tuple(make_pulse(p, eta) for p in cfg["pulse"]), cfg["cycle"]["repeats"])


def make_kernel(cfg, basis):
    from .collisions import build_kernel
    c = cfg["collisions"]
    if not c["enabled"] or c["strength"] == 0:
        return None
    return build_kernel(basis, c["strength"])


def make_initial(cfg, basis, kernel=None):
    from .collisions import ThermalSample, equilibrium_bed, sample_initial
    from .rates import OccupationState
    i = cfg["initial"]
    if i["kind"] == "ground":
        return OccupationState.ground(i["N"], basis.n_shells)
    if i["kind"] == "bed":
        return equilibrium_bed(i["N"], i["N"] * i["mean_energy"], basis)[0]
    return sample_initial(ThermalSample(i["mean_energy"], i["N"], i["seed"]), basis,
                          kernel, i["relax_time"])


def make_simconfig(cfg, basis, kernel, seed):
    from .dynamics import SimConfig
    s = cfg["simulate"]
    return SimConfig(make_cycle(cfg), basis, kernel, s["mode"], s["cycles_max"], s["record_every"],
                     seed, s["rate_refresh"], s["width_rtol"], make_pattern(cfg),
                     cfg["trap"]["omega"], s["collisions_concurrent"], None, s["dark_ground"],
                     s["stop_fraction"] or None)


# --------------------------------------------------------------------------
# writers
# --------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (complex, np.complexfloating)):
        return repr(complex(x))
    return str(x)


def _header(cfg, seed):
    return (f"# festina {tool_version()}\n# config_hash: {config_hash(cfg)}\n"
            f"# seed: {seed}\n")


def write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_table(out: Path, name: str, columns, rows, cfg, seed, fmt="csv"):
    """One table per file; JSON carries the header as a leading field."""
    if fmt == "json":
        body = {"_header": {"tool": f"festina {tool_version()}", "config_hash": config_hash(cfg),
                            "seed": seed},
                "columns": list(columns),
                "rows": [[_json_val(v) for v in r] for r in rows]}
        path = out / f"{name}.json"
        write_atomic(path, json.dumps(body, indent=1) + "\n")
        return path
    lines = [",".join(columns)] + [",".join(_fmt(v) for v in r) for r in rows]
    path = out / f"{name}.csv"
    write_atomic(path, _header(cfg, seed) + "\n".join(lines) + "\n")
    return path


def _json_val(v):
    if isinstance(v, (complex, np.complexfloating)):
        return [float(v.real), float(v.imag)]
    if isinstance(v, np.generic):
        return v.item()
    return v


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_fc(cfg, args):
    from .trap import fc_table
    f = cfg["fc"]
    T = fc_table(f["kappa"], f["n_max"])
    rows = [(l, m, T[l, m].real, T[l, m].imag) for l in range(f["n_max"] + 1)
            for m in range(f["n_max"] + 1)]
    return [write_table(args.out, "fc", ("l", "m", "re", "im"), rows, cfg, args.seed, args.format)]


def cmd_rates(cfg, args):
    from .rates import get_engine
    cyc = make_cycle(cfg, required=True)
    basis = make_basis(cfg)
    occ = make_initial(cfg, basis)
    eng = get_engine(basis, make_pattern(cfg))
    rows = []
    for k, p in enumerate(cyc.pulses):
        G = eng.rates(p, occ).gamma_rate
        rows += [(k, n, m, G[n, m]) for n in range(basis.n_shells) for m in range(basis.n_shells)]
    return [write_table(args.out, "rates", ("pulse", "n", "m", "rate"), rows, cfg, args.seed,
                        args.format)]


def cmd_thermalize(cfg, args):
    from .collisions import ThermalSample, equilibrium_bed, sample_initial
    from .dynamics import relax_collisions
    basis = make_basis(cfg)
    kernel = make_kernel(cfg, basis)
    if kernel is None:
        raise ConfigError("thermalize needs collisions enabled", "collisions.enabled")
    i, th = cfg["initial"], cfg["thermalize"]
    seed = args.seed
    start = [sample_initial(ThermalSample(i["mean_energy"], i["N"], seed + 2 * k), basis)
             for k in range(th["n_traj"])]
    end = [relax_collisions(s, kernel, th["duration"], seed + 2 * k + 1)
           for k, s in enumerate(start)]
    mean0 = np.mean([s.counts for s in start], axis=0)
    mean1 = np.mean([s.counts for s in end], axis=0)
    E = float(np.mean([s.energy for s in start]))
    bed, st = equilibrium_bed(i["N"], E, basis)
    rows = [(n, mean0[n], mean1[n], bed.counts[n]) for n in range(basis.n_shells)]
    return [write_table(args.out, "thermalize", ("shell", "initial", "kmc_mean", "bed"), rows,
                        cfg, seed, args.format)]


def _traj_rows(rec):
    return [(int(c), t, ts, float(e), *[int(x) if float(x).is_integer() else float(x) for x in n])
            for c, t, ts, e, n in zip(rec.cycle, rec.t, rec.t_seconds, rec.energy, rec.counts)]


def cmd_simulate(cfg, args):
    from dataclasses import replace

    from .dynamics import ensemble_mean, run_ensemble
    basis = make_basis(cfg)
    kernel = make_kernel(cfg, basis)
    s = cfg["simulate"]
    initial = make_initial(cfg, basis, kernel)
    sim = make_simconfig(cfg, basis, kernel, args.seed)
    cols = ("cycle", "t_trap_units", "t_seconds", "E") + tuple(f"N{n}" for n in range(basis.n_shells))
    seeds = [args.seed + k for k in range(s["n_seeds"])]
    runs = [("", sim)]
    if s["compare_ideal"] and kernel is not None:
        runs.append(("_ideal", replace(sim, kernel=None)))
    paths = []
    for tag, conf in runs:
        recs = run_ensemble(initial, conf, seeds, args.threads)
        for sd, rec in zip(seeds, recs):
            name = f"trajectory{tag}" if len(seeds) == 1 else f"trajectory{tag}_seed{sd}"
            paths.append(write_table(args.out, name, cols, _traj_rows(rec), cfg, sd, args.format))
        if len(seeds) > 1 and len({len(r.cycle) for r in recs}) == 1:
            m = ensemble_mean(recs)
            r0 = recs[0]
            rows = [(int(c), t, ts, float(m[k] @ np.arange(basis.n_shells)), *m[k])
                    for k, (c, t, ts) in enumerate(zip(r0.cycle, r0.t, r0.t_seconds))]
            paths.append(write_table(args.out, f"ensemble_mean{tag}", cols, rows, cfg, args.seed,
                                     args.format))
    return paths


def cmd_thermo(cfg, args):
    from .thermo import (RateSource, critical_T, find_stationary_T, integrate_flow,
                         stationary_T_bound)
    basis = make_basis(cfg)
    th = cfg["thermo"]
    cyc = make_cycle(cfg, required=True)
    src = RateSource(basis, cyc, make_pattern(cfg), th["dark_ground"], energy=th["energy"])
    p0 = cyc.pulses[0]
    eta = cfg["trap"]["eta"]
    rows = []
    for N in th["N"]:
        T = find_stationary_T(src, N, th["n_grid"])
        tc = critical_T(N)
        rows.append((N, T, tc, T / tc, stationary_T_bound(eta, p0.gamma),
                     stationary_T_bound(eta, p0.gamma, N, "tc")))
    paths = [write_table(args.out, "stationary_T",
                         ("N", "T_st", "T_c", "T_st_over_T_c", "bound_recoil", "bound_tc"),
                         rows, cfg, args.seed, args.format)]
    N = th["flow_N"]
    t, T = integrate_flow(th["T0_frac"] * critical_T(N), src, N, th["horizon"], n_out=50)
    paths.append(write_table(args.out, "flow", ("t", "T"), list(zip(t, T)), cfg, args.seed,
                             args.format))
    return paths


def cmd_bdg(cfg, args):
    from .bogoliubov import solve_bdg, solve_condensate, tf_mu
    b = cfg["bdg"]
    nm = b["n_modes"]
    rows = []
    for a in b["a"]:
        prof = solve_condensate(b["N0"], a, b["n_basis"])
        modes = solve_bdg(prof, nm)
        gn = prof.g * b["N0"]
        rows.append((b["N0"], a, gn, prof.mu, tf_mu(prof.g, b["N0"]) if gn > 0 else math.nan,
                     float(np.abs(modes.norms() - 1).max()), *modes.omega_tilde))
    cols = ("N0", "a", "gN0", "mu", "mu_tf", "norm_err") + tuple(f"omega{k}" for k in range(nm))
    return [write_table(args.out, "bdg_modes", cols, rows, cfg, args.seed, args.format)]


def cmd_estimate(cfg, args):
    from scipy import constants as C

    from .estimator import AtomSpecies, table1
    e = cfg["estimate"]
    sp = AtomSpecies(e["species"], e["mass_u"] * C.atomic_mass, e["lambda_L"], e["a_sc"])
    rep = table1(sp, e["cap_density"], tuple(e["etas"]), e["p_tot"], e["gamma_over_omega"])
    print(rep.table())
    body = {"_header": {"tool": f"festina {tool_version()}", "config_hash": config_hash(cfg),
                        "seed": args.seed}, **rep.as_dict()}
    path = args.out / "table1.json"
    write_atomic(path, json.dumps(body, indent=1) + "\n")
    paths = [path]
    if args.format == "csv":
        cols = tuple(asdict(rep.rows[0]).keys())
        paths.append(write_table(args.out, "table1", cols,
                                 [tuple(asdict(r).values()) for r in rep.rows], cfg, args.seed))
    return paths


COMMANDS = {"fc": cmd_fc, "rates": cmd_rates, "thermalize": cmd_thermalize,
            "simulate": cmd_simulate, "thermo": cmd_thermo, "bdg": cmd_bdg,
            "estimate": cmd_estimate}


def build_parser():
    p = argparse.ArgumentParser(prog="festina", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True,
                       help=f"TOML file, or a shipped name: {', '.join(SHIPPED)}")
        s.add_argument("--seed", type=int, default=None, help="overrides run.seed")
        s.add_argument("--out", type=Path, default=None, help="output directory")
        s.add_argument("--threads", type=int, default=None)
        s.add_argument("--format", choices=("csv", "json"), default=None)
        s.add_argument("--dump-config", action="store_true",
                       help="also write the resolved config next to the outputs")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        path = Path(args.config)
        if not path.exists() and args.config in SHIPPED:
            path = shipped_config(args.config)
        cfg = parse_config(path)
        r = cfg["run"]
        if args.seed is not None:
            r["seed"] = args.seed
        if args.seed is not None and args.seed < 0:
            raise ConfigError("seed must be non-negative", "--seed")
        args.seed = r["seed"]
        args.out = args.out or Path(r["out"])
        args.format = args.format or r["format"]
        threads = args.threads or r["threads"] or int(os.environ.get(THREADS_ENV, "1"))
        args.threads = max(1, threads)
        paths = COMMANDS[args.command](cfg, args)
        if args.dump_config:
            paths.append(args.out / "config.resolved.toml")
            write_atomic(paths[-1], _header(cfg, args.seed) + dumps_config(cfg))
    except ConfigError as e:
        print(f"festina: config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # any module failure -> nonzero exit
        log.debug("failure", exc_info=True)
        print(f"festina: {args.command} failed: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


def main():  # pragma: no cover
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
