"""Time evolution of shell occupations under laser cycles and collisions.

Two integrators share one rate model: exact Gillespie sampling of integer
shell counts (``run_kmc``) and the deterministic rate equations for real
counts (``run_meanfield``). A cooling cycle runs its pulses back to back;
laser rates act only inside their pulse, collisions act throughout.

The Bose factor of the destination shell is applied exactly at every event
(or right-hand-side call). The remaining occupation dependence, through the
collective widths R, is refreshed at the configured cadence.
"""
from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels
from .collisions import CollisionKernel, collision_flux
from .rates import CoolingCycle, OccupationState, RateEngine, get_engine
from .trap import EmissionPattern, ShellBasis

__all__ = ["SimConfig", "TrajectoryRecord", "KMCError", "IntegrationError",
           "run_kmc", "run_meanfield", "run_ensemble", "relax_collisions",
           "condensate_series", "ensemble_mean"]

log = logging.getLogger(__name__)

_BUF = 1 << 15


class KMCError(RuntimeError):
    pass


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SimConfig:
    cycle: CoolingCycle | None
    basis: ShellBasis
    kernel: CollisionKernel | None = None
    mode: str = "kmc"
    cycles_max: int = 100
    record_every: int = 1
    seed: int = 0
    rate_refresh: str = "per-cycle"
    width_rtol: float = 0.0   # skip a refresh while widths moved less than this
    pattern: EmissionPattern = EmissionPattern()
    omega: float = 2 * np.pi * 1e3
    collisions_concurrent: bool = True
    collision_window: float | None = None  # used when not concurrent
    dark_ground: bool = False
    stop_fraction: float | None = None  # end the run once N0/N reaches this

    def __post_init__(self):
        if self.cycles_max < 1:
            raise ValueError("cycles_max must be >= 1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.mode not in ("kmc", "meanfield"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.rate_refresh not in ("per-pulse", "per-cycle"):
            raise ValueError(f"unknown rate_refresh {self.rate_refresh!r}")
        if self.width_rtol < 0:
            raise ValueError("width_rtol must be >= 0")

    @property
    def cycle_duration(self) -> float:
        d = self.cycle.duration if self.cycle is not None else 0.0
        if self.kernel is not None and (not self.collisions_concurrent or self.cycle is None):
            d += self._window()
        return d

    def _window(self):
        if self.collision_window is not None:
            return self.collision_window
        return self.cycle.duration if self.cycle is not None else 1.0

    def digest(self) -> str:
        parts = {
            "mode": self.mode, "cycles_max": self.cycles_max, "record_every": self.record_every,
            "seed": self.seed, "rate_refresh": self.rate_refresh, "width_rtol": self.width_rtol,
            "pattern": repr(self.pattern), "omega": self.omega,
            "basis": [self.basis.dimension, self.basis.n_shells, self.basis.eta],
            "cycle": repr(self.cycle), "concurrent": self.collisions_concurrent,
            "window": self.collision_window, "dark_ground": self.dark_ground,
            "stop": self.stop_fraction,
            "kernel": None if self.kernel is None else [
                self.kernel.strength, hashlib.sha256(self.kernel.weight.tobytes()).hexdigest()],
        }
        return hashlib.sha256(json.dumps(parts, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    cycle: np.ndarray
    t: np.ndarray
    t_seconds: np.ndarray
    counts: np.ndarray  # [snapshot, shell]
    config_hash: str
    seed: int
    refreshes: int = 0
    max_leak: float = 0.0
    clamped: float = 0.0

    @property
    def N(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def energy(self) -> np.ndarray:
        return self.counts @ np.arange(self.counts.shape[1])

    @property
    def condensate_fraction(self) -> np.ndarray:
        return self.counts[:, 0] / self.N

    @property
    def final(self) -> OccupationState:
        return OccupationState(self.counts[-1].copy())


def condensate_series(record: TrajectoryRecord):
    return record.cycle.copy(), record.condensate_fraction


class _LaserTables:
    """Bose-factor-free pulse amplitudes, refreshed when the widths move."""

    def __init__(self, engine: RateEngine, cycle: CoolingCycle, rtol: float, dark: bool):
        self.engine = engine
        self.pulses = cycle.pulses
        self.rtol = rtol
        self.dark = dark
        self.R = [None] * len(self.pulses)
        self.tables = [None] * len(self.pulses)
        self.refreshes = 0
        self.max_leak = 0.0

    def refresh(self, counts, which=None):
        occ = OccupationState(np.asarray(counts, float))
        width = self.engine.widths(occ)
        ok = np.isfinite(width.R)
        for i in (range(len(self.pulses)) if which is None else [which]):
            old = self.R[i]
            if old is not None and self.rtol > 0 and \
                    np.max(np.abs(width.R[ok] - old[ok]) / old[ok]) <= self.rtol:
                continue
            self.R[i] = width.R
            amp, _, leak = self.engine.amplitudes(self.pulses[i], occ, width)
            amp = amp.copy()
            np.fill_diagonal(amp, 0.0)
            if self.dark:
                amp[:, 0] = 0.0
            self.tables[i] = amp
            self.max_leak = max(self.max_leak, float(leak.max()))
            self.refreshes += 1


def _schedule(config: SimConfig):
    """(kind, index, duration) segments of one cycle."""
    seg = []
    if config.cycle is not None:
        seg += [("pulse", i, p.duration) for i, p in enumerate(config.cycle.pulses)]
    if config.kernel is not None and (not config.collisions_concurrent or config.cycle is None):
        seg.append(("coll", -1, config._window()))
    if not seg:
        raise ValueError("nothing to simulate: no cycle and no collision kernel")
    return seg


def _setup(config: SimConfig):
    eng = None
    tables = None
    if config.cycle is not None:
        eng = get_engine(config.basis, config.pattern)
        tables = _LaserTables(eng, config.cycle, config.width_rtol, config.dark_ground)
    if config.kernel is not None:
        chans = np.ascontiguousarray(config.kernel.channels)
        cw = np.ascontiguousarray(config.kernel.weight)
    else:
        chans = np.zeros((0, 4), dtype=np.int64)
        cw = np.zeros(0)
    return tables, chans, _kernels.channel_index(chans, config.basis.n_shells), cw


def run_kmc(initial: OccupationState, config: SimConfig) -> TrajectoryRecord:
    counts = np.array(initial.counts, dtype=np.int64)
    if not np.array_equal(counts, initial.counts):
        raise ValueError("KMC needs integer occupations")
    ns = config.basis.n_shells
    if len(counts) != ns:
        raise ValueError("occupation length does not match the basis")
    g = config.basis.degeneracy.astype(float)
    tables, chans, ci, cw = _setup(config)
    rng = np.random.default_rng(config.seed)
    uni = rng.random(_BUF)
    pos = 0
    zero = np.zeros((ns, ns))
    t = 0.0
    rec_c, rec_t, rec_n = [0], [0.0], [counts.copy()]
    sched = _schedule(config)
    for cyc in range(1, config.cycles_max + 1):
        if tables is not None and config.rate_refresh == "per-cycle":
            tables.refresh(counts)
        for kind, i, dur in sched:
            if kind == "pulse" and config.rate_refresh == "per-pulse":
                tables.refresh(counts, i)
            amp = tables.tables[i] if kind == "pulse" else zero
            laser_on = kind == "pulse"
            coll = config.collisions_concurrent or kind == "coll"
            ch = chans if coll else chans[:0]
            cx = ci if coll else ci[:0]
            w = cw if coll else cw[:0]
            t_end = t + dur
            while True:
                t, pos, _, status = _kernels.kmc_advance(counts, g, t, t_end, amp, laser_on,
                                                         ch, cx, w, uni, pos)
                if status == 0:
                    break
                if status == 1:
                    uni = np.concatenate([uni[pos:], rng.random(_BUF)])
                    pos = 0
                else:
                    raise KMCError(f"non-finite event rate at t={t:.6g}, counts={counts.tolist()}")
            t = t_end
        done = config.stop_fraction is not None and \
            counts[0] >= config.stop_fraction * counts.sum()
        if cyc % config.record_every == 0 or done:
            rec_c.append(cyc)
            rec_t.append(t)
            rec_n.append(counts.copy())
        if done:
            break
    return _record(config, rec_c, rec_t, rec_n, tables)


def _record(config, rec_c, rec_t, rec_n, tables, clamped=0.0):
    t = np.array(rec_t)
    return TrajectoryRecord(np.array(rec_c), t, t / config.omega, np.array(rec_n),
                            config.digest(), config.seed,
                            0 if tables is None else tables.refreshes,
                            0.0 if tables is None else tables.max_leak, clamped)


def run_meanfield(initial: OccupationState, config: SimConfig, rtol: float = 1e-8,
                  method: str = "DOP853") -> TrajectoryRecord:
    counts = np.asarray(initial.counts, float).copy()
    g = config.basis.degeneracy.astype(float)
    tables = _setup(config)[0]
    kern = config.kernel
    N = counts.sum()
    atol = 1e-10 * max(N, 1.0)
    t = 0.0
    clamped = 0.0
    rec_c, rec_t, rec_n = [0], [0.0], [counts.copy()]
    sched = _schedule(config)

    def rhs_factory(amp, coll):
        def rhs(_, y):
            nonlocal clamped
            if y.min() < 0:
                clamped = max(clamped, -float(y.min()))
            y = np.maximum(y, 0.0)
            out = np.zeros_like(y)
            if amp is not None:
                G = amp * (y / g + 1.0)[:, None]
                out += G @ y - y * G.sum(axis=0)
            if coll:
                out += collision_flux(y, kern)
            return out
        return rhs

    for cyc in range(1, config.cycles_max + 1):
        if tables is not None and config.rate_refresh == "per-cycle":
            tables.refresh(counts)
        for kind, i, dur in sched:
            if kind == "pulse" and config.rate_refresh == "per-pulse":
                tables.refresh(counts, i)
            amp = tables.tables[i] if kind == "pulse" else None
            coll = kern is not None and (config.collisions_concurrent or kind == "coll")
            if amp is None and not coll:
                t += dur
                continue
            sol = solve_ivp(rhs_factory(amp, coll), (t, t + dur), counts, method=method,
                            rtol=rtol, atol=atol)
            if sol.status != 0:
                raise IntegrationError(f"integration failed at t={sol.t[-1]:.6g}: {sol.message}")
            counts = np.maximum(sol.y[:, -1], 0.0)
            counts *= N / counts.sum()
            t += dur
        done = config.stop_fraction is not None and \
            counts[0] >= config.stop_fraction * counts.sum()
        if cyc % config.record_every == 0 or done:
            rec_c.append(cyc)
            rec_t.append(t)
            rec_n.append(counts.copy())
        if done:
            break
    if clamped > 1e-9 * max(N, 1.0):
        log.warning("mean-field populations clamped at zero (largest excursion %.3g)", clamped)
    return _record(config, rec_c, rec_t, rec_n, tables, clamped)


def run_ensemble(initials, config: SimConfig, seeds, threads: int = 1):
    """Independent trajectories, one per seed; ``initials`` is a state or a list."""
    from dataclasses import replace
    seeds = list(seeds)
    if isinstance(initials, OccupationState):
        initials = [initials] * len(seeds)
    runner = run_kmc if config.mode == "kmc" else run_meanfield

    def one(k):
        return runner(initials[k], replace(config, seed=int(seeds[k])))
    if threads <= 1:
        return [one(k) for k in range(len(seeds))]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(one, range(len(seeds))))


def ensemble_mean(records) -> np.ndarray:
    return np.mean([r.counts for r in records], axis=0)


def relax_collisions(occ: OccupationState, kernel: CollisionKernel, duration: float,
                     seed: int = 0, basis: ShellBasis | None = None) -> OccupationState:
    """Collision-only KMC for a fixed time (trap units)."""
    counts = np.array(occ.counts, dtype=np.int64)
    g = kernel.degeneracy.astype(float)
    ns = len(g)
    rng = np.random.default_rng(seed)
    uni = rng.random(_BUF)
    pos = 0
    t = 0.0
    zero = np.zeros((ns, ns))
    ci = _kernels.channel_index(kernel.channels, ns)
    while True:
        t, pos, _, status = _kernels.kmc_advance(counts, g, t, duration, zero, False,
                                                 kernel.channels, ci, kernel.weight, uni, pos)
        if status == 0:
            break
        if status == 1:
            uni = np.concatenate([uni[pos:], rng.random(_BUF)])
            pos = 0
        else:
            raise KMCError(f"non-finite event rate at t={t:.6g}, counts={counts.tolist()}")
    return OccupationState(counts)
