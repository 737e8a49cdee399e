"""Rapid-thermalization limit: temperature flow of a Bose gas under cooling.

When collisions keep the gas at a Bose-Einstein distribution, the laser only
changes its energy and the state is labelled by T alone:

    dT/dt = F(T) = (dE/dT)^-1 sum_n n [sum_m G(n<-m) N_m - sum_m G(m<-n) N_n].

Below T_c, E = 3 T^4 g_4(1) and the prefactor is T / 4E(T).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .collisions import ZETA3, ThermalState, _x0_for, bose_occupations
from .rates import CoolingCycle, OccupationState, get_engine
from .trap import EmissionPattern, ShellBasis

__all__ = ["G4", "RateSource", "thermal_state", "bed_populations", "energy_of_T",
           "denergy_dT", "temperature_flow", "integrate_flow", "find_stationary_T",
           "stationary_T_bound", "critical_T"]

G4 = 1.0823232337111382


def critical_T(N: float) -> float:
    return (N / ZETA3) ** (1.0 / 3.0)


@dataclass(frozen=True, eq=False)
class RateSource:
    """Cycle-averaged laser rates evaluated on Bose-Einstein populations.

    ``rates`` may be given instead of a cycle: a callable occ -> shell rate
    matrix G[n, m] (used for analytic or zero-rate sources).

    ``energy`` picks E(T) below T_c: "continuum" (3 T^4 g_4) or "shell", the
    exact sum over the same discrete shells the populations live on. Both
    give the same roots of F; only the speed of the flow differs.
    """
    basis: ShellBasis
    cycle: CoolingCycle | None = None
    pattern: EmissionPattern = EmissionPattern()
    dark_ground: bool = False
    rates: object = None
    energy: str = "continuum"

    def __post_init__(self):
        if self.energy not in ("continuum", "shell"):
            raise ValueError(f"unknown energy model {self.energy!r}")
        if self.cycle is None and self.rates is None:
            raise ValueError("RateSource needs a cycle or a rates callable")

    def matrix(self, occ: OccupationState) -> np.ndarray:
        if self.rates is not None:
            G = np.array(self.rates(occ), float)
        else:
            eng = get_engine(self.basis, self.pattern)
            G = np.zeros((self.basis.n_shells,) * 2)
            for p in self.cycle.pulses:
                G += eng.rates(p, occ).gamma_rate * p.duration
            G /= self.cycle.duration
        np.fill_diagonal(G, 0.0)
        if self.dark_ground:
            G[:, 0] = 0.0
        return G


def thermal_state(T: float, N: float) -> ThermalState:
    tc = critical_T(N)
    if T < tc:
        return ThermalState(T, N, N * (1 - (T / tc) ** 3), tc, 3 * T ** 4 * G4)
    return ThermalState(T, N, 0.0, tc, math.nan)


def bed_populations(state: ThermalState, basis: ShellBasis) -> OccupationState:
    """Shell populations at temperature T.

    Below T_c: g_n / (exp(n/T) - 1) for n >= 1 and N_0 = N (1 - (T/T_c)^3).
    At or above T_c the chemical potential is solved from the atom number.
    """
    T, N = state.T, state.N
    out = np.zeros(basis.n_shells)
    if T == 0:
        out[0] = N
        return OccupationState(out)
    if T < state.Tc:
        n = basis.energy[1:]
        with np.errstate(over="ignore"):
            out[1:] = basis.degeneracy[1:] / np.expm1(n / T)
        out[0] = N * (1 - (T / state.Tc) ** 3)
        return OccupationState(out)
    x0 = _x0_for(T, N, basis)
    return OccupationState(bose_occupations(T, x0, basis))


def energy_of_T(T: float, N: float, basis: ShellBasis | None = None) -> float:
    """E(T): continuum form below T_c, shell sum above."""
    if T < critical_T(N):
        return 3 * T ** 4 * G4
    return float(basis.energy @ bed_populations(thermal_state(T, N), basis).counts)


def denergy_dT(T: float, N: float, basis: ShellBasis | None = None,
               energy: str = "continuum") -> float:
    """dE/dT: 12 T^3 g_4 below T_c (or the shell sum); above, the BED sum at fixed N."""
    if T < critical_T(N):
        if energy == "continuum":
            return 12 * T ** 3 * G4
        n, g = basis.energy[1:], basis.degeneracy[1:]
        with np.errstate(over="ignore"):
            f = 1.0 / np.expm1(n / T)
        return float(np.sum(g * n * n * f * (1 + f)) / T ** 2)
    x0 = _x0_for(T, N, basis)
    mu = -x0 * T
    n, g = basis.energy, basis.degeneracy
    f = 1.0 / np.expm1((n - mu) / T)
    w = g * f * (1 + f)
    dn_dT = w * (n - mu) / T ** 2
    dn_dmu = w / T
    dmu = -dn_dT.sum() / dn_dmu.sum()
    return float(n @ (dn_dT + dn_dmu * dmu))


def energy_flux(occ: OccupationState, G: np.ndarray) -> float:
    n = np.arange(len(occ.counts))
    return float(((n[:, None] - n[None, :]) * G * occ.counts[None, :]).sum())


def temperature_flow(T: float, source: RateSource, N: float) -> float:
    if T < 0:
        raise ValueError("T must be non-negative")
    st = thermal_state(T, N)
    occ = bed_populations(st, source.basis)
    flux = energy_flux(occ, source.matrix(occ))
    # deep below the first excitation the shell populations underflow and the
    # state is T = 0 to double precision
    de = denergy_dT(T, N, source.basis, source.energy) if T > 0 else 0.0
    if de == 0:
        if flux == 0:
            return 0.0
        return math.copysign(math.inf, flux)
    return flux / de


def integrate_flow(T0: float, source: RateSource, N: float, horizon: float,
                   rtol: float = 1e-8, atol: float = 1e-12, n_out: int = 200,
                   T_floor: float | None = None):
    """dT/dt = F(T) from T0 over ``horizon`` (trap units).

    Stops early once |F| < 1e-12, or once T falls below ``T_floor`` when
    given. Returns (t, T) arrays.
    """
    cache = {}

    def flow(T):
        # the settle event re-evaluates F at points the solver already visited
        T = max(float(T), 0.0)
        if T not in cache:
            cache[T] = temperature_flow(T, source, N)
        return cache[T]

    def rhs(_, y):
        return [flow(y[0])]

    def settled(_, y):
        return abs(flow(y[0])) - 1e-12
    settled.terminal = True

    def floor(_, y):
        return y[0] - T_floor
    floor.terminal = True

    events = [settled] if T_floor is None else [settled, floor]
    sol = solve_ivp(rhs, (0.0, horizon), [T0], method="LSODA", rtol=rtol, atol=atol,
                    events=events, t_eval=np.linspace(0, horizon, n_out))
    if sol.status < 0:
        raise RuntimeError(f"temperature flow integration failed: {sol.message}")
    t, T = sol.t, sol.y[0]
    hit = [(te[0], ye[0][0]) for te, ye in zip(sol.t_events, sol.y_events) if te.size]
    if hit:
        te, Te = min(hit)
        t = np.append(t[t < te], te)
        T = np.append(T[: len(t) - 1], Te)
    return t, np.maximum(T, 0.0)


def find_stationary_T(source: RateSource, N: float, n_grid: int = 12,
                      t_min_frac: float = 1e-3, t_max_frac: float = 4.0) -> float:
    """Largest root of F where it changes sign from + to -.

    Scans a log grid from t_min_frac*T_c up to T_c and returns 0 when F < 0
    on all of it. If F > 0 at T_c the scan continues above T_c up to
    t_max_frac*T_c; NaN means no stable point was found there either.
    """
    tc = critical_T(N)
    flow = lambda T: temperature_flow(T, source, N)
    grid = tc * np.logspace(math.log10(t_min_frac), 0, n_grid)
    vals = [flow(T) for T in grid]
    if vals[-1] > 0:
        hi = tc * np.logspace(0, math.log10(t_max_frac), 5)[1:]
        for T in hi:
            grid = np.append(grid, T)
            vals.append(flow(T))
            if vals[-1] <= 0:
                break
        else:
            return math.nan
    for k in range(len(grid) - 1, 0, -1):
        if vals[k - 1] > 0 >= vals[k]:
            if vals[k] == 0:
                return float(grid[k])
            return brentq(flow, grid[k - 1], grid[k], xtol=1e-13 * tc, rtol=1e-15)
    return 0.0


def stationary_T_bound(eta: float, gamma_over_omega: float, N: float | None = None,
                       form: str = "recoil") -> float:
    """Closed-form estimate of k_B T_st in units of hbar omega.

    ``form="recoil"``: (gamma/omega)^(1/3) E_R. ``form="tc"``:
    T_c eta^2 (gamma / omega N)^(1/3) with T_c = (N/g_3(1))^(1/3); the two
    differ by the factor g_3(1)^(1/3).
    """
    if gamma_over_omega < 0:
        raise ValueError("gamma must be non-negative")
    if form == "recoil":
        return gamma_over_omega ** (1 / 3) * eta ** 2
    if form == "tc":
        return critical_T(N) * eta ** 2 * (gamma_over_omega / N) ** (1 / 3)
    raise ValueError(f"unknown form {form!r}")
