"""Ergodic quantum-Boltzmann collision kernel and Bose-Einstein equilibria.

Shell-resolved two-body collisions (M, N) -> (P, Q) with M + N = P + Q.
In integer mode the event rate is

    K * N_M (N_N - d_MN) / (g_M g_N) * (g_P + N_P)(g_Q + N_Q + d_PQ) / (g_P g_Q)

with a kernel K symmetric under (M,N) <-> (P,Q). This is exactly
detailed-balanced against the microcanonical measure prod_S C(N_S+g_S-1, N_S)
(bosons spread over g_S degenerate levels), and reduces to
K nu_M nu_N (1 + nu_P)(1 + nu_Q) with nu = N/g in mean-field mode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import brentq

from .rates import OccupationState
from .trap import ShellBasis

__all__ = [
    "CollisionKernel", "ThermalSample", "ThermalState", "EquilibriumError",
    "build_kernel", "collision_event_rates", "collision_flux",
    "equilibrium_bed", "microcanonical_bed", "critical_temperature",
    "bose_occupations", "sample_initial",
]

ZETA3 = 1.2020569031595942


class EquilibriumError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class CollisionKernel:
    """Directed channels ``channels[c] = (M, N, P, Q)`` with weights ``weight[c]``.

    Every unordered source pair is listed with M <= N and every unordered
    destination pair with P <= Q; both directions of a collision appear.
    """
    channels: np.ndarray
    weight: np.ndarray
    strength: float
    degeneracy: np.ndarray

    @property
    def n_channels(self) -> int:
        return len(self.weight)

    def reverse_index(self) -> np.ndarray:
        key = {tuple(c): i for i, c in enumerate(self.channels)}
        return np.array([key[(p, q, m, n)] for m, n, p, q in self.channels])


@dataclass(frozen=True)
class ThermalSample:
    target_mean_energy: float
    N: int
    seed: int = 0

    def __post_init__(self):
        if self.target_mean_energy < 0:
            raise ValueError("mean energy must be non-negative")
        if self.N < 0:
            raise ValueError("N must be non-negative")


@dataclass(frozen=True)
class ThermalState:
    T: float
    N: float
    N0: float
    Tc: float
    E: float
    mu: float = 0.0

    @property
    def beta(self) -> float:
        return math.inf if self.T == 0 else 1.0 / self.T


def build_kernel(basis: ShellBasis, strength: float = 1.0,
                 table: dict | None = None) -> CollisionKernel:
    """All energy-conserving shell channels inside the basis.

    3D weight: strength * g_M g_N g_P g_Q / D_E with D_E = sum_{p+q=E} g_p g_q
    over ordered shell pairs in the basis; 1D weight: strength. ``table`` may
    map (M, N, P, Q) to a user weight that replaces the default (it must be
    given for both directions with equal values).
    """
    if strength < 0:
        raise ValueError("collision strength must be non-negative")
    ns = basis.n_shells
    g = basis.degeneracy.astype(float)
    pairs_by_e: dict[int, list[tuple[int, int]]] = {}
    for m in range(ns):
        for n in range(m, ns):
            pairs_by_e.setdefault(m + n, []).append((m, n))
    chans, wts = [], []
    for e, prs in pairs_by_e.items():
        dE = sum(g[p] * g[e - p] for p in range(max(0, e - ns + 1), min(e, ns - 1) + 1))
        for src in prs:
            for dst in prs:
                if src == dst:
                    continue
                c = src + dst
                if table is not None and c in table:
                    wt = float(table[c])
                elif basis.dimension == 1:
                    wt = strength
                else:
                    wt = strength * g[src[0]] * g[src[1]] * g[dst[0]] * g[dst[1]] / dE
                chans.append(c)
                wts.append(wt)
    ch = np.array(chans, dtype=np.int64).reshape(-1, 4)
    w = np.array(wts, dtype=float)
    kern = CollisionKernel(ch, w, float(strength), basis.degeneracy.copy())
    if table is not None and len(w) and not np.allclose(w, w[kern.reverse_index()]):
        raise ValueError("user collision table is not microreversible")
    return kern


def collision_event_rates(occ: OccupationState, kernel: CollisionKernel) -> np.ndarray:
    """Per-channel event rates for the current shell counts."""
    N = np.asarray(occ.counts, float)
    g = kernel.degeneracy.astype(float)
    m, n, p, q = kernel.channels.T
    src = N[m] * (N[n] - (m == n)) / (g[m] * g[n])
    dst = (g[p] + N[p]) * (g[q] + N[q] + (p == q)) / (g[p] * g[q])
    return kernel.weight * np.clip(src, 0.0, None) * dst


def collision_flux(counts: np.ndarray, kernel: CollisionKernel) -> np.ndarray:
    """Mean-field dN/dt from collisions, K nu_M nu_N (1 + nu_P)(1 + nu_Q)."""
    g = kernel.degeneracy.astype(float)
    nu = np.asarray(counts, float) / g
    m, n, p, q = kernel.channels.T
    r = kernel.weight * nu[m] * nu[n] * (1 + nu[p]) * (1 + nu[q])
    ns = len(g)
    return (np.bincount(p, r, ns) + np.bincount(q, r, ns)
            - np.bincount(m, r, ns) - np.bincount(n, r, ns))


# --------------------------------------------------------------------------
# Equilibria
# --------------------------------------------------------------------------

def bose_occupations(T: float, x0: float, basis: ShellBasis) -> np.ndarray:
    """Shell populations g_n / (exp(n/T + x0) - 1), x0 = -mu/T > 0."""
    n = basis.energy
    with np.errstate(over="ignore"):
        return basis.degeneracy / np.expm1(n / T + x0)


def _x0_for(T, N, basis):
    """Solve sum_n g_n / expm1(n/T + x0) = N for x0 > 0."""
    def f(lx):
        return np.log(bose_occupations(T, math.exp(lx), basis).sum() / N)
    lo, hi = -60.0, 5.0
    while f(hi) > 0:
        hi += 5.0
        if hi > 700:
            raise EquilibriumError(f"no chemical potential for T={T}, N={N}")
    return math.exp(brentq(f, lo, hi, xtol=1e-14, rtol=1e-14))


def equilibrium_bed(N: float, E: float, basis: ShellBasis):
    """Grand-canonical Bose-Einstein occupations with sum N_n = N, sum n N_n = E.

    (T, mu) are found by nesting a 1D root for mu at fixed T inside a root
    for T; the ground-shell term is kept exactly, so below T_c the chemical
    potential sits just below the ground energy and N_0 is macroscopic.
    Returns (OccupationState, ThermalState).
    """
    if N <= 0:
        raise ValueError("N must be positive")
    emax = (basis.n_shells - 1) * N
    if E < 0 or E > emax:
        raise ValueError(f"E={E} not achievable with N={N} in {basis.n_shells} shells")
    tc = critical_temperature(N, basis)
    if E == 0:
        c = np.zeros(basis.n_shells)
        c[0] = N
        return OccupationState(c), ThermalState(0.0, N, N, tc, 0.0, 0.0)

    def energy_gap(lt):
        T = math.exp(lt)
        x0 = _x0_for(T, N, basis)
        return (basis.energy @ bose_occupations(T, x0, basis)) / E - 1.0

    lo, hi = math.log(1e-3), math.log(10.0)
    grid = np.linspace(lo, hi + 6, 80)
    vals = []
    for a in grid:
        v = energy_gap(a)
        vals.append(v)
        if v > 0:
            break
    vals = np.array(vals)
    if vals[0] > 0:
        # very small E: deep in the condensed regime
        a = lo
        while energy_gap(a) > 0:
            a -= 1.0
            if a < -50:
                raise EquilibriumError(f"cannot bracket T for N={N}, E={E}")
        lo_b, hi_b = a, lo
    elif vals[-1] <= 0:
        raise EquilibriumError(
            f"cannot bracket T for N={N}, E={E}: energy gap at T={math.exp(grid[len(vals) - 1]):.3g} "
            f"is {vals[-1]:.3g}")
    else:
        k = len(vals) - 1
        lo_b, hi_b = grid[k - 1], grid[k]
    lt = brentq(energy_gap, lo_b, hi_b, xtol=1e-14, rtol=1e-14)
    T = math.exp(lt)
    x0 = _x0_for(T, N, basis)
    occ = bose_occupations(T, x0, basis)
    occ *= N / occ.sum()
    st = ThermalState(T, N, float(occ[0]), tc, float(basis.energy @ occ), -x0 * T)
    return OccupationState(occ), st


def critical_temperature(N: float, basis: ShellBasis) -> float:
    """T at which the excited shells alone hold N atoms with mu at the ground energy."""
    n, g = basis.energy[1:], basis.degeneracy[1:]
    if len(n) == 0:
        return math.inf

    def f(lt):
        with np.errstate(over="ignore", divide="ignore"):
            return np.log((g / np.expm1(n / math.exp(lt))).sum() / N)
    hi = math.log(max(1.0, (N / ZETA3) ** (1 / 3)) * 4)
    while f(hi) < 0:
        hi += 1.0
        if hi > 50:
            return math.inf
    return math.exp(brentq(f, -10.0, hi, xtol=1e-14, rtol=1e-14))


@njit(cache=True)
def _log_partition(energies, n_max, e_max):
    """log Z(n, e) for bosons on single-particle levels with integer energies."""
    lz = np.full((n_max + 1, e_max + 1), -np.inf)
    lz[0, 0] = 0.0
    for i in range(energies.shape[0]):
        eps = energies[i]
        # adding one mode: Z'(n, e) = Z(n, e) + Z'(n - 1, e - eps)
        for n in range(1, n_max + 1):
            for e in range(eps, e_max + 1):
                a = lz[n, e]
                b = lz[n - 1, e - eps]
                if b == -np.inf:
                    continue
                if a == -np.inf:
                    lz[n, e] = b
                elif a > b:
                    lz[n, e] = a + math.log1p(math.exp(b - a))
                else:
                    lz[n, e] = b + math.log1p(math.exp(a - b))
    return lz


def microcanonical_bed(N: int, E: int, basis: ShellBasis) -> OccupationState:
    """Exact mean shell occupations of N bosons at total energy E.

    Uses P(n_j >= k) = Z(N - k, E - k e_j) / Z(N, E) for a single level j.
    """
    N, E = int(N), int(E)
    levels = np.repeat(basis.energy.astype(np.int64), basis.degeneracy)
    lz = _log_partition(levels, N, E)
    if not np.isfinite(lz[N, E]):
        raise ValueError(f"no configuration with N={N}, E={E}")
    out = np.zeros(basis.n_shells)
    for s in range(basis.n_shells):
        tot = 0.0
        for k in range(1, N + 1):
            e = E - k * s
            if e < 0:
                break
            tot += math.exp(lz[N - k, e] - lz[N, E])
        out[s] = basis.degeneracy[s] * tot
    return OccupationState(out)


def sample_initial(sample: ThermalSample, basis: ShellBasis,
                   kernel: CollisionKernel | None = None, relax_time: float = 0.0) -> OccupationState:
    """Draw N atoms from a Boltzmann shell distribution with the target mean energy.

    With a kernel and relax_time > 0 the draw is then relaxed under
    collisions alone for that long (trap units).
    """
    rng = np.random.default_rng(sample.seed)
    counts = np.zeros(basis.n_shells, dtype=np.int64)
    if sample.N == 0:
        return OccupationState(counts)
    if sample.target_mean_energy == 0:
        counts[0] = sample.N
    else:
        n, g = basis.energy, basis.degeneracy

        def mean(lt):
            p = g * np.exp(-n / math.exp(lt))
            return (p @ n) / p.sum() - sample.target_mean_energy
        if sample.target_mean_energy >= (g @ n) / g.sum():
            raise ValueError("target mean energy exceeds the infinite-temperature mean of the basis")
        T = math.exp(brentq(mean, -10.0, 20.0, xtol=1e-14))
        p = g * np.exp(-n / T)
        counts = rng.multinomial(sample.N, p / p.sum()).astype(np.int64)
    occ = OccupationState(counts)
    if kernel is not None and relax_time > 0:
        from .dynamics import relax_collisions
        occ = relax_collisions(occ, kernel, relax_time, seed=sample.seed + 1)
    return occ
