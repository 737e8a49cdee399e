"""Back-of-the-envelope feasibility numbers: atom numbers and cooling times.

SI units throughout. The cooling time is (number of cycles to condense half
the atoms) x (cycle duration 2/gamma), with a per-cycle transfer probability
eps = p_tot / (N + N_st).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import constants as C

__all__ = ["AtomSpecies", "MG", "EstimateRow", "EstimateReport", "trap_from_eta",
           "n_max", "n_st", "epsilon", "cooling_cycles", "t_cool", "table1",
           "TABLE1_PAPER"]

# (eta, ideal N, ideal t, interacting N, interacting t) as printed
TABLE1_PAPER = (
    (2, 55, 0.119, 161, 0.0593),
    (4, 439, 5.45, 1.0e4, 0.441),
    (6, 1.4e3, 51.86, 1.2e5, 1.21),
    (8, 3.5e3, 232.4, 6.6e5, 2.5),
)


@dataclass(frozen=True)
class AtomSpecies:
    name: str
    mass: float       # kg
    lambda_L: float   # m
    a_sc: float = 0.0  # m

    def __post_init__(self):
        if not (self.mass > 0 and self.lambda_L > 0):
            raise ValueError("mass and wavelength must be positive")
        if self.a_sc < 0:
            raise ValueError("scattering length must be non-negative")


MG = AtomSpecies("Mg", 24.305 * C.atomic_mass, 600e-9, 5e-9)


def trap_from_eta(species: AtomSpecies, eta: float):
    """(omega_R, omega, a_ho) with omega = omega_R / eta^2."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    k = 2 * math.pi / species.lambda_L
    omega_R = C.hbar * k * k / (2 * species.mass)
    omega = omega_R / eta ** 2
    a_ho = math.sqrt(C.hbar / (species.mass * omega))
    return omega_R, omega, a_ho


def n_max(species: AtomSpecies, eta: float, cap_density: float = 5e20,
          interacting: bool = False) -> float:
    """Largest N whose peak density stays below ``cap_density`` (m^-3).

    Ideal gas: ground-state Gaussian, peak N / (pi^1.5 a_ho^3).
    Interacting: Thomas-Fermi, peak mu / g with N = a_ho/(15 a) (2 mu/hbar omega)^(5/2).
    """
    if cap_density <= 0:
        raise ValueError("density cap must be positive")
    _, omega, a_ho = trap_from_eta(species, eta)
    if not interacting or species.a_sc == 0:
        return cap_density * math.pi ** 1.5 * a_ho ** 3
    g = 4 * math.pi * C.hbar ** 2 * species.a_sc / species.mass
    mu = g * cap_density
    return a_ho / (15 * species.a_sc) * (2 * mu / (C.hbar * omega)) ** 2.5


def n_st(eta: float) -> float:
    """Number of levels with energy below 4 eta^2, (4 eta^2)^3 / 6."""
    return (4 * eta ** 2) ** 3 / 6


def epsilon(N: float, eta: float, p_tot: float = 0.1) -> float:
    return p_tot / (N + n_st(eta))


def cooling_cycles(N: float, eps: float) -> tuple[float, int]:
    """Cycles until N0 = N/2, starting from N0 = 1.

    Returns (closed form ln N / (eps N), count from iterating
    N0 -> N0 + eps (N - N0)(N0 + 1)).
    """
    if N < 2:
        raise ValueError("need N >= 2")
    if eps <= 0:
        raise ValueError("eps must be positive")
    closed = math.log(N) / (eps * N)
    n0, k = 1.0, 0
    while n0 < N / 2:
        n0 += eps * (N - n0) * (n0 + 1)
        k += 1
    return closed, k


def t_cool(species: AtomSpecies, eta: float, N: float, p_tot: float = 0.1,
           gamma_over_omega: float = 0.25) -> float:
    """Seconds to condense half of N atoms: (2/gamma) ln N / (eps N)."""
    _, omega, _ = trap_from_eta(species, eta)
    cyc, _ = cooling_cycles(N, epsilon(N, eta, p_tot))
    return cyc * 2 / (gamma_over_omega * omega)


def _round_sig(x, sig=2):
    return float(f"{x:.{sig - 1}e}")


@dataclass(frozen=True)
class EstimateRow:
    eta: float
    omega: float
    omega_R: float
    a_ho: float
    N_max_ideal: float
    N_max_tf: float
    N_st: float
    epsilon: float
    cycles_to_half: float
    cycles_to_half_recursion: int
    t_cool_ideal: float
    t_cool_tf: float
    t_cool_tf_rounded: float  # from N_max_tf rounded to 2 significant figures


@dataclass(frozen=True)
class EstimateReport:
    species: AtomSpecies
    cap_density: float = 5e20
    p_tot: float = 0.1
    gamma_over_omega: float = 0.25
    rows: tuple[EstimateRow, ...] = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        lines = [f"{'eta':>4} {'N ideal':>10} {'t ideal [s]':>12} {'N TF':>10} {'t TF [s]':>10}"]
        for r in self.rows:
            lines.append(f"{r.eta:>4g} {r.N_max_ideal:>10.4g} {r.t_cool_ideal:>12.4g} "
                         f"{r.N_max_tf:>10.3g} {r.t_cool_tf_rounded:>10.4g}")
        return "\n".join(lines)


def table1(species: AtomSpecies = MG, cap_density: float = 5e20, etas=(2, 4, 6, 8),
           p_tot: float = 0.1, gamma_over_omega: float = 0.25) -> EstimateReport:
    rows = []
    for eta in etas:
        om_r, om, a_ho = trap_from_eta(species, eta)
        ni = n_max(species, eta, cap_density, False)
        nt = n_max(species, eta, cap_density, True)
        eps = epsilon(ni, eta, p_tot)
        closed, rec = cooling_cycles(ni, eps)
        tc = lambda N: t_cool(species, eta, N, p_tot, gamma_over_omega)
        rows.append(EstimateRow(eta, om, om_r, a_ho, ni, nt, n_st(eta), eps, closed, rec,
                                tc(ni), tc(nt), tc(_round_sig(nt))))
    return EstimateReport(species, cap_density, p_tot, gamma_over_omega, tuple(rows))


if __name__ == "__main__":  # pragma: no cover
    print(table1().table())
    print(np.array(TABLE1_PAPER))
