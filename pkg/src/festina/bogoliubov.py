"""Bogoliubov quasiparticles of a 1D trapped condensate and their cooling rates.

Positions are in units of a_ho = sqrt(hbar / m omega); energies in hbar omega.
The 1D coupling is g = 2 a / a_ho (tight transverse confinement at the same
frequency). All fields are expanded in the bare oscillator basis and matrix
elements are evaluated with Gauss-Hermite quadrature.

Mode 0 of a BdgModeSet is the condensate itself (u = phi, v = 0, energy 0);
modes k >= 1 are the positive-energy BdG solutions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_hermite

from .rates import OccupationState, PulseSpec, RateMatrix
from .trap import EmissionPattern, ShellBasis, emission_quadrature, fc_table

__all__ = ["CondensateProfile", "BdgModeSet", "QuasiFcTables", "QuasiRateConfig",
           "BdgError", "hermite_functions", "solve_condensate", "solve_bdg",
           "quasi_fc", "quasi_rates", "tf_mu"]


class BdgError(RuntimeError):
    pass


def hermite_functions(n_max: int, x: np.ndarray) -> np.ndarray:
    """psi_n(x), n = 0..n_max, for the oscillator with unit length; [n, x]."""
    x = np.asarray(x, float)
    out = np.zeros((n_max + 1, x.size))
    out[0] = math.pi ** -0.25 * np.exp(-0.5 * x * x)
    if n_max > 0:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(2, n_max + 1):
        out[n] = math.sqrt(2.0 / n) * x * out[n - 1] - math.sqrt((n - 1) / n) * out[n - 2]
    return out


def tf_mu(g: float, N0: float) -> float:
    """Thomas-Fermi chemical potential (3 g N0 / 4 sqrt 2)^(2/3)."""
    return (3 * g * N0 / (4 * math.sqrt(2))) ** (2 / 3)


@dataclass(frozen=True, eq=False)
class CondensateProfile:
    grid: np.ndarray
    weights: np.ndarray      # integrate f with sum(weights * f(grid))
    phi0: np.ndarray         # on the grid, normalised to N0
    coeffs: np.ndarray       # unit-norm oscillator coefficients
    mu: float
    g: float
    N0: float
    mode: str
    residual: float
    psi: np.ndarray          # oscillator functions on the grid, [n, x]

    @property
    def norm(self) -> float:
        return float(self.weights @ self.phi0 ** 2)


@dataclass(frozen=True, eq=False)
class BdgModeSet:
    omega_tilde: np.ndarray
    u: np.ndarray  # [k, n]
    v: np.ndarray  # [k, n]
    fixed_modes: bool = True  # zero-temperature modes used at finite T

    def norms(self) -> np.ndarray:
        return (np.abs(self.u) ** 2 - np.abs(self.v) ** 2).sum(axis=1)


@dataclass(frozen=True, eq=False)
class QuasiFcTables:
    kappa: np.ndarray        # emission arguments, one per polar node
    weights: np.ndarray
    eta_tilde: np.ndarray    # [j, l, s]
    zeta_tilde: np.ndarray   # [j, l, s]
    bare: np.ndarray         # [j, l, n] bare factors for the same l, n
    eta: float
    n_excited: int


@dataclass(frozen=True)
class QuasiRateConfig:
    gamma_L: float = 0.0

    def __post_init__(self):
        if self.gamma_L < 0:
            raise ValueError("gamma_L must be non-negative")


def _quadrature(nb, nq=None):
    nq = nq or max(3 * nb, 40)
    x, w = roots_hermite(nq)
    return x, w * np.exp(x * x)


def _newton(h0, psi, w, gn, c, tol, max_iter=50):
    """Newton iteration on (H[c] - mu) c = 0, |c| = 1."""
    nb = len(c)
    mu = float(c @ (h0 + gn * (psi * (w * (c @ psi) ** 2)) @ psi.T) @ c)
    res = math.inf
    for _ in range(max_iter):
        V = (psi * (w * (c @ psi) ** 2)) @ psi.T
        H = h0 + gn * V
        r = H @ c - mu * c
        res = float(np.linalg.norm(r))
        if res < tol:
            return c, mu, res
        J = np.zeros((nb + 1, nb + 1))
        J[:nb, :nb] = H + 2 * gn * V - mu * np.eye(nb)
        J[:nb, nb] = -c
        J[nb, :nb] = 2 * c
        step = np.linalg.solve(J, -np.append(r, c @ c - 1.0))
        c = c + step[:nb]
        mu += step[nb]
    raise BdgError(f"GPE relaxation did not converge (residual {res:.2e}, gN0 = {gn:.3g})")


def solve_condensate(N0: float, a: float, basis: ShellBasis | int, mode: str = "gpe",
                     tol: float = 1e-10, max_iter: int = 50) -> CondensateProfile:
    """Condensate ground state in the oscillator basis.

    ``gpe``: the Gross-Pitaevskii ground state, reached by Newton steps
    while g N0 is doubled from the ideal-gas limit. ``thomas-fermi``: the inverted parabola.
    """
    if a < 0:
        raise ValueError("scattering length must be non-negative")
    if N0 <= 0:
        raise ValueError("N0 must be positive")
    nb = basis if isinstance(basis, int) else basis.n_shells
    g = 2.0 * a
    x, w = _quadrature(nb)
    psi = hermite_functions(nb - 1, x)
    h0 = np.diag(np.arange(nb) + 0.5)
    if mode == "thomas-fermi":
        mu = tf_mu(g, N0) if g > 0 else 0.5
        dens = np.clip(mu - 0.5 * x * x, 0, None) / g if g > 0 else N0 * psi[0] ** 2
        phi = np.sqrt(dens)
        c = psi @ (w * phi)
        c /= np.linalg.norm(c)
        return CondensateProfile(x, w, phi, c, mu, g, N0, mode, math.nan, psi)
    if mode != "gpe":
        raise ValueError(f"unknown condensate mode {mode!r}")
    # Newton with continuation in g N0 from the oscillator ground state
    c = np.zeros(nb)
    c[0] = 1.0
    n_steps = max(1, math.ceil(math.log2(max(g * N0, 1.0))))
    for gn in g * N0 * np.logspace(-n_steps * math.log10(2), 0, n_steps + 1)[1:] if g > 0 else [0.0]:
        c, mu, res = _newton(h0, psi, w, gn, c, tol, max_iter)
    phi = math.sqrt(N0) * (c @ psi)
    return CondensateProfile(x, w, phi, c, mu, g, N0, mode, res, psi)


def solve_bdg(profile: CondensateProfile, n_modes: int) -> BdgModeSet:
    """Lowest BdG modes, coefficients in the bare oscillator basis.

    With S = H_GP - mu and T = S + 2 g n the modes satisfy T S f = w^2 f for
    f = u + v, solved through the symmetric form T^1/2 S T^1/2.
    """
    psi, w = profile.psi, profile.weights
    nb = psi.shape[0]
    if n_modes > nb:
        raise ValueError("more modes requested than basis functions")
    if profile.g == 0:
        eye = np.eye(nb)[:n_modes]
        return BdgModeSet(np.arange(n_modes, dtype=float), eye, np.zeros_like(eye))
    dens = profile.phi0 ** 2  # N0 |phi|^2
    h0 = np.diag(np.arange(nb) + 0.5)
    V = (psi * (w * dens)) @ psi.T
    S = h0 + profile.g * V - profile.mu * np.eye(nb)
    T = S + 2 * profile.g * V
    S = 0.5 * (S + S.T)
    T = 0.5 * (T + T.T)
    tv, tvec = np.linalg.eigh(T)
    if tv.min() <= 0:
        raise BdgError("BdG operator T is not positive definite; condensate not converged")
    th = (tvec * np.sqrt(tv)) @ tvec.T
    w2, y = np.linalg.eigh(th @ S @ th)
    order = np.argsort(w2)
    w2, y = w2[order], y[:, order]
    if w2[0] < -1e-8 * max(1.0, abs(w2).max()):
        raise BdgError(f"negative BdG eigenvalue {w2[0]:.3e}")
    om = np.sqrt(np.clip(w2, 0, None))
    us = [profile.coeffs.copy()]
    vs = [np.zeros(nb)]
    oms = [0.0]
    for k in range(1, n_modes):
        f = th @ y[:, k] / math.sqrt(om[k])
        d = S @ f / om[k]
        u, v = 0.5 * (f + d), 0.5 * (f - d)
        s = np.sign(u[np.argmax(np.abs(u))])
        us.append(u * s)
        vs.append(v * s)
        oms.append(om[k])
    modes = BdgModeSet(np.array(oms), np.array(us), np.array(vs))
    bad = np.abs(modes.norms() - 1) > 1e-6
    if bad.any():
        raise BdgError(f"BdG normalisation off for modes {np.flatnonzero(bad).tolist()}")
    return modes


def quasi_fc(modes: BdgModeSet, eta: float, pattern: EmissionPattern = EmissionPattern(),
             n_excited: int | None = None) -> QuasiFcTables:
    """eta~_ls(k) = sum_s' eta_ls' u_ss', zeta~_ls(k) = sum_s' eta_ls' v_ss'."""
    nb = modes.u.shape[1]
    nx = n_excited or nb + math.ceil(4 * eta ** 2) + 1
    u, wq = emission_quadrature(pattern)
    cz = u[:, 2].reshape(pattern.n_theta, pattern.n_phi)[:, 0]
    W = wq.reshape(pattern.n_theta, pattern.n_phi).sum(axis=1)
    kap = eta * cz
    F = fc_table(kap, nx - 1)[:, :, :nb]  # [j, l, n]
    return QuasiFcTables(kap, W, F @ modes.u.T, F @ modes.v.T, F, eta, nx)


def _laser_tables(pulse, modes, nx):
    nb = modes.u.shape[1]
    lam = np.zeros((nx, nb), complex)
    for b in pulse.beams.beams:
        lam = lam + b.amplitude * fc_table(float(b.k * b.direction[2]), nx - 1)[:, :nb]
    return lam @ modes.u.T, lam @ modes.v.T  # [l, m]


def quasi_rates(pulse: PulseSpec, occ: OccupationState, modes: BdgModeSet,
                tables: QuasiFcTables, config: QuasiRateConfig = QuasiRateConfig()) -> RateMatrix:
    """Quasiparticle rates G(n <- m): normal and anomalous branches.

    Widths add the two branch sums (see module notes in the README):
    R_ml = sum_n' <|eta~_ln'|^2> (N_n' + 1 - d) + <|zeta~_ln'|^2> (N_n' - d),
    with the vacuum part sum_n' <|eta~_ln'|^2> = 1 + sum_n' <|zeta~_ln'|^2>.
    """
    N = np.asarray(occ.counts, float)
    ns = len(modes.omega_tilde)
    if len(N) != ns:
        raise ValueError("occupation length must equal the number of modes")
    W = tables.weights
    et, zt = tables.eta_tilde, tables.zeta_tilde
    nx = tables.n_excited
    Pe = np.einsum("j,jls->ls", W, np.abs(et) ** 2)
    Pz = np.einsum("j,jls->ls", W, np.abs(zt) ** 2)
    m = np.arange(ns)
    R = (1.0 + Pz.sum(axis=1)[None, :] - Pe[:, m].T - Pz[:, m].T
         + ((Pe + Pz) @ N)[None, :])  # [m, l]
    le, lz = _laser_tables(pulse, modes, nx)
    l = np.arange(nx)
    wid = 1j * (pulse.gamma * R + config.gamma_L)
    om = modes.omega_tilde[:, None]
    ce = pulse.gamma * le.T / (pulse.s - l[None, :] + om + wid)
    cz = pulse.gamma * np.conj(lz.T) / (pulse.s - l[None, :] - om + wid)
    Ae = np.einsum("jln,ml->jnm", np.conj(et), ce)
    Az = np.einsum("jln,ml->jnm", zt, cz)
    Qe = np.einsum("j,jnm->nm", W, np.abs(Ae) ** 2)
    Qz = np.einsum("j,jnm->nm", W, np.abs(Az) ** 2)
    eye = np.eye(ns)
    fe = N[:, None] + 1.0 - eye
    fz = np.clip(N[:, None] - eye, 0.0, None)
    pref = pulse.rabi ** 2 / (2 * pulse.gamma)
    G = pref * (Qe * fe + Qz * fz)
    amp = pref * Qe
    leak = np.zeros(ns)
    return RateMatrix(G, amp, pref * np.diag(Qe).copy(), leak, pulse, occ)
