"""Occupation-dependent laser-cooling rates.

The rate for moving one atom from ground level m to ground level n through
the excited levels l of one pulse is

    G(n<-m) = Omega^2/(2 gamma) < |sum_l gamma eta*_ln(k) eta_lm(k_L)
                                   / ([delta - (l - m)] + i gamma R_ml)|^2 >_W
              * (N_n + 1 - delta_nm)

with the collective width

    R_ml = < sum_n' |eta_ln'(k)|^2 (N_n' + 1 - delta_n'm) >_W.

``< . >_W`` is the average over spontaneous-emission directions with the
fluorescence pattern W. In 3D the trap is isotropic and populations are
assumed equal inside an energy shell, so everything is reported per shell.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .trap import (BeamSet, EmissionPattern, ShellBasis, emission_quadrature,
                   fc_3d, fc_table)

__all__ = [
    "FestinaLenteWarning", "BasisTruncationWarning",
    "PulseSpec", "CoolingCycle", "OccupationState", "WidthTable", "RateMatrix",
    "RateEngine", "get_engine", "widths", "pulse_rates", "level_rates",
    "ergodic_compress", "darkness_report",
]


class FestinaLenteWarning(UserWarning):
    pass


class BasisTruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PulseSpec:
    """One laser pulse. Frequencies in units of omega, times in 1/omega."""
    s: float
    beams: BeamSet
    rabi: float = 0.03
    gamma: float = 0.04
    duration: float | None = None

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.rabi < 0:
            raise ValueError("rabi must be non-negative")
        if self.duration is None:
            if self.rabi == 0:
                raise ValueError("a pulse with rabi=0 needs an explicit duration")
            object.__setattr__(self, "duration", 2 * self.gamma / self.rabi ** 2)
        if not self.duration > 0:
            raise ValueError("pulse duration must be positive")
        if not (self.gamma < 1 and self.rabi < 1):
            warnings.warn(f"pulse outside the Festina lente regime (gamma={self.gamma}, "
                          f"rabi={self.rabi})", FestinaLenteWarning, stacklevel=2)

    @property
    def detuning(self) -> float:
        return self.s


@dataclass(frozen=True)
class CoolingCycle:
    pulses: tuple[PulseSpec, ...]
    repeats: int = 1

    def __post_init__(self):
        if len(self.pulses) == 0:
            raise ValueError("a cooling cycle needs at least one pulse")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")

    @property
    def duration(self) -> float:
        return sum(p.duration for p in self.pulses)


@dataclass(frozen=True, eq=False)
class OccupationState:
    """Atoms per energy shell (per level in 1D)."""
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1:
            raise ValueError("counts must be one-dimensional")
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", c)

    @classmethod
    def ground(cls, n_atoms: int, n_shells: int) -> "OccupationState":
        c = np.zeros(n_shells, dtype=np.int64)
        c[0] = n_atoms
        return cls(c)

    @property
    def integer(self) -> bool:
        return np.issubdtype(self.counts.dtype, np.integer)

    @property
    def N(self):
        return self.counts.sum()

    @property
    def energy(self) -> float:
        return float(np.arange(len(self.counts)) @ self.counts)

    @property
    def condensate_fraction(self) -> float:
        n = self.N
        return float(self.counts[0] / n) if n else 0.0

    def per_level(self, basis: ShellBasis) -> np.ndarray:
        return self.counts / basis.degeneracy


@dataclass(frozen=True, eq=False)
class WidthTable:
    """Collective widths R for laser-coupled (ground m, excited l) pairs.

    1D: ``R[m, l]``. 3D: ``R[m, d, x]`` where l is level m with its axis-d
    quantum number replaced by x (NaN past the excited cutoff).
    """
    R: np.ndarray
    dimension: int

    def get(self, m: int, l) -> float:
        if self.dimension == 1:
            return float(self.R[m, l])
        raise TypeError("use R[m, d, x] for 3D tables")


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """Shell rates ``gamma_rate[n, m]`` = G(n <- m) in units of omega.

    ``amplitude`` is the same matrix without the destination Bose factor, so
    ``gamma_rate = amplitude * (nu_n + 1)`` off the diagonal (nu = atoms per
    level). ``leak[m]`` is the fraction of emission from source shell m that
    lands outside the basis and is dropped.
    """
    gamma_rate: np.ndarray
    amplitude: np.ndarray
    self_term: np.ndarray
    leak: np.ndarray
    pulse: PulseSpec
    occupation: OccupationState

    def departure(self) -> np.ndarray:
        g = self.gamma_rate.copy()
        np.fill_diagonal(g, 0.0)
        return g.sum(axis=0)


def _bose_rates(amp, self_term, nu):
    g = amp * (nu[:, None] + 1.0)
    g[np.diag_indices_from(g)] -= self_term
    return np.maximum(g, 0.0)


class RateEngine:
    """Precomputed Franck-Condon tables for one basis and emission pattern.

    Tables depend only on eta, the basis and the pattern; pulses and
    occupations are supplied per call.
    """

    def __init__(self, basis: ShellBasis, pattern: EmissionPattern = EmissionPattern()):
        if basis.eta is None:
            raise ValueError("basis has no eta; build it with build_shells(TrapSpec)")
        self.basis = basis
        self.pattern = pattern
        self.eta = float(basis.eta)
        self.n_shells = basis.n_shells
        self.n_excited = basis.n_shells + math.ceil(4 * self.eta ** 2) + 1
        self._laser = {}
        u, w = emission_quadrature(pattern)
        if basis.dimension == 1:
            self._setup_1d(u, w)
        else:
            self._setup_3d(u, w)

    # -- tables -----------------------------------------------------------
    def _setup_1d(self, u, w):
        p = self.pattern
        cz = u[:, 2].reshape(p.n_theta, p.n_phi)[:, 0]
        self.kap = self.eta * cz
        self.wq = w.reshape(p.n_theta, p.n_phi).sum(axis=1)
        ns, nx = self.n_shells, self.n_excited
        self.fem = np.conj(fc_table(self.kap, nx - 1)[:, :, :ns])  # [dir, l, n]
        self.P = np.einsum("j,jln->ln", self.wq, np.abs(self.fem) ** 2)

    def _setup_3d(self, u, w):
        ns, nx = self.n_shells, self.n_excited
        self.wq = w
        self.fem = [np.ascontiguousarray(np.conj(fc_table(self.eta * u[:, a], nx - 1)[:, :, :ns]))
                    for a in range(3)]
        pairs = [(i, j) for i in range(ns) for j in range(ns - i)]
        self.pair_id = np.full((ns, ns), -1, dtype=np.int64)
        for k, (i, j) in enumerate(pairs):
            self.pair_id[i, j] = k
        pa = np.array([p[0] for p in pairs])
        pb = np.array([p[1] for p in pairs])
        sq = [np.abs(f) ** 2 for f in self.fem]  # [dir, x, n]
        p3 = np.zeros((3, len(pairs), nx, ns))
        self.hpair = np.zeros((3, len(w), len(pairs), ns))
        for d in range(3):
            a, b = _kernels.OTHER[d]
            A = sq[a][:, pa, :]
            B = sq[b][:, pb, :]
            H = np.zeros_like(A)  # [dir, pair, S]
            for j in range(ns):
                H[:, :, j:] += A[:, :, j:j + 1] * B[:, :, : ns - j]
            self.hpair[d] = H
            E = sq[d] * w[:, None, None]  # [dir, x, n]
            for j in range(ns):
                blk = np.tensordot(E[:, :, j], H[:, :, : ns - j], axes=(0, 0))
                p3[d, :, :, j:] += blk.transpose(1, 0, 2)
        self.p3 = p3
        self.levels = np.ascontiguousarray(self.basis.levels)
        self.wlm = _kernels.self_overlap(self.levels, nx, *self.fem, w)
        # [x, dir * n] layout for the packet projection matmul
        self.fflat = [np.ascontiguousarray(f.transpose(1, 0, 2).reshape(nx, -1)) for f in self.fem]
        lv = self.levels
        self.mirror_ok = (self.pattern.n_phi % 4 == 0
                          and (self.pattern.kind == "isotropic"
                               or np.allclose(np.abs(self.pattern.axis), [0, 0, 1])))
        self.half = np.flatnonzero(lv[:, 0] >= lv[:, 1])
        self.half_mult = np.where(lv[self.half, 0] > lv[self.half, 1], 2.0, 1.0)

    def _beta(self, k):
        if k not in self._laser:
            self._laser[k] = np.ascontiguousarray(fc_table(k, self.n_excited - 1))
        return self._laser[k]

    # -- widths -----------------------------------------------------------
    def widths(self, occ: OccupationState) -> WidthTable:
        nu = np.asarray(occ.per_level(self.basis), float)
        if self.basis.dimension == 1:
            ns = self.n_shells
            R = 1.0 + (self.P @ nu)[None, :] - self.P[:, :ns].T
            return WidthTable(R, 1)
        R = _kernels.width_tables(self.levels, self.n_shells, self.n_excited, *self.fem,
                                  self.wq, self.pair_id, self.p3, nu, self.wlm)
        return WidthTable(R, 3)

    def emission_tail(self) -> np.ndarray:
        """Out-of-basis emission probability for every excited level (1D)."""
        if self.basis.dimension != 1:
            raise NotImplementedError
        return 1.0 - self.P.sum(axis=1)

    # -- rates ------------------------------------------------------------
    def amplitudes(self, pulse: PulseSpec, occ: OccupationState, width=None):
        """Bose-factor-free shell amplitudes, the n == m term and leak."""
        width = self.widths(occ) if width is None else width
        pref = pulse.rabi ** 2 / (2 * pulse.gamma)
        if self.basis.dimension == 1:
            Q, selfq, norm = self._emission_1d(pulse, width.R)
        else:
            Q, selfq, norm = self._emission_3d(pulse, width.R)
        with np.errstate(invalid="ignore", divide="ignore"):
            leak = np.where(norm > 0, 1.0 - Q.sum(axis=1) / norm, 0.0)
        return pref * Q.T, pref * selfq, np.clip(leak, 0.0, 1.0)

    def rates(self, pulse: PulseSpec, occ: OccupationState, width=None) -> RateMatrix:
        amp, selfq, leak = self.amplitudes(pulse, occ, width)
        nu = np.asarray(occ.per_level(self.basis), float)
        return RateMatrix(_bose_rates(amp, selfq, nu), amp, selfq, leak, pulse, occ)

    def _emission_1d(self, pulse, R):
        ns, nx = self.n_shells, self.n_excited
        beta = np.zeros((nx, nx), complex)
        for b in pulse.beams.beams:
            beta = beta + b.amplitude * self._beta(float(b.k * b.direction[2]))
        l = np.arange(nx)
        m = np.arange(ns)
        den = (pulse.s - (l[None, :] - m[:, None])) + 1j * pulse.gamma * R
        c = pulse.gamma * beta[:, :ns].T / den  # [m, l]
        amp = np.einsum("ml,jln->jmn", c, self.fem)
        Q = np.einsum("j,jmn->mn", self.wq, np.abs(amp) ** 2)
        return Q, np.diag(Q).copy(), (np.abs(c) ** 2).sum(axis=1)

    def _emission_3d(self, pulse, R, block=128):
        amps = pulse.beams.axis_amplitudes()
        k = {b.k for b in pulse.beams.beams}.pop()
        beta = self._beta(float(k))
        lv = self.levels
        ns, nx = self.n_shells, self.n_excited
        if self.mirror_ok and amps[0] == amps[1]:
            src, mult = self.half, self.half_mult
        else:
            src, mult = np.arange(len(lv)), np.ones(len(lv))
        ms = lv[src]
        x = np.arange(nx)
        C = np.zeros((3, len(src), nx), complex)
        for d in range(3):
            if amps[d] == 0:
                continue
            md = ms[:, d][:, None]
            Rd = R[src, d, :]
            ok = np.isfinite(Rd)
            den = (pulse.s - (x[None, :] - md)) + 1j * pulse.gamma * np.where(ok, Rd, 1.0)
            C[d] = np.where(ok, pulse.gamma * amps[d] * beta[x[None, :], md] / den, 0.0)
        diag = sum(C[d, np.arange(len(src)), ms[:, d]] for d in range(3))
        norm = (np.abs(C) ** 2).sum(axis=(0, 2)) - sum(
            np.abs(C[d, np.arange(len(src)), ms[:, d]]) ** 2 for d in range(3)) + np.abs(diag) ** 2
        nd = len(self.wq)
        active = amps != 0
        Q = np.empty((len(src), ns))
        selfq = np.empty(len(src))
        for lo in range(0, len(src), block):
            hi = min(lo + block, len(src))
            g = [(C[d, lo:hi] @ self.fflat[d]).reshape(hi - lo, nd, ns) for d in range(3)]
            Q[lo:hi], selfq[lo:hi] = _kernels.shell_fold(
                np.ascontiguousarray(ms[lo:hi]), ns, *g, *self.fem, self.wq, self.hpair,
                self.pair_id, active)
        Qfull = np.zeros((len(lv), ns))
        sfull = np.zeros(len(lv))
        nfull = np.zeros(len(lv))
        Qfull[src] = Q * mult[:, None]
        sfull[src] = selfq * mult
        nfull[src] = norm * mult
        b = self.basis
        return _shell_mean(Qfull, b), _shell_mean(sfull, b), _shell_mean(nfull, b)


def _shell_mean(x, basis: ShellBasis):
    idx = basis.offsets
    sums = np.add.reduceat(x, idx[:-1], axis=0)
    deg = basis.degeneracy.astype(float)
    return sums / (deg[:, None] if sums.ndim == 2 else deg)


_ENGINES: dict = {}


def get_engine(basis: ShellBasis, pattern: EmissionPattern = EmissionPattern()) -> RateEngine:
    key = (id(basis), pattern)
    eng = _ENGINES.get(key)
    if eng is None or eng.basis is not basis:
        eng = RateEngine(basis, pattern)
        _ENGINES[key] = eng
    return eng


def widths(occ: OccupationState, basis: ShellBasis,
           pattern: EmissionPattern = EmissionPattern()) -> WidthTable:
    eng = get_engine(basis, pattern)
    if basis.dimension == 1:
        tail = eng.emission_tail()[: basis.n_shells]
        if tail.max() > 1e-3:
            warnings.warn(f"basis truncation: up to {tail.max():.2e} of the emission from "
                          "levels inside the basis leaves it", BasisTruncationWarning,
                          stacklevel=2)
    return eng.widths(occ)


def pulse_rates(pulse: PulseSpec, occ: OccupationState, basis: ShellBasis,
                pattern: EmissionPattern = EmissionPattern()) -> RateMatrix:
    return get_engine(basis, pattern).rates(pulse, occ)


def darkness_report(pulse: PulseSpec, basis: ShellBasis, occ: OccupationState,
                    pattern: EmissionPattern = EmissionPattern()) -> np.ndarray:
    """Total departure rate out of every shell, sum_{m != n} G(m <- n)."""
    return pulse_rates(pulse, occ, basis, pattern).departure()


# --------------------------------------------------------------------------
# Dense per-level reference path (small 3D bases only)
# --------------------------------------------------------------------------

def level_rates(pulse: PulseSpec, occ: OccupationState, basis: ShellBasis,
                pattern: EmissionPattern = EmissionPattern(),
                n_excited_shells: int | None = None) -> np.ndarray:
    """Level-resolved G(n <- m) from explicit 3D Franck-Condon products.

    Ground-level occupations are taken equal inside each shell. Cost grows
    like levels^2 * excited levels * directions, so keep the basis small.
    """
    if basis.dimension != 3:
        raise ValueError("level_rates is for 3D bases")
    eta = basis.eta
    lmax = basis.n_shells + math.ceil(4 * eta ** 2) if n_excited_shells is None \
        else n_excited_shells
    exc = np.array([t for s in range(lmax + 1) for t in _triples(s)])
    gl = basis.levels
    u, w = emission_quadrature(pattern)
    nu_level = occ.per_level(basis)[basis.shell_of_level]
    # emission factors eta_ln(k) for every direction
    n1 = int(exc.max()) + 1
    em = np.ones((len(w), len(exc), len(gl)), complex)
    for a in range(3):
        t = fc_table(eta * u[:, a], n1 - 1)
        em *= t[:, exc[:, a][:, None], gl[:, a][None, :]]
    P = np.einsum("k,kln->ln", w, np.abs(em) ** 2)  # [l, n]
    lam = np.array([[sum(b.amplitude * fc_3d(l, m, b.kvec) for b in pulse.beams.beams)
                     for m in gl] for l in exc])  # [l, m]
    el = exc.sum(axis=1)
    em_m = gl.sum(axis=1)
    R = 1.0 + (P @ nu_level)[:, None] - P  # [l, m]
    den = (pulse.s - (el[:, None] - em_m[None, :])) + 1j * pulse.gamma * R
    coef = pulse.gamma * lam / den  # [l, m]
    amp = np.einsum("kln,lm->knm", np.conj(em), coef)  # [dir, n, m]
    Q = np.einsum("k,knm->nm", w, np.abs(amp) ** 2)
    bose = nu_level[:, None] + 1.0 - np.eye(len(gl))
    return pulse.rabi ** 2 / (2 * pulse.gamma) * Q * bose


def _triples(n):
    return [(nx, n - nx - nz, nz) for nx in range(n, -1, -1) for nz in range(0, n - nx + 1)]


def ergodic_compress(level_rate: np.ndarray, basis: ShellBasis) -> np.ndarray:
    """Shell rates: average over source levels, sum over destination levels."""
    if basis.dimension == 1:
        return np.array(level_rate, copy=True)
    sh = basis.shell_of_level
    ns = basis.n_shells
    out = np.zeros((ns, ns))
    np.add.at(out, (sh[:, None], sh[None, :]), level_rate)
    return out / basis.degeneracy[None, :]
