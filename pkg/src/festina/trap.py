"""Harmonic-trap level structure and Franck-Condon factors.

Everything here works in trap units (hbar = omega = 1). A wavevector component
``kappa`` is measured in units of 1/x_zp with x_zp = sqrt(hbar / 2 m omega), so
that a beam along a trap axis has ``kappa == eta``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import gammaln, roots_legendre

__all__ = [
    "TrapSpec", "ShellBasis", "build_shells",
    "fc_1d", "fc_table", "fc_3d",
    "Beam", "BeamSet", "beam_coupling",
    "EmissionPattern", "emission_quadrature",
]

_BIG = 1e150


@dataclass(frozen=True)
class TrapSpec:
    dimension: int = 3
    eta: float = 2.0
    n_shells: int = 20
    omega: float = 2 * np.pi * 1e3  # rad/s, only used at SI boundaries

    def __post_init__(self):
        if self.dimension not in (1, 3):
            raise ValueError(f"dimension must be 1 or 3, got {self.dimension}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if int(self.n_shells) != self.n_shells or self.n_shells < 1:
            raise ValueError(f"n_shells must be an integer >= 1, got {self.n_shells}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")

    @property
    def recoil_energy(self) -> float:
        """E_R in units of hbar*omega."""
        return self.eta ** 2


@dataclass(frozen=True, eq=False)
class ShellBasis:
    """Energy shells of an isotropic oscillator.

    ``levels`` lists the Cartesian triples shell by shell (3D only); levels of
    shell ``n`` occupy ``levels[offsets[n]:offsets[n + 1]]``.
    """
    dimension: int
    n_shells: int
    energy: np.ndarray
    degeneracy: np.ndarray
    levels: np.ndarray | None = None
    offsets: np.ndarray | None = None
    eta: float | None = None
    _lookup: dict = field(default_factory=dict, repr=False)

    @property
    def total_levels(self) -> int:
        return int(self.degeneracy.sum())

    @cached_property
    def shell_of_level(self) -> np.ndarray:
        if self.levels is None:
            return np.arange(self.n_shells)
        return self.levels.sum(axis=1)

    def level_index(self, triple: Sequence[int]) -> int:
        if self.dimension == 1:
            (n,) = tuple(np.atleast_1d(triple))
            if not 0 <= n < self.n_shells:
                raise KeyError(triple)
            return int(n)
        return self._lookup[tuple(int(t) for t in triple)]


def _shell_triples(n: int) -> list[tuple[int, int, int]]:
    return [(nx, n - nx - nz, nz)
            for nx in range(n, -1, -1)
            for nz in range(0, n - nx + 1)]


def build_shells(spec: TrapSpec) -> ShellBasis:
    n = np.arange(spec.n_shells)
    if spec.dimension == 1:
        return ShellBasis(1, spec.n_shells, n.astype(float), np.ones_like(n), eta=spec.eta)
    deg = (n + 1) * (n + 2) // 2
    triples = [t for s in range(spec.n_shells) for t in _shell_triples(s)]
    levels = np.array(triples, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(deg)])
    lookup = {t: i for i, t in enumerate(triples)}
    return ShellBasis(3, spec.n_shells, n.astype(float), deg, levels, offsets, spec.eta, lookup)


# --------------------------------------------------------------------------
# Franck-Condon factors
# --------------------------------------------------------------------------

def _laguerre_chains(alpha, x, kmax):
    """Normalized Laguerre functions phi_k^(alpha)(x), k = 0..kmax.

    phi_k = sqrt(k!/(k+alpha)!) x^(alpha/2) exp(-x/2) L_k^(alpha)(x), which is
    bounded by one. ``alpha`` and ``x`` broadcast together; the result has the
    broadcast shape with a trailing axis of length kmax + 1. Values are carried
    with a running log-scale so chains that start below the double range still
    come out right once they grow.
    """
    alpha, x = np.broadcast_arrays(np.asarray(alpha, float), np.asarray(x, float))
    out = np.zeros(alpha.shape + (kmax + 1,))
    with np.errstate(divide="ignore", invalid="ignore"):
        logx = np.log(x)
        log0 = np.where(alpha == 0, -0.5 * x,
                        -0.5 * x + 0.5 * alpha * np.where(x > 0, logx, -np.inf)
                        - 0.5 * gammaln(alpha + 1))
    scale = log0.copy()
    alive = np.isfinite(scale)
    scale[~alive] = 0.0
    prev = np.zeros(alpha.shape)
    cur = np.where(alive, 1.0, 0.0)
    out[..., 0] = np.where(alive, np.exp(scale), 0.0)
    for k in range(kmax):
        nxt = ((2 * k + 1 + alpha - x) * cur - np.sqrt(k * (k + alpha)) * prev) \
            / np.sqrt((k + 1) * (k + 1 + alpha))
        prev, cur = cur, nxt
        big = np.abs(cur) > _BIG
        if big.any():
            cur = np.where(big, cur / _BIG, cur)
            prev = np.where(big, prev / _BIG, prev)
            scale = np.where(big, scale + np.log(_BIG), scale)
        with np.errstate(under="ignore", over="ignore"):
            out[..., k + 1] = cur * np.exp(scale)
    return out


def fc_1d(l: int, m: int, kappa: float) -> complex:
    """<l| exp(i kappa (a + a^dagger)) |m> for a 1D oscillator."""
    if l < 0 or m < 0:
        raise ValueError("levels must be non-negative")
    lo, alpha = min(l, m), abs(l - m)
    phi = _laguerre_chains(alpha, kappa * kappa, lo)[..., lo]
    return complex(phi * (1j * np.sign(kappa) if kappa != 0 else 1j) ** alpha) \
        if alpha else complex(phi)


def fc_table(kappa, n_max: int) -> np.ndarray:
    """Franck-Condon factors for all l, m <= n_max.

    ``kappa`` may be a scalar or an array; the result has shape
    ``kappa.shape + (n_max + 1, n_max + 1)`` indexed ``[..., l, m]``.
    """
    kappa = np.asarray(kappa, float)
    x = (kappa * kappa)[..., None]
    alpha = np.arange(n_max + 1, dtype=float)
    chains = _laguerre_chains(alpha, x, n_max)  # [..., alpha, k]
    sgn = np.where(kappa >= 0, 1.0, -1.0)[..., None]
    phase = (1j * sgn) ** np.arange(n_max + 1)  # i^alpha sign^alpha
    table = np.zeros(kappa.shape + (n_max + 1, n_max + 1), complex)
    for a in range(n_max + 1):
        k = np.arange(n_max + 1 - a)
        vals = chains[..., a, : n_max + 1 - a] * phase[..., a : a + 1]
        table[..., k + a, k] = vals
        table[..., k, k + a] = vals
    return table


def fc_3d(l: Sequence[int], m: Sequence[int], k: Sequence[float]) -> complex:
    """3D factor as the product of the three Cartesian 1D factors."""
    out = 1.0 + 0j
    for la, ma, ka in zip(l, m, k):
        out *= fc_1d(int(la), int(ma), float(ka))
    return out


# --------------------------------------------------------------------------
# Beams
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Beam:
    direction: tuple[float, float, float]
    amplitude: float = 1.0
    k: float = 1.0  # |k_L| x_zp; equals eta for a beam along a trap axis

    def __post_init__(self):
        d = np.asarray(self.direction, float)
        if d.shape != (3,) or not np.isclose(np.linalg.norm(d), 1.0):
            raise ValueError(f"beam direction must be a unit 3-vector, got {self.direction}")

    @property
    def kvec(self) -> np.ndarray:
        return self.k * np.asarray(self.direction, float)

    def axis(self) -> int | None:
        """Trap axis the beam runs along (+ direction), or None."""
        d = np.asarray(self.direction, float)
        hits = np.flatnonzero(np.isclose(d, 1.0))
        if len(hits) == 1 and np.allclose(np.delete(d, hits[0]), 0.0):
            return int(hits[0])
        return None


@dataclass(frozen=True)
class BeamSet:
    beams: tuple[Beam, ...]

    def __post_init__(self):
        if len(self.beams) == 0:
            raise ValueError("a BeamSet needs at least one beam")

    @classmethod
    def axes(cls, eta: float, ax: float = 1.0, ay: float = 1.0, az: float = 1.0) -> "BeamSet":
        """Three orthogonal beams along x, y, z with relative amplitudes."""
        eye = np.eye(3)
        return cls(tuple(Beam(tuple(eye[i]), a, eta)
                         for i, a in enumerate((ax, ay, az)) if a != 0.0))

    @classmethod
    def single(cls, eta: float, amplitude: float = 1.0, axis: int = 2) -> "BeamSet":
        d = [0.0, 0.0, 0.0]
        d[axis] = 1.0
        return cls((Beam(tuple(d), amplitude, eta),))

    def axis_amplitudes(self) -> np.ndarray:
        """Amplitude per trap axis; raises if a beam is not axis-aligned."""
        amps = np.zeros(3)
        ks = set()
        for b in self.beams:
            ax = b.axis()
            if ax is None:
                raise ValueError("rate tables need beams along +x, +y or +z")
            amps[ax] += b.amplitude
            ks.add(b.k)
        if len(ks) > 1:
            raise ValueError("rate tables need a common |k_L| for all beams")
        return amps


def beam_coupling(l, m, beams: BeamSet) -> complex:
    """Effective absorption amplitude sum_d A_d <l|exp(i k_d . r)|m>."""
    return sum(b.amplitude * fc_3d(l, m, b.kvec) for b in beams.beams)


# --------------------------------------------------------------------------
# Emission pattern and spherical quadrature
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EmissionPattern:
    kind: str = "isotropic"
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    n_theta: int = 16
    n_phi: int = 16

    def __post_init__(self):
        if self.kind not in ("isotropic", "dipole"):
            raise ValueError(f"unknown emission pattern {self.kind!r}")
        if self.n_theta < 4 or self.n_phi < 4:
            raise ValueError("quadrature order must be >= 4")

    def density(self, u: np.ndarray) -> np.ndarray:
        """W per unit solid angle at unit vectors ``u`` (shape (..., 3))."""
        if self.kind == "isotropic":
            return np.full(u.shape[:-1], 1.0 / (4 * np.pi))
        a = np.asarray(self.axis, float)
        a = a / np.linalg.norm(a)
        c = u @ a
        return 3.0 / (8 * np.pi) * (1.0 - c * c)


def emission_quadrature(pattern: EmissionPattern) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre in cos(theta) times a uniform phi grid.

    Returns unit directions (D, 3) and weights (D,) that already include the
    pattern, so ``sum(w * f(u))`` approximates the pattern average of f. Phi
    nodes sit at half-integer offsets; with n_phi divisible by 4 the node set
    is closed under x <-> y.
    """
    c, wc = roots_legendre(pattern.n_theta)
    phi = 2 * np.pi * (np.arange(pattern.n_phi) + 0.5) / pattern.n_phi
    s = np.sqrt(1.0 - c * c)
    u = np.stack([np.outer(s, np.cos(phi)), np.outer(s, np.sin(phi)),
                  np.outer(c, np.ones_like(phi))], axis=-1).reshape(-1, 3)
    w = np.outer(wc, np.full(pattern.n_phi, 2 * np.pi / pattern.n_phi)).ravel()
    return u, w * pattern.density(u)
