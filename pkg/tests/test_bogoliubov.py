import numpy as np
import pytest
from hypothesis import given, strategies as st

from festina.bogoliubov import (QuasiRateConfig, hermite_functions, quasi_fc, quasi_rates,
                                solve_bdg, solve_condensate, tf_mu)
from festina.rates import OccupationState, PulseSpec, pulse_rates
from festina.trap import BeamSet, EmissionPattern, TrapSpec, build_shells
from oracles import gnmb_reference


def test_hermite_functions_orthonormal():
    from scipy.special import roots_hermite
    x, w = roots_hermite(80)
    psi = hermite_functions(30, x)
    G = (psi * (w * np.exp(x * x))) @ psi.T
    assert np.allclose(G, np.eye(31), atol=1e-12)


@pytest.mark.parametrize("gn", [0.1, 1.0, 10.0])
def test_gpe_normalised_and_converged(gn):
    p = solve_condensate(100.0, gn / 200.0, 40)
    assert p.norm == pytest.approx(100.0, rel=1e-10)
    assert p.residual < 1e-9
    assert p.mu > 0.5


def test_tf_limit():
    N0, a = 1000.0, 0.1
    p = solve_condensate(N0, a, 80)
    assert p.mu == pytest.approx(tf_mu(2 * a, N0), rel=0.05)
    assert p.mu > tf_mu(2 * a, N0)
    t = solve_condensate(N0, a, 80, mode="thomas-fermi")
    assert t.mu == tf_mu(2 * a, N0)


def test_ideal_condensate():
    p = solve_condensate(10.0, 0.0, 12)
    assert p.mu == pytest.approx(0.5)
    m = solve_bdg(p, 5)
    assert np.array_equal(m.omega_tilde, np.arange(5.0))


@given(st.floats(-3.0, 0.5))
def test_bdg_normalisation_and_dipole_mode(log_gn):
    gn = 10 ** log_gn
    m = solve_bdg(solve_condensate(50.0, gn / 100.0, 40), 6)
    assert np.abs(m.norms() - 1).max() < 1e-6
    assert m.omega_tilde[0] == 0.0
    assert abs(m.omega_tilde[1] - 1.0) < 1e-3
    assert np.all(np.diff(m.omega_tilde) > 0)


def test_breathing_mode_between_limits():
    """Ideal gas: 2; 1D Thomas-Fermi: sqrt(3)."""
    w = [solve_bdg(solve_condensate(100.0, a, 60), 3).omega_tilde[2] for a in (1e-4, 0.01, 0.5)]
    assert 2.0 > w[0] > w[1] > w[2] > np.sqrt(3) - 0.02


def test_invalid_inputs():
    with pytest.raises(ValueError):
        solve_condensate(10.0, -1.0, 10)
    with pytest.raises(ValueError):
        solve_condensate(0.0, 1.0, 10)
    with pytest.raises(ValueError):
        QuasiRateConfig(-0.1)
    with pytest.raises(ValueError):
        solve_bdg(solve_condensate(10.0, 0.1, 10), 11)


@pytest.mark.parametrize("s", [-4.0, 0.0])
def test_reduces_to_bare_rates_without_interactions(s):
    ns = 14
    b = build_shells(TrapSpec(1, 2.0, ns))
    modes = solve_bdg(solve_condensate(5.0, 0.0, ns), ns)
    pat = EmissionPattern()
    pulse = PulseSpec(s, BeamSet.single(2.0))
    occ = OccupationState(np.random.default_rng(7).random(ns) * 4)
    q = quasi_rates(pulse, occ, modes, quasi_fc(modes, 2.0, pat)).gamma_rate
    r = pulse_rates(pulse, occ, b, pat).gamma_rate
    off = ~np.eye(ns, dtype=bool)
    assert np.max(np.abs(q[off] - r[off])) < 1e-8 * np.abs(r).max()


def test_rates_nonnegative_and_broadening_lowers_peak():
    modes = solve_bdg(solve_condensate(50.0, 0.02, 16), 10)
    tab = quasi_fc(modes, 1.5, EmissionPattern(n_theta=8, n_phi=4))
    pulse = PulseSpec(-2.25, BeamSet.single(1.5))
    occ = OccupationState(np.linspace(5, 0, 10))
    g0 = quasi_rates(pulse, occ, modes, tab).gamma_rate
    g1 = quasi_rates(pulse, occ, modes, tab, QuasiRateConfig(0.5)).gamma_rate
    assert np.all(g0 >= 0) and np.all(g1 >= 0)
    assert g1.sum() < g0.sum()


def test_production_matches_loop_reference():
    rng = np.random.default_rng(2024)
    nb, nm, eta = 10, 6, 1.2
    modes = solve_bdg(solve_condensate(40.0, 0.05, nb), nm)
    nx = nb + 8
    tab = quasi_fc(modes, eta, EmissionPattern(n_theta=8, n_phi=4), n_excited=nx)
    pulse = PulseSpec(-1.5, BeamSet.single(eta, 1.0))
    N = rng.random(nm) * 5
    G = quasi_rates(pulse, OccupationState(N), modes, tab).gamma_rate
    pairs = rng.integers(0, nm, size=(5, 2))
    for n, m in pairs:
        ref = gnmb_reference(int(n), int(m), pulse, N, modes, eta, nx, n_theta=8)
        assert G[n, m] == pytest.approx(ref, rel=1e-8)
