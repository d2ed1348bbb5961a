import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spincavity import SystemParams
from spincavity.dynamics import Ensemble
from spincavity.ensemble import (EnsembleSpec, build_bins, cooperativity, coupling_grid,
                                 effective_density, effective_fwhm, ideal_excitation,
                                 lorentzian_fit, n_eff, n_eff_integral, n_spins, polarization,
                                 purcell_rate, selective_n_spins)

SI = SystemParams(kappa=9.8e5, mode="SI")
LOW = EnsembleSpec(13500, ("uniform", -1.9e6, 1.9e6), 424.0, n_bins=1000, rep_rate=10.0)


def test_purcell_examples():
    assert purcell_rate(0.0, 1.0, 4.0) == pytest.approx(1.0)
    assert purcell_rate(0.0, 2.0, 8.0) == pytest.approx(4 * 4 / 8.0)
    assert purcell_rate(1e12, 1.0, 4.0) < 1e-23


@given(st.floats(0, 1e3), st.floats(0, 1e3))
def test_purcell_decreases_with_offset(d1, d2):
    lo, hi = sorted((d1, d2))
    assert purcell_rate(hi, 1.0, 4.0) <= purcell_rate(lo, 1.0, 4.0)


def test_polarization_examples():
    assert polarization(0.0, 1.0, 4.0, 1.0) == pytest.approx(1 - math.exp(-1))
    assert polarization(0.0, 1.0, 4.0, 1e-9) == pytest.approx(1.0)
    assert polarization(3.0, 1.0, 4.0, 0.1) == pytest.approx(polarization(-3.0, 1.0, 4.0, 0.1))
    with pytest.raises(ValueError):
        polarization(0.0, 1.0, 4.0, 0.0)


@given(st.floats(-1e7, 1e7), st.floats(1.0, 1e4), st.floats(1.0, 1e3))
def test_polarization_bounds(delta, g, gamma_r):
    p = float(polarization(delta, g, 9.8e5, gamma_r))
    assert 0.0 <= p <= 1.0
    assert p <= float(polarization(0.0, g, 9.8e5, gamma_r))


def test_spec_validation():
    with pytest.raises(ValueError, match="N_total"):
        EnsembleSpec(0, ("uniform", -1, 1), 1.0, polarization="full")
    with pytest.raises(ValueError, match="FWHM"):
        EnsembleSpec(1, ("lorentzian", 0, 0.0), 1.0, polarization="full")
    with pytest.raises(ValueError, match="empty"):
        EnsembleSpec(1, ("uniform", 1, 1), 1.0, polarization="full")
    with pytest.raises(ValueError, match="rep_rate"):
        EnsembleSpec(1, ("uniform", -1, 1), 1.0)


def test_weights_conserve_spin_count():
    ens = build_bins(LOW, SI)
    assert np.sum(ens.count) == pytest.approx(13500, rel=1e-9)
    spread = EnsembleSpec(13500, ("uniform", -1.9e6, 1.9e6), 424.0, 0.3, 200, 10.0)
    assert np.sum(build_bins(spread, SI).count) == pytest.approx(13500, rel=1e-9)


def test_full_polarization_gives_all_spins():
    spec = EnsembleSpec(500, ("uniform", -5, 5), 1.0, n_bins=50, polarization="full")
    assert n_eff(build_bins(spec, SystemParams(4.0))) == pytest.approx(500, rel=1e-12)


def test_bins_match_adaptive_integral_and_converge():
    a = n_eff(build_bins(LOW, SI))
    b = n_eff(build_bins(EnsembleSpec(13500, ("uniform", -1.9e6, 1.9e6), 424.0, n_bins=2000,
                                      rep_rate=10.0), SI))
    assert abs(a - b) / b < 1e-3
    assert a == pytest.approx(n_eff_integral(LOW, SI), rel=1e-3)


def test_low_coop_effective_linewidth():
    # angular-rate reading of the setup; the linewidth is ~159 kHz after dividing by 2 pi
    fwhm = effective_fwhm(LOW, SI)
    assert fwhm / (2 * math.pi) == pytest.approx(159.15e3, rel=0.25)


def test_effective_density_is_lorentzian_like():
    x, _, eff = effective_density(LOW, SI, n=20001)
    *_, res = lorentzian_fit(x, eff)
    assert res < 0.05


def test_lorentzian_fit_recovers_parameters():
    x = np.linspace(-10, 10, 801)
    y = 3.0 * 1.0 / ((x - 0.5) ** 2 + 1.0)
    a, c, w, res = lorentzian_fit(x, y)
    assert (a, c, w) == pytest.approx((3.0, 0.5, 2.0), rel=1e-6)
    assert res < 1e-8


def test_cooperativity_scaling():
    c = cooperativity(940, 424.0, 9.8e5, 1e6)
    assert cooperativity(1880, 424.0, 9.8e5, 1e6) == pytest.approx(2 * c)
    with pytest.raises(ValueError):
        cooperativity(0, 1.0, 1.0, 1.0)


def test_n_spins_cases():
    ens = build_bins(LOW, SI)
    assert n_spins(ens, ens) == 0.0
    assert n_spins(ens, ideal_excitation(ens)) == pytest.approx(n_eff(ens), rel=1e-12)
    with pytest.raises(ValueError, match="do not match"):
        n_spins(ens, ens.take(slice(0, 10)))


def test_selective_estimate_matches_brute_force():
    spec = EnsembleSpec(13500, ("uniform", -1.9e6, 1.9e6), 424.0, n_bins=4000, rep_rate=10.0)
    ens = build_bins(spec, SI)
    bw = 4e5
    inside = np.abs(ens.delta) <= bw / 2
    excited = ens.copy()
    excited.S[inside] = [0.0, 0.5, 0.0]
    brute = n_spins(ens, excited)
    assert selective_n_spins(spec, SI, bw) == pytest.approx(brute, rel=5e-3)


def test_coupling_grid():
    g, w = coupling_grid(2.0, 0.3, 7)
    assert g.size == 7 and w.sum() == pytest.approx(1.0)
    assert g.mean() == pytest.approx(2.0)
    assert g.min() > 2.0 * 0.7 and g.max() < 2.0 * 1.3
    assert coupling_grid(2.0, 0.0)[0].tolist() == [2.0]


def test_lorentzian_and_explicit_distributions():
    P = SystemParams(4.0)
    lor = EnsembleSpec(100, ("lorentzian", 0.0, 2.0), 1.0, n_bins=101, polarization="full")
    ens = build_bins(lor, P)
    assert np.sum(ens.weight) == pytest.approx(100, rel=1e-6)
    assert np.median(np.abs(ens.delta)) == pytest.approx(1.0, rel=0.05)
    ex = EnsembleSpec(10, ("explicit", [-1.0, 0.0, 1.0]), 1.0, polarization="full")
    e2 = build_bins(ex, P)
    assert isinstance(e2, Ensemble) and np.sum(e2.weight) == pytest.approx(10)
