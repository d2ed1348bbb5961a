import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spincavity import IntegrationError, SystemParams, integrate
from spincavity.dynamics import (Ensemble, SpinBin, Trajectory, integrate_adaptive,
                                 integrate_bad_cavity, propagate_su2, propagate_su2_many,
                                 rhs_full, rotation_matrix, rotation_su2, so3_from_su2,
                                 su2_matrix)
from spincavity.pulses import BumpPulse, FourierPhasePulse, SquarePulse

from conftest import offset_ensemble, random_bloch


def test_params_validation():
    with pytest.raises(ValueError, match="kappa"):
        SystemParams(kappa=0.0)
    with pytest.raises(ValueError, match="mode"):
        SystemParams(kappa=1.0, mode="cgs")


def test_rhs_matches_hand_evaluation(dimless):
    b = SpinBin(delta=0.7, g=1.3, weight=2.0, S=(0.1, -0.2, 0.3))
    dX, dY, dS = rhs_full((0.4, -0.5), [b], (1.5, 0.25), dimless)
    assert dX == pytest.approx(-2.0 * 0.4 + 1.5 - 2 * 1.3 * 2.0 * -0.2)
    assert dY == pytest.approx(-2.0 * -0.5 + 0.25 + 2 * 1.3 * 2.0 * 0.1)
    B = np.array([1.3 * 0.4, 1.3 * -0.5, 0.7])
    np.testing.assert_allclose(dS[0], np.cross(B, [0.1, -0.2, 0.3]), rtol=1e-14)


def test_rhs_rejects_non_finite(dimless):
    with pytest.raises(ValueError, match="non-finite"):
        rhs_full((math.nan, 0.0), [SpinBin(0.0, 1.0)], None, dimless)


def test_empty_cavity_relaxes_to_drive_steady_state(dimless):
    ens = Ensemble([], 1.0, 1.0)
    tr = integrate(ens, lambda t: (np.full_like(t, 2.0), np.zeros_like(t)), dimless,
                   0.0, 10.0, 0.01)
    assert tr.X[-1] == pytest.approx(2.0 * 2.0 / 4.0, rel=1e-8)


def test_step_guard(si):
    with pytest.raises(IntegrationError, match="kappa"):
        integrate(offset_ensemble(3), None, si, 0.0, 1e-3, 1e-5)


def test_zero_drive_keeps_ground_state(dimless):
    ens = offset_ensemble(11)
    tr = integrate(ens, None, dimless, 0.0, 5.0, 0.01)
    assert np.all(tr.X == 0) and np.all(tr.Y == 0)
    np.testing.assert_allclose(tr.Sbar, np.tile(ens.Sbar, (len(tr.times), 1)), atol=0)


@given(st.integers(0, 10_000), st.floats(0.2, 3.0), st.floats(0.5, 3.0))
def test_bloch_norm_conserved(seed, theta, k):
    rng = np.random.default_rng(seed)
    n = 7
    ens = Ensemble(rng.uniform(-10, 10, n), rng.uniform(0.5, 1.5, n), rng.uniform(0, 0.1, n),
                   random_bloch(rng, n, rng.uniform(0.1, 0.5)))
    P = SystemParams(kappa=4.0)
    tr = integrate(ens, [BumpPulse(theta, k)], P, 0.0, 2.0 / k + 1.0, 2e-3)
    n0 = np.sum(ens.S ** 2, axis=1)
    n1 = np.sum(tr.final.S ** 2, axis=1)
    assert np.max(np.abs(n1 - n0)) / tr.times[-1] < 1e-8


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.5, 4))
def test_cavity_linearity(a1, a2, k):
    P = SystemParams(kappa=4.0)
    empty = Ensemble([], 1.0, 1.0)
    p1 = BumpPulse(a1, k)
    p2 = SquarePulse(a2, 0.7, "y", 0.2)
    r1 = integrate(empty, [p1], P, 0, 3, 1e-3)
    r2 = integrate(empty, [p2], P, 0, 3, 1e-3)
    r12 = integrate(empty, [p1, p2], P, 0, 3, 1e-3)
    np.testing.assert_allclose(r12.X, r1.X + r2.X, atol=1e-10)
    np.testing.assert_allclose(r12.Y, r1.Y + r2.Y, atol=1e-10)


@given(st.integers(0, 10_000))
def test_shuffled_bins_give_same_sums(seed):
    rng = np.random.default_rng(seed)
    n = 60
    ens = Ensemble(rng.uniform(-20, 20, n), rng.uniform(0.5, 1.5, n), rng.uniform(0, 0.05, n))
    perm = rng.permutation(n)
    P = SystemParams(kappa=4.0)
    drive = [BumpPulse(1.2, 1.0)]
    a = integrate(ens, drive, P, 0, 3, 5e-3)
    b = integrate(ens.take(perm), drive, P, 0, 3, 5e-3)
    assert np.max(np.abs(a.X - b.X)) < 1e-12
    assert np.max(np.abs(a.Sbar - b.Sbar)) < 1e-12


def test_fourth_order_convergence(dimless):
    ens = offset_ensemble(9, 5.0, total=0.5)
    drive = [BumpPulse(1.0, 1.0)]
    ref = integrate_adaptive(ens, drive, dimless, 0.0, 2.0, rtol=1e-12, atol=1e-14)
    errs = []
    for h in (0.04, 0.02):
        tr = integrate(ens, drive, dimless, 0.0, 2.0, h)
        errs.append(abs(tr.X[-1] - ref.X[-1]) + np.max(np.abs(tr.final.S - ref.final.S)))
    assert errs[0] / errs[1] > 12.0


def test_relaxation_returns_to_equilibrium(dimless):
    ens = Ensemble([0.0], 0.0, 1.0, [[0.3, 0.0, 0.2]], T1=0.5, T2=0.2)
    tr = integrate(ens, None, dimless, 0.0, 10.0, 0.01, relaxation=True)
    np.testing.assert_allclose(tr.final.S[0], [0, 0, -0.5], atol=1e-8)


def test_trajectory_csv_roundtrip(tmp_path, dimless):
    tr = integrate(offset_ensemble(5), [BumpPulse(1.0, 2.0)], dimless, 0, 1, 0.01)
    p = tmp_path / "t.csv"
    tr.to_csv(p)
    assert p.read_text().splitlines()[0] == "t,X,Y,Sbar_x,Sbar_y,Sbar_z"
    back = Trajectory.from_csv(p)
    np.testing.assert_array_equal(back.X, tr.X)
    np.testing.assert_array_equal(back.Sbar, tr.Sbar)


def test_ensemble_csv_roundtrip(tmp_path):
    ens = offset_ensemble(4, S=np.arange(12.0).reshape(4, 3))
    ens.to_csv(tmp_path / "e.csv")
    back = Ensemble.from_csv(tmp_path / "e.csv")
    np.testing.assert_array_equal(back.S, ens.S)
    np.testing.assert_array_equal(back.delta, ens.delta)


# --- SU(2) propagators --------------------------------------------------------


def _phase_pulse():
    return FourierPhasePulse(A0=20.0, p=4, a=(0.3, -0.5, 0.2), b=(0.0, 0.4, -0.1))


@given(st.floats(-20, 20), st.floats(0.5, 1.5), st.floats(0.1, 0.9))
def test_propagator_composition(delta, g, tm):
    p = _phase_pulse()
    u01 = su2_matrix(propagate_su2((delta, g), p, 0.0, 1.0, n_steps=2000))
    u0m = su2_matrix(propagate_su2((delta, g), p, 0.0, tm, n_steps=2000))
    um1 = su2_matrix(propagate_su2((delta, g), p, tm, 1.0, n_steps=2000))
    assert np.max(np.abs(um1 @ u0m - u01)) < 1e-8


def test_propagator_is_unitary():
    a, b = propagate_su2_many(np.linspace(-30, 30, 11), 1.0, _phase_pulse(), 0, 1, 500)
    np.testing.assert_allclose(np.abs(a) ** 2 + np.abs(b) ** 2, 1.0, atol=1e-13)


def test_propagator_adjoint_action_matches_bloch_equations():
    # the SO(3) image of the propagator must equal integrating dS/dt = B x S
    p = _phase_pulse()
    P = SystemParams(kappa=4.0)
    for delta in (-7.0, 0.0, 3.5):
        R = so3_from_su2(propagate_su2((delta, 1.0), p, 0.0, 1.0, n_steps=4000))
        S0 = np.array([0.1, 0.2, -0.4])
        ens = Ensemble([delta], 1.0, 0.0, [S0])
        from spincavity.pulses import deconvolve
        tr = integrate(ens, deconvolve(p, P, step=1e-4, t0=0.0, t1=1.0), P, 0.0, 1.0, 1e-4)
        np.testing.assert_allclose(tr.final.S[0], R @ S0, atol=1e-9)


def test_ideal_rotation_helpers_agree():
    for axis in ([1, 0, 0], [0, 1, 0], [1, 1, 0]):
        R1 = so3_from_su2(rotation_su2(0.9, axis))
        np.testing.assert_allclose(R1, rotation_matrix(0.9, axis), atol=1e-14)


def test_numba_and_numpy_backends_agree(dimless):
    ens = offset_ensemble(17, total=0.3)
    drive = [BumpPulse(1.0, 1.5)]
    a = integrate(ens, drive, dimless, 0, 2, 1e-3, relaxation=False, use_numba=True)
    b = integrate(ens, drive, dimless, 0, 2, 1e-3, relaxation=False, use_numba=False)
    np.testing.assert_allclose(a.X, b.X, atol=1e-13)
    np.testing.assert_allclose(a.Sbar, b.Sbar, atol=1e-13)
    ua = propagate_su2_many(ens.delta, 1.0, _phase_pulse(), 0, 1, 300, use_numba=True)
    ub = propagate_su2_many(ens.delta, 1.0, _phase_pulse(), 0, 1, 300, use_numba=False)
    np.testing.assert_allclose(ua[0], ub[0], atol=1e-13)
    ens2 = Ensemble(ens.delta, 1.0, ens.weight)
    c = integrate_bad_cavity(ens2, drive, SystemParams(40.0), 0, 2, 1e-3, use_numba=True)
    d = integrate_bad_cavity(ens2, drive, SystemParams(40.0), 0, 2, 1e-3, use_numba=False)
    np.testing.assert_allclose(c.Sbar, d.Sbar, atol=1e-13)


def test_bad_cavity_requires_uniform_coupling():
    ens = Ensemble([0.0, 1.0], [1.0, 2.0], 1.0)
    with pytest.raises(ValueError, match="same coupling"):
        integrate_bad_cavity(ens, None, SystemParams(100.0), 0, 1, 0.01)
