import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import offset_ensemble
from spincavity import SystemParams
from spincavity.dynamics import Trajectory
from spincavity.pulses import BumpPulse, SquarePulse
from spincavity.sequences import (IdealRotation, SequenceSpec, cpmg_accumulate, cpmg_period,
                                  cpmg_spec, detect_echo, echoes_above, hahn_spec, make_pulse,
                                  matched_duration, nmin_vs_duration, peak_field, phase_spread,
                                  ringdown_time, run_sequence, snr)

snr_lists = st.lists(st.floats(0.0, 1e6, allow_nan=False), min_size=1, max_size=60)


@given(snr_lists)
def test_accumulation_is_euclidean_norm(v):
    assert cpmg_accumulate(v) == pytest.approx(math.sqrt(sum(x * x for x in v)),
                                               rel=1e-12, abs=1e-300)


@given(snr_lists, st.permutations(range(5)))
def test_accumulation_ignores_order(v, perm):
    w = list(v) + [1.0] * 5
    shuffled = [w[i] for i in perm] + w[5:]
    assert cpmg_accumulate(shuffled) == pytest.approx(cpmg_accumulate(w), rel=1e-12)


@given(snr_lists, st.floats(0.0, 10.0))
def test_echoes_above_counts_leading_run(v, floor):
    k = echoes_above(v, floor)
    assert all(x >= floor for x in v[:k])
    assert k == len(v) or v[k] < floor


def test_accumulate_rejects_bad_input():
    with pytest.raises(ValueError):
        cpmg_accumulate([])
    with pytest.raises(ValueError):
        cpmg_accumulate([1.0, -0.1])


def _traj(t, X):
    t = np.asarray(t, float)
    z = np.zeros_like(t)
    return Trajectory(t, np.asarray(X, float), z, np.zeros((t.size, 3)))


def test_snr_of_constant_field():
    tr = _traj(np.linspace(0, 2, 201), np.full(201, 3.0))
    # sqrt(rate * 9 * 1) / 0.5
    assert snr(tr, (0.5, 1.5), 0.5, rate=4.0) == pytest.approx(12.0)
    with pytest.raises(ValueError):
        snr(tr, (1.0, 3.0))
    with pytest.raises(ValueError):
        snr(tr, (0.0, 1.0), noise_dX=0.0)


def test_detect_echo_zero_and_trim():
    t = np.linspace(0, 10, 1001)
    w, found = detect_echo(_traj(t, np.zeros_like(t)), (2.0, 8.0))
    assert not found and w == (2.0, 8.0)
    X = 10 * np.exp(-((t - 5) ** 2))
    w, found = detect_echo(_traj(t, X), (2.0, 8.0), trim=True)
    assert found and 2.0 < w[0] < 5.0 < w[1] < 8.0
    assert w[1] - 5.0 == pytest.approx(5.0 - w[0], abs=0.02)


def test_layout_and_validation():
    spec = SequenceSpec(BumpPulse(math.pi / 2, 2.0), BumpPulse(math.pi, 2.0), tau=5.0,
                        n_echoes=3)
    exc, refs, echoes = spec.layout()
    c1 = 0.5 * exc.duration
    assert [0.5 * (r.start + r.end) for r in refs] == pytest.approx([c1 + 5, c1 + 15, c1 + 25])
    assert echoes == pytest.approx([c1 + 10, c1 + 20, c1 + 30])
    assert spec.period == 10.0
    with pytest.raises(ValueError, match="tau"):
        SequenceSpec(BumpPulse(math.pi / 2, 2.0), BumpPulse(math.pi, 2.0), tau=0.5)
    with pytest.raises(ValueError):
        SequenceSpec(IdealRotation(1.0), IdealRotation(2.0), tau=1.0, n_echoes=0)


def test_ideal_rotation_axes():
    ens = offset_ensemble(3)
    out = IdealRotation(math.pi / 2).apply(ens)
    np.testing.assert_allclose(out.S, np.tile([0.0, 0.5, 0.0], (3, 1)), atol=1e-15)
    out = IdealRotation(math.pi / 2, (0.0, 1.0, 0.0)).apply(ens)
    np.testing.assert_allclose(out.S, np.tile([-0.5, 0.0, 0.0], (3, 1)), atol=1e-15)


def test_uncoupled_hahn_refocuses_exactly(dimless):
    ens = offset_ensemble(201, g=0.0)
    spec = SequenceSpec(IdealRotation(math.pi / 2), IdealRotation(math.pi, (0, 1, 0)), tau=3.0,
                        window=1.0)
    r = run_sequence(spec, ens, dimless)
    assert phase_spread(r.echo_states[0]) < 1e-10
    assert r.metrics.per_echo_snr == [0.0]
    assert r.metrics.flags and "no signal" in r.metrics.flags[0]


def test_cavity_feedback_spoils_refocusing_quadratically(dimless):
    """The free-induction field acts back on the spins; the phase spread it leaves
    grows with the square of the ensemble weight."""
    spec = SequenceSpec(IdealRotation(math.pi / 2), IdealRotation(math.pi, (0, 1, 0)), tau=3.0,
                        window=1.0)
    s = [phase_spread(run_sequence(spec, offset_ensemble(201, total=w), dimless)
                      .echo_states[0]) for w in (1e-2, 1e-3)]
    assert s[0] / s[1] == pytest.approx(100.0, rel=0.02)


@pytest.mark.parametrize("family", ["bump", "square", "delta-robust"])
def test_norm_drift_without_relaxation(dimless, family):
    r = run_sequence(hahn_spec(family, 1.0, 4.0, dimless, window=2.0), offset_ensemble(41),
                     dimless)
    assert r.metrics.norm_drift < 1e-6
    assert r.metrics.snr_total > 0
    # selective pulses excite only part of the +-30 band
    assert 0.0 < r.metrics.n_spins <= 1.0 + 1e-9
    if family == "delta-robust":
        assert r.metrics.n_spins > 0.9


def test_back_action_sequence_needs_shaped_pulses(dimless):
    spec = hahn_spec("square", 1.0, 4.0, dimless, back_action=True, window=2.0)
    with pytest.raises(Exception, match="quadrature-level"):
        run_sequence(spec, offset_ensemble(11), dimless)


def test_cpmg_totals_and_period(dimless):
    spec = cpmg_spec("bump", 1.0, dimless, free_evolution=2.0, n_echoes=4, window=1.0)
    assert spec.period == pytest.approx(4.0)
    r = run_sequence(spec, offset_ensemble(41), dimless)
    m = r.metrics
    assert len(m.per_echo_snr) == 4 and len(r.echo_states) == 4
    assert m.snr_total == pytest.approx(math.sqrt(sum(x * x for x in m.per_echo_snr)),
                                        rel=1e-12)
    assert m.n_min == pytest.approx(m.n_spins / m.snr_total)


def test_cpmg_period_includes_square_ringdown():
    sq = SquarePulse(10.0, 1.0)
    ring = ringdown_time(sq, 4.0, 0.5, 0.1)
    assert ring == pytest.approx(0.5 * math.log(5.0 / 0.05))
    assert cpmg_period(sq, 2.0, 4.0, 0.5, 0.1) == pytest.approx(4.0 + 2 * ring)
    assert ringdown_time(BumpPulse(math.pi, 2.0), 4.0) == 0.0


def test_make_pulse_families(dimless):
    for fam in ["bump", "square", "delta-robust", "g-robust"]:
        p = make_pulse(fam, math.pi, 2.0, dimless)
        assert p.duration == pytest.approx(2.0)
    with pytest.raises(Exception, match="pi/2 and pi"):
        make_pulse("g-robust", 1.0, 1.0, dimless)
    with pytest.raises(Exception, match="unknown"):
        make_pulse("gauss", 1.0, 1.0, dimless)


def test_matched_durations_at_square_peak():
    """Shaped pi/2 pulses stretched to the intracavity peak of a 1 us square pulse."""
    P = SystemParams(kappa=9.8e5, mode="SI")
    g0 = 424.0
    peak = peak_field(make_pulse("square", math.pi / 2, 1e-6, P, g0), P.kappa)
    # the ringdown adds rotation, so the plateau sits below the instant-response value
    assert 0.5 < peak * 2 * g0 * 1e-6 / (math.pi / 2) < 1.0
    assert matched_duration("bump", math.pi / 2, peak, P, g0) == pytest.approx(3.9e-6, rel=0.15)
    assert matched_duration("g-robust", math.pi / 2, peak, P, g0) == pytest.approx(19.5e-6,
                                                                                   rel=0.15)
    with pytest.raises(ValueError):
        matched_duration("square", math.pi / 2, peak, P, g0)


def test_nmin_curve_shape(dimless):
    c = nmin_vs_duration("bump", [0.5, 1.0], offset_ensemble(31), dimless, tau=4.0, window=2.0)
    assert c.n_min.shape == (2,) and np.all(np.isfinite(c.n_min))
    np.testing.assert_allclose(c.n_min, c.n_spins / c.snr)
    with pytest.raises(ValueError):
        nmin_vs_duration("bump", [0.0], offset_ensemble(3), dimless)
