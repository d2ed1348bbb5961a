import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spincavity.fixtures import load_fixture
from spincavity.optimizer import (U_PI, U_PI_HALF, RobustnessTarget, _Layout, _Objective,
                                  calibrate_A0, fidelity, fidelity_gradient, optimize,
                                  pulse_energy, random_seed_pulse, robustness_map,
                                  sample_fidelities)
from spincavity.pulses import BumpPulse, FourierPhasePulse

SMALL = RobustnessTarget("pi/2", (-10.0, 10.0, 5), n_steps=300)


def test_target_validation():
    with pytest.raises(ValueError):
        RobustnessTarget("pi/3")
    with pytest.raises(ValueError, match="sample count"):
        RobustnessTarget("pi", (-1, 1, 0))
    t = RobustnessTarget("pi", (-30, 30, 21), (-0.3, 0.3, 13))
    d, g = t.samples()
    assert d.size == 21 * 13 and g.min() == pytest.approx(0.7)
    assert RobustnessTarget("pi", (0, 0, 1)).deltas.tolist() == [0.0]


def test_target_parameters():
    assert U_PI @ U_PI == pytest.approx(1.0)
    assert U_PI_HALF @ U_PI_HALF == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(5))
def test_adjoint_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    target = RobustnessTarget("pi" if seed % 2 else "pi/2", (-15, 15, 7), (-0.2, 0.2, 3),
                              n_steps=400)
    pulse = random_seed_pulse(rng, n_harmonics=4, p=4, A0_range=(10, 60))
    layout = _Layout(4)
    obj = _Objective(target, layout, pulse)
    x = layout.pack(pulse)
    f, g = obj.value_and_grad(x)
    assert f == pytest.approx(obj.value(x), abs=1e-14)
    h = 1e-6
    fd = np.array([(obj.value(x + h * e) - obj.value(x - h * e)) / (2 * h)
                   for e in np.eye(x.size)])
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-4


def test_cosine_only_gradient():
    pulse = load_fixture("g_pi")
    target = RobustnessTarget("pi", (0, 0, 1), (-0.3, 0.3, 5), n_steps=400)
    f, g = fidelity_gradient(pulse, target, cosine_only=True)
    assert g.size == 1 + len(pulse.a)
    assert f == pytest.approx(fidelity(pulse, target), abs=1e-12)


def test_zero_amplitude_is_identity():
    ident = RobustnessTarget((1.0, 0.0, 0.0, 0.0), (0, 0, 1))
    p = FourierPhasePulse(A0=0.0, p=2, a=(0.0, 1.0), b=(0.0, 0.0))
    assert fidelity(p, ident) == pytest.approx(1.0, abs=1e-15)


def test_optimal_seed_is_returned_unchanged():
    ident = RobustnessTarget((1.0, 0.0, 0.0, 0.0), (0, 0, 1), n_steps=50)
    p = FourierPhasePulse(A0=0.0, p=2, a=(0.0, 1.0), b=(0.0, 0.0))
    res = optimize(p, ident, budget=100, restarts=2)
    assert res.flag == "optimal-seed" and res.pulse == p and res.evaluations == 1


def test_optimizer_never_returns_worse_than_seed():
    seed = load_fixture("delta_pi_half")
    res = optimize(seed, SMALL, budget=60, restarts=2)
    assert res.F >= fidelity(seed, SMALL) - 1e-15
    assert res.flag in ("improved", "no-improvement")


@settings(max_examples=5)
@given(st.integers(0, 1000))
def test_log_is_monotone_and_within_budget(rng_seed):
    res = optimize(None, SMALL, budget=80, restarts=3, rng_seed=rng_seed, n_harmonics=3, p=4)
    vals = [v for _, v in res.log]
    evals = [n for n, _ in res.log]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert all(b >= a for a, b in zip(evals, evals[1:]))
    assert res.evaluations <= 80
    assert res.F == pytest.approx(max(vals), abs=1e-12)


def test_same_seed_same_result():
    a = optimize(None, SMALL, budget=60, restarts=2, rng_seed=7, n_harmonics=3, p=4)
    b = optimize(None, SMALL, budget=60, restarts=2, rng_seed=7, n_harmonics=3, p=4)
    assert a.pulse == b.pulse and a.log == b.log


def test_parallel_restarts_match_serial():
    a = optimize(None, SMALL, budget=60, restarts=2, rng_seed=3, n_harmonics=3, p=4)
    b = optimize(None, SMALL, budget=60, restarts=2, rng_seed=3, n_harmonics=3, p=4, jobs=2)
    assert a.pulse == b.pulse and a.F == b.F


def test_result_files(tmp_path):
    res = optimize(None, SMALL, budget=30, restarts=1, n_harmonics=2, p=2)
    files = res.write(tmp_path, "best")
    assert [f.split("/")[-1] for f in files] == ["best.csv", "best.json"]
    assert res.energy == pytest.approx(pulse_energy(res.pulse))


def test_calibration_recovers_scaled_amplitude():
    target = RobustnessTarget("pi/2", (-30, 30, 21))
    good = load_fixture("delta_pi_half")
    off = good.with_params(A0=good.A0 * 1.3)
    cal, F = calibrate_A0(off, target)
    assert cal.A0 == pytest.approx(good.A0, rel=1e-3)
    assert F == pytest.approx(fidelity(good, target), abs=1e-6)


def test_sample_fidelities_shape():
    t = RobustnessTarget("pi", (-5, 5, 4), (-0.1, 0.1, 3), n_steps=100)
    assert sample_fidelities(load_fixture("delta_pi"), t).shape == (3, 4)


def test_robustness_map_of_robust_excitation():
    p = load_fixture("delta_pi_half")
    m = robustness_map(p, np.linspace(-30, 30, 7), [0.0], target="pi/2")
    assert m.values.shape == (1, 7)
    assert np.all(m.values > 0.95)
    m2 = robustness_map(BumpPulse(math.pi / 2, 2.0), [0.0, 40.0], [0.0])
    assert m2.values[0, 0] == pytest.approx(1.0, abs=1e-6)
    assert m2.values[0, 1] < 0.5
