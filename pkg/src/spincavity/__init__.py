"""Optimal control and echo sensitivity of spin ensembles coupled to a lossy cavity."""

from .dynamics import (CavityQuadratures, Ensemble, IntegrationError, SpinBin, SystemParams,
                       Trajectory, integrate, integrate_adaptive, integrate_bad_cavity,
                       propagate_su2, propagate_su2_many, rhs_bad_cavity, rhs_full)
from .ensemble import (EnsembleSpec, build_bins, cooperativity, n_eff, n_spins, polarization,
                       purcell_rate)
from .optimizer import (OptimizationResult, RobustnessMap, RobustnessTarget, fidelity, optimize,
                        robustness_map)
from .pulses import (BumpPulse, DriveFields, FourierPhasePulse, PulseError, PulseTrain,
                     SquarePulse, TabulatedPulse, bump_dk, bump_pulse_quadratures, deconvolve,
                     fourier_phase_quadratures, square_pulse)
from .sequences import (EchoMetrics, IdealRotation, SequenceResult, SequenceSpec, cpmg_accumulate,
                        cpmg_spec, hahn_spec, make_pulse, nmin_vs_duration, run_sequence, snr)

__version__ = "0.1.0"
