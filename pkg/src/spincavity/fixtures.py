"""Published optimal-pulse coefficient sets shipped as fixture files.

The raw transcriptions are kept as text exactly as published, including comma
decimal separators and a repeated final coefficient in the coupling-robust
pi set. :func:`normalize_decimal` turns them into floats at ingestion.

The amplitude ``A0`` is not published. It is calibrated per set by a 1-D scan
plus golden-section refinement and stored in the fixture file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from importlib import resources

from .optimizer import RobustnessTarget, calibrate_A0, fidelity
from .pulses import FourierPhasePulse, load_pulse, write_pulse_params


def normalize_decimal(text: str) -> float:
    """Parse a transcribed number that may use a comma as decimal separator."""
    return float(text.strip().replace(",", "."))


@dataclass(frozen=True)
class FixtureSet:
    name: str
    description: str
    p: int
    a_raw: tuple
    b_raw: tuple | None
    target: RobustnessTarget
    published_F: float
    threshold: float

    @property
    def a(self):
        return [normalize_decimal(x) for x in self.a_raw]

    @property
    def b(self):
        if self.b_raw is None:
            return [0.0] * len(self.a_raw)
        return [normalize_decimal(x) for x in self.b_raw]

    def pulse(self, A0=1.0):
        return FourierPhasePulse(A0=A0, p=self.p, a=tuple(self.a), b=tuple(self.b))


_DELTA = (-30.0, 30.0, 21)
_ALPHA = (-0.3, 0.3, 13)

RAW_SETS = {
    "delta_pi_half": FixtureSet(
        "delta_pi_half", "offset-robust (pi/2)_y universal rotation", 10,
        ("2.48502852519278", "-0.614602837937966", "-0.146403432037310", "0.249569148521250",
         "-0.380514318815982", "-0.850981648334035", "0.00534202375558939",
         "-0.445742825754110"),
        ("0", "0.0222236529656774", "-0.326319502810118", "0.212035090021068",
         "-0.294315446425150", "0.292006472615227", "-0.284521506361719",
         "-0.00924269034857846"),
        RobustnessTarget("pi/2", _DELTA), 0.9993, 0.99),
    "delta_pi": FixtureSet(
        "delta_pi", "offset-robust (pi)_y universal rotation", 10,
        ("3.6552961005", "-0.1862900729", "0.1569621446", "0.886144687", "-0.3948819182",
         "-0.362518991", "0.1747816746", "0.0332864557"),
        ("0", "0.3016414772", "0.9517460473", "-0.5237345127", "0.439535574", "-0.261853447",
         "0.2785205439", "0.0097613015"),
        RobustnessTarget("pi", _DELTA), 0.9997, 0.99),
    "g_pi_half": FixtureSet(
        "g_pi_half", "coupling-robust (pi/2)_y universal rotation, b_n = 0", 2,
        ("1.45730821080502", "-1.90458549438015", "0.471852675517646", "-0.164591020002767",
         "0.691022251640240"),
        None, RobustnessTarget("pi/2", (0.0, 0.0, 1), _ALPHA), 0.999, 0.98),
    # transcribed verbatim: comma decimals, and n=4 and n=5 carry the same value
    "g_pi": FixtureSet(
        "g_pi", "coupling-robust (pi)_y universal rotation, b_n = 0", 2,
        ("1,05923686097438", "-1,06434468127802", "0,197782131275470", "-0,985850874873962",
         "-0,680625181005274", "-0,680625181005274"),
        None, RobustnessTarget("pi", (0.0, 0.0, 1), _ALPHA), 0.999, 0.98),
}


def fixture_path(name):
    """Path of the shipped fixture file for ``name``."""
    if name not in RAW_SETS:
        raise KeyError(f"unknown fixture {name!r}; known: {sorted(RAW_SETS)}")
    return str(resources.files("spincavity") / "data" / f"{name}.csv")


def load_fixture(name, g0=1.0, duration=None, phase=0.0) -> FourierPhasePulse:
    """Calibrated pulse of a shipped fixture."""
    return load_pulse(fixture_path(name), g0=g0, duration=duration, phase=phase)


def calibrate_fixture(name, use_numba=None):
    """Calibrate ``A0`` for one set; returns ``(pulse, F)``."""
    fs = RAW_SETS[name]
    return calibrate_A0(fs.pulse(), fs.target, lo=1.0, hi=200.0, n_scan=800,
                        use_numba=use_numba)


def write_fixtures(directory=None):
    """Recalibrate every set and write the fixture files."""
    directory = directory or str(resources.files("spincavity") / "data")
    os.makedirs(directory, exist_ok=True)
    out = []
    for name, fs in RAW_SETS.items():
        pulse, F = calibrate_fixture(name)
        path = os.path.join(directory, f"{name}.csv")
        write_pulse_params(path, pulse, {"F": repr(F), "published_F": fs.published_F,
                                         "target": fs.description})
        out.append(path)
    return out


def verify_fixtures(use_numba=None):
    """Re-evaluate every shipped fixture; rows ``(name, F, published, threshold, ok)``."""
    rows = []
    for name, fs in RAW_SETS.items():
        F = fidelity(load_fixture(name), fs.target, use_numba)
        rows.append((name, F, fs.published_F, fs.threshold, F >= fs.threshold))
    return rows
