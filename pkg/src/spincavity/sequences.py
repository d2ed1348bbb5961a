"""Hahn-echo and CPMG experiments through the full spin-cavity model.

Timeline conventions
--------------------
The excitation pulse starts at ``t = 0``; its centre ``c1`` is the time
origin of the sequence. Refocusing pulse ``k`` (``k = 1..M``) is centred at
``c1 + tau + (k - 1) * 2 tau`` and echo ``k`` is expected at
``c1 + 2 k tau``. A CPMG period is therefore ``T = 2 tau``.

Signal metrics
--------------
``SNR = sqrt(rate * integral_echo X^2 dt) / dX`` where only the ``X``
quadrature counts. ``rate`` converts the time integral to a count of field
lifetimes; physical runs use ``rate = kappa`` (the integrated output power of
a cavity leaking at rate ``kappa``), dimensionless runs use ``rate = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._io import atomic_write_text, write_csv
from .dynamics import (Ensemble, SystemParams, Trajectory, as_ensemble, integrate,
                       rotation_matrix)
from .ensemble import n_eff as _n_eff
from .pulses import (BumpPulse, DriveFields, PulseError, PulseTrain, SquarePulse, _axis_phase,
                     deconvolve, square_amplitude_for_angle)


@dataclass(frozen=True)
class IdealRotation:
    """Instantaneous rotation by ``angle`` about ``axis`` applied at ``start``."""

    angle: float
    axis: tuple = (1.0, 0.0, 0.0)
    start: float = 0.0
    kind = "ideal"
    differentiable = True
    duration = 0.0

    @property
    def end(self):
        return self.start

    def shifted(self, dt):
        return replace(self, start=self.start + dt)

    def apply(self, ens: Ensemble) -> Ensemble:
        R = rotation_matrix(self.angle, self.axis)
        return ens.copy(S=ens.S @ R.T)


def _center(pulse):
    return pulse.start + 0.5 * pulse.duration


def _place(pulse, center):
    return pulse.shifted(center - _center(pulse))


@dataclass(frozen=True)
class SequenceSpec:
    """Hahn (``n_echoes = 1``) or CPMG sequence.

    ``excitation`` and ``refocusing`` are templates; their position in time is
    set by the sequence. ``window`` is a symmetric echo integration width
    (``None``: automatic, see :func:`default_window`); ``trim_window`` shrinks
    it to the region above the noise threshold (:func:`detect_echo`).
    """

    excitation: object
    refocusing: object
    tau: float
    n_echoes: int = 1
    relaxation: bool = False
    back_action: bool = False
    dt_pulse: float | None = None
    dt_free: float | None = None
    window: float | None = None
    trim_window: bool = False
    noise_dX: float | None = None
    snr_rate: float | None = None
    fwhm: float | None = None
    record_every: int = 1

    def __post_init__(self):
        if self.n_echoes < 1:
            raise ValueError("n_echoes must be >= 1")
        longest = max(self.excitation.duration, self.refocusing.duration)
        if not self.tau > longest:
            raise ValueError(f"tau={self.tau:g} must exceed the pulse durations ({longest:g})")

    @property
    def period(self):
        return 2.0 * self.tau

    def layout(self):
        """Placed excitation, refocusing pulses and expected echo times."""
        c1 = 0.5 * self.excitation.duration
        exc = _place(self.excitation, c1)
        refs = [_place(self.refocusing, c1 + self.tau + 2 * k * self.tau)
                for k in range(self.n_echoes)]
        echoes = [c1 + 2 * (k + 1) * self.tau for k in range(self.n_echoes)]
        return exc, refs, echoes


def cpmg_period(refocusing, free_evolution, kappa, noise_dX=0.5, level=0.1):
    """Shortest CPMG period for a refocusing pulse.

    Two pulse durations, the free-evolution floor, and for drive-level pulses
    twice the cavity ringdown (see :func:`ringdown_time`) so the echo windows
    stay clear of the pulse tails.
    """
    ring = ringdown_time(refocusing, kappa, noise_dX, level)
    return 2.0 * refocusing.duration + free_evolution + 2.0 * ring


@dataclass
class EchoMetrics:
    """Detection metrics of one sequence run."""

    per_echo_snr: list
    snr_total: float
    n_spins: float
    n_eff: float
    n_min: float
    windows: list
    peaks: list
    echo_times: list
    m_r: int
    flags: list = field(default_factory=list)
    norm_drift: float = 0.0

    @property
    def peak(self):
        return max(self.peaks) if self.peaks else 0.0

    def as_dict(self):
        return {"per_echo_snr": list(map(float, self.per_echo_snr)),
                "snr_total": self.snr_total, "n_spins": self.n_spins, "n_eff": self.n_eff,
                "n_min": self.n_min, "windows": [list(map(float, w)) for w in self.windows],
                "peaks": list(map(float, self.peaks)), "echo_times": list(map(float,
                                                                              self.echo_times)),
                "m_r": self.m_r, "flags": list(self.flags), "norm_drift": self.norm_drift}

    def write(self, path):
        """Structured text summary, one ``key = value`` per line."""
        d = self.as_dict()
        lines = [f"{k} = {v}" for k, v in d.items()]
        atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass
class SequenceResult:
    trajectory: Trajectory
    metrics: EchoMetrics
    echo_states: list
    drive: DriveFields | None
    pulses: list


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def snr(trajectory, window, noise_dX=0.5, rate=1.0):
    """``sqrt(rate * integral_window X^2 dt) / noise_dX`` (trapezoid rule)."""
    if not noise_dX > 0:
        raise ValueError("noise_dX must be positive")
    t0, t1 = window
    t = np.asarray(trajectory.times)
    X = np.asarray(trajectory.X)
    if t0 < t[0] - 1e-12 * max(1.0, abs(t[0])) or t1 > t[-1] + 1e-12 * max(1.0, abs(t[-1])):
        raise ValueError("window lies outside the trajectory")
    sel = (t >= t0) & (t <= t1)
    if sel.sum() < 2:
        return 0.0
    return math.sqrt(rate * float(np.trapezoid(X[sel] ** 2, t[sel]))) / noise_dX


def cpmg_accumulate(per_echo_snr):
    """Total SNR of an echo train: Euclidean norm of the per-echo SNRs."""
    v = np.asarray(per_echo_snr, float)
    if v.size == 0:
        raise ValueError("need at least one echo")
    if np.any(v < 0):
        raise ValueError("per-echo SNR values must be nonnegative")
    return float(np.sqrt(np.sum(v * v)))


def echoes_above(per_echo_snr, floor=1.0):
    """Number of leading echoes before the SNR first drops below ``floor``."""
    for k, s in enumerate(per_echo_snr):
        if s < floor:
            return k
    return len(per_echo_snr)


def default_window(spec: SequenceSpec, fwhm, kappa):
    """Echo integration bounds relative to the expected echo time.

    The echo of an ideal sequence lasts a few ``1/fwhm`` and is delayed by the
    cavity response (a few ``2/kappa``); selective pulses stretch it by about
    their own length. Returns ``(before, after)`` offsets.
    """
    longest = max(spec.excitation.duration, spec.refocusing.duration)
    return 4.0 / fwhm + longest, 4.0 / fwhm + 8.0 / kappa + longest


def ringdown_time(pulse, kappa, noise_dX=0.5, level=1e-3):
    """Time for a drive-level pulse's cavity tail to fall below ``level * noise_dX``.

    Zero for quadrature-level pulses, whose field ends with the pulse.
    """
    if not isinstance(pulse, SquarePulse):
        return 0.0
    plateau = abs(pulse.amplitude) * 2.0 / kappa
    floor = level * noise_dX
    return 2.0 / kappa * math.log(plateau / floor) if plateau > floor else 0.0


def detect_echo(trajectory, window, noise_dX=0.5, trim=False):
    """Check and optionally trim an echo window.

    With ``trim`` the window shrinks to the contiguous region around the
    largest ``|X|`` where ``|X|`` exceeds ``3 * noise_dX / sqrt(n)`` (``n``
    samples in the window); if nothing exceeds it the window is kept.
    Returns ``(window, found)`` where ``found`` is false when ``X`` vanishes
    identically in the window.
    """
    lo, hi = window
    t = trajectory.times
    sel = np.flatnonzero((t >= lo) & (t <= hi))
    if sel.size < 2:
        return (lo, hi), False
    ax = np.abs(trajectory.X[sel])
    if not np.any(ax > 0.0):
        return (lo, hi), False
    if not trim:
        return (lo, hi), True
    above = ax > 3.0 * noise_dX / math.sqrt(sel.size)
    if not above.any():
        return (lo, hi), True
    i = int(np.argmax(ax))
    j0 = i
    while j0 > 0 and above[j0 - 1]:
        j0 -= 1
    j1 = i
    while j1 < sel.size - 1 and above[j1 + 1]:
        j1 += 1
    # keep the first samples below threshold so the edges are bracketed
    j0 = max(j0 - 1, 0)
    j1 = min(j1 + 1, sel.size - 1)
    return (float(t[sel[j0]]), float(t[sel[j1]])), True


# ---------------------------------------------------------------------------
# Running a sequence
# ---------------------------------------------------------------------------


def _default_steps(params, pulses, ens):
    """Fixed steps resolving the cavity, the widest offset and the peak field."""
    fast = max(params.kappa, float(np.max(np.abs(ens.delta), initial=0.0)))
    free = 0.02 / fast
    dt_pulse = free
    gmax = float(np.max(np.abs(ens.g), initial=0.0))
    for p in pulses:
        if p.duration <= 0:
            continue
        t = p.start + p.duration * np.linspace(0.0, 1.0, 801)
        X, Y = p.quadratures(t, params.kappa)
        peak = float(np.max(np.hypot(X, Y)))
        dt_pulse = min(dt_pulse, p.duration / 400.0)
        if peak * gmax > 0:
            dt_pulse = min(dt_pulse, 0.02 / (peak * gmax))
    return dt_pulse, free


def _segment_times(pulses, echoes, t_end):
    """Breakpoints with a flag telling whether each interval is inside a pulse."""
    pts = {0.0, t_end}
    for p in pulses:
        if p.duration > 0:
            pts.update((p.start, p.end))
        else:
            pts.add(p.start)
    pts.update(echoes)
    pts = sorted(x for x in pts if 0.0 <= x <= t_end)
    segs = []
    for a, b in zip(pts[:-1], pts[1:]):
        if b - a <= 1e-15 * max(1.0, abs(b)):
            continue
        mid = 0.5 * (a + b)
        inside = any(p.duration > 0 and p.start <= mid <= p.end for p in pulses)
        segs.append((a, b, inside))
    return segs


def run_sequence(spec: SequenceSpec, bins, params: SystemParams, use_numba=None,
                 keep_states=True) -> SequenceResult:
    """Simulate the sequence and compute its echo metrics.

    Drive-level pulses (square) are applied open loop. Quadrature-level pulses
    are converted to drives by deconvolution, with spin back-action when
    ``spec.back_action`` is set: the target then holds ``X = Y = 0`` from the
    first pulse through the end of the last one, so the drive also cancels
    the free-induction field between pulses. After the last pulse the drive
    is off and the echo radiates freely. Ideal rotations act instantaneously
    on the spins.
    """
    ens0 = as_ensemble(bins)
    ens0.check_finite()
    exc, refs, echoes = spec.layout()
    pulses = [exc] + refs
    real = [p for p in pulses if not isinstance(p, IdealRotation)]
    dt_pulse, dt_free = _default_steps(params, real, ens0)
    dt_pulse = spec.dt_pulse or dt_pulse
    dt_free = spec.dt_free or dt_free
    noise = spec.noise_dX if spec.noise_dX is not None else params.noise_dX
    rate = spec.snr_rate if spec.snr_rate is not None else (
        params.kappa if params.mode == "SI" else 1.0)
    if spec.window is not None:
        before = after = 0.5 * spec.window
    else:
        fwhm = spec.fwhm if spec.fwhm is not None else params.kappa
        before, after = default_window(spec, fwhm, params.kappa)
    t_end = echoes[-1] + after

    drive = None
    back = spec.back_action and real
    if back:
        if any(not p.differentiable for p in real):
            raise PulseError("spin back-action correction needs quadrature-level pulses")
        t_last = max(p.end for p in real)
    parts = []
    ens = ens0
    X0 = Y0 = 0.0
    states = []
    ideal_at = {p.start: p for p in pulses if isinstance(p, IdealRotation)}
    n_before = _n_eff(ens0)
    sz0 = float(ens0.Sbar[2])
    settle = exc.end + (0.0 if isinstance(exc, IdealRotation) else
                        min(20.0 / params.kappa, 0.5 * (refs[0].start - exc.end)))
    segs = _segment_times(pulses, echoes + ([settle] if settle > 0 else []), t_end)
    if back:
        # one closed-loop block from t=0 to the end of the last pulse
        train = PulseTrain(tuple(real))
        drive = deconvolve(train, params, ens, back_action=True, step=dt_pulse, t0=0.0,
                           t1=t_last, use_numba=use_numba)
        blocks = [(0.0, t_last, True)] + [s for s in segs if s[0] >= t_last - 1e-15]
    else:
        blocks = segs
    for a, b, inside in blocks:
        p_ideal = ideal_at.get(a)
        if p_ideal is not None:
            ens = p_ideal.apply(ens)
        dt = dt_pulse if inside else dt_free
        if back and b <= t_last + 1e-15:
            drv = drive
        else:
            drv = None if back else [p for p in real if p.end > a and p.start < b]
        tr = integrate(ens, drv, params, a, b, dt, X0=X0, Y0=Y0,
                       relaxation=spec.relaxation, record_every=spec.record_every,
                       use_numba=use_numba)
        parts.append(tr)
        ens = tr.final
        X0, Y0 = tr.final_XY
        if keep_states and any(abs(b - e) <= 1e-12 * max(1.0, e) for e in echoes):
            states.append(ens)
    traj = Trajectory.concatenate(parts)

    if isinstance(exc, IdealRotation):
        sz_settle = float(exc.apply(ens0).Sbar[2])
    else:
        sz_settle = float(np.interp(settle, traj.times, traj.Sbar_z))
    n_spins = 2.0 * (sz_settle - sz0)

    per, windows, peaks, flags = [], [], [], []
    for k, e in enumerate(echoes):
        lo = max(e - before, refs[k].end + ringdown_time(refs[k], params.kappa, noise))
        hi = min(e + after, refs[k + 1].start if k + 1 < len(refs) else t_end)
        w, found = detect_echo(traj, (lo, hi), noise, spec.trim_window)
        sel = (traj.times >= w[0]) & (traj.times <= w[1])
        if not found:
            flags.append(f"echo {k + 1}: no signal in window")
            per.append(0.0)
        else:
            per.append(snr(traj, w, noise, rate))
        windows.append(w)
        peaks.append(float(np.max(np.abs(traj.X[sel]))) if sel.any() else 0.0)
    total = cpmg_accumulate(per)
    n_min = n_spins / total if total > 0 else float("inf")
    drift = 0.0
    if not spec.relaxation:
        n0 = np.einsum("ij,ij->i", ens0.S, ens0.S)
        n1 = np.einsum("ij,ij->i", ens.S, ens.S)
        drift = float(np.max(np.abs(np.sqrt(n1) - np.sqrt(n0)))) if len(n0) else 0.0
    metrics = EchoMetrics(per, total, n_spins, n_before, n_min, windows, peaks, echoes,
                          echoes_above(per), flags, drift)
    if drive is None:
        wx, wy = _sample_open_loop(real, traj.times, params.kappa)
        drive = DriveFields(traj.times, wx, wy) if len(traj.times) > 1 else None
    return SequenceResult(traj, metrics, states, drive, pulses)


def _sample_open_loop(pulses, t, kappa):
    wx = np.zeros_like(t)
    wy = np.zeros_like(t)
    for p in pulses:
        a, b = p.omega(t, kappa)
        wx += a
        wy += b
    return wx, wy


def transverse_phases(ens: Ensemble):
    """Transverse phase ``atan2(Sy, Sx)`` of every bin."""
    return np.arctan2(ens.S[:, 1], ens.S[:, 0])


def phase_spread(ens: Ensemble):
    """Largest wrapped deviation of bin phases from their circular mean."""
    ph = transverse_phases(ens)
    mean = math.atan2(np.sum(np.sin(ph)), np.sum(np.cos(ph)))
    dev = np.angle(np.exp(1j * (ph - mean)))
    return float(np.max(np.abs(dev)))


# ---------------------------------------------------------------------------
# Pulse families and sensitivity curves
# ---------------------------------------------------------------------------


def make_pulse(family, angle, duration, params: SystemParams, g0=1.0, axis="x"):
    """Rotation by ``angle`` about a transverse ``axis`` from a named pulse family.

    ``family`` is ``square``, ``bump``, ``ideal``, ``delta-robust`` or
    ``g-robust``. ``axis`` is ``x``, ``y``, ``-x``, ``-y`` or an azimuth in
    radians. The Fourier-phase families use the shipped fixtures (published
    as y-rotations), rotated onto ``axis`` and stretched to ``duration``.
    """
    phi = _axis_phase(axis)
    if family == "ideal":
        return IdealRotation(angle, (math.cos(phi), math.sin(phi), 0.0))
    if family == "square":
        return SquarePulse(square_amplitude_for_angle(angle, duration, params.kappa, g0),
                           duration, phi)
    if family == "bump":
        return BumpPulse(angle, 2.0 / duration, phi, g0=g0)
    if family in ("delta-robust", "g-robust"):
        from .fixtures import load_fixture
        half = abs(angle - 0.5 * math.pi) < 1e-12
        if not half and abs(angle - math.pi) > 1e-12:
            raise PulseError(f"{family} pulses exist only for pi/2 and pi rotations")
        name = ("delta_" if family == "delta-robust" else "g_") + ("pi_half" if half else "pi")
        return load_fixture(name, g0=g0, duration=duration, phase=phi - 0.5 * math.pi)
    raise PulseError(f"unknown pulse family {family!r}")


def peak_field(pulse, kappa, n=4001):
    """Largest ``|X + iY|`` the pulse puts in the cavity, ringdown included."""
    lo, hi = pulse.support(kappa)
    if isinstance(pulse, SquarePulse):
        hi = pulse.end
    t = np.linspace(lo, hi, n)
    X, Y = pulse.quadratures(t, kappa)
    return float(np.max(np.hypot(X, Y)))


def matched_duration(family, angle, peak, params, g0=1.0):
    """Duration at which a ``family`` pulse reaches the intracavity ``peak``.

    Shaped pulses scale as ``X ~ 1/duration`` at fixed angle, so one probe
    evaluation fixes the answer. Comparing pulses at equal peak field puts
    them on the same hardware budget.
    """
    if family in ("ideal", "square"):
        raise ValueError(f"{family} pulses are not shaped; their duration is free")
    probe = make_pulse(family, angle, 1.0, params, g0)
    return peak_field(probe, params.kappa) / peak


def hahn_spec(family, duration, tau, params, g0=1.0, **kw):
    return SequenceSpec(make_pulse(family, 0.5 * math.pi, duration, params, g0),
                        make_pulse(family, math.pi, duration, params, g0), tau, **kw)


def cpmg_spec(family, duration, params, g0=1.0, free_evolution=13e-6, n_echoes=100,
              excitation=None, axis="y", **kw):
    """CPMG train of ``family`` pi pulses at the shortest period.

    The excitation defaults to an ideal pi/2 rotation about ``x`` so the
    families differ only through their refocusing pulses. The pi pulses
    rotate about ``axis``: ``y`` (along the excited magnetization) is the
    error-compensating Meiboom-Gill choice, ``x`` the uncompensated one.
    """
    ref = make_pulse(family, math.pi, duration, params, g0, axis)
    exc = excitation if excitation is not None else IdealRotation(0.5 * math.pi)
    T = cpmg_period(ref, free_evolution, params.kappa, params.noise_dX)
    return SequenceSpec(exc, ref, 0.5 * T, n_echoes=n_echoes, **kw)


@dataclass
class NminCurve:
    durations: np.ndarray
    n_min: np.ndarray
    snr: np.ndarray
    n_spins: np.ndarray

    def to_csv(self, path, comments=()):
        write_csv(path, ["duration", "N_min", "SNR", "N_spins"],
                  [self.durations, self.n_min, self.snr, self.n_spins], comments)


def _nmin_point(args):
    family, d, tau, params, g0, kw, bins = args
    res = run_sequence(hahn_spec(family, d, tau, params, g0, **kw), bins, params,
                       keep_states=False)
    m = res.metrics
    return m.n_min, m.snr_total, m.n_spins


def nmin_vs_duration(family, durations, bins, params, g0=1.0, tau=None, jobs=1, **kw):
    """Hahn-echo ``N_min`` against pulse duration for one pulse family.

    ``tau`` defaults to the longest duration plus a margin of two echo widths.
    """
    durations = np.asarray(durations, float)
    if np.any(durations <= 0):
        raise ValueError("durations must be positive")
    tasks = []
    for d in durations:
        t = tau if tau is not None else 3.0 * d + 40.0 / params.kappa
        tasks.append((family, float(d), t, params, g0, kw, bins))
    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(_nmin_point, tasks))
    else:
        out = [_nmin_point(t) for t in tasks]
    out = np.array(out, float).reshape(-1, 3)
    return NminCurve(durations, out[:, 0], out[:, 1], out[:, 2])


__all__ = ["IdealRotation", "SequenceSpec", "EchoMetrics", "SequenceResult", "NminCurve",
           "run_sequence", "snr", "cpmg_accumulate", "cpmg_period", "echoes_above",
           "default_window", "ringdown_time", "detect_echo", "transverse_phases", "phase_spread",
           "make_pulse", "hahn_spec", "cpmg_spec", "nmin_vs_duration", "peak_field",
           "matched_duration"]
