"""Pulse families and cavity-response deconvolution.

Two levels of pulse exist. *Quadrature-level* programs (bump, Fourier-phase,
tabulated) prescribe the intra-cavity field ``X(t), Y(t)`` the spins see and
supply its exact time derivative. *Drive-level* programs (square) prescribe
the external drive ``omega_X, omega_Y``; the cavity filters them.

Rotation angles are referenced to a coupling scale ``g0``: a field ``X`` acting
for ``dt`` rotates a spin of coupling ``g0`` by ``g0 * X * dt``. In
dimensionless units ``g0 = 1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from . import _kernels
from ._io import atomic_write_text, format_float


class PulseError(ValueError):
    """Raised for invalid pulse parameters or unsupported operations."""


def _axis_phase(axis):
    if isinstance(axis, str):
        try:
            return {"x": 0.0, "y": 0.5 * np.pi, "-x": np.pi, "-y": -0.5 * np.pi}[axis]
        except KeyError:
            raise PulseError(f"unknown axis {axis!r}; use x, y, -x or -y") from None
    return float(axis)


# ---------------------------------------------------------------------------
# Bump functions
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def bump_integral():
    """Integral of ``exp(1/(x**2 - 1))`` over ``[-1, 1]``.

    Equal to ``sqrt(pi/e) * W_{-1/2,1/2}(1)`` = 0.443993816168...
    """
    # even integrand: integrate one half to keep quad away from the flat tails
    val, _ = integrate.quad(lambda x: math.exp(1.0 / (x * x - 1.0)), 0.0, 1.0,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return 2.0 * val


def bump_normalization():
    """Prefactor that makes ``d_k`` integrate to one."""
    return 1.0 / bump_integral()


def bump_dk(k, t):
    """Normalised bump ``d_k(t)`` supported on ``[-1/k, 1/k]``."""
    if k <= 0:
        raise PulseError("bump parameter k must be positive")
    t = np.asarray(t, dtype=float)
    u = k * t
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = bump_normalization() * k * np.exp(1.0 / (ui * ui - 1.0))
    return out


def bump_dk_derivative(k, t):
    """Exact time derivative of :func:`bump_dk`."""
    t = np.asarray(t, dtype=float)
    u = k * t
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    q = ui * ui - 1.0
    out[inside] = (bump_normalization() * k * np.exp(1.0 / q)
                   * (-2.0 * k * ui / (q * q)))
    return out


def bump_drive_closed_form(theta, k, t, kappa):
    """Open-loop drive producing ``X = theta * d_k(t)`` (no spin back-action).

    ``omega_X = theta*A*k*(kappa/2 - 2k^2 t/(k^2 t^2 - 1)^2) exp(1/(k^2t^2-1))``
    on the support, zero elsewhere; ``A`` is :func:`bump_normalization`.
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    u = k * t
    inside = np.abs(u) < 1.0
    ti = t[inside]
    q = k * k * ti * ti - 1.0
    out[inside] = (theta * bump_normalization() * k
                   * (0.5 * kappa - 2.0 * k * k * ti / (q * q)) * np.exp(1.0 / q))
    return out


# ---------------------------------------------------------------------------
# Pulse programs
# ---------------------------------------------------------------------------


class PulseProgram:
    """Base class for pulse programs.

    Subclasses implement ``quadratures(t, kappa=None)`` and, if they are
    quadrature-level, ``derivatives(t)``. ``start`` and ``duration`` define the
    nominal support ``[start, start + duration]``.
    """

    kind = "abstract"
    differentiable = True

    @property
    def end(self):
        return self.start + self.duration

    def shifted(self, dt):
        return replace(self, start=self.start + dt)

    def support(self, kappa=None):
        return self.start, self.end

    def quadratures(self, t, kappa=None):  # pragma: no cover - abstract
        raise NotImplementedError

    def derivatives(self, t):  # pragma: no cover - abstract
        raise NotImplementedError

    def omega(self, t, kappa):
        """Open-loop drive (spin back-action ignored)."""
        X, Y = self.quadratures(t)
        dX, dY = self.derivatives(t)
        return dX + 0.5 * kappa * X, dY + 0.5 * kappa * Y

    def __call__(self, t, kappa=None):
        return self.quadratures(t, kappa)


@dataclass(frozen=True)
class BumpPulse(PulseProgram):
    """``X(t) = (theta/g0) * d_k(t - center)`` along ``axis``."""

    theta: float
    k: float
    axis: float | str = "x"
    start: float = 0.0
    g0: float = 1.0
    kind = "bump"

    def __post_init__(self):
        if not self.k > 0:
            raise PulseError("bump parameter k must be positive")

    @property
    def duration(self):
        return 2.0 / self.k

    @property
    def center(self):
        return self.start + 1.0 / self.k

    def quadratures(self, t, kappa=None):
        env = self.theta / self.g0 * bump_dk(self.k, np.asarray(t, float) - self.center)
        ph = _axis_phase(self.axis)
        return env * math.cos(ph), env * math.sin(ph)

    def derivatives(self, t):
        d = self.theta / self.g0 * bump_dk_derivative(self.k, np.asarray(t, float) - self.center)
        ph = _axis_phase(self.axis)
        return d * math.cos(ph), d * math.sin(ph)


def bump_pulse_quadratures(theta, k, axis="x", start=0.0, g0=1.0):
    """Bump pulse of duration ``2/k`` rotating by ``theta`` about ``axis``."""
    return BumpPulse(theta=theta, k=k, axis=axis, start=start, g0=g0)


@dataclass(frozen=True)
class FourierPhasePulse(PulseProgram):
    """Constant-envelope-shape pulse with Fourier-series phase.

    On the reduced time ``s = (t - start)/duration`` in ``[0, 1]``::

        A(s)   = A0 * exp(1/((2s - 1)**p - 1))
        phi(s) = a_0/2 + sum_n a_n cos(2 pi n s) + b_n sin(2 pi n s)
        X = A cos(phi + phase) / (g0 * duration),  Y = A sin(phi + phase) / (g0 * duration)

    ``phase`` rotates the whole pulse about z (e.g. ``-pi/2`` turns a y-rotation
    into an x-rotation).
    """

    A0: float
    p: int
    a: tuple
    b: tuple
    duration: float = 1.0
    start: float = 0.0
    g0: float = 1.0
    phase: float = 0.0
    kind = "fourier_phase"

    def __post_init__(self):
        if int(self.p) != self.p or self.p <= 0 or self.p % 2:
            raise PulseError(f"envelope exponent p must be a positive even integer, got {self.p}")
        if len(self.a) != len(self.b):
            raise PulseError("a and b coefficient lists must have equal length")
        if not self.duration > 0:
            raise PulseError("duration must be positive")
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))

    @property
    def n_harmonics(self):
        return len(self.a) - 1

    def _reduced(self, t):
        s = (np.asarray(t, dtype=float) - self.start) / self.duration
        inside = (s > 0.0) & (s < 1.0)
        return s, inside

    def envelope(self, s):
        """``A(s)`` on reduced time, zero at and outside the endpoints."""
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        inside = (s > 0.0) & (s < 1.0)
        q = (2.0 * s[inside] - 1.0) ** self.p - 1.0
        out[inside] = self.A0 * np.exp(1.0 / q)
        return out

    def phase_function(self, s):
        s = np.asarray(s, dtype=float)
        phi = np.full_like(s, 0.5 * self.a[0] + self.phase)
        for n in range(1, len(self.a)):
            w = 2.0 * np.pi * n * s
            phi += self.a[n] * np.cos(w) + self.b[n] * np.sin(w)
        return phi

    def _parts(self, t):
        s, inside = self._reduced(t)
        si = s[inside]
        u = 2.0 * si - 1.0
        q = u ** self.p - 1.0
        env = self.A0 * np.exp(1.0 / q)
        denv = env * (-2.0 * self.p * u ** (self.p - 1) / (q * q))
        phi = np.full_like(si, 0.5 * self.a[0] + self.phase)
        dphi = np.zeros_like(si)
        for n in range(1, len(self.a)):
            w = 2.0 * np.pi * n
            c, sn = np.cos(w * si), np.sin(w * si)
            phi += self.a[n] * c + self.b[n] * sn
            dphi += w * (-self.a[n] * sn + self.b[n] * c)
        return s, inside, env, denv, phi, dphi

    def quadratures(self, t, kappa=None):
        s, inside, env, _, phi, _ = self._parts(t)
        scale = 1.0 / (self.g0 * self.duration)
        X = np.zeros_like(s)
        Y = np.zeros_like(s)
        X[inside] = scale * env * np.cos(phi)
        Y[inside] = scale * env * np.sin(phi)
        return X, Y

    def derivatives(self, t):
        s, inside, env, denv, phi, dphi = self._parts(t)
        scale = 1.0 / (self.g0 * self.duration ** 2)
        dX = np.zeros_like(s)
        dY = np.zeros_like(s)
        c, sn = np.cos(phi), np.sin(phi)
        dX[inside] = scale * (denv * c - env * sn * dphi)
        dY[inside] = scale * (denv * sn + env * c * dphi)
        return dX, dY

    def with_params(self, A0=None, a=None, b=None):
        return replace(self, A0=self.A0 if A0 is None else A0,
                       a=self.a if a is None else tuple(a),
                       b=self.b if b is None else tuple(b))


def fourier_phase_quadratures(A0, p, a, b=None, duration=1.0, start=0.0, g0=1.0,
                              phase=0.0):
    """Build a :class:`FourierPhasePulse`; ``b`` defaults to zeros."""
    if p <= 0:
        raise PulseError("envelope exponent p must be positive")
    if b is None:
        b = [0.0] * len(a)
    return FourierPhasePulse(A0=A0, p=p, a=tuple(a), b=tuple(b), duration=duration,
                             start=start, g0=g0, phase=phase)


@dataclass(frozen=True)
class TabulatedPulse(PulseProgram):
    """Quadratures given on a grid, interpolated by clamped cubic splines.

    The samples at both ends must be zero so the program has compact support.
    """

    times: tuple
    X: tuple
    Y: tuple
    kind = "tabulated"
    _splines: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, float)
        x = np.asarray(self.X, float)
        y = np.asarray(self.Y, float)
        if t.ndim != 1 or t.size < 4 or np.any(np.diff(t) <= 0):
            raise PulseError("tabulated pulse needs >= 4 strictly increasing times")
        if x.shape != t.shape or y.shape != t.shape:
            raise PulseError("tabulated X, Y must match the time grid")
        bc = ((1, 0.0), (1, 0.0))
        object.__setattr__(self, "_splines", (CubicSpline(t, x, bc_type=bc),
                                              CubicSpline(t, y, bc_type=bc)))

    @property
    def start(self):
        return float(self.times[0])

    @property
    def duration(self):
        return float(self.times[-1] - self.times[0])

    def shifted(self, dt):
        return TabulatedPulse(tuple(np.asarray(self.times) + dt), self.X, self.Y)

    def _eval(self, t, nu):
        t = np.asarray(t, dtype=float)
        inside = (t >= self.times[0]) & (t <= self.times[-1])
        X = np.zeros_like(t)
        Y = np.zeros_like(t)
        X[inside] = self._splines[0](t[inside], nu)
        Y[inside] = self._splines[1](t[inside], nu)
        return X, Y

    def quadratures(self, t, kappa=None):
        return self._eval(t, 0)

    def derivatives(self, t):
        return self._eval(t, 1)


@dataclass(frozen=True)
class SquarePulse(PulseProgram):
    """Constant drive ``amplitude`` on ``[start, start + duration]``.

    This is a drive-level program: the spins see the cavity-filtered field,
    which keeps ringing after switch-off with time constant ``2/kappa``.
    """

    amplitude: float
    duration: float
    axis: float | str = "x"
    start: float = 0.0
    kind = "square"
    differentiable = False

    def __post_init__(self):
        if not self.duration > 0:
            raise PulseError("square pulse duration must be positive")

    def support(self, kappa=None):
        if kappa is None:
            return self.start, self.end
        # ringdown to below 1e-12 of the plateau
        return self.start, self.end + 2.0 / kappa * 28.0

    def omega(self, t, kappa=None):
        t = np.asarray(t, dtype=float)
        on = (t >= self.start) & (t <= self.end)
        ph = _axis_phase(self.axis)
        v = np.where(on, self.amplitude, 0.0)
        return v * math.cos(ph), v * math.sin(ph)

    def quadratures(self, t, kappa=None):
        """Empty-cavity response to the square drive."""
        if kappa is None:
            raise PulseError("square pulse quadratures need the cavity decay rate kappa")
        t = np.asarray(t, dtype=float)
        r = 0.5 * kappa
        plateau = self.amplitude / r
        tau = t - self.start
        env = np.where(tau <= 0.0, 0.0, plateau * -np.expm1(-r * np.clip(tau, 0.0, self.duration)))
        after = tau > self.duration
        env = np.where(after, env * np.exp(-r * (tau - self.duration)), env)
        ph = _axis_phase(self.axis)
        return env * math.cos(ph), env * math.sin(ph)

    def derivatives(self, t):
        raise PulseError(
            "square pulses are not differentiable: the derivative of the field "
            "diverges at the edges and so would the deconvolved drive")


def square_pulse(amplitude, duration, axis="x", start=0.0):
    return SquarePulse(amplitude=amplitude, duration=duration, axis=axis, start=start)


def square_amplitude_for_angle(theta, duration, kappa, g0=1.0):
    """Drive amplitude whose filtered field rotates an on-resonance spin by ``theta``.

    Uses the full ringdown: ``g0 * integral X dt = g0 * (2A/kappa) * duration``.
    """
    return theta * kappa / (2.0 * g0 * duration)


@dataclass(frozen=True)
class PulseTrain(PulseProgram):
    """Sum of non-overlapping quadrature-level programs."""

    pulses: tuple
    kind = "train"

    @property
    def start(self):
        return min(p.start for p in self.pulses)

    @property
    def duration(self):
        return max(p.end for p in self.pulses) - self.start

    def quadratures(self, t, kappa=None):
        t = np.asarray(t, float)
        X = np.zeros_like(t)
        Y = np.zeros_like(t)
        for p in self.pulses:
            x, y = p.quadratures(t, kappa)
            X += x
            Y += y
        return X, Y

    def derivatives(self, t):
        t = np.asarray(t, float)
        X = np.zeros_like(t)
        Y = np.zeros_like(t)
        for p in self.pulses:
            x, y = p.derivatives(t)
            X += x
            Y += y
        return X, Y

    def omega(self, t, kappa):
        t = np.asarray(t, float)
        X = np.zeros_like(t)
        Y = np.zeros_like(t)
        for p in self.pulses:
            x, y = p.omega(t, kappa)
            X += x
            Y += y
        return X, Y


# ---------------------------------------------------------------------------
# Drive fields and deconvolution
# ---------------------------------------------------------------------------


@dataclass
class DriveFields:
    """Drive ``(omega_X, omega_Y)`` sampled on a uniform grid.

    Zero outside the grid. Calling the object interpolates linearly; the
    integrator uses the samples directly when its half-step matches ``dt``.
    """

    t: np.ndarray
    omega_X: np.ndarray
    omega_Y: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, float)
        self.omega_X = np.asarray(self.omega_X, float)
        self.omega_Y = np.asarray(self.omega_Y, float)
        if not (self.t.shape == self.omega_X.shape == self.omega_Y.shape):
            raise ValueError("drive arrays must share the time grid")
        if not (np.all(np.isfinite(self.omega_X)) and np.all(np.isfinite(self.omega_Y))):
            raise ValueError("drive contains non-finite samples")

    @property
    def dt(self):
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    @property
    def peak(self):
        return float(np.max(np.hypot(self.omega_X, self.omega_Y))) if self.t.size else 0.0

    @property
    def energy(self):
        return float(integrate.trapezoid(self.omega_X ** 2 + self.omega_Y ** 2, self.t))

    def __call__(self, t, kappa=None):
        t = np.asarray(t, float)
        wx = np.interp(t, self.t, self.omega_X, left=0.0, right=0.0)
        wy = np.interp(t, self.t, self.omega_Y, left=0.0, right=0.0)
        return wx, wy

    omega = __call__

    def to_csv(self, path, header_lines=()):
        lines = [f"# {h}" for h in header_lines]
        lines.append("t,omega_X,omega_Y")
        for row in zip(self.t, self.omega_X, self.omega_Y):
            lines.append(",".join(format_float(v) for v in row))
        atomic_write_text(path, "\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path):
        rows = [r for r in csv.reader(l for l in open(path) if not l.startswith("#"))]
        data = np.array(rows[1:], dtype=float).reshape(-1, 3)
        return cls(data[:, 0], data[:, 1], data[:, 2])


def deconvolve(pulse, params, ensemble=None, back_action=False, step=None,
               t0=None, t1=None, use_numba=None):
    """Drive that makes the cavity follow ``pulse``'s quadratures.

    ``omega_X = dX/dt + kappa/2 X + 2 sum_j g_j S_y^(j)`` and
    ``omega_Y = dY/dt + kappa/2 Y - 2 sum_j g_j S_x^(j)``. With ``back_action``
    the spin sums come from integrating the spin equations with ``X, Y``
    imposed, starting from ``ensemble``'s current Bloch vectors.

    The returned grid has spacing ``step/2`` so that ``integrate(..., dt=step)``
    consumes it without interpolation.
    """
    if not getattr(pulse, "differentiable", True):
        raise PulseError(
            f"cannot deconvolve a {pulse.kind} pulse: the target must be "
            "differentiable, a step in the field makes the drive diverge")
    kappa = params.kappa
    if t0 is None or t1 is None:
        lo, hi = pulse.support()
        t0 = lo if t0 is None else t0
        t1 = hi if t1 is None else t1
    if step is None:
        step = (t1 - t0) / 2000.0
    nsteps = max(1, int(math.ceil((t1 - t0) / step - 1e-9)))
    h = (t1 - t0) / nsteps
    grid = t0 + 0.5 * h * np.arange(2 * nsteps + 1)
    X, Y = pulse.quadratures(grid)
    dX, dY = pulse.derivatives(grid)
    wx = dX + 0.5 * kappa * X
    wy = dY + 0.5 * kappa * Y
    if back_action and ensemble is not None and len(ensemble.delta):
        # spins on the same half-step grid: co-integrate at step h/2
        Xq, Yq = pulse.quadratures(t0 + 0.25 * h * np.arange(4 * nsteps + 1))
        r1, r2 = ensemble.relaxation_rates(params, enabled=False)
        gsx, gsy, _ = _kernels.kernels(use_numba)["rk4_spins"](ensemble.S, ensemble.delta, ensemble.g,
                                         ensemble.weight, r1, r2, -0.5, Xq, Yq,
                                         0.5 * h, 2 * nsteps)
        wx = wx + 2.0 * gsy
        wy = wy - 2.0 * gsx
    return DriveFields(grid, wx, wy)


# ---------------------------------------------------------------------------
# Fixture files: CSV ``n,a_n,b_n`` with ``key=value`` header lines
# ---------------------------------------------------------------------------


def write_pulse_params(path, pulse: FourierPhasePulse, extra: dict | None = None):
    head = {"p": pulse.p, "t_f": format_float(pulse.duration), "A0": format_float(pulse.A0)}
    if extra:
        head.update(extra)
    lines = [f"{k}={v}" for k, v in head.items()]
    lines.append("n,a_n,b_n")
    for n, (a, b) in enumerate(zip(pulse.a, pulse.b)):
        lines.append(f"{n},{format_float(a)},{format_float(b)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_pulse_params(path):
    """Parse a pulse parameter file; returns ``(header_dict, a, b)``."""
    header = {}
    a, b = [], []
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    it = iter(lines)
    for ln in it:
        if ln.replace(" ", "") == "n,a_n,b_n":
            break
        if "=" not in ln:
            raise PulseError(f"{path}: bad header line {ln!r}")
        k, v = ln.split("=", 1)
        header[k.strip()] = v.strip()
    else:
        raise PulseError(f"{path}: missing 'n,a_n,b_n' table header")
    for ln in it:
        parts = [x.strip() for x in ln.split(",")]
        if len(parts) != 3:
            raise PulseError(f"{path}: bad coefficient row {ln!r}")
        n = int(parts[0])
        if n != len(a):
            raise PulseError(f"{path}: coefficient rows must be numbered 0..N_F")
        a.append(float(parts[1]))
        b.append(float(parts[2]))
    return header, a, b


def load_pulse(path, g0=1.0, duration=None, phase=0.0) -> FourierPhasePulse:
    """Load a Fourier-phase pulse file, optionally rescaled to ``duration``."""
    header, a, b = read_pulse_params(path)
    p = int(header.get("p", "0"))
    tf = float(header.get("t_f", "1"))
    A0 = float(header.get("A0", "1"))
    return FourierPhasePulse(A0=A0, p=p, a=tuple(a), b=tuple(b),
                             duration=tf if duration is None else duration, g0=g0,
                             phase=phase)


def sample_program(pulse: PulseProgram, t: Sequence[float], kappa=None):
    """Quadratures of ``pulse`` at ``t`` as a 2-row array."""
    return np.vstack(pulse.quadratures(np.asarray(t, float), kappa))
