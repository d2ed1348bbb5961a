"""Semiclassical spin-cavity dynamics.

State: two cavity quadratures ``X, Y`` and one Bloch vector per spin bin::

    dX/dt  = -kappa/2 X + omega_X - sum_j 2 g_j w_j S_y^(j)
    dY/dt  = -kappa/2 Y + omega_Y + sum_j 2 g_j w_j S_x^(j)
    dS/dt  = (g_j X, g_j Y, Delta_j) x S

``w_j`` is the number of spins a bin stands for. Optional phenomenological
relaxation damps the transverse components at ``1/T2`` and pulls ``S_z``
towards ``-1/2`` at ``1/T1`` plus the Purcell rate.

The single-spin propagator uses ``H = (Delta sz + g X sx + g Y sy)/2``, whose
adjoint action on the Bloch vector reproduces the equations above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels
from ._io import read_csv, write_csv

SZ_EQ = -0.5

_SQ3 = math.sqrt(3.0) / 6.0
_ALPHA1 = (3.0 - 2.0 * math.sqrt(3.0)) / 12.0
_ALPHA2 = (3.0 + 2.0 * math.sqrt(3.0)) / 12.0


class IntegrationError(RuntimeError):
    """Integration aborted (non-finite state or invalid step)."""

    def __init__(self, message, time=None):
        super().__init__(message if time is None else f"{message} (t = {time:.17g})")
        self.time = time


@dataclass(frozen=True)
class SystemParams:
    """Cavity parameters.

    ``mode`` is ``"dimensionless"`` or ``"SI"`` (all rates in rad/s).
    """

    kappa: float
    mode: str = "dimensionless"
    noise_dX: float = 0.5

    def __post_init__(self):
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be positive and finite, got {self.kappa}")
        if not self.noise_dX > 0:
            raise ValueError(f"noise_dX must be positive, got {self.noise_dX}")
        if self.mode not in ("dimensionless", "SI"):
            raise ValueError(f"mode must be 'dimensionless' or 'SI', got {self.mode!r}")


@dataclass
class SpinBin:
    delta: float
    g: float
    weight: float = 1.0
    S: tuple = (0.0, 0.0, SZ_EQ)
    T1: float = math.inf
    T2: float = math.inf


@dataclass(frozen=True)
class CavityQuadratures:
    X: float = 0.0
    Y: float = 0.0


class Ensemble:
    """Array-backed list of spin bins.

    ``count`` optionally records the physical number of spins in each bin
    before polarization scaling; ``weight`` is what enters the dynamics.
    """

    def __init__(self, delta, g, weight, S=None, T1=None, T2=None, count=None):
        self.delta = np.ascontiguousarray(delta, dtype=float).reshape(-1)
        n = self.delta.size
        self.g = np.ascontiguousarray(np.broadcast_to(np.asarray(g, float), (n,)))
        self.weight = np.ascontiguousarray(np.broadcast_to(np.asarray(weight, float), (n,)))
        if S is None:
            S = np.tile([0.0, 0.0, SZ_EQ], (n, 1))
        self.S = np.ascontiguousarray(np.asarray(S, float).reshape(n, 3))
        self.T1 = np.ascontiguousarray(np.broadcast_to(
            np.asarray(math.inf if T1 is None else T1, float), (n,)))
        self.T2 = np.ascontiguousarray(np.broadcast_to(
            np.asarray(math.inf if T2 is None else T2, float), (n,)))
        self.count = None if count is None else np.asarray(count, float).reshape(n)
        if np.any(self.weight < 0):
            raise ValueError("bin weights must be non-negative")

    def __len__(self):
        return self.delta.size

    @classmethod
    def from_bins(cls, bins):
        bins = list(bins)
        return cls([b.delta for b in bins], [b.g for b in bins], [b.weight for b in bins],
                   [b.S for b in bins], [b.T1 for b in bins], [b.T2 for b in bins])

    def bins(self):
        return [SpinBin(float(d), float(g), float(w), tuple(s), float(t1), float(t2))
                for d, g, w, s, t1, t2 in zip(self.delta, self.g, self.weight, self.S,
                                              self.T1, self.T2)]

    def copy(self, S=None):
        return Ensemble(self.delta.copy(), self.g.copy(), self.weight.copy(),
                        self.S.copy() if S is None else S, self.T1.copy(), self.T2.copy(),
                        None if self.count is None else self.count.copy())

    def take(self, idx):
        return Ensemble(self.delta[idx], self.g[idx], self.weight[idx], self.S[idx],
                        self.T1[idx], self.T2[idx],
                        None if self.count is None else self.count[idx])

    @property
    def Sbar(self):
        return self.weight @ self.S

    def relaxation_rates(self, params, enabled=True, purcell=True):
        """``(r1, r2)`` per bin; zeros when relaxation is disabled."""
        n = len(self)
        if not enabled:
            return np.zeros(n), np.zeros(n)
        with np.errstate(divide="ignore"):
            r1 = np.where(np.isinf(self.T1), 0.0, 1.0 / self.T1)
            r2 = np.where(np.isinf(self.T2), 0.0, 1.0 / self.T2)
        if purcell:
            from .ensemble import purcell_rate
            r1 = r1 + purcell_rate(self.delta, self.g, params.kappa)
        return np.ascontiguousarray(r1), np.ascontiguousarray(r2)

    def check_finite(self):
        bad = ~np.isfinite(self.S).all(axis=1) | ~np.isfinite(self.delta) | ~np.isfinite(self.g)
        if bad.any():
            j = int(np.flatnonzero(bad)[0])
            raise ValueError(f"non-finite value in spin bin {j}: delta={self.delta[j]}, "
                             f"g={self.g[j]}, S={self.S[j].tolist()}")

    def to_csv(self, path, comments=()):
        write_csv(path, ["delta", "g", "weight", "Sx", "Sy", "Sz"],
                  [self.delta, self.g, self.weight, self.S[:, 0], self.S[:, 1], self.S[:, 2]],
                  comments)

    @classmethod
    def from_csv(cls, path):
        header, rows = read_csv(path)
        if header != ["delta", "g", "weight", "Sx", "Sy", "Sz"]:
            raise ValueError(f"{path}: expected header delta,g,weight,Sx,Sy,Sz, got {header}")
        a = np.array(rows, float).reshape(-1, 6)
        return cls(a[:, 0], a[:, 1], a[:, 2], a[:, 3:6])


def as_ensemble(bins):
    if isinstance(bins, Ensemble):
        return bins
    return Ensemble.from_bins(bins)


@dataclass
class Trajectory:
    """Sampled record of a simulation."""

    times: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    Sbar: np.ndarray
    bins: np.ndarray | None = None
    final: Ensemble | None = field(default=None, repr=False)
    final_XY: tuple = (0.0, 0.0)

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.X) == len(self.Y) == len(self.Sbar) == n):
            raise ValueError("trajectory arrays must have equal length")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    @property
    def Sbar_x(self):
        return self.Sbar[:, 0]

    @property
    def Sbar_y(self):
        return self.Sbar[:, 1]

    @property
    def Sbar_z(self):
        return self.Sbar[:, 2]

    def to_csv(self, path, comments=()):
        write_csv(path, ["t", "X", "Y", "Sbar_x", "Sbar_y", "Sbar_z"],
                  [self.times, self.X, self.Y, self.Sbar_x, self.Sbar_y, self.Sbar_z],
                  comments)

    @classmethod
    def from_csv(cls, path):
        header, rows = read_csv(path)
        if header != ["t", "X", "Y", "Sbar_x", "Sbar_y", "Sbar_z"]:
            raise ValueError(f"{path}: unexpected trajectory header {header}")
        a = np.array(rows, float).reshape(-1, 6)
        return cls(a[:, 0], a[:, 1], a[:, 2], a[:, 3:6])

    @staticmethod
    def concatenate(parts):
        """Join consecutive segments, dropping each duplicated boundary sample."""
        parts = [p for p in parts if p is not None and len(p.times)]
        keep = [parts[0]] + [
            Trajectory(p.times[1:], p.X[1:], p.Y[1:], p.Sbar[1:],
                       None if p.bins is None else p.bins[1:], p.final, p.final_XY)
            for p in parts[1:]
        ]
        bins = None
        if all(p.bins is not None for p in keep):
            bins = np.concatenate([p.bins for p in keep])
        return Trajectory(np.concatenate([p.times for p in keep]),
                          np.concatenate([p.X for p in keep]),
                          np.concatenate([p.Y for p in keep]),
                          np.concatenate([p.Sbar for p in keep]),
                          bins, parts[-1].final, parts[-1].final_XY)


# ---------------------------------------------------------------------------
# Right-hand sides
# ---------------------------------------------------------------------------


def _drive_value(drive):
    if drive is None:
        return 0.0, 0.0
    wx, wy = drive
    return float(wx), float(wy)


def rhs_full(state, bins, drive, params, relaxation=False):
    """Time derivative of the coupled system.

    Parameters
    ----------
    state : CavityQuadratures or (X, Y)
    bins : Ensemble or list of SpinBin
    drive : (omega_X, omega_Y) at the evaluation time
    params : SystemParams

    Returns
    -------
    dX, dY, dS : float, float, ndarray of shape (n, 3)
    """
    X, Y = (state.X, state.Y) if isinstance(state, CavityQuadratures) else state
    ens = as_ensemble(bins)
    ens.check_finite()
    wx, wy = _drive_value(drive)
    if not all(math.isfinite(v) for v in (X, Y, wx, wy)):
        raise ValueError(f"non-finite cavity state or drive: X={X}, Y={Y}, drive=({wx}, {wy})")
    r1, r2 = ens.relaxation_rates(params, relaxation)
    return _kernels._full_rhs_np(float(X), float(Y), ens.S, ens.delta, ens.g, ens.weight,
                                 wx, wy, params.kappa, r1, r2, SZ_EQ)


def rhs_bad_cavity(bins, drive, params):
    """Bloch derivatives in the adiabatically eliminated (bad-cavity) model."""
    ens = as_ensemble(bins)
    ens.check_finite()
    g = _uniform_g(ens)
    wx, wy = _drive_value(drive)
    return _kernels._bad_rhs_np(ens.S, ens.delta, ens.weight, g, params.kappa, wx, wy)


def _uniform_g(ens):
    if len(ens) == 0:
        return 0.0
    g = float(ens.g[0])
    if not np.allclose(ens.g, g, rtol=1e-12, atol=0.0):
        raise ValueError("bad-cavity model assumes the same coupling g for every bin")
    return g


def bad_cavity_quadratures(bins, drive, params):
    """Instantaneous ``X, Y`` slaved to the spins in the bad-cavity limit."""
    ens = as_ensemble(bins)
    wx, wy = _drive_value(drive)
    wg = ens.weight * ens.g
    X = 2.0 / params.kappa * (wx - 2.0 * wg @ ens.S[:, 1])
    Y = 2.0 / params.kappa * (wy + 2.0 * wg @ ens.S[:, 0])
    return X, Y


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------


def _sample_drive(drive, grid, kappa):
    if drive is None:
        return np.zeros_like(grid), np.zeros_like(grid)
    if isinstance(drive, (list, tuple)):
        wx = np.zeros_like(grid)
        wy = np.zeros_like(grid)
        for d in drive:
            a, b = _sample_drive(d, grid, kappa)
            wx += a
            wy += b
        return wx, wy
    if hasattr(drive, "omega_X") and hasattr(drive, "t"):
        # DriveFields: use samples directly when the grids coincide
        t = drive.t
        if t.size > 1:
            dt = t[1] - t[0]
            h2 = grid[1] - grid[0] if grid.size > 1 else dt
            off = (grid[0] - t[0]) / dt
            if (abs(h2 - dt) <= 1e-9 * abs(dt) and abs(off - round(off)) < 1e-6):
                i0 = int(round(off))
                idx = i0 + np.arange(grid.size)
                ok = (idx >= 0) & (idx < t.size)
                wx = np.zeros_like(grid)
                wy = np.zeros_like(grid)
                wx[ok] = drive.omega_X[idx[ok]]
                wy[ok] = drive.omega_Y[idx[ok]]
                return wx, wy
        return drive(grid)
    if hasattr(drive, "omega"):
        return drive.omega(grid, kappa)
    wx, wy = drive(grid)
    return (np.broadcast_to(np.asarray(wx, float), grid.shape).copy(),
            np.broadcast_to(np.asarray(wy, float), grid.shape).copy())


def _step_grid(t0, t1, dt):
    if not t1 > t0:
        raise IntegrationError(f"integration interval must satisfy t1 > t0 (got {t0}, {t1})", t0)
    if not dt > 0:
        raise IntegrationError("integration step must be positive", t0)
    nsteps = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
    h = (t1 - t0) / nsteps
    return nsteps, h


def integrate(bins, drive, params, t0, t1, dt, X0=0.0, Y0=0.0, relaxation=False,
              record_every=1, record_bins=False, use_numba=None):
    """Fixed-step classical RK4 integration of the coupled system.

    The step is shrunk so that an integer number of steps spans ``[t0, t1]``.
    ``drive`` may be ``None``, a :class:`~spincavity.pulses.DriveFields`, a pulse
    program (its open-loop drive is used), a callable ``t -> (wx, wy)`` or a list
    of those (summed).

    Raises
    ------
    IntegrationError
        if the step is too coarse for the cavity decay or the state blows up.
    """
    ens = as_ensemble(bins)
    ens.check_finite()
    nsteps, h = _step_grid(t0, t1, dt)
    if params.kappa * h > 1.0:
        raise IntegrationError(
            f"step {h:.3g} too coarse for kappa={params.kappa:.3g}; need kappa*dt <= 1", t0)
    grid = t0 + 0.5 * h * np.arange(2 * nsteps + 1)
    wx, wy = _sample_drive(drive, grid, params.kappa)
    if not (np.all(np.isfinite(wx)) and np.all(np.isfinite(wy))):
        raise IntegrationError("drive is not finite on the integration grid", t0)
    r1, r2 = ens.relaxation_rates(params, relaxation)
    every = max(1, int(record_every))
    kern = _kernels.kernels(use_numba)["rk4_full"]
    Xr, Yr, Sb, hist, Xf, Yf, Sf, fail = kern(
        float(X0), float(Y0), ens.S, ens.delta, ens.g, ens.weight, params.kappa, r1, r2,
        SZ_EQ, wx, wy, h, nsteps, every, bool(record_bins))
    if fail >= 0:
        raise IntegrationError("non-finite state during integration", t0 + fail * h)
    steps = np.arange(0, nsteps + 1, every)
    if steps[-1] != nsteps:
        steps = np.append(steps, nsteps)
    times = t0 + h * steps
    times[-1] = t1
    return Trajectory(times, Xr, Yr, Sb, hist if record_bins else None,
                      ens.copy(S=Sf), (float(Xf), float(Yf)))


def integrate_adaptive(bins, drive, params, t0, t1, X0=0.0, Y0=0.0, relaxation=False,
                       t_eval=None, rtol=1e-10, atol=1e-12, method="DOP853", max_step=np.inf):
    """Adaptive embedded Runge-Kutta integration (validation runs).

    ``drive`` must be evaluable at arbitrary times (pulse program or callable).
    """
    ens = as_ensemble(bins)
    ens.check_finite()
    n = len(ens)
    r1, r2 = ens.relaxation_rates(params, relaxation)

    def f(t, y):
        tt = np.array([t])
        wx, wy = _sample_drive(drive, tt, params.kappa)
        dX, dY, dS = _kernels._full_rhs_np(y[0], y[1], y[2:].reshape(n, 3), ens.delta, ens.g,
                                           ens.weight, wx[0], wy[0], params.kappa, r1, r2,
                                           SZ_EQ)
        return np.concatenate(([dX, dY], dS.ravel()))

    y0 = np.concatenate(([X0, Y0], ens.S.ravel()))
    sol = solve_ivp(f, (t0, t1), y0, method=method, rtol=rtol, atol=atol, t_eval=t_eval,
                    max_step=max_step)
    if not sol.success:
        raise IntegrationError(f"adaptive integration failed: {sol.message}", sol.t[-1])
    S = sol.y[2:].T.reshape(-1, n, 3)
    Sbar = np.einsum("j,kjc->kc", ens.weight, S)
    return Trajectory(sol.t, sol.y[0], sol.y[1], Sbar, S, ens.copy(S=S[-1].copy()),
                      (float(sol.y[0, -1]), float(sol.y[1, -1])))


def integrate_bad_cavity(bins, drive, params, t0, t1, dt, record_every=1, use_numba=None):
    """RK4 integration of the radiation-damping equations (uniform ``g``).

    The returned ``X, Y`` are the slaved quadratures at each sample.
    """
    ens = as_ensemble(bins)
    ens.check_finite()
    g = _uniform_g(ens)
    nsteps, h = _step_grid(t0, t1, dt)
    grid = t0 + 0.5 * h * np.arange(2 * nsteps + 1)
    wx, wy = _sample_drive(drive, grid, params.kappa)
    every = max(1, int(record_every))
    hist = _kernels.kernels(use_numba)["rk4_bad"](ens.S, ens.delta, ens.weight, g, params.kappa,
                                                   wx, wy, h, nsteps, every)
    steps = np.arange(0, nsteps + 1, every)
    if steps[-1] != nsteps:
        steps = np.append(steps, nsteps)
    wxs, wys = wx[2 * steps], wy[2 * steps]
    wgt = ens.weight * g
    X = 2.0 / params.kappa * (wxs - 2.0 * hist[:, :, 1] @ wgt)
    Y = 2.0 / params.kappa * (wys + 2.0 * hist[:, :, 0] @ wgt)
    Sbar = np.einsum("j,kjc->kc", ens.weight, hist)
    if not np.all(np.isfinite(hist[-1])):
        raise IntegrationError("non-finite state in bad-cavity integration", t1)
    times = t0 + h * steps
    times[-1] = t1
    return Trajectory(times, X, Y, Sbar, hist, ens.copy(S=hist[-1].copy()),
                      (float(X[-1]), float(Y[-1])))


# ---------------------------------------------------------------------------
# SU(2) propagators
# ---------------------------------------------------------------------------


def cf4_nodes(t0, t1, n_steps):
    """Gauss-Legendre sample times of the 4th-order commutator-free Magnus scheme."""
    h = (t1 - t0) / n_steps
    base = t0 + h * np.arange(n_steps)
    return h, base + (0.5 - _SQ3) * h, base + (0.5 + _SQ3) * h


def cf4_slices(X1, Y1, X2, Y2, h):
    """Slice coefficients ``(cx, cy, cz)`` for quadratures at the Gauss nodes.

    Each step contributes two exponentials, applied in the order stored.
    """
    n = X1.size
    cx = np.empty(2 * n)
    cy = np.empty(2 * n)
    cx[0::2] = 0.5 * h * (_ALPHA2 * X1 + _ALPHA1 * X2)
    cy[0::2] = 0.5 * h * (_ALPHA2 * Y1 + _ALPHA1 * Y2)
    cx[1::2] = 0.5 * h * (_ALPHA1 * X1 + _ALPHA2 * X2)
    cy[1::2] = 0.5 * h * (_ALPHA1 * Y1 + _ALPHA2 * Y2)
    cz = np.full(2 * n, 0.25 * h)
    return cx, cy, cz


def _pulse_slices(pulse, t0, t1, n_steps, kappa):
    h, ta, tb = cf4_nodes(t0, t1, n_steps)
    if hasattr(pulse, "quadratures"):
        X1, Y1 = pulse.quadratures(ta, kappa)
        X2, Y2 = pulse.quadratures(tb, kappa)
    else:
        X1, Y1 = pulse(ta)
        X2, Y2 = pulse(tb)
    return cf4_slices(np.asarray(X1, float), np.asarray(Y1, float),
                      np.asarray(X2, float), np.asarray(Y2, float), h)


def _n_steps(t0, t1, n_steps, max_step):
    if n_steps is not None:
        return int(n_steps)
    if max_step is None:
        return 1000
    return max(1, int(math.ceil((t1 - t0) / max_step - 1e-9)))


def propagate_su2_many(deltas, gs, pulse, t0, t1, n_steps=None, max_step=None, kappa=None,
                       use_numba=None):
    """Propagators of many spins as complex Cayley-Klein arrays ``(a, b)``."""
    if not t1 > t0:
        raise ValueError("propagation interval must satisfy t1 > t0")
    deltas = np.ascontiguousarray(np.atleast_1d(deltas), dtype=float)
    gs = np.ascontiguousarray(np.broadcast_to(np.asarray(gs, float), deltas.shape))
    if not (np.all(np.isfinite(deltas)) and np.all(np.isfinite(gs))):
        raise ValueError("non-finite offset or coupling")
    n = _n_steps(t0, t1, n_steps, max_step)
    cx, cy, cz = _pulse_slices(pulse, t0, t1, n, kappa)
    if not (np.all(np.isfinite(cx)) and np.all(np.isfinite(cy))):
        raise ValueError("pulse quadratures are not finite on the propagation grid")
    return _kernels.kernels(use_numba)["su2_products"](cx, cy, cz, deltas, gs)


def propagate_su2(bin, pulse, t0, t1, n_steps=None, max_step=None, kappa=None):
    """Propagator of one spin bin as four reals ``(Re a, Im a, Re b, Im b)``.

    ``U = [[a, b], [-conj(b), conj(a)]]``; time-ordered product of
    ``exp(-i H dt)`` with ``H = (Delta sz + g X sx + g Y sy)/2``.
    """
    delta, g = (bin.delta, bin.g) if hasattr(bin, "delta") else bin
    a, b = propagate_su2_many([delta], [g], pulse, t0, t1, n_steps, max_step, kappa)
    return np.array([a[0].real, a[0].imag, b[0].real, b[0].imag])


def su2_matrix(u):
    """2x2 complex matrix from four reals or an ``(a, b)`` pair."""
    if len(u) == 4:
        a, b = complex(u[0], u[1]), complex(u[2], u[3])
    else:
        a, b = u
    return np.array([[a, b], [-np.conj(b), np.conj(a)]])


def su2_params(U):
    """Four reals of an SU(2) matrix."""
    return np.array([U[0, 0].real, U[0, 0].imag, U[0, 1].real, U[0, 1].imag])


def rotation_su2(angle, axis):
    """``exp(-i angle n.sigma / 2)`` for a unit 3-vector ``axis``."""
    n = np.asarray(axis, float)
    n = n / np.linalg.norm(n)
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array([c, -s * n[2], -s * n[1], -s * n[0]])


_PAULI = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]])


def so3_from_su2(u):
    """Rotation matrix of the adjoint action ``S -> U S U^dagger`` on Bloch vectors."""
    U = su2_matrix(u)
    R = np.empty((3, 3))
    for k in range(3):
        for m in range(3):
            R[k, m] = 0.5 * np.trace(_PAULI[k] @ U @ _PAULI[m] @ U.conj().T).real
    return R


def rotation_matrix(angle, axis):
    """Right-handed SO(3) rotation of ``angle`` about ``axis``."""
    n = np.asarray(axis, float)
    n = n / np.linalg.norm(n)
    K = np.array([[0, -n[2], n[1]], [n[2], 0, -n[0]], [-n[1], n[0], 0]])
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * K @ K
